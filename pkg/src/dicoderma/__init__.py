"""Clinical metadata tagging for JPEG images via EXIF, with DICOM export.

The package embeds a canonical JSON payload in the EXIF UserComment tag of
JPEG files, and provides search, detection, anonymization and conversion of
tagged images to DICOM Secondary Capture files.
"""

__version__ = "0.1.0"

from .jpeg import (
    ImageDescriptor,
    JpegDocument,
    JpegError,
    MissingFrameHeaderError,
    NotAJpegError,
    Segment,
    TruncatedFileError,
    UnsupportedJpegError,
    get_image_descriptor,
    parse_jpeg,
    serialize_jpeg,
)
from .exif import (
    ExifBlock,
    IfdEntry,
    MalformedExifError,
    OversizeExifError,
    read_user_comment,
    write_user_comment,
)
from .metadata import (
    AnonymizationPolicy,
    ClinicalMetadata,
    InvalidMetadataError,
    MalformedJsonError,
    MetadataError,
    MissingSecretError,
    NotDicodermaError,
    ValidationIssue,
    anonymize,
    decode_metadata,
    detect,
    encode_metadata,
    validate,
)
from .dicom import (
    DicomDataset,
    DicomElement,
    FragmentTooLargeError,
    NotBaselineJpegError,
    UidContext,
    UidTooLongError,
    build_sc_dataset,
    encode_part10,
    generate_uid,
)
from .search import (
    Contains,
    DateRange,
    Equals,
    Predicate,
    RootNotFoundError,
    ScanDiagnostics,
    ScanResult,
    SearchQuery,
    TagRecord,
    UnknownSearchFieldError,
    match,
    scan,
)

__all__ = [
    "__version__",
    # jpeg
    "ImageDescriptor",
    "JpegDocument",
    "JpegError",
    "MissingFrameHeaderError",
    "NotAJpegError",
    "Segment",
    "TruncatedFileError",
    "UnsupportedJpegError",
    "get_image_descriptor",
    "parse_jpeg",
    "serialize_jpeg",
    # exif
    "ExifBlock",
    "IfdEntry",
    "MalformedExifError",
    "OversizeExifError",
    "read_user_comment",
    "write_user_comment",
    # metadata
    "AnonymizationPolicy",
    "ClinicalMetadata",
    "InvalidMetadataError",
    "MalformedJsonError",
    "MetadataError",
    "MissingSecretError",
    "NotDicodermaError",
    "ValidationIssue",
    "anonymize",
    "decode_metadata",
    "detect",
    "encode_metadata",
    "validate",
    # dicom
    "DicomDataset",
    "DicomElement",
    "FragmentTooLargeError",
    "NotBaselineJpegError",
    "UidContext",
    "UidTooLongError",
    "build_sc_dataset",
    "encode_part10",
    "generate_uid",
    # search
    "Contains",
    "DateRange",
    "Equals",
    "Predicate",
    "RootNotFoundError",
    "ScanDiagnostics",
    "ScanResult",
    "SearchQuery",
    "TagRecord",
    "UnknownSearchFieldError",
    "match",
    "scan",
]
