"""Secondary Capture dataset construction and DICOM Part-10 encoding.

The source JPEG stream is encapsulated whole (never re-encoded) under the
JPEG Baseline transfer syntax, so conversion is lossless with respect to
the already-compressed pixel data.
"""

from __future__ import annotations

import secrets
import struct
import threading
from dataclasses import dataclass
from random import Random
from typing import Callable

from .jpeg import ImageDescriptor
from .metadata import ClinicalMetadata, InvalidMetadataError, validate


class DicomError(ValueError):
    """Base class for DICOM encoding errors."""


class NotBaselineJpegError(DicomError):
    """Conversion refused: the source is not a baseline (SOF0) JPEG."""


class UidTooLongError(DicomError):
    """The UID root leaves no room for a 39-digit entropy component."""


class FragmentTooLargeError(DicomError):
    """The JPEG stream cannot fit in a single 32-bit fragment item."""


SOP_CLASS_SECONDARY_CAPTURE = "1.2.840.10008.5.1.4.1.1.7"
TRANSFER_SYNTAX_JPEG_BASELINE = "1.2.840.10008.1.2.4.50"
IMPLEMENTATION_CLASS_UID = "2.25.132781606796720188933506122148323662802"
IMPLEMENTATION_VERSION_NAME = "dicoderma-0.1.0"  # SH, max 16 chars

DEFAULT_UID_ROOT = "2.25"

_UID_ENTROPY_BITS = 128
_MAX_ENTROPY_DIGITS = 39  # decimal digits of 2**128 - 1

# VRs using the 4-byte length form in explicit-VR encoding.
_LONG_FORM_VRS = frozenset(("OB", "OW", "OF", "SQ", "UT", "UN"))


class UidContext:
    """Source of fresh UIDs: a dotted-decimal root plus 128-bit entropy.

    ``seed`` switches to a deterministic generator (testing only); a custom
    ``generator`` callable overrides both.  Draws are thread-safe."""

    def __init__(
        self,
        root: str = DEFAULT_UID_ROOT,
        generator: Callable[[], int] | None = None,
        seed: int | None = None,
    ):
        if not root or any(
            not part or (part != "0" and part.startswith("0")) or not part.isdigit()
            for part in root.split(".")
        ):
            raise ValueError(f"UID root {root!r} is not dotted-decimal")
        self.root = root
        if generator is None:
            if seed is None:
                generator = lambda: secrets.randbits(_UID_ENTROPY_BITS)
            else:
                rng = Random(seed)
                generator = lambda: rng.getrandbits(_UID_ENTROPY_BITS)
        self._generator = generator
        self._lock = threading.Lock()

    def draw(self) -> int:
        with self._lock:
            return self._generator()


def generate_uid(ctx: UidContext) -> str:
    """A fresh UID: root + "." + decimal entropy value.

    Raises UidTooLongError when the root cannot accommodate a worst-case
    39-digit value within the 64-character limit."""
    if len(ctx.root) + 1 + _MAX_ENTROPY_DIGITS > 64:
        raise UidTooLongError(
            f"root {ctx.root!r} leaves no room for a {_MAX_ENTROPY_DIGITS}-digit value"
        )
    value = ctx.draw()
    if value < 0:
        raise DicomError("entropy generator returned a negative value")
    uid = f"{ctx.root}.{value}"
    if len(uid) > 64:
        raise UidTooLongError(f"generated UID is {len(uid)} characters")
    return uid


@dataclass(frozen=True)
class DicomElement:
    """One data element: (group, element) tag, VR code, raw value bytes.
    Values are already padded to even length."""

    group: int
    element: int
    vr: str
    value: bytes

    @property
    def tag(self) -> tuple[int, int]:
        return (self.group, self.element)


@dataclass(frozen=True)
class DicomDataset:
    """Main dataset plus file-meta elements (group 0002, without the
    group-length element, which is computed at encode time)."""

    elements: tuple[DicomElement, ...]
    file_meta: tuple[DicomElement, ...]
    transfer_syntax: str = TRANSFER_SYNTAX_JPEG_BASELINE

    def value_of(self, group: int, element: int) -> bytes | None:
        for e in self.elements:
            if e.group == group and e.element == element:
                return e.value
        return None


def _text_element(group: int, element: int, vr: str, text: str) -> DicomElement:
    raw = text.encode("ascii")
    if len(raw) & 1:
        raw += b"\x00" if vr == "UI" else b" "
    return DicomElement(group, element, vr, raw)


def _us_element(group: int, element: int, value: int) -> DicomElement:
    return DicomElement(group, element, "US", struct.pack("<H", value))


def build_sc_dataset(
    m: ClinicalMetadata, img: ImageDescriptor, ctx: UidContext
) -> DicomDataset:
    """Secondary Capture dataset for one converted image.

    Patient/study attributes come from the metadata; required-but-unknown
    attributes are emitted as zero-length type-2 elements.  Raises
    NotBaselineJpegError or InvalidMetadataError."""
    if not img.baseline:
        raise NotBaselineJpegError("transfer syntax requires a baseline (SOF0) JPEG")
    issues = validate(m)
    if issues:
        raise InvalidMetadataError(issues)

    study_uid = m.study_instance_uid or generate_uid(ctx)
    series_uid = m.series_instance_uid or generate_uid(ctx)
    sop_uid = generate_uid(ctx)

    els: list[DicomElement] = [
        _text_element(0x0008, 0x0008, "CS", "DERIVED\\SECONDARY"),
        _text_element(0x0008, 0x0016, "UI", SOP_CLASS_SECONDARY_CAPTURE),
        _text_element(0x0008, 0x0018, "UI", sop_uid),
        _text_element(0x0008, 0x0020, "DA", m.study_date or ""),
        _text_element(0x0008, 0x0030, "TM", m.study_time or ""),
        _text_element(0x0008, 0x0050, "SH", ""),  # AccessionNumber
        _text_element(0x0008, 0x0060, "CS", "OT"),
        _text_element(0x0008, 0x0064, "CS", "WSD"),
        _text_element(0x0008, 0x0090, "PN", ""),  # ReferringPhysicianName
        _text_element(0x0010, 0x0010, "PN", m.patient_name or ""),
        _text_element(0x0010, 0x0020, "LO", m.patient_id or ""),
        _text_element(0x0010, 0x0030, "DA", ""),  # PatientBirthDate
        _text_element(0x0010, 0x0040, "CS", m.patient_sex or ""),
        _text_element(0x0020, 0x000D, "UI", study_uid),
        _text_element(0x0020, 0x000E, "UI", series_uid),
        _text_element(0x0020, 0x0010, "SH", ""),  # StudyID
        _text_element(0x0020, 0x0011, "IS", "1"),
        _text_element(0x0020, 0x0013, "IS", "1"),
        _us_element(0x0028, 0x0002, img.components),
        _text_element(
            0x0028, 0x0004, "CS",
            "YBR_FULL_422" if img.components == 3 else "MONOCHROME2",
        ),
        _us_element(0x0028, 0x0010, img.rows),
        _us_element(0x0028, 0x0011, img.columns),
        _us_element(0x0028, 0x0100, 8),
        _us_element(0x0028, 0x0101, 8),
        _us_element(0x0028, 0x0102, 7),
        _us_element(0x0028, 0x0103, 0),
        _text_element(0x0028, 0x2110, "CS", "01"),
    ]
    if m.study_description is not None:
        els.append(_text_element(0x0008, 0x1030, "LO", m.study_description))
    if img.components == 3:
        els.append(_us_element(0x0028, 0x0006, 0))
    els.sort(key=lambda e: e.tag)

    file_meta = (
        DicomElement(0x0002, 0x0001, "OB", b"\x00\x01"),
        _text_element(0x0002, 0x0002, "UI", SOP_CLASS_SECONDARY_CAPTURE),
        _text_element(0x0002, 0x0003, "UI", sop_uid),
        _text_element(0x0002, 0x0010, "UI", TRANSFER_SYNTAX_JPEG_BASELINE),
        _text_element(0x0002, 0x0012, "UI", IMPLEMENTATION_CLASS_UID),
        _text_element(0x0002, 0x0013, "SH", IMPLEMENTATION_VERSION_NAME),
    )
    return DicomDataset(tuple(els), file_meta)


def encode_element(e: DicomElement) -> bytes:
    """One element in explicit-VR little-endian."""
    if len(e.value) & 1:
        raise DicomError(f"element {e.tag} has odd value length {len(e.value)}")
    head = struct.pack("<HH", e.group, e.element) + e.vr.encode("ascii")
    if e.vr in _LONG_FORM_VRS:
        return head + b"\x00\x00" + struct.pack("<L", len(e.value)) + e.value
    if len(e.value) > 0xFFFF:
        raise DicomError(f"element {e.tag} too long for short-form VR {e.vr}")
    return head + struct.pack("<H", len(e.value)) + e.value


def _encode_elements(elements: tuple[DicomElement, ...]) -> bytes:
    previous = None
    out = bytearray()
    for e in elements:
        if previous is not None and e.tag <= previous:
            raise DicomError(f"elements not strictly ascending at {e.tag}")
        previous = e.tag
        out += encode_element(e)
    return bytes(out)


def encode_part10(ds: DicomDataset, jpeg_bytes: bytes) -> bytes:
    """Complete Part-10 file: preamble, DICM, file meta, dataset, and the
    JPEG stream encapsulated as a single pixel-data fragment.

    Raises FragmentTooLargeError when the stream exceeds the 32-bit item
    length."""
    if len(jpeg_bytes) >= 0xFFFFFFFE:
        raise FragmentTooLargeError("JPEG stream exceeds fragment item capacity")

    meta_body = _encode_elements(ds.file_meta)
    group_length = DicomElement(0x0002, 0x0000, "UL", struct.pack("<L", len(meta_body)))

    fragment = jpeg_bytes + (b"\x00" if len(jpeg_bytes) & 1 else b"")
    pixel_data = (
        struct.pack("<HH", 0x7FE0, 0x0010)
        + b"OB\x00\x00"
        + struct.pack("<L", 0xFFFFFFFF)
        + struct.pack("<HHL", 0xFFFE, 0xE000, 0)  # empty basic offset table
        + struct.pack("<HHL", 0xFFFE, 0xE000, len(fragment))
        + fragment
        + struct.pack("<HHL", 0xFFFE, 0xE0DD, 0)
    )

    return (
        b"\x00" * 128
        + b"DICM"
        + encode_element(group_length)
        + meta_body
        + _encode_elements(ds.elements)
        + pixel_data
    )
