"""Segment-level JPEG parsing and byte-exact re-serialization.

The model splits a JPEG stream into the marker segments that precede the
first SOS marker and an opaque ``scan_data`` tail (everything from the SOS
marker to end of file, which contains the entropy-coded data and the EOI
marker).  Entropy data is never decoded, so parse followed by serialize
reproduces the input byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass


class JpegError(ValueError):
    """Base class for JPEG structure errors."""


class NotAJpegError(JpegError):
    """The data does not start with an SOI marker."""


class TruncatedFileError(JpegError):
    """A segment length points past the end of the data, or the marker
    stream is malformed before the scan."""


class MissingFrameHeaderError(JpegError):
    """No SOF marker was found before the scan data."""


class UnsupportedJpegError(JpegError):
    """Structurally valid JPEG that the tool cannot model (e.g. CMYK or
    DNL-deferred height)."""


MARKER_SOI = 0xD8
MARKER_EOI = 0xD9
MARKER_SOS = 0xDA
MARKER_APP0 = 0xE0
MARKER_APP1 = 0xE1

# SOF0-SOF15 minus DHT (C4), JPG (C8) and DAC (CC).
SOF_MARKERS = frozenset(
    (0xC0, 0xC1, 0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF)
)

# Markers with no length field: TEM and RST0-RST7.
_STANDALONE_MARKERS = frozenset((0x01,) + tuple(range(0xD0, 0xD8)))

MAX_SEGMENT_PAYLOAD = 65533  # 16-bit length field counts itself

EXIF_PREFIX = b"Exif\x00\x00"


@dataclass(frozen=True)
class ImageDescriptor:
    """Frame parameters taken from the first SOF marker."""

    rows: int
    columns: int
    components: int
    baseline: bool
    bits_per_sample: int


@dataclass(frozen=True)
class Segment:
    """One marker segment.  ``payload`` excludes the marker and the 2-byte
    length field.  ``pad_before`` counts 0xFF fill bytes that preceded the
    marker in the source stream (kept so serialization is byte-exact)."""

    marker: int
    payload: bytes
    standalone: bool = False
    pad_before: int = 0


@dataclass(frozen=True)
class JpegDocument:
    """Parsed JPEG: header segments, opaque scan bytes, frame descriptor."""

    segments: tuple[Segment, ...]
    scan_data: bytes
    frame: ImageDescriptor

    def exif_segment_index(self) -> int | None:
        """Index of the EXIF carrier: the first APP1 segment whose payload
        starts with ``Exif\\0\\0``, or None."""
        for i, seg in enumerate(self.segments):
            if seg.marker == MARKER_APP1 and seg.payload.startswith(EXIF_PREFIX):
                return i
        return None


def _parse_frame(payload: bytes, marker: int) -> ImageDescriptor:
    if len(payload) < 6:
        raise TruncatedFileError("SOF payload shorter than frame header")
    precision = payload[0]
    rows, columns = struct.unpack(">HH", payload[1:5])
    components = payload[5]
    if rows == 0:
        raise UnsupportedJpegError("frame height deferred to DNL marker")
    if columns == 0:
        raise UnsupportedJpegError("frame width is zero")
    if components not in (1, 3):
        raise UnsupportedJpegError(f"unsupported component count {components}")
    return ImageDescriptor(
        rows=rows,
        columns=columns,
        components=components,
        baseline=(marker == 0xC0),
        bits_per_sample=precision,
    )


def parse_jpeg(data: bytes) -> JpegDocument:
    """Parse a JPEG stream into segments, scan data and a frame descriptor.

    Raises NotAJpegError, TruncatedFileError, MissingFrameHeaderError or
    UnsupportedJpegError.
    """
    if len(data) < 2 or data[0] != 0xFF or data[1] != MARKER_SOI:
        raise NotAJpegError("missing SOI marker")

    segments: list[Segment] = []
    frame: ImageDescriptor | None = None
    pos = 2
    while True:
        if pos >= len(data):
            raise TruncatedFileError("ran out of data before scan")
        if data[pos] != 0xFF:
            raise TruncatedFileError(f"expected marker at offset {pos}")
        run_start = pos
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos >= len(data):
            raise TruncatedFileError("dangling 0xFF at end of data")
        pad = pos - run_start - 1
        code = data[pos]
        pos += 1

        if code == 0x00:
            raise TruncatedFileError(f"stuffed byte outside scan at offset {pos - 2}")
        if code == MARKER_SOI:
            raise TruncatedFileError("unexpected second SOI marker")
        if code == MARKER_EOI:
            raise TruncatedFileError("end of image before scan data")

        if code == MARKER_SOS:
            if frame is None:
                raise MissingFrameHeaderError("no SOF marker before SOS")
            scan_data = data[run_start:]
            if b"\xff\xd9" not in scan_data:
                raise TruncatedFileError("missing EOI marker")
            return JpegDocument(tuple(segments), scan_data, frame)

        if code in _STANDALONE_MARKERS:
            segments.append(Segment(code, b"", standalone=True, pad_before=pad))
            continue

        if pos + 2 > len(data):
            raise TruncatedFileError("segment length field truncated")
        (length,) = struct.unpack(">H", data[pos : pos + 2])
        if length < 2:
            raise TruncatedFileError(f"segment length {length} below minimum")
        end = pos + length
        if end > len(data):
            raise TruncatedFileError("segment length exceeds remaining bytes")
        payload = data[pos + 2 : end]
        pos = end

        if code in SOF_MARKERS and frame is None:
            frame = _parse_frame(payload, code)
        segments.append(Segment(code, payload, pad_before=pad))


def serialize_jpeg(doc: JpegDocument) -> bytes:
    """Reassemble a JpegDocument into a complete JPEG byte stream."""
    out = bytearray(b"\xff\xd8")
    for seg in doc.segments:
        out += b"\xff" * seg.pad_before
        out.append(0xFF)
        out.append(seg.marker)
        if not seg.standalone:
            if len(seg.payload) > MAX_SEGMENT_PAYLOAD:
                raise JpegError(
                    f"segment payload of {len(seg.payload)} bytes exceeds 65533"
                )
            out += struct.pack(">H", len(seg.payload) + 2)
            out += seg.payload
    out += doc.scan_data
    return bytes(out)


def get_image_descriptor(doc: JpegDocument) -> ImageDescriptor:
    """Frame descriptor of a parsed document."""
    return doc.frame
