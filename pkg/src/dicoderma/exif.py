"""EXIF APP1 (TIFF structure) decoding and rebuilding.

The block is modelled as plain entry lists per IFD; structural pointer
entries (Exif/GPS/Interoperability IFD pointers, thumbnail offset and byte
count) are consumed at parse time and synthesized again with fresh offsets
at serialization time.  Rewrites therefore never patch offsets in place.

Maker notes and entries of unknown TIFF type are carried as opaque bytes;
if such an entry encodes offsets internally they may dangle after a
rebuild.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

from .jpeg import (
    EXIF_PREFIX,
    MARKER_APP0,
    MARKER_APP1,
    MAX_SEGMENT_PAYLOAD,
    JpegDocument,
    Segment,
    serialize_jpeg,
)


class MalformedExifError(ValueError):
    """An EXIF APP1 payload exists but its TIFF structure is unparseable."""


class OversizeExifError(ValueError):
    """The rebuilt APP1 payload would exceed the 65533-byte segment limit."""


TAG_USER_COMMENT = 0x9286
TAG_EXIF_IFD_POINTER = 0x8769
TAG_GPS_IFD_POINTER = 0x8825
TAG_INTEROP_IFD_POINTER = 0xA005
TAG_THUMB_OFFSET = 0x0201  # JPEGInterchangeFormat
TAG_THUMB_LENGTH = 0x0202  # JPEGInterchangeFormatByteCount

TYPE_ASCII = 2
TYPE_SHORT = 3
TYPE_LONG = 4
TYPE_UNDEFINED = 7

# Byte width of one value for each TIFF field type.
_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}

ASCII_CODE = b"ASCII\x00\x00\x00"
UNICODE_CODE = b"UNICODE\x00"


@dataclass(frozen=True)
class IfdEntry:
    """One 12-byte IFD entry.  ``value`` holds the raw value bytes in the
    block's byte order, without inline padding."""

    tag: int
    field_type: int
    count: int
    value: bytes


@dataclass
class ExifBlock:
    """TIFF-structured EXIF content.  Entry lists exclude structural
    pointer entries, which are regenerated on serialization."""

    byte_order: str = "II"
    ifd0: list[IfdEntry] = field(default_factory=list)
    exif_ifd: list[IfdEntry] = field(default_factory=list)
    gps_ifd: list[IfdEntry] = field(default_factory=list)
    interop_ifd: list[IfdEntry] = field(default_factory=list)
    ifd1: list[IfdEntry] = field(default_factory=list)
    thumbnail: bytes | None = None

    @property
    def endian(self) -> str:
        return "<" if self.byte_order == "II" else ">"


def _parse_ifd(tiff: bytes, endian: str, offset: int) -> tuple[list[IfdEntry], int]:
    if offset + 2 > len(tiff):
        raise MalformedExifError(f"IFD table at {offset} out of range")
    (count,) = struct.unpack_from(endian + "H", tiff, offset)
    end = offset + 2 + 12 * count
    if end + 4 > len(tiff):
        raise MalformedExifError("IFD entry table truncated")
    entries: list[IfdEntry] = []
    for i in range(count):
        base = offset + 2 + 12 * i
        tag, ftype, n = struct.unpack_from(endian + "HHL", tiff, base)
        raw4 = tiff[base + 8 : base + 12]
        size = _TYPE_SIZES.get(ftype)
        if size is None:
            # Unknown type: width unknowable, keep the 4-byte slot opaque.
            entries.append(IfdEntry(tag, ftype, n, raw4))
            continue
        total = size * n
        if total <= 4:
            value = raw4[:total]
        else:
            (voff,) = struct.unpack(endian + "L", raw4)
            if voff + total > len(tiff):
                raise MalformedExifError(
                    f"entry 0x{tag:04X} value at {voff} out of range"
                )
            value = tiff[voff : voff + total]
        entries.append(IfdEntry(tag, ftype, n, value))
    (next_offset,) = struct.unpack_from(endian + "L", tiff, end)
    return entries, next_offset


def _entry_uint(entry: IfdEntry, endian: str) -> int:
    if entry.field_type == TYPE_SHORT and len(entry.value) >= 2:
        return struct.unpack(endian + "H", entry.value[:2])[0]
    if len(entry.value) >= 4:
        return struct.unpack(endian + "L", entry.value[:4])[0]
    raise MalformedExifError(f"entry 0x{entry.tag:04X} has no integer value")


def _pop_tag(entries: list[IfdEntry], tag: int) -> IfdEntry | None:
    for i, e in enumerate(entries):
        if e.tag == tag:
            return entries.pop(i)
    return None


def decode_exif(tiff: bytes) -> ExifBlock:
    """Parse the TIFF structure of an EXIF block (the APP1 payload after
    the ``Exif\\0\\0`` prefix).  Raises MalformedExifError."""
    if len(tiff) < 8:
        raise MalformedExifError("TIFF header truncated")
    order = tiff[:2]
    if order == b"II":
        byte_order = "II"
        endian = "<"
    elif order == b"MM":
        byte_order = "MM"
        endian = ">"
    else:
        raise MalformedExifError(f"bad byte-order mark {order!r}")
    (magic,) = struct.unpack_from(endian + "H", tiff, 2)
    if magic != 42:
        raise MalformedExifError(f"bad TIFF magic {magic}")
    (ifd0_offset,) = struct.unpack_from(endian + "L", tiff, 4)

    ifd0, next_offset = _parse_ifd(tiff, endian, ifd0_offset)

    exif_ifd: list[IfdEntry] = []
    gps_ifd: list[IfdEntry] = []
    interop_ifd: list[IfdEntry] = []
    exif_ptr = _pop_tag(ifd0, TAG_EXIF_IFD_POINTER)
    if exif_ptr is not None:
        exif_ifd, _ = _parse_ifd(tiff, endian, _entry_uint(exif_ptr, endian))
        interop_ptr = _pop_tag(exif_ifd, TAG_INTEROP_IFD_POINTER)
        if interop_ptr is not None:
            interop_ifd, _ = _parse_ifd(tiff, endian, _entry_uint(interop_ptr, endian))
    gps_ptr = _pop_tag(ifd0, TAG_GPS_IFD_POINTER)
    if gps_ptr is not None:
        gps_ifd, _ = _parse_ifd(tiff, endian, _entry_uint(gps_ptr, endian))

    ifd1: list[IfdEntry] = []
    thumbnail: bytes | None = None
    if next_offset:
        ifd1, _ = _parse_ifd(tiff, endian, next_offset)
        toff = _pop_tag(ifd1, TAG_THUMB_OFFSET)
        tlen = _pop_tag(ifd1, TAG_THUMB_LENGTH)
        if toff is not None and tlen is not None:
            start = _entry_uint(toff, endian)
            length = _entry_uint(tlen, endian)
            if start + length > len(tiff):
                raise MalformedExifError("thumbnail bytes out of range")
            thumbnail = tiff[start : start + length]
        elif toff is not None or tlen is not None:
            raise MalformedExifError("thumbnail offset/length pair incomplete")

    return ExifBlock(byte_order, ifd0, exif_ifd, gps_ifd, interop_ifd, ifd1, thumbnail)


def _ifd_byte_size(entries: list[IfdEntry]) -> int:
    size = 2 + 12 * len(entries) + 4
    for e in entries:
        if len(e.value) > 4:
            size += len(e.value) + (len(e.value) & 1)
    return size


def _encode_ifd(
    entries: list[IfdEntry], endian: str, offset: int, next_offset: int
) -> bytes:
    ordered = sorted(entries, key=lambda e: e.tag)
    table = bytearray(struct.pack(endian + "H", len(ordered)))
    values = bytearray()
    cursor = offset + 2 + 12 * len(ordered) + 4
    for e in ordered:
        table += struct.pack(endian + "HHL", e.tag, e.field_type, e.count)
        if len(e.value) <= 4:
            table += e.value.ljust(4, b"\x00")
        else:
            table += struct.pack(endian + "L", cursor)
            values += e.value
            if len(e.value) & 1:
                values += b"\x00"
            cursor += len(e.value) + (len(e.value) & 1)
    table += struct.pack(endian + "L", next_offset)
    return bytes(table + values)


def encode_exif(block: ExifBlock) -> bytes:
    """Serialize an ExifBlock to TIFF bytes with freshly computed offsets.

    All IFD entries come out sorted by tag and every out-of-line value sits
    at an even offset."""
    endian = block.endian

    def ptr(tag: int, target: int) -> IfdEntry:
        return IfdEntry(tag, TYPE_LONG, 1, struct.pack(endian + "L", target))

    has_interop = bool(block.interop_ifd)
    has_exif = bool(block.exif_ifd) or has_interop
    has_gps = bool(block.gps_ifd)
    has_thumb = block.thumbnail is not None
    has_ifd1 = bool(block.ifd1) or has_thumb

    size0 = _ifd_byte_size(block.ifd0) + 12 * (int(has_exif) + int(has_gps))
    size_exif = (_ifd_byte_size(block.exif_ifd) + 12 * int(has_interop)) if has_exif else 0
    size_interop = _ifd_byte_size(block.interop_ifd) if has_interop else 0
    size_gps = _ifd_byte_size(block.gps_ifd) if has_gps else 0
    size_ifd1 = (_ifd_byte_size(block.ifd1) + 24 * int(has_thumb)) if has_ifd1 else 0

    cursor = 8 + size0
    off_exif = off_interop = off_gps = off_ifd1 = off_thumb = 0
    if has_exif:
        off_exif = cursor
        cursor += size_exif
    if has_interop:
        off_interop = cursor
        cursor += size_interop
    if has_gps:
        off_gps = cursor
        cursor += size_gps
    if has_ifd1:
        off_ifd1 = cursor
        cursor += size_ifd1
    if has_thumb:
        off_thumb = cursor

    ifd0 = list(block.ifd0)
    if has_exif:
        ifd0.append(ptr(TAG_EXIF_IFD_POINTER, off_exif))
    if has_gps:
        ifd0.append(ptr(TAG_GPS_IFD_POINTER, off_gps))
    exif_entries = list(block.exif_ifd)
    if has_interop:
        exif_entries.append(ptr(TAG_INTEROP_IFD_POINTER, off_interop))
    ifd1_entries = list(block.ifd1)
    if has_thumb:
        ifd1_entries.append(ptr(TAG_THUMB_OFFSET, off_thumb))
        ifd1_entries.append(
            IfdEntry(TAG_THUMB_LENGTH, TYPE_LONG, 1,
                     struct.pack(endian + "L", len(block.thumbnail or b"")))
        )

    out = bytearray(block.byte_order.encode("ascii"))
    out += struct.pack(endian + "H", 42)
    out += struct.pack(endian + "L", 8)
    out += _encode_ifd(ifd0, endian, 8, off_ifd1)
    if has_exif:
        out += _encode_ifd(exif_entries, endian, off_exif, 0)
    if has_interop:
        out += _encode_ifd(block.interop_ifd, endian, off_interop, 0)
    if has_gps:
        out += _encode_ifd(block.gps_ifd, endian, off_gps, 0)
    if has_ifd1:
        out += _encode_ifd(ifd1_entries, endian, off_ifd1, 0)
    if has_thumb:
        out += block.thumbnail or b""
    return bytes(out)


def _decode_comment_value(value: bytes, endian: str) -> str | None:
    if len(value) < 8:
        return None
    code = value[:8]
    body = value[8:]
    if code == ASCII_CODE:
        try:
            return body.decode("ascii").rstrip("\x00")
        except UnicodeDecodeError:
            return None
    if code == UNICODE_CODE:
        if len(body) & 1:
            body = body[:-1]
        encoding = "utf-16-le" if endian == "<" else "utf-16-be"
        try:
            return body.decode(encoding).rstrip("\x00")
        except UnicodeDecodeError:
            return None
    return None


def read_user_comment(doc: JpegDocument) -> str | None:
    """Decoded UserComment of the document's EXIF carrier, or None if there
    is no EXIF block, no UserComment entry, or an unrecognized character
    code.  Raises MalformedExifError when a carrier exists but its TIFF
    structure cannot be parsed."""
    idx = doc.exif_segment_index()
    if idx is None:
        return None
    block = decode_exif(doc.segments[idx].payload[len(EXIF_PREFIX):])
    for e in block.exif_ifd:
        # Some writers store the comment as BYTE instead of UNDEFINED.
        if e.tag == TAG_USER_COMMENT and e.field_type in (TYPE_UNDEFINED, 1):
            return _decode_comment_value(e.value, block.endian)
    return None


def write_user_comment(doc: JpegDocument, comment: str) -> bytes:
    """Return a complete JPEG byte stream whose EXIF UserComment equals
    ``comment`` (written with the ASCII character code), preserving every
    other IFD entry, the thumbnail, the scan data, and all non-EXIF
    segments.  Creates a minimal EXIF block when the input has none.

    Raises OversizeExifError when the rebuilt APP1 payload would not fit,
    and MalformedExifError when an existing carrier cannot be parsed."""
    encoded = comment.encode("ascii")  # schema layer guarantees ASCII
    idx = doc.exif_segment_index()
    if idx is None:
        block = ExifBlock()
    else:
        block = decode_exif(doc.segments[idx].payload[len(EXIF_PREFIX):])

    block.exif_ifd = [e for e in block.exif_ifd if e.tag != TAG_USER_COMMENT]
    value = ASCII_CODE + encoded
    block.exif_ifd.append(
        IfdEntry(TAG_USER_COMMENT, TYPE_UNDEFINED, len(value), value)
    )

    payload = EXIF_PREFIX + encode_exif(block)
    if len(payload) > MAX_SEGMENT_PAYLOAD:
        raise OversizeExifError(
            f"rebuilt APP1 payload is {len(payload)} bytes (limit 65533)"
        )

    segments = list(doc.segments)
    if idx is not None:
        segments[idx] = replace(segments[idx], payload=payload)
    else:
        insert_at = 0
        while insert_at < len(segments) and segments[insert_at].marker == MARKER_APP0:
            insert_at += 1
        segments.insert(insert_at, Segment(MARKER_APP1, payload))
    return serialize_jpeg(replace(doc, segments=tuple(segments)))
