import struct

import pytest

from dicoderma import (
    MissingFrameHeaderError,
    NotAJpegError,
    TruncatedFileError,
    UnsupportedJpegError,
    get_image_descriptor,
    parse_jpeg,
    serialize_jpeg,
)


def sof0(rows, cols, ncomp):
    comps = b"".join(bytes([i + 1, 0x11, 0]) for i in range(ncomp))
    payload = bytes([8]) + struct.pack(">HH", rows, cols) + bytes([ncomp]) + comps
    return b"\xff\xc0" + struct.pack(">H", len(payload) + 2) + payload


MINIMAL_SCAN = b"\xff\xda" + struct.pack(">H", 8) + b"\x01\x01\x00\x00\x3f\x00" + b"\xab\xcd" + b"\xff\xd9"


def minimal_jpeg(frame=None):
    return b"\xff\xd8" + (frame if frame is not None else sof0(1, 2, 3)) + MINIMAL_SCAN


class TestParse:
    def test_round_trip_on_all_fixtures(self, jpeg_fixtures):
        for name, data in jpeg_fixtures.items():
            assert serialize_jpeg(parse_jpeg(data)) == data, name

    def test_not_a_jpeg(self):
        with pytest.raises(NotAJpegError):
            parse_jpeg(b"GIF89a, which has no EXIF support at all")

    def test_empty_input(self):
        with pytest.raises(NotAJpegError):
            parse_jpeg(b"")

    def test_missing_frame_header(self):
        with pytest.raises(MissingFrameHeaderError):
            parse_jpeg(b"\xff\xd8" + MINIMAL_SCAN)

    def test_truncated_segment(self):
        data = b"\xff\xd8\xff\xe1" + struct.pack(">H", 500) + b"short"
        with pytest.raises(TruncatedFileError):
            parse_jpeg(data)

    def test_missing_eoi(self):
        data = minimal_jpeg()
        with pytest.raises(TruncatedFileError):
            parse_jpeg(data[:-2])

    def test_eoi_before_scan(self):
        with pytest.raises(TruncatedFileError):
            parse_jpeg(b"\xff\xd8" + sof0(1, 1, 1) + b"\xff\xd9")

    def test_synthetic_minimal_stream(self):
        doc = parse_jpeg(minimal_jpeg())
        assert [s.marker for s in doc.segments] == [0xC0]
        assert doc.scan_data == MINIMAL_SCAN

    def test_unsupported_component_count(self):
        with pytest.raises(UnsupportedJpegError):
            parse_jpeg(minimal_jpeg(frame=sof0(1, 1, 4)))

    def test_dnl_deferred_height(self):
        with pytest.raises(UnsupportedJpegError):
            parse_jpeg(minimal_jpeg(frame=sof0(0, 1, 1)))

    def test_fill_bytes_preserved(self):
        data = b"\xff\xd8" + b"\xff" + sof0(1, 2, 3) + MINIMAL_SCAN
        assert serialize_jpeg(parse_jpeg(data)) == data


class TestDescriptor:
    def test_color_2x1(self, jpeg_fixtures):
        desc = get_image_descriptor(parse_jpeg(jpeg_fixtures["color_2x1"]))
        assert (desc.rows, desc.columns, desc.components) == (1, 2, 3)
        assert desc.baseline is True
        assert desc.bits_per_sample == 8

    def test_grayscale(self, jpeg_fixtures):
        desc = get_image_descriptor(parse_jpeg(jpeg_fixtures["gray_8x8"]))
        assert (desc.rows, desc.columns, desc.components) == (8, 8, 1)
        assert desc.baseline is True

    def test_progressive_not_baseline(self, jpeg_fixtures):
        desc = get_image_descriptor(parse_jpeg(jpeg_fixtures["progressive"]))
        assert desc.baseline is False
        assert (desc.rows, desc.columns) == (9, 12)

    def test_hex_inspection_of_reference_fixture(self, jpeg_fixtures):
        """Confirm the SOF0 fields of the reference-encoder fixture by raw
        scanning, independent of the parser."""
        data = jpeg_fixtures["color_2x1"]
        pos = data.find(b"\xff\xc0")
        assert pos != -1
        precision = data[pos + 4]
        rows, cols = struct.unpack_from(">HH", data, pos + 5)
        ncomp = data[pos + 9]
        assert (precision, rows, cols, ncomp) == (8, 1, 2, 3)


class TestScanOpacity:
    def test_trailing_bytes_kept_in_scan(self):
        data = minimal_jpeg() + b"\x00\x00trailer"
        doc = parse_jpeg(data)
        assert serialize_jpeg(doc) == data

    def test_exif_segment_index(self, jpeg_fixtures):
        assert parse_jpeg(jpeg_fixtures["camera"]).exif_segment_index() is not None
        assert parse_jpeg(jpeg_fixtures["color_2x1"]).exif_segment_index() is None
