import io
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from dicoderma import (
    MalformedExifError,
    OversizeExifError,
    parse_jpeg,
    read_user_comment,
    serialize_jpeg,
    write_user_comment,
)
from conftest import HOLIDAY_COMMENT, insert_app1
from exif_builder import build_tiff

ASCII_TEXT = st.text(
    alphabet=st.characters(min_codepoint=0x20, max_codepoint=0x7E), max_size=200
)


def entry_multiset(doc):
    """Multiset of semantic (ifd, tag, type, count, value) tuples over the
    EXIF carrier, excluding UserComment, plus the thumbnail bytes."""
    from dicoderma.exif import TAG_USER_COMMENT, decode_exif
    from dicoderma.jpeg import EXIF_PREFIX

    idx = doc.exif_segment_index()
    if idx is None:
        return None
    block = decode_exif(doc.segments[idx].payload[len(EXIF_PREFIX):])
    bag = []
    for name in ("ifd0", "exif_ifd", "gps_ifd", "interop_ifd", "ifd1"):
        for e in getattr(block, name):
            if e.tag == TAG_USER_COMMENT:
                continue
            bag.append((name, e.tag, e.field_type, e.count, e.value))
    return sorted(bag), block.thumbnail


class TestRead:
    def test_no_app1_is_absent(self, jpeg_fixtures):
        assert read_user_comment(parse_jpeg(jpeg_fixtures["color_2x1"])) is None

    def test_ascii_comment(self, jpeg_fixtures):
        base = jpeg_fixtures["gray_8x8"]
        tiff = build_tiff(exif=[(0x9286, 7, b"ASCII\x00\x00\x00" + b'{"dicoderma":"1.0"}')])
        doc = parse_jpeg(insert_app1(base, b"Exif\x00\x00" + tiff))
        assert read_user_comment(doc) == '{"dicoderma":"1.0"}'

    def test_camera_comment(self, jpeg_fixtures):
        assert read_user_comment(parse_jpeg(jpeg_fixtures["camera"])) == "Shot on holiday"

    def test_unicode_comment_little_endian(self, jpeg_fixtures):
        doc = parse_jpeg(jpeg_fixtures["unicode_comment"])
        assert read_user_comment(doc) == "lésion café"

    def test_unicode_comment_big_endian(self, jpeg_fixtures):
        tiff = build_tiff(
            byte_order=b"MM",
            exif=[(0x9286, 7, b"UNICODE\x00" + "naévus".encode("utf-16-be"))],
        )
        doc = parse_jpeg(insert_app1(jpeg_fixtures["gray_8x8"], b"Exif\x00\x00" + tiff))
        assert read_user_comment(doc) == "naévus"

    def test_unknown_character_code_is_absent(self, jpeg_fixtures):
        tiff = build_tiff(exif=[(0x9286, 7, b"\x00" * 8 + b"opaque")])
        doc = parse_jpeg(insert_app1(jpeg_fixtures["gray_8x8"], b"Exif\x00\x00" + tiff))
        assert read_user_comment(doc) is None

    def test_malformed_tiff_raises(self, jpeg_fixtures):
        with pytest.raises(MalformedExifError):
            read_user_comment(parse_jpeg(jpeg_fixtures["garbage_exif"]))

    def test_exif_without_comment_is_absent(self, jpeg_fixtures):
        tiff = build_tiff(ifd0=[(0x010F, 2, b"Cam\x00")])
        doc = parse_jpeg(insert_app1(jpeg_fixtures["gray_8x8"], b"Exif\x00\x00" + tiff))
        assert read_user_comment(doc) is None


class TestWrite:
    @settings(max_examples=50, deadline=None)
    @given(ASCII_TEXT)
    def test_round_trip_any_ascii_comment(self, comment):
        im = Image.new("RGB", (2, 2), (1, 2, 3))
        buffer = io.BytesIO()
        im.save(buffer, "JPEG")
        doc = parse_jpeg(buffer.getvalue())
        out = write_user_comment(doc, comment)
        assert read_user_comment(parse_jpeg(out)) == comment.rstrip("\x00")

    def test_round_trip_on_every_fixture(self, jpeg_fixtures):
        for name, data in jpeg_fixtures.items():
            if name == "garbage_exif":
                continue
            out = write_user_comment(parse_jpeg(data), "hello world")
            assert read_user_comment(parse_jpeg(out)) == "hello world", name

    def test_scan_data_untouched(self, jpeg_fixtures):
        for name, data in jpeg_fixtures.items():
            if name == "garbage_exif":
                continue
            doc = parse_jpeg(data)
            out = parse_jpeg(write_user_comment(doc, "x" * 50))
            assert out.scan_data == doc.scan_data, name

    def test_other_entries_preserved(self, jpeg_fixtures):
        doc = parse_jpeg(jpeg_fixtures["camera"])
        before = entry_multiset(doc)
        after = entry_multiset(parse_jpeg(write_user_comment(doc, "replaced")))
        assert before == after

    def test_thumbnail_preserved(self, jpeg_fixtures):
        doc = parse_jpeg(jpeg_fixtures["thumbnail"])
        _, thumb_before = entry_multiset(doc)
        rewritten = parse_jpeg(write_user_comment(doc, "with thumb"))
        entries_after, thumb_after = entry_multiset(rewritten)
        assert thumb_before and thumb_after == thumb_before
        assert ("ifd1", 0x0103, 3, 1, struct.pack("<H", 6)) in entries_after

    def test_pil_oracle_reads_back_everything(self, jpeg_fixtures):
        """Pillow (independent EXIF reader) sees our comment and the
        original camera entries in the rewritten file."""
        out = write_user_comment(parse_jpeg(jpeg_fixtures["camera"]), "oracle check")
        image = Image.open(io.BytesIO(out))
        exif = image.getexif()
        assert exif.get(0x010F) == "TestCam"
        assert exif.get(0x0110) == "TC-1000"
        ifd = exif.get_ifd(0x8769)
        assert ifd[0x9286] == b"ASCII\x00\x00\x00oracle check"
        assert ifd[0x9003] == "2021:03:01 09:30:00"
        gps = exif.get_ifd(0x8825)
        assert gps[1] == "N" and gps[3] == "W"
        assert tuple(gps[2]) == (43.0, 39.0, 12.0)

    def test_minimal_block_created_after_app0(self, jpeg_fixtures):
        data = jpeg_fixtures["color_2x1"]
        doc = parse_jpeg(data)
        assert doc.segments[0].marker == 0xE0  # reference encoder writes JFIF
        out = parse_jpeg(write_user_comment(doc, "fresh"))
        assert out.segments[0].marker == 0xE0
        assert out.segments[1].marker == 0xE1
        assert out.segments[1].payload.startswith(b"Exif\x00\x00II")

    def test_replacement_leaves_single_comment_entry(self, jpeg_fixtures):
        from dicoderma.exif import TAG_USER_COMMENT, decode_exif
        from dicoderma.jpeg import EXIF_PREFIX

        doc = parse_jpeg(jpeg_fixtures["camera"])
        out = parse_jpeg(write_user_comment(doc, "new"))
        idx = out.exif_segment_index()
        block = decode_exif(out.segments[idx].payload[len(EXIF_PREFIX):])
        comments = [e for e in block.exif_ifd if e.tag == TAG_USER_COMMENT]
        assert len(comments) == 1
        assert comments[0].value == b"ASCII\x00\x00\x00new"

    def test_rewrite_idempotent(self, jpeg_fixtures):
        for name, data in jpeg_fixtures.items():
            if name == "garbage_exif":
                continue
            first = write_user_comment(parse_jpeg(data), "same text")
            second = write_user_comment(parse_jpeg(first), "same text")
            assert first == second, name

    def test_non_exif_segments_pass_through(self, jpeg_fixtures):
        doc = parse_jpeg(jpeg_fixtures["camera"])
        out = parse_jpeg(write_user_comment(doc, "x"))
        keep = [(s.marker, s.payload) for s in doc.segments if not (
            s.marker == 0xE1 and s.payload.startswith(b"Exif\x00\x00"))]
        kept = [(s.marker, s.payload) for s in out.segments if not (
            s.marker == 0xE1 and s.payload.startswith(b"Exif\x00\x00"))]
        assert keep == kept

    def test_oversize_rejected(self, jpeg_fixtures):
        doc = parse_jpeg(jpeg_fixtures["gray_8x8"])
        with pytest.raises(OversizeExifError):
            write_user_comment(doc, "x" * 65600)

    def test_malformed_existing_exif_raises(self, jpeg_fixtures):
        with pytest.raises(MalformedExifError):
            write_user_comment(parse_jpeg(jpeg_fixtures["garbage_exif"]), "x")

    def test_non_ascii_comment_rejected(self, jpeg_fixtures):
        with pytest.raises(UnicodeEncodeError):
            write_user_comment(parse_jpeg(jpeg_fixtures["gray_8x8"]), "café")


class TestTiffStructure:
    def rewritten_tiff(self, jpeg_fixtures, name="camera"):
        out = parse_jpeg(write_user_comment(parse_jpeg(jpeg_fixtures[name]), "s"))
        payload = out.segments[out.exif_segment_index()].payload
        return payload[6:]

    def walk_ifds(self, tiff):
        """Raw struct-level walk used to check structural invariants."""
        en = "<" if tiff[:2] == b"II" else ">"
        sizes = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}
        (first,) = struct.unpack_from(en + "L", tiff, 4)
        queue = [first]
        while queue:
            offset = queue.pop()
            (count,) = struct.unpack_from(en + "H", tiff, offset)
            tags = []
            for i in range(count):
                base = offset + 2 + 12 * i
                tag, ftype, n = struct.unpack_from(en + "HHL", tiff, base)
                tags.append(tag)
                total = sizes[ftype] * n
                if total > 4:
                    (voff,) = struct.unpack_from(en + "L", tiff, base + 8)
                    yield ("offset", voff)
                if tag in (0x8769, 0x8825, 0xA005):
                    (sub,) = struct.unpack_from(en + "L", tiff, base + 8)
                    queue.append(sub)
            yield ("tags", tags)
            (next_ifd,) = struct.unpack_from(en + "L", tiff, offset + 2 + 12 * count)
            if next_ifd:
                queue.append(next_ifd)

    def test_entries_sorted_and_offsets_even(self, jpeg_fixtures):
        for name in ("camera", "thumbnail", "color_2x1"):
            tiff = self.rewritten_tiff(jpeg_fixtures, name)
            for kind, value in self.walk_ifds(tiff):
                if kind == "tags":
                    assert value == sorted(value)
                else:
                    assert value % 2 == 0

    def test_magic_and_order(self, jpeg_fixtures):
        tiff = self.rewritten_tiff(jpeg_fixtures)
        en = "<" if tiff[:2] == b"II" else ">"
        assert struct.unpack_from(en + "H", tiff, 2)[0] == 42
