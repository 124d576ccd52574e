"""Shared fixtures: reference-encoder JPEGs and hand-built EXIF blocks.

All fixture streams are produced with Pillow (an independent JPEG/EXIF
implementation) or with the raw struct-level builders in exif_builder.py,
never with the code under test.
"""

import io
import struct

import pytest
from PIL import Image
from PIL.TiffImagePlugin import IFDRational

from exif_builder import build_tiff

HOLIDAY_COMMENT = b"ASCII\x00\x00\x00Shot on holiday"


def encode_jpeg(image: Image.Image, **save_kwargs) -> bytes:
    buffer = io.BytesIO()
    image.save(buffer, "JPEG", **save_kwargs)
    return buffer.getvalue()


def insert_app1(jpeg: bytes, payload: bytes) -> bytes:
    """Splice an APP1 segment right after SOI (raw byte surgery)."""
    assert jpeg[:2] == b"\xff\xd8"
    segment = b"\xff\xe1" + struct.pack(">H", len(payload) + 2) + payload
    return jpeg[:2] + segment + jpeg[2:]


def camera_exif() -> Image.Exif:
    """EXIF the way a camera would write it: IFD0 strings, Exif IFD times,
    an ordinary UserComment and a GPS IFD."""
    exif = Image.Exif()
    exif[0x010F] = "TestCam"
    exif[0x0110] = "TC-1000"
    exif[0x0132] = "2021:03:01 09:30:00"
    ifd = exif.get_ifd(0x8769)
    ifd[0x9003] = "2021:03:01 09:30:00"
    ifd[0x9286] = HOLIDAY_COMMENT
    gps = exif.get_ifd(0x8825)
    gps[1] = "N"
    gps[2] = (IFDRational(43, 1), IFDRational(39, 1), IFDRational(12, 1))
    gps[3] = "W"
    gps[4] = (IFDRational(79, 1), IFDRational(23, 1), IFDRational(2, 1))
    return exif


def _noise_image(mode: str, size: tuple[int, int]) -> Image.Image:
    image = Image.new(mode, size)
    width, height = size
    if mode == "RGB":
        image.putdata([
            ((x * 37) % 256, (y * 91) % 256, (x * y) % 256)
            for y in range(height) for x in range(width)
        ])
    else:
        image.putdata([(x * 31 + y * 7) % 256 for y in range(height) for x in range(width)])
    return image


@pytest.fixture(scope="session")
def jpeg_fixtures() -> dict[str, bytes]:
    """Named fixture streams covering the shapes the codec must handle."""
    tiny_thumb = encode_jpeg(Image.new("RGB", (4, 4), (10, 200, 30)))
    unicode_tiff = build_tiff(
        exif=[(0x9286, 7, b"UNICODE\x00" + "lésion café".encode("utf-16-le"))],
    )
    thumb_tiff = build_tiff(
        ifd0=[(0x010F, 2, b"TestCam\x00")],
        ifd1=[(0x0103, 3, struct.pack("<H", 6))],
        thumbnail=tiny_thumb,
    )
    base = encode_jpeg(_noise_image("RGB", (16, 12)))
    return {
        "color_2x1": encode_jpeg(Image.new("RGB", (2, 1), (180, 20, 20))),
        "gray_8x8": encode_jpeg(_noise_image("L", (8, 8))),
        "camera": encode_jpeg(_noise_image("RGB", (16, 16)), exif=camera_exif()),
        "progressive": encode_jpeg(_noise_image("RGB", (12, 9)), progressive=True),
        "big_color": encode_jpeg(_noise_image("RGB", (32, 24)), quality=90),
        "unicode_comment": insert_app1(base, b"Exif\x00\x00" + unicode_tiff),
        "thumbnail": insert_app1(base, b"Exif\x00\x00" + thumb_tiff),
        "garbage_exif": insert_app1(base, b"Exif\x00\x00" + b"XXXXGARBAGE TIFF"),
    }
