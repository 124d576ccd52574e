"""Local JSON-over-HTTP API for the tagging workflow.

The service exposes one image directory.  Image ids are URL-safe tokens
derived from the root-relative path, so nothing outside the served root is
ever addressable.  Writes are optimistic: clients send back the content
hash they read (``If-Match``) and lose with 409 when the file changed.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import os
import tempfile
import threading
from collections import defaultdict
from pathlib import Path
from typing import Any, Literal

from fastapi import FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict

from .dicom import DEFAULT_UID_ROOT, UidContext, build_sc_dataset, encode_part10
from .exif import MalformedExifError, read_user_comment, write_user_comment
from .jpeg import JpegError, NotAJpegError, parse_jpeg
from .metadata import (
    FIELD_KEYWORDS,
    KEYWORD_FIELDS,
    InvalidMetadataError,
    MetadataError,
    NotDicodermaError,
    decode_metadata,
    encode_metadata,
    metadata_from_payload,
    metadata_to_payload,
)
from .search import (
    Contains,
    DateRange,
    Equals,
    Predicate,
    SearchQuery,
    UnknownSearchFieldError,
    match,
    scan,
)

_JPEG_SUFFIXES = (".jpg", ".jpeg")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, issues: list | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.issues = issues or []


class ImageSummary(BaseModel):
    id: str
    relative_path: str
    tagged: bool
    metadata: dict[str, Any] | None = None
    rows: int
    columns: int


class DirectoryListing(BaseModel):
    directory: str
    images: list[ImageSummary]
    subdirectories: list[str]


class TagsResponse(BaseModel):
    id: str
    tagged: bool
    metadata: dict[str, Any] | None = None
    content_hash: str


class PredicateModel(BaseModel):
    field: str
    op: Literal["equals", "contains", "date_range"]
    value: str | None = None
    start: str | None = None
    end: str | None = None


class SearchRequest(BaseModel):
    predicates: list[PredicateModel] = []
    case_sensitive: bool = False


class ConvertRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    save: bool = False
    output: str | None = None
    uid_root: str = DEFAULT_UID_ROOT
    seed: int | None = None


def encode_image_id(relative_path: str) -> str:
    return base64.urlsafe_b64encode(relative_path.encode("utf-8")).decode("ascii").rstrip("=")


def decode_image_id(token: str) -> str:
    padding = "=" * (-len(token) % 4)
    try:
        return base64.urlsafe_b64decode(token + padding).decode("utf-8")
    except (binascii.Error, UnicodeDecodeError):
        raise ApiError(404, "not-found", "unknown image id")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _unquote_etag(value: str) -> str:
    value = value.strip()
    if value.startswith("W/"):
        value = value[2:]
    return value.strip('"')


def create_app(root: Path | str, ui_dir: Path | None = None) -> FastAPI:
    """Application serving the tagging API for one image directory."""
    root = Path(root).resolve()
    if not root.is_dir():
        raise ValueError(f"{root} is not a directory")

    app = FastAPI(title="dicoderma tagger", docs_url=None, redoc_url=None)
    locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
    locks_guard = threading.Lock()

    def lock_for(rel: str) -> threading.Lock:
        with locks_guard:
            return locks[rel]

    def resolve(rel: str, *, for_write: bool = False) -> Path:
        """Map a root-relative path to a real path, rejecting escapes."""
        if "\x00" in rel:
            raise ApiError(404, "not-found", "unknown path")
        if rel.startswith(("/", "\\")) or rel.split("/", 1)[0].endswith(":"):
            raise ApiError(404, "not-found", "path outside served root")
        parts = [p for p in rel.replace("\\", "/").split("/") if p not in ("", ".")]
        if any(p == ".." for p in parts):
            raise ApiError(404, "not-found", "path outside served root")
        path = root.joinpath(*parts)
        probe = path.parent if for_write else path
        try:
            resolved = probe.resolve()
        except (OSError, ValueError):
            raise ApiError(404, "not-found", "unknown path")
        if not (resolved == root or resolved.is_relative_to(root)):
            raise ApiError(404, "not-found", "path outside served root")
        return path

    def image_path(token: str) -> tuple[str, Path]:
        rel = decode_image_id(token)
        path = resolve(rel)
        if path.suffix.lower() not in _JPEG_SUFFIXES or not path.is_file():
            raise ApiError(404, "not-found", f"no image at {rel!r}")
        return rel, path

    def summarize(rel: str, path: Path) -> ImageSummary | None:
        try:
            doc = parse_jpeg(path.read_bytes())
        except (OSError, JpegError):
            return None
        metadata = None
        tagged = False
        try:
            comment = read_user_comment(doc)
            if comment is not None:
                metadata = metadata_to_payload(decode_metadata(comment))
                tagged = True
        except (MalformedExifError, MetadataError):
            pass
        return ImageSummary(
            id=encode_image_id(rel),
            relative_path=rel,
            tagged=tagged,
            metadata=metadata,
            rows=doc.frame.rows,
            columns=doc.frame.columns,
        )

    @app.exception_handler(ApiError)
    async def on_api_error(_request: Request, exc: ApiError):
        body: dict[str, Any] = {"error": exc.code, "message": exc.message}
        if exc.issues:
            body["issues"] = exc.issues
        return JSONResponse(status_code=exc.status, content=body)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(_request: Request, exc: RequestValidationError):
        issues = [
            {"field": ".".join(str(p) for p in err["loc"]), "rule": err["type"],
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(
            status_code=422,
            content={"error": "validation", "message": "invalid request body",
                     "issues": issues},
        )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "root": str(root)}

    @app.get("/api/images", response_model=DirectoryListing)
    def list_images(dir: str = ""):
        directory = resolve(dir)
        if not directory.is_dir():
            raise ApiError(404, "not-found", f"no directory at {dir!r}")
        rel_dir = directory.relative_to(root).as_posix() if directory != root else ""
        images: list[ImageSummary] = []
        subdirectories: list[str] = []
        for entry in sorted(os.scandir(directory), key=lambda e: e.name):
            if entry.is_symlink():
                continue
            if entry.is_dir(follow_symlinks=False):
                subdirectories.append(entry.name)
                continue
            if Path(entry.name).suffix.lower() not in _JPEG_SUFFIXES:
                continue
            rel = f"{rel_dir}/{entry.name}" if rel_dir else entry.name
            summary = summarize(rel, Path(entry.path))
            if summary is not None:
                images.append(summary)
        return DirectoryListing(directory=rel_dir, images=images,
                                subdirectories=subdirectories)

    @app.get("/api/images/{token}/file")
    def get_image_bytes(token: str, if_none_match: str | None = Header(default=None)):
        _rel, path = image_path(token)
        data = path.read_bytes()
        etag = _sha256(data)
        if if_none_match is not None and _unquote_etag(if_none_match) == etag:
            return Response(status_code=304, headers={"ETag": f'"{etag}"'})
        return Response(content=data, media_type="image/jpeg",
                        headers={"ETag": f'"{etag}"'})

    def tags_response(token: str, rel: str, data: bytes) -> TagsResponse:
        try:
            doc = parse_jpeg(data)
        except NotAJpegError:
            raise ApiError(422, "not-a-jpeg", f"{rel!r} is not a JPEG file")
        except JpegError as exc:
            raise ApiError(422, "malformed-jpeg", str(exc))
        try:
            comment = read_user_comment(doc)
        except MalformedExifError as exc:
            raise ApiError(422, "malformed-exif", str(exc))
        metadata = None
        tagged = False
        if comment is not None:
            try:
                metadata = metadata_to_payload(decode_metadata(comment))
                tagged = True
            except NotDicodermaError:
                pass
            except InvalidMetadataError as exc:
                raise ApiError(
                    422, "invalid-metadata", "stored metadata violates value rules",
                    issues=[vars(i) for i in exc.issues],
                )
            except MetadataError:
                pass
        return TagsResponse(id=token, tagged=tagged, metadata=metadata,
                            content_hash=_sha256(data))

    @app.get("/api/images/{token}/tags", response_model=TagsResponse)
    def get_tags(token: str, response: Response):
        rel, path = image_path(token)
        data = path.read_bytes()
        result = tags_response(token, rel, data)
        response.headers["ETag"] = f'"{result.content_hash}"'
        return result

    @app.put("/api/images/{token}/tags", response_model=TagsResponse)
    def put_tags(token: str, payload: dict[str, Any], response: Response,
                 if_match: str | None = Header(default=None)):
        rel, path = image_path(token)
        if "dicoderma" not in payload:
            payload = {"dicoderma": "1.0", **payload}
        try:
            metadata = metadata_from_payload(payload)
        except InvalidMetadataError as exc:
            raise ApiError(422, "invalid-metadata", "metadata violates value rules",
                           issues=[vars(i) for i in exc.issues])
        except MetadataError as exc:
            raise ApiError(422, "invalid-metadata", str(exc))
        with lock_for(rel):
            data = path.read_bytes()
            if if_match is not None and _unquote_etag(if_match) != _sha256(data):
                raise ApiError(409, "conflict", "file changed since it was read")
            try:
                doc = parse_jpeg(data)
                rewritten = write_user_comment(doc, encode_metadata(metadata))
            except (JpegError, MalformedExifError) as exc:
                raise ApiError(422, "malformed-jpeg", str(exc))
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.",
                                       suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as handle:
                    handle.write(rewritten)
                os.replace(tmp, path)
            except BaseException:
                try:
                    os.unlink(tmp)
                except OSError:
                    pass
                raise
        result = tags_response(token, rel, rewritten)
        response.headers["ETag"] = f'"{result.content_hash}"'
        return result

    @app.post("/api/search", response_model=list[ImageSummary])
    def search_images(request: SearchRequest):
        predicates = []
        try:
            for p in request.predicates:
                # Accept both the canonical key spelling and the field name.
                name = KEYWORD_FIELDS.get(p.field, p.field)
                if name not in FIELD_KEYWORDS:
                    raise UnknownSearchFieldError(f"unknown search field {p.field!r}")
                if p.op == "equals":
                    predicates.append(Predicate(name, Equals(p.value or "")))
                elif p.op == "contains":
                    predicates.append(Predicate(name, Contains(p.value or "")))
                else:
                    predicates.append(Predicate(name, DateRange(p.start, p.end)))
            query = SearchQuery(tuple(predicates), request.case_sensitive)
        except UnknownSearchFieldError as exc:
            raise ApiError(400, "unknown-field", str(exc))
        result = scan(root, query)
        summaries = []
        for record in result.records:
            rel = record.path.resolve().relative_to(root).as_posix()
            summaries.append(ImageSummary(
                id=encode_image_id(rel),
                relative_path=rel,
                tagged=True,
                metadata=metadata_to_payload(record.metadata),
                rows=record.descriptor.rows,
                columns=record.descriptor.columns,
            ))
        return summaries

    @app.post("/api/images/{token}/convert")
    def convert_image(token: str, request: ConvertRequest | None = None):
        request = request or ConvertRequest()
        rel, path = image_path(token)
        data = path.read_bytes()
        try:
            doc = parse_jpeg(data)
            comment = read_user_comment(doc)
        except (JpegError, MalformedExifError) as exc:
            raise ApiError(422, "malformed-jpeg", str(exc))
        if comment is None:
            raise ApiError(422, "untagged", f"{rel!r} carries no metadata tag")
        try:
            metadata = decode_metadata(comment)
        except MetadataError as exc:
            raise ApiError(422, "untagged", str(exc))
        if not doc.frame.baseline:
            raise ApiError(415, "not-baseline", "only baseline JPEG converts losslessly")
        try:
            ctx = UidContext(root=request.uid_root, seed=request.seed)
        except ValueError as exc:
            raise ApiError(400, "bad-uid-root", str(exc))
        try:
            dataset = build_sc_dataset(metadata, doc.frame, ctx)
            encoded = encode_part10(dataset, data)
        except InvalidMetadataError as exc:
            raise ApiError(422, "invalid-metadata", "stored metadata violates value rules",
                           issues=[vars(i) for i in exc.issues])
        sop_uid = (dataset.value_of(0x0008, 0x0018) or b"").decode("ascii").rstrip("\x00")
        if request.save:
            if not request.output:
                raise ApiError(400, "missing-output", "save=true requires an output path")
            target = resolve(request.output, for_write=True)
            if target.is_dir():
                raise ApiError(400, "missing-output", "output path is a directory")
            with lock_for(request.output):
                target.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.",
                                           suffix=".tmp")
                try:
                    with os.fdopen(fd, "wb") as handle:
                        handle.write(encoded)
                    os.replace(tmp, target)
                except BaseException:
                    try:
                        os.unlink(tmp)
                    except OSError:
                        pass
                    raise
            saved = target.relative_to(root).as_posix()
            return JSONResponse({"saved_to": saved, "sop_instance_uid": sop_uid})
        stem = Path(rel).stem or "image"
        return Response(
            content=encoded,
            media_type="application/dicom",
            headers={
                "Content-Disposition": f'attachment; filename="{stem}.dcm"',
                "X-Sop-Instance-Uid": sop_uid,
            },
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
