"""Recursive directory scanning for tagged JPEGs with field predicates."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .exif import MalformedExifError, read_user_comment
from .jpeg import ImageDescriptor, JpegError, parse_jpeg
from .metadata import ClinicalMetadata, MetadataError, decode_metadata


class RootNotFoundError(ValueError):
    """The scan root does not exist or is not a directory."""


class UnknownSearchFieldError(ValueError):
    """A predicate names a field outside the metadata field set."""


SEARCHABLE_FIELDS = frozenset(
    (
        "patient_id",
        "patient_name",
        "patient_sex",
        "study_date",
        "study_time",
        "study_description",
        "study_instance_uid",
        "series_instance_uid",
    )
)

_JPEG_SUFFIXES = (".jpg", ".jpeg")


@dataclass(frozen=True)
class Equals:
    value: str


@dataclass(frozen=True)
class Contains:
    value: str


@dataclass(frozen=True)
class DateRange:
    start: str | None = None  # YYYYMMDD, inclusive
    end: str | None = None


Matcher = Equals | Contains | DateRange


@dataclass(frozen=True)
class Predicate:
    field: str
    matcher: Matcher

    def __post_init__(self):
        if self.field not in SEARCHABLE_FIELDS:
            raise UnknownSearchFieldError(f"unknown search field {self.field!r}")
        if isinstance(self.matcher, DateRange) and self.field != "study_date":
            raise UnknownSearchFieldError("date_range applies only to study_date")


@dataclass(frozen=True)
class SearchQuery:
    """Conjunction of predicates; the empty query matches every tagged image."""

    predicates: tuple[Predicate, ...] = ()
    case_sensitive: bool = False


@dataclass(frozen=True)
class TagRecord:
    path: Path
    metadata: ClinicalMetadata
    descriptor: ImageDescriptor


@dataclass
class ScanDiagnostics:
    """Per-scan counts of files that produced no record."""

    files_seen: int = 0
    tagged: int = 0
    untagged: int = 0
    malformed: int = 0
    unreadable: int = 0


@dataclass
class ScanResult:
    records: list[TagRecord]
    diagnostics: ScanDiagnostics = field(default_factory=ScanDiagnostics)


def match(m: ClinicalMetadata, q: SearchQuery) -> bool:
    """True iff every predicate holds; a predicate on an absent field is
    false."""
    for pred in q.predicates:
        value = getattr(m, pred.field)
        if value is None:
            return False
        matcher = pred.matcher
        if isinstance(matcher, Equals):
            if q.case_sensitive:
                if value != matcher.value:
                    return False
            elif value.casefold() != matcher.value.casefold():
                return False
        elif isinstance(matcher, Contains):
            if q.case_sensitive:
                if matcher.value not in value:
                    return False
            elif matcher.value.casefold() not in value.casefold():
                return False
        else:
            if matcher.start is not None and value < matcher.start:
                return False
            if matcher.end is not None and value > matcher.end:
                return False
    return True


def read_record(path: Path) -> TagRecord | None:
    """Parse one file into a TagRecord, or None when untagged.  Raises the
    underlying error for unreadable or malformed files."""
    doc = parse_jpeg(path.read_bytes())
    comment = read_user_comment(doc)
    if comment is None:
        return None
    try:
        metadata = decode_metadata(comment)
    except (MetadataError, ValueError):
        return None
    return TagRecord(path, metadata, doc.frame)


def scan(root: Path | str, q: SearchQuery = SearchQuery()) -> ScanResult:
    """Walk ``root`` recursively and return matching records sorted by path.

    Only .jpg/.jpeg files are considered; unparseable or untagged files are
    skipped and counted in the diagnostics.  Symlinks are not followed.
    Raises RootNotFoundError, or PermissionError for the root itself."""
    root = Path(root)
    if not root.is_dir():
        raise RootNotFoundError(f"{root} does not exist or is not a directory")

    diagnostics = ScanDiagnostics()
    records: list[TagRecord] = []
    pending = [root]
    first = True
    while pending:
        directory = pending.pop()
        try:
            entries = list(os.scandir(directory))
        except PermissionError:
            if first:
                raise
            diagnostics.unreadable += 1
            continue
        except OSError:
            diagnostics.unreadable += 1
            continue
        finally:
            first = False
        for entry in entries:
            epath = Path(entry.path)
            if entry.is_symlink():
                continue
            if entry.is_dir(follow_symlinks=False):
                pending.append(epath)
                continue
            if epath.suffix.lower() not in _JPEG_SUFFIXES:
                continue
            diagnostics.files_seen += 1
            try:
                record = read_record(epath)
            except OSError:
                diagnostics.unreadable += 1
                continue
            except (JpegError, MalformedExifError):
                diagnostics.malformed += 1
                continue
            if record is None:
                diagnostics.untagged += 1
                continue
            diagnostics.tagged += 1
            if match(record.metadata, q):
                records.append(record)
    records.sort(key=lambda r: str(r.path))
    return ScanResult(records, diagnostics)
