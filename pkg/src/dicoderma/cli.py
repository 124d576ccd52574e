"""Command-line interface: tag, show, search, convert, anonymize, detect,
serve.

Exit codes: 0 success, 1 operational error, 2 usage error, 3 reserved for
``detect`` reporting at least one tagged image (so upload gates can tell a
policy hit from a failure).
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import os
import sys
import tempfile
from pathlib import Path

import click

from .dicom import (
    DEFAULT_UID_ROOT,
    UidContext,
    build_sc_dataset,
    encode_part10,
)
from .exif import read_user_comment, write_user_comment
from .jpeg import parse_jpeg
from .metadata import (
    FIELD_KEYWORDS,
    KEYWORD_FIELDS,
    AnonymizationPolicy,
    ClinicalMetadata,
    MalformedJsonError,
    MetadataError,
    MissingSecretError,
    NotDicodermaError,
    anonymize,
    decode_metadata,
    detect,
    encode_metadata,
    metadata_to_payload,
    validate,
)
from .search import (
    Contains,
    DateRange,
    Equals,
    Predicate,
    RootNotFoundError,
    SearchQuery,
    UnknownSearchFieldError,
    scan,
)

SECRET_ENV_VAR = "DICODERMA_SECRET"

_LOOPBACK_HOSTS = {"127.0.0.1", "localhost", "::1"}

# Display order for `show`.
_SHOW_ORDER = (
    "PatientID",
    "PatientName",
    "PatientSex",
    "StudyDate",
    "StudyTime",
    "StudyDescription",
    "StudyInstanceUID",
    "SeriesInstanceUID",
)


def _fail(message: str, code: int = 1) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read_jpeg(path: Path):
    try:
        return parse_jpeg(path.read_bytes())
    except OSError as exc:
        _fail(f"cannot read {path}: {exc.strerror or exc}")
    except ValueError as exc:
        _fail(f"{path}: {exc}")


def _load_metadata(doc, path: Path) -> ClinicalMetadata | None:
    """Metadata of a tagged file, or None when untagged (which includes
    ordinary non-payload camera comments)."""
    try:
        comment = read_user_comment(doc)
    except ValueError as exc:
        _fail(f"{path}: {exc}")
    if comment is None:
        return None
    try:
        return decode_metadata(comment)
    except (MalformedJsonError, NotDicodermaError):
        return None
    except MetadataError as exc:
        _fail(f"{path}: {exc}")


def _field_name(key: str) -> str:
    """Normalize a user-supplied field name (DICOM keyword or snake_case)."""
    if key in KEYWORD_FIELDS:
        return KEYWORD_FIELDS[key]
    if key in FIELD_KEYWORDS:
        return key
    raise click.UsageError(
        f"unknown field {key!r}; expected one of: " + ", ".join(sorted(FIELD_KEYWORDS.values()))
    )


def _normalize_date(text: str) -> str:
    if len(text) == 8 and text.isdigit():
        return text
    try:
        return datetime.date.fromisoformat(text).strftime("%Y%m%d")
    except ValueError:
        raise click.UsageError(f"{text!r} is not a date (YYYYMMDD or ISO-8601)")


def _report_issues(issues) -> None:
    for issue in issues:
        click.echo(f"invalid {issue.field} [{issue.rule}]: {issue.message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(package_name="dicoderma")
def main():
    """Tag, search, anonymize and convert clinical JPEG images."""


@main.command()
@click.argument("file", type=click.Path(path_type=Path, dir_okay=False))
@click.argument("fields", nargs=-1)
@click.option("--date-time", "date_time", default=None,
              help="ISO-8601 date or datetime; fills StudyDate and StudyTime.")
@click.option("--in-place", is_flag=True, help="Rewrite FILE instead of a sibling copy.")
@click.option("-o", "--output", type=click.Path(path_type=Path, dir_okay=False),
              help="Output path (default: <name>.tagged.jpg).")
def tag(file: Path, fields: tuple[str, ...], date_time: str | None,
        in_place: bool, output: Path | None):
    """Merge FIELD=VALUE pairs into FILE's metadata tag.

    Provided keys overwrite existing values; other fields are kept."""
    updates: dict[str, str] = {}
    for item in fields:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.UsageError(f"expected FIELD=VALUE, got {item!r}")
        updates[_field_name(key)] = value
    if date_time is not None:
        try:
            parsed = datetime.datetime.fromisoformat(date_time)
        except ValueError:
            try:
                parsed = datetime.date.fromisoformat(date_time)
            except ValueError:
                raise click.UsageError(f"{date_time!r} is not ISO-8601")
        updates["study_date"] = parsed.strftime("%Y%m%d")
        if isinstance(parsed, datetime.datetime):
            updates["study_time"] = parsed.strftime("%H%M%S")
    if not updates:
        raise click.UsageError("no fields to set")

    doc = _read_jpeg(file)
    current = _load_metadata(doc, file) or ClinicalMetadata()
    merged = dataclasses.replace(current, **updates)
    issues = validate(merged)
    if issues:
        _report_issues(issues)
    try:
        rewritten = write_user_comment(doc, encode_metadata(merged))
    except ValueError as exc:
        _fail(f"{file}: {exc}")
    destination = file if in_place else (output or file.with_name(file.stem + ".tagged.jpg"))
    _atomic_write(destination, rewritten)
    click.echo(f"wrote {destination}")


@main.command()
@click.argument("file", type=click.Path(path_type=Path, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def show(file: Path, fmt: str):
    """Display FILE's metadata tag."""
    doc = _read_jpeg(file)
    try:
        comment = read_user_comment(doc)
    except ValueError as exc:
        _fail(f"{file}: {exc}")
    if comment is None or not detect(comment):
        click.echo("untagged", err=True)
        sys.exit(1)
    if fmt == "json":
        click.echo(comment)
        return
    try:
        metadata = decode_metadata(comment)
    except MetadataError as exc:
        _fail(f"{file}: {exc}")
    payload = metadata_to_payload(metadata)
    click.echo(f"schema: {metadata.schema_version}")
    for key in _SHOW_ORDER:
        if key in payload:
            click.echo(f"{key}: {payload[key]}")
    if metadata.deidentified:
        click.echo("Deidentified: true")
    for key in sorted(metadata.extras):
        click.echo(f"{key}: {json.dumps(metadata.extras[key])}")


@main.command()
@click.argument("root", type=click.Path(path_type=Path, file_okay=False))
@click.option("--where", "wheres", multiple=True, metavar="FIELD=VALUE",
              help="Field equals value (repeatable).")
@click.option("--contains", "containses", multiple=True, metavar="FIELD=SUBSTR",
              help="Field contains substring (repeatable).")
@click.option("--from", "date_from", default=None, metavar="DATE",
              help="StudyDate lower bound (inclusive).")
@click.option("--to", "date_to", default=None, metavar="DATE",
              help="StudyDate upper bound (inclusive).")
@click.option("--case-sensitive", is_flag=True)
@click.option("--json", "as_json", is_flag=True, help="One JSON record per line.")
def search(root: Path, wheres, containses, date_from, date_to, case_sensitive, as_json):
    """Recursively list tagged images under ROOT matching every predicate."""
    predicates = []
    for item in wheres:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.UsageError(f"expected FIELD=VALUE, got {item!r}")
        predicates.append(Predicate(_field_name(key), Equals(value)))
    for item in containses:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.UsageError(f"expected FIELD=SUBSTR, got {item!r}")
        predicates.append(Predicate(_field_name(key), Contains(value)))
    if date_from or date_to:
        predicates.append(Predicate("study_date", DateRange(
            _normalize_date(date_from) if date_from else None,
            _normalize_date(date_to) if date_to else None,
        )))
    try:
        query = SearchQuery(tuple(predicates), case_sensitive=case_sensitive)
    except UnknownSearchFieldError as exc:
        raise click.UsageError(str(exc))
    try:
        result = scan(root, query)
    except (RootNotFoundError, PermissionError) as exc:
        _fail(str(exc))
    for record in result.records:
        if as_json:
            click.echo(json.dumps({
                "path": str(record.path),
                "metadata": metadata_to_payload(record.metadata),
                "rows": record.descriptor.rows,
                "columns": record.descriptor.columns,
            }, sort_keys=True))
        else:
            click.echo(str(record.path))


@main.command()
@click.argument("file", type=click.Path(path_type=Path, dir_okay=False))
@click.option("-o", "--output", type=click.Path(path_type=Path, dir_okay=False),
              help="Output path (default: <name>.dcm).")
@click.option("--uid-root", default=DEFAULT_UID_ROOT, show_default=True,
              help="Dotted-decimal root for generated UIDs.")
@click.option("--seed", type=int, default=None,
              help="Deterministic UID entropy (testing only).")
@click.option("--allow-untagged", is_flag=True,
              help="Convert untagged files with empty demographics.")
def convert(file: Path, output: Path | None, uid_root: str, seed: int | None,
            allow_untagged: bool):
    """Convert a tagged baseline JPEG into a DICOM Secondary Capture file."""
    try:
        source = file.read_bytes()
        doc = parse_jpeg(source)
    except OSError as exc:
        _fail(f"cannot read {file}: {exc.strerror or exc}")
    except ValueError as exc:
        _fail(f"{file}: {exc}")
    metadata = _load_metadata(doc, file)
    if metadata is None:
        if not allow_untagged:
            _fail(f"{file} is untagged (use --allow-untagged to convert anyway)")
        metadata = ClinicalMetadata()
    try:
        ctx = UidContext(root=uid_root, seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    try:
        dataset = build_sc_dataset(metadata, doc.frame, ctx)
        encoded = encode_part10(dataset, source)
    except ValueError as exc:
        _fail(f"{file}: {exc}")
    destination = output or file.with_name(file.stem + ".dcm")
    _atomic_write(destination, encoded)
    sop_uid = dataset.value_of(0x0008, 0x0018) or b""
    click.echo(sop_uid.decode("ascii").rstrip("\x00"))


def _load_secret(secret_file: Path | None) -> bytes:
    if secret_file is not None:
        try:
            return secret_file.read_bytes().strip()
        except OSError as exc:
            _fail(f"cannot read secret file: {exc.strerror or exc}")
    return os.environ.get(SECRET_ENV_VAR, "").encode("utf-8")


@main.command(name="anonymize")
@click.argument("files", nargs=-1, required=True,
                type=click.Path(path_type=Path, dir_okay=False))
@click.option("--secret-file", type=click.Path(path_type=Path, dir_okay=False),
              help=f"File holding the pseudonym key (else ${SECRET_ENV_VAR}).")
@click.option("--date-handling", type=click.Choice(["keep", "year-only", "drop"]),
              default="keep", show_default=True)
@click.option("--keep-name", is_flag=True, help="Do not remove PatientName.")
@click.option("--no-pseudonymize", is_flag=True, help="Do not rewrite PatientID.")
@click.option("--in-place", is_flag=True, help="Rewrite files instead of sibling copies.")
def anonymize_cmd(files: tuple[Path, ...], secret_file: Path | None,
                  date_handling: str, keep_name: bool, no_pseudonymize: bool,
                  in_place: bool):
    """Anonymize the metadata tag of FILES (the secret is never printed).

    Files anonymized in one invocation share replacement study/series UIDs."""
    policy = AnonymizationPolicy(
        drop_name=not keep_name,
        pseudonymize_id=not no_pseudonymize,
        date_handling=date_handling,
        secret=_load_secret(secret_file),
    )
    uid_map: dict[str, str] = {}
    for file in files:
        doc = _read_jpeg(file)
        metadata = _load_metadata(doc, file)
        if metadata is None:
            _fail(f"{file} is untagged")
        try:
            cleaned = anonymize(metadata, policy, uid_map)
            rewritten = write_user_comment(doc, encode_metadata(cleaned))
        except MissingSecretError:
            _fail(f"no secret: provide --secret-file or set ${SECRET_ENV_VAR}")
        except ValueError as exc:
            _fail(f"{file}: {exc}")
        destination = file if in_place else file.with_name(file.stem + ".anon.jpg")
        _atomic_write(destination, rewritten)
        click.echo(f"wrote {destination}")


@main.command(name="detect")
@click.argument("paths", nargs=-1, required=True, type=click.Path(path_type=Path))
def detect_cmd(paths: tuple[Path, ...]):
    """Report TAGGED/CLEAN/UNREADABLE per file.

    Exit 0 if all clean, 3 if any tagged, 1 if any unreadable."""
    any_tagged = False
    any_unreadable = False
    for path in paths:
        try:
            doc = parse_jpeg(path.read_bytes())
            comment = read_user_comment(doc)
        except (OSError, ValueError):
            click.echo(f"{path}\tUNREADABLE")
            any_unreadable = True
            continue
        if detect(comment):
            click.echo(f"{path}\tTAGGED")
            any_tagged = True
        else:
            click.echo(f"{path}\tCLEAN")
    if any_unreadable:
        sys.exit(1)
    if any_tagged:
        sys.exit(3)


@main.command()
@click.argument("root", type=click.Path(path_type=Path, file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8417, show_default=True, type=int)
@click.option("--allow-remote", is_flag=True,
              help="Permit binding to a non-loopback address.")
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path, file_okay=False),
              help="Static UI bundle to serve at / (default: ./frontend/dist if present).")
def serve(root: Path, host: str, port: int, allow_remote: bool, ui_dir: Path | None):
    """Serve the tagging API (and UI) over ROOT on a local address."""
    if host not in _LOOPBACK_HOSTS and not allow_remote:
        raise click.UsageError(f"binding {host!r} requires --allow-remote")
    if not root.is_dir():
        _fail(f"{root} does not exist or is not a directory")
    if ui_dir is None:
        candidate = Path("frontend/dist")
        ui_dir = candidate if candidate.is_dir() else None

    import uvicorn

    from .service import create_app

    app = create_app(root, ui_dir=ui_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        _fail(f"cannot bind {host}:{port}: {exc.strerror or exc}")


if __name__ == "__main__":
    main()
