"""Clinical metadata model, canonical JSON payload, validation, detection
and anonymization.

The payload is a JSON object carrying a ``dicoderma`` version marker plus
one key per present field, named by the DICOM keyword of the attribute it
maps to.  Canonical form: keys sorted, no insignificant whitespace, all
non-ASCII escaped, so the encoded text is pure ASCII and byte-deterministic.
Unknown keys survive a decode/encode round trip untouched.
"""

from __future__ import annotations

import datetime
import hmac
import json
import re
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Mapping


class MetadataError(ValueError):
    """Base class for metadata payload errors."""


class MalformedJsonError(MetadataError):
    """The payload is not a JSON object."""


class NotDicodermaError(MetadataError):
    """Valid JSON, but without the ``dicoderma`` marker key."""


class InvalidMetadataError(MetadataError):
    """One or more value-representation rules are violated."""

    def __init__(self, issues: list["ValidationIssue"]):
        self.issues = issues
        summary = "; ".join(f"{i.field}: {i.message}" for i in issues)
        super().__init__(f"invalid metadata: {summary}")


class MissingSecretError(MetadataError):
    """Pseudonymization requested without a keyed-MAC secret."""


SCHEMA_VERSION = "1.0"
MARKER_KEY = "dicoderma"
DEIDENTIFIED_KEY = "Deidentified"

# Model field -> DICOM keyword used as the JSON key.
FIELD_KEYWORDS = {
    "patient_id": "PatientID",
    "patient_name": "PatientName",
    "patient_sex": "PatientSex",
    "study_date": "StudyDate",
    "study_time": "StudyTime",
    "study_description": "StudyDescription",
    "study_instance_uid": "StudyInstanceUID",
    "series_instance_uid": "SeriesInstanceUID",
}
KEYWORD_FIELDS = {v: k for k, v in FIELD_KEYWORDS.items()}

_RESERVED_KEYS = frozenset(FIELD_KEYWORDS.values()) | {MARKER_KEY, DEIDENTIFIED_KEY}

_UID_RE = re.compile(r"^(0|[1-9][0-9]*)(\.(0|[1-9][0-9]*))*$")


@dataclass(frozen=True)
class ValidationIssue:
    """A single violated rule.  Rule identifiers are stable."""

    field: str
    rule: str
    message: str


@dataclass(frozen=True)
class ClinicalMetadata:
    """The tag set that rides in the EXIF UserComment and maps onto DICOM
    patient/study attributes.  All values are stored in their DICOM string
    form (dates as YYYYMMDD, times as HHMMSS, names caret-delimited)."""

    schema_version: str = SCHEMA_VERSION
    patient_id: str | None = None
    patient_name: str | None = None
    patient_sex: str | None = None
    study_date: str | None = None
    study_time: str | None = None
    study_description: str | None = None
    study_instance_uid: str | None = None
    series_instance_uid: str | None = None
    deidentified: bool = False
    extras: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "extras", MappingProxyType(dict(self.extras)))

    def is_empty(self) -> bool:
        return self == ClinicalMetadata(schema_version=self.schema_version)


def _bad_text(value: str) -> bool:
    return any(ch < " " or ch == "\x7f" or ord(ch) > 126 for ch in value)


def _check_lo(name: str, value: str, issues: list[ValidationIssue]) -> None:
    if len(value) > 64:
        issues.append(ValidationIssue(name, "LO-maxlen", f"{len(value)} characters exceed the 64-character limit"))
    if "\\" in value:
        issues.append(ValidationIssue(name, "LO-chars", "backslash is not allowed"))
    elif _bad_text(value):
        issues.append(ValidationIssue(name, "LO-chars", "control or non-ASCII characters are not allowed"))


def _check_pn(name: str, value: str, issues: list[ValidationIssue]) -> None:
    if "\\" in value:
        issues.append(ValidationIssue(name, "PN-chars", "backslash is not allowed"))
    elif _bad_text(value):
        issues.append(ValidationIssue(name, "PN-chars", "control or non-ASCII characters are not allowed"))
    for group in value.split("="):
        if len(group) > 64:
            issues.append(ValidationIssue(name, "PN-maxlen", "component group exceeds 64 characters"))
        if group.count("^") > 4:
            issues.append(ValidationIssue(name, "PN-components", "more than 5 caret-delimited components"))


def _check_da(name: str, value: str, issues: list[ValidationIssue]) -> None:
    if not re.fullmatch(r"[0-9]{8}", value):
        issues.append(ValidationIssue(name, "DA-format", "date must be 8 digits YYYYMMDD"))
        return
    try:
        datetime.date(int(value[0:4]), int(value[4:6]), int(value[6:8]))
    except ValueError:
        issues.append(ValidationIssue(name, "DA-calendar", f"{value} is not a valid calendar date"))


def _check_tm(name: str, value: str, issues: list[ValidationIssue]) -> None:
    if not re.fullmatch(r"[0-9]{6}", value):
        issues.append(ValidationIssue(name, "TM-format", "time must be 6 digits HHMMSS"))
        return
    hh, mm, ss = int(value[0:2]), int(value[2:4]), int(value[4:6])
    if hh > 23 or mm > 59 or ss > 59:
        issues.append(ValidationIssue(name, "TM-range", f"{value} has out-of-range components"))


def _check_ui(name: str, value: str, issues: list[ValidationIssue]) -> None:
    if len(value) > 64:
        issues.append(ValidationIssue(name, "UI-maxlen", f"{len(value)} characters exceed the 64-character limit"))
    if not _UID_RE.fullmatch(value):
        issues.append(ValidationIssue(name, "UI-grammar", "not dotted-decimal (no leading zeros)"))


def validate(m: ClinicalMetadata) -> list[ValidationIssue]:
    """All rule violations in ``m``; empty iff the instance is encodable
    and maps cleanly onto DICOM attributes."""
    issues: list[ValidationIssue] = []
    if not isinstance(m.schema_version, str) or not m.schema_version:
        issues.append(ValidationIssue("schema_version", "version-missing", "schema version must be a non-empty string"))
    for name in FIELD_KEYWORDS:
        value = getattr(m, name)
        if value is None:
            continue
        if not isinstance(value, str):
            issues.append(ValidationIssue(name, "type", "value must be a string"))
            continue
    if m.patient_id is not None and isinstance(m.patient_id, str):
        _check_lo("patient_id", m.patient_id, issues)
    if m.study_description is not None and isinstance(m.study_description, str):
        _check_lo("study_description", m.study_description, issues)
    if m.patient_name is not None and isinstance(m.patient_name, str):
        _check_pn("patient_name", m.patient_name, issues)
    if m.patient_sex is not None and isinstance(m.patient_sex, str):
        if m.patient_sex not in ("M", "F", "O"):
            issues.append(ValidationIssue("patient_sex", "CS-enum", "sex code must be one of M, F, O"))
    if m.study_date is not None and isinstance(m.study_date, str):
        _check_da("study_date", m.study_date, issues)
    if m.study_time is not None and isinstance(m.study_time, str):
        _check_tm("study_time", m.study_time, issues)
    if m.study_instance_uid is not None and isinstance(m.study_instance_uid, str):
        _check_ui("study_instance_uid", m.study_instance_uid, issues)
    if m.series_instance_uid is not None and isinstance(m.series_instance_uid, str):
        _check_ui("series_instance_uid", m.series_instance_uid, issues)
    if not isinstance(m.deidentified, bool):
        issues.append(ValidationIssue("deidentified", "flag-type", "deidentified must be a boolean"))
    for key in m.extras:
        if key in _RESERVED_KEYS:
            issues.append(ValidationIssue("extras", "extras-reserved", f"extras key {key!r} shadows a known field"))
    try:
        json.dumps(dict(m.extras))
    except (TypeError, ValueError):
        issues.append(ValidationIssue("extras", "extras-json", "extras values must be JSON-serializable"))
    return issues


def metadata_to_payload(m: ClinicalMetadata) -> dict[str, Any]:
    """The payload object for ``m`` (marker key, present fields, extras)."""
    payload: dict[str, Any] = {MARKER_KEY: m.schema_version}
    for name, keyword in FIELD_KEYWORDS.items():
        value = getattr(m, name)
        if value is not None:
            payload[keyword] = value
    if m.deidentified:
        payload[DEIDENTIFIED_KEY] = True
    payload.update(m.extras)
    return payload


def encode_metadata(m: ClinicalMetadata) -> str:
    """Canonical JSON text for ``m``: sorted keys, no whitespace, pure
    ASCII.  Raises InvalidMetadataError when validation reports issues."""
    issues = validate(m)
    if issues:
        raise InvalidMetadataError(issues)
    return json.dumps(
        metadata_to_payload(m), sort_keys=True, separators=(",", ":"), ensure_ascii=True
    )


def metadata_from_payload(obj: Any) -> ClinicalMetadata:
    """Build metadata from a parsed payload object, validating values.

    Raises MalformedJsonError (not an object), NotDicodermaError (marker
    key absent) or InvalidMetadataError."""
    if not isinstance(obj, dict):
        raise MalformedJsonError("payload must be a JSON object")
    if MARKER_KEY not in obj:
        raise NotDicodermaError("payload has no 'dicoderma' key")
    issues: list[ValidationIssue] = []
    version = obj[MARKER_KEY]
    if not isinstance(version, str) or not version:
        issues.append(ValidationIssue("schema_version", "version-missing", "marker value must be a non-empty string"))
        version = ""
    kwargs: dict[str, Any] = {"schema_version": version}
    extras: dict[str, Any] = {}
    for key, value in obj.items():
        if key == MARKER_KEY:
            continue
        if key == DEIDENTIFIED_KEY:
            if not isinstance(value, bool):
                issues.append(ValidationIssue("deidentified", "flag-type", "Deidentified must be a boolean"))
            else:
                kwargs["deidentified"] = value
            continue
        name = KEYWORD_FIELDS.get(key)
        if name is None:
            extras[key] = value
        elif not isinstance(value, str):
            issues.append(ValidationIssue(name, "type", f"{key} must be a string"))
        else:
            kwargs[name] = value
    m = ClinicalMetadata(extras=extras, **kwargs)
    issues.extend(validate(m))
    if issues:
        raise InvalidMetadataError(issues)
    return m


def decode_metadata(t: str) -> ClinicalMetadata:
    """Parse payload text.  Raises MalformedJsonError, NotDicodermaError or
    InvalidMetadataError."""
    try:
        obj = json.loads(t)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"not valid JSON: {exc}") from exc
    return metadata_from_payload(obj)


def detect(t: str | None) -> bool:
    """True iff ``t`` is a JSON object carrying the ``dicoderma`` marker key
    with a string value.  Never raises; absent or malformed input is False."""
    if t is None:
        return False
    try:
        obj = json.loads(t)
    except (json.JSONDecodeError, RecursionError):
        return False
    return isinstance(obj, dict) and isinstance(obj.get(MARKER_KEY), str)


@dataclass(frozen=True)
class AnonymizationPolicy:
    """What anonymize() removes or rewrites.  ``secret`` keys the
    pseudonym MAC and must be non-empty while ``pseudonymize_id`` is on."""

    drop_name: bool = True
    pseudonymize_id: bool = True
    date_handling: str = "keep"  # keep | year-only | drop
    secret: bytes = b""

    def __post_init__(self):
        if self.date_handling not in ("keep", "year-only", "drop"):
            raise ValueError(f"unknown date_handling {self.date_handling!r}")


def pseudonym(secret: bytes, value: str) -> str:
    """First 16 lowercase-hex characters of HMAC-SHA256(secret, value)."""
    return hmac.new(secret, value.encode("utf-8"), "sha256").hexdigest()[:16]


def anonymize(
    m: ClinicalMetadata,
    p: AnonymizationPolicy,
    uid_map: dict[str, str] | None = None,
) -> ClinicalMetadata:
    """Apply the policy and mark the result de-identified.

    Already de-identified input is returned unchanged (idempotence).  UIDs
    are replaced with fresh ones; pass a shared ``uid_map`` across a batch
    so files of one study keep a common replacement StudyInstanceUID.
    Raises MissingSecretError or InvalidMetadataError."""
    issues = validate(m)
    if issues:
        raise InvalidMetadataError(issues)
    if m.deidentified:
        return m
    if p.pseudonymize_id and not p.secret:
        raise MissingSecretError("pseudonymization requires a non-empty secret")

    changes: dict[str, Any] = {"deidentified": True}
    if p.drop_name and m.patient_name is not None:
        changes["patient_name"] = None
    if p.pseudonymize_id and m.patient_id is not None:
        changes["patient_id"] = pseudonym(p.secret, m.patient_id)
    if p.date_handling == "year-only":
        if m.study_date is not None:
            changes["study_date"] = m.study_date[:4] + "0101"
        changes["study_time"] = None
    elif p.date_handling == "drop":
        changes["study_date"] = None
        changes["study_time"] = None

    if uid_map is None:
        uid_map = {}
    for name in ("study_instance_uid", "series_instance_uid"):
        original = getattr(m, name)
        if original is None:
            continue
        if original not in uid_map:
            from .dicom import UidContext, generate_uid

            uid_map[original] = generate_uid(UidContext())
        changes[name] = uid_map[original]

    return replace(m, **changes)
