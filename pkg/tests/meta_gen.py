"""Deterministic random generators for valid metadata instances."""

import calendar
import random
import string

from dicoderma import ClinicalMetadata

DIAGNOSES = [
    "lichen planus",
    "psoriasis vulgaris",
    "atopic dermatitis",
    "melanocytic naevus",
    "seborrheic keratosis",
    "vitiligo",
    "acne conglobata",
    "tinea corporis",
]

_NAME_LETTERS = string.ascii_uppercase


def random_date(rng: random.Random) -> str:
    year = rng.randint(1950, 2025)
    month = rng.randint(1, 12)
    day = rng.randint(1, calendar.monthrange(year, month)[1])
    return f"{year:04d}{month:02d}{day:02d}"


def random_time(rng: random.Random) -> str:
    return f"{rng.randint(0, 23):02d}{rng.randint(0, 59):02d}{rng.randint(0, 59):02d}"


def random_uid(rng: random.Random) -> str:
    return "2.25." + str(rng.getrandbits(64))


def random_name(rng: random.Random) -> str:
    family = "".join(rng.choices(_NAME_LETTERS, k=rng.randint(2, 10)))
    given = "".join(rng.choices(_NAME_LETTERS, k=rng.randint(2, 8)))
    return f"{family}^{given}"


def random_metadata(rng: random.Random, with_extras: bool = True) -> ClinicalMetadata:
    """A valid instance with a random subset of fields present."""
    kwargs = {}
    if rng.random() < 0.9:
        kwargs["patient_id"] = "P" + str(rng.randint(0, 10**9))
    if rng.random() < 0.8:
        kwargs["patient_name"] = random_name(rng)
    if rng.random() < 0.7:
        kwargs["patient_sex"] = rng.choice(["M", "F", "O"])
    if rng.random() < 0.8:
        kwargs["study_date"] = random_date(rng)
    if rng.random() < 0.6:
        kwargs["study_time"] = random_time(rng)
    if rng.random() < 0.9:
        kwargs["study_description"] = rng.choice(DIAGNOSES)
    if rng.random() < 0.3:
        kwargs["study_instance_uid"] = random_uid(rng)
    if rng.random() < 0.2:
        kwargs["series_instance_uid"] = random_uid(rng)
    extras = {}
    if with_extras and rng.random() < 0.3:
        extras["AccessionNumber"] = "ACC" + str(rng.randint(0, 10**6))
    if with_extras and rng.random() < 0.2:
        extras["BodyPartExamined"] = rng.choice(["ARM", "LEG", "TRUNK", "SCALP"])
    return ClinicalMetadata(extras=extras, **kwargs)
