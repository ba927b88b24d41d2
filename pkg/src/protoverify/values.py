"""Scalar value model shared by the store, the checkers, and the oracle.

Values are plain Python objects:

    int            -> tag "int"
    float          -> tag "decimal"
    str            -> tag "str"
    datetime.date  -> tag "date"
    None           -> null (no tag of its own)

Null semantics are two-valued: any ordering comparison involving a null
is false, equality against the null literal tests null-ness itself, and
nulls never compare equal to anything (including each other).
"""

from __future__ import annotations

import datetime

TAGS = ("int", "decimal", "str", "date")

DATE_FIELDS = ("year", "month", "day")


def tag_of(value) -> str | None:
    """Tag for a concrete value; None for a null."""
    if value is None:
        return None
    if isinstance(value, bool):
        raise TypeError("boolean values are not supported")
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "decimal"
    if isinstance(value, str):
        return "str"
    if isinstance(value, datetime.date):
        return "date"
    raise TypeError(f"unsupported value type: {type(value)!r}")


def tags_comparable(a: str, b: str) -> bool:
    """Whether two declared tags may appear on opposite sides of an operator.

    Equal tags always compare; int and decimal are mutually comparable.
    """
    if a == b:
        return True
    return {a, b} <= {"int", "decimal"}


def parse_date(text: str) -> datetime.date:
    return datetime.date.fromisoformat(text)


def parse_cell(text: str, tag: str):
    """Parse a CSV cell under a declared tag. Empty string means null."""
    if text == "":
        return None
    if tag == "int":
        return int(text)
    if tag == "decimal":
        return float(text)
    if tag == "str":
        return text
    if tag == "date":
        return parse_date(text)
    raise ValueError(f"unknown tag {tag!r}")


def value_to_json(value):
    if isinstance(value, datetime.date):
        return value.isoformat()
    return value


def value_from_json(raw, tag: str):
    if raw is None:
        return None
    if tag == "int":
        return int(raw)
    if tag == "decimal":
        return float(raw)
    if tag == "str":
        return str(raw)
    if tag == "date":
        return parse_date(raw) if isinstance(raw, str) else raw
    raise ValueError(f"unknown tag {tag!r}")


def format_value(value) -> str:
    """Cell text for CSV output; null becomes the empty string."""
    if value is None:
        return ""
    if isinstance(value, datetime.date):
        return value.isoformat()
    return str(value)


def sort_key(value):
    """Total order over mixed values for deterministic output."""
    if value is None:
        return (0, "")
    tag = tag_of(value)
    if tag in ("int", "decimal"):
        return (1, float(value))
    if tag == "str":
        return (2, value)
    return (3, value.isoformat())
