"""Input validation and XML plumbing shared by every module."""

from __future__ import annotations

import os
import re
import xml.etree.ElementTree as ET
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Union

from .errors import IoFailure, MalformedDocument

XmlSource = Union[ET.Element, str, bytes, os.PathLike]

NUMERIC_TYPES = ("integer", "decimal")
VALUE_TYPES = ("string",) + NUMERIC_TYPES

_INTEGER_RE = re.compile(r"^[+-]?\d+$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


def as_element(source: XmlSource) -> ET.Element:
    """Return the root element of ``source``.

    ``source`` may be an element (returned as is), XML text, raw bytes, or a
    filesystem path. Anything that fails to parse raises ``MalformedDocument``.
    """
    if isinstance(source, ET.Element):
        return source
    try:
        if isinstance(source, bytes):
            return ET.fromstring(source)
        if isinstance(source, str) and source.lstrip().startswith("<"):
            return ET.fromstring(source)
        return ET.parse(os.fspath(source)).getroot()
    except ET.ParseError as exc:
        raise MalformedDocument(str(exc)) from exc
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def to_bytes(element: ET.Element) -> bytes:
    """Serialize deterministically: two-space indentation, UTF-8 declaration."""
    clone = ET.fromstring(ET.tostring(element))
    ET.indent(clone, space="  ")
    body = ET.tostring(clone, encoding="unicode")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n").encode("utf-8")


def write_xml(element: ET.Element, path: os.PathLike | str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(to_bytes(element))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def check_name(name: str, what: str = "name") -> str:
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ValueError(f"invalid {what}: {name!r}")
    return name


def check_fraction(value: float, name: str, *, low_open: bool = True) -> float:
    """Check ``value`` lies in (0, 1] (or [0, 1] when ``low_open`` is false)."""
    value = float(value)
    ok = (0.0 < value <= 1.0) if low_open else (0.0 <= value <= 1.0)
    if not ok:
        interval = "(0, 1]" if low_open else "[0, 1]"
        raise ValueError(f"{name} must be in {interval}, got {value}")
    return value


def parse_value(text: str, type_name: str):
    """Convert a serialized attribute value to its typed form.

    Returns ``int`` for integers, ``Decimal`` for decimals and the text itself
    for strings. Raises ``ValueError`` when the text does not fit the type.
    """
    if type_name == "string":
        return text
    if type_name == "integer":
        if not _INTEGER_RE.match(text.strip()):
            raise ValueError(f"not an integer: {text!r}")
        return int(text)
    if type_name == "decimal":
        try:
            value = Decimal(text.strip())
        except InvalidOperation:
            raise ValueError(f"not a decimal: {text!r}") from None
        if not value.is_finite():
            raise ValueError(f"not a finite decimal: {text!r}")
        return value
    raise ValueError(f"unknown value type {type_name!r}")


def is_valid_value(text: str, type_name: str) -> bool:
    try:
        parse_value(text, type_name)
    except ValueError:
        return False
    return True


def format_value(value) -> str:
    if isinstance(value, Decimal):
        return format(value, "f")
    return str(value)
