"""Gardiner sign-code validation and grouping.

Codes look like ``A1``, ``Aa15``, ``N35`` or ``T9D`` (letter group, optional
lowercase subgroup letter, number, optional variant letter).  Ligatures that
were labelled as a single class are written as '+'-joined composites, e.g.
``G17+M17``; those are treated as atomic class names throughout.
"""

from __future__ import annotations

import re

ATOM_PATTERN = r"[A-Z][a-z]?[0-9]+[A-Z]?"
CODE_RE = re.compile(rf"^{ATOM_PATTERN}(\+{ATOM_PATTERN})*$")

_PREFIX_RE = re.compile(r"^[A-Z][a-z]?")


def is_valid_code(code: str) -> bool:
    """True if ``code`` is a well-formed Gardiner code or '+'-composite."""
    return bool(CODE_RE.match(code))


def validate_code(code: str) -> str:
    """Return ``code`` unchanged or raise ``ValueError`` naming the offender."""
    if not is_valid_code(code):
        raise ValueError(f"not a valid Gardiner code: {code!r}")
    return code


def code_group(code: str, collapse_to_letter: bool = False) -> str:
    """Alphabetic group prefix of a code: ``Aa15`` -> ``Aa``, ``N35`` -> ``N``.

    With ``collapse_to_letter`` the subgroup letter is dropped (``Aa15`` ->
    ``A``), mirroring sign-list tables that list single letters only.
    Composites group under their first member.
    """
    atom = code.split("+", 1)[0]
    m = _PREFIX_RE.match(atom)
    if m is None:
        raise ValueError(f"not a valid Gardiner code: {code!r}")
    prefix = m.group(0)
    return prefix[0] if collapse_to_letter else prefix
