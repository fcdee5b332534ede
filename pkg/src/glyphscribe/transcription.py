"""Assemble classified glyphs into MdC transcription lines and CSV records.

Within a column, signs stacked tightly join with ':', side-by-side signs
join with '*', and larger vertical gaps start a new token; tokens join with
'-' at line level (Manuel de Codage conventions).
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codes import ATOM_PATTERN, validate_code
from .segmentation import ComponentBox, SegmentedGlyph

log = logging.getLogger(__name__)

REVIEW_STATUSES = ("auto", "corrected", "confirmed")
CSV_HEADER = ["support", "spell", "column", "token_index", "mdc", "review_status"]

_CODE = rf"{ATOM_PATTERN}(?:\+{ATOM_PATTERN})*"
TOKEN_RE = re.compile(rf"^{_CODE}(?:[:*]{_CODE})*$")


@dataclass(frozen=True)
class GeometryConfig:
    stack_gap: float = 0.4  # of median glyph height
    token_gap: float = 1.2
    stack_overlap: float = 0.5  # minimum x-extent overlap fraction for ':'
    beside_overlap: float = 0.5  # minimum y-extent overlap fraction for '*'


@dataclass(frozen=True)
class TokenSign:
    code: str
    box: ComponentBox
    connector: str | None  # None for the first sign, else "stack" | "beside"


@dataclass(frozen=True)
class TranscriptionToken:
    signs: tuple[TokenSign, ...]

    @property
    def rendering(self) -> str:
        out = []
        for sign in self.signs:
            if sign.connector == "stack":
                out.append(":")
            elif sign.connector == "beside":
                out.append("*")
            out.append(sign.code)
        return "".join(out)


@dataclass(frozen=True)
class TranscriptionRecord:
    support: str
    spell: str
    column_label: str
    token_index: int
    mdc: str
    review_status: str = "auto"

    def __post_init__(self):
        if self.review_status not in REVIEW_STATUSES:
            raise ValueError(f"review_status must be one of {REVIEW_STATUSES}, got {self.review_status!r}")
        if not TOKEN_RE.match(self.mdc):
            raise ValueError(f"mdc string does not parse as a token: {self.mdc!r}")

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.support, self.spell, self.column_label, self.token_index)


def _x_overlap_fraction(a: ComponentBox, b: ComponentBox) -> float:
    overlap = min(a.x1, b.x1) - max(a.x0, b.x0)
    return overlap / min(a.width, b.width) if overlap > 0 else 0.0


def _y_overlap_fraction(a: ComponentBox, b: ComponentBox) -> float:
    overlap = min(a.y1, b.y1) - max(a.y0, b.y0)
    return overlap / min(a.height, b.height) if overlap > 0 else 0.0


def assemble_lines(
    column: list[tuple[SegmentedGlyph, str]],
    geometry: GeometryConfig | None = None,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> list[TranscriptionToken]:
    """Group one column's reading-ordered glyphs into MdC tokens.

    Codes in ``exclude`` (editorial marks, not hieroglyphs) are dropped with
    an audit log entry before grouping.
    """
    if geometry is None:
        geometry = GeometryConfig()
    kept = []
    for glyph, code in column:
        if code in exclude:
            log.info("dropping excluded code %s at bbox (%d,%d,%d,%d)",
                     code, glyph.box.x0, glyph.box.y0, glyph.box.x1, glyph.box.y1)
            continue
        kept.append((glyph, validate_code(code)))
    if not kept:
        return []

    median_h = float(np.median([g.box.height for g, _ in kept]))
    tokens: list[list[TokenSign]] = [[TokenSign(kept[0][1], kept[0][0].box, None)]]
    for (prev_glyph, _), (glyph, code) in zip(kept, kept[1:]):
        prev_box, box = prev_glyph.box, glyph.box
        if _y_overlap_fraction(prev_box, box) >= geometry.beside_overlap:
            tokens[-1].append(TokenSign(code, box, "beside"))
            continue
        gap = box.y0 - prev_box.y1
        if gap < geometry.stack_gap * median_h and \
                _x_overlap_fraction(prev_box, box) >= geometry.stack_overlap:
            tokens[-1].append(TokenSign(code, box, "stack"))
        else:
            tokens.append([TokenSign(code, box, None)])
    return [TranscriptionToken(signs=tuple(signs)) for signs in tokens]


def render_line(tokens: list[TranscriptionToken]) -> str:
    """Whole-column MdC line, tokens joined by '-'."""
    return "-".join(t.rendering for t in tokens)


def _csv_field(value: str) -> str:
    # stdlib csv.writer with a bare-LF terminator leaves \r unquoted, which
    # breaks the round trip; quote per RFC 4180 instead
    if any(ch in value for ch in ',"\r\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def records_to_csv_bytes(records: list[TranscriptionRecord]) -> bytes:
    """UTF-8 CSV (LF, no BOM), rows ordered by (column, token_index)."""
    seen: dict[tuple, TranscriptionRecord] = {}
    for r in records:
        if r.key in seen:
            raise ValueError(f"duplicate record key {r.key}")
        seen[r.key] = r
    lines = [",".join(CSV_HEADER)]
    for r in sorted(records, key=lambda r: (r.column_label, r.token_index, r.support, r.spell)):
        fields = [r.support, r.spell, r.column_label, str(r.token_index), r.mdc, r.review_status]
        lines.append(",".join(_csv_field(f) for f in fields))
    return ("\n".join(lines) + "\n").encode("utf-8")


def export_csv(records: list[TranscriptionRecord], destination: str | Path) -> int:
    """Write the CSV to ``destination``; returns the byte count."""
    data = records_to_csv_bytes(records)
    Path(destination).write_bytes(data)
    return len(data)


def parse_csv(source: bytes | str | Path) -> list[TranscriptionRecord]:
    """Inverse of export_csv: returns the records the file encodes."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    records = []
    for row in reader:
        if not row:
            continue
        support, spell, column, token_index, mdc, status = row
        records.append(TranscriptionRecord(
            support=support, spell=spell, column_label=column,
            token_index=int(token_index), mdc=mdc, review_status=status,
        ))
    return records
