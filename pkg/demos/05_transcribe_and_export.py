"""Assemble classified glyphs into MdC lines and export the CSV.

Uses a hand-built column geometry to show the stacking rules: signs stacked
tightly join with ':', side-by-side signs with '*', and bigger gaps start a
new '-'-separated token.
"""

from pathlib import Path

import numpy as np

from glyphscribe.segmentation import ComponentBox, SegmentedGlyph
from glyphscribe.transcription import (
    TranscriptionRecord, assemble_lines, export_csv, parse_csv, render_line,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(parents=True, exist_ok=True)


def glyph(x0, y0, x1, y1):
    mask = np.ones((y1 - y0, x1 - x0), dtype=bool)
    box = ComponentBox(x0=x0, y0=y0, x1=x1, y1=y1, area=mask.size,
                       centroid=((x0 + x1) / 2, (y0 + y1) / 2), mask=mask)
    return SegmentedGlyph(crop=np.zeros((4, 4), dtype=np.uint8), box=box,
                          column_index=0, order_index=0)


# one column: a stacked pair, then a side-by-side pair, then a triple stack
column = [
    (glyph(10, 0, 40, 12), "N35"),
    (glyph(10, 14, 40, 34), "G5"),
    (glyph(10, 70, 24, 90), "Z11"),
    (glyph(26, 70, 40, 90), "Q1"),
    (glyph(10, 130, 40, 150), "D4"),
    (glyph(10, 152, 40, 158), "X1"),
    (glyph(10, 160, 40, 172), "N35"),
]
tokens = assemble_lines(column)
print("column line:", render_line(tokens))

records = [
    TranscriptionRecord(support="B1Bo", spell="CT-335", column_label="col00",
                        token_index=i, mdc=t.rendering)
    for i, t in enumerate(tokens)
]
path = OUT / "transcription.csv"
n = export_csv(records, path)
print(f"wrote {n} bytes to {path}")
print("round trip intact:", parse_csv(path) == records)
print(path.read_text(), end="")
