"""Regenerate the bundled glyph atlas from Pillow's built-in bitmap font.

The output is committed under src/xadv/data/font; rendering never touches
a font engine at runtime.
"""

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

FIRST, LAST = 32, 126
COLUMNS = 16


def main(out_dir):
    out_dir = Path(out_dir)
    font = ImageFont.load_default_imagefont()
    cell_w, line_h = 6, 11
    codes = list(range(FIRST, LAST + 1))
    rows = (len(codes) + 1 + COLUMNS - 1) // COLUMNS
    sheet = Image.new("L", (COLUMNS * cell_w, rows * line_h), 0)
    draw = ImageDraw.Draw(sheet)
    glyphs = {}
    for i, code in enumerate(codes):
        x, y = (i % COLUMNS) * cell_w, (i // COLUMNS) * line_h
        draw.text((x, y), chr(code), fill=255, font=font)
        glyphs[str(code)] = [x, y, cell_w, line_h]
    # fallback glyph: hollow box in the slot after the last printable
    i = len(codes)
    x, y = (i % COLUMNS) * cell_w, (i // COLUMNS) * line_h
    draw.rectangle([x, y + 2, x + cell_w - 2, y + line_h - 2], outline=255)
    arr = (np.asarray(sheet) >= 128).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(out_dir / "atlas.png", optimize=False)
    metrics = {
        "name": "pil-default-6x11",
        "line_height": line_h,
        "fallback": [x, y, cell_w, line_h],
        "glyphs": glyphs,
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/xadv/data/font")
