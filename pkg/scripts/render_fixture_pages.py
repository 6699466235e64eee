#!/usr/bin/env python3
"""Render documentation page images for the fixture dataset bundles.

Each bundle gets a cover page, a diagram page and an element-description
page under ``<bundle>/pages/``. Output is committed; rerun only when a
ground truth changes.
"""

import argparse
import json
import math
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

from procmodel import parse_model

W, H = 900, 1100
FONT = ImageFont.load_default()


def cover(title: str, model_id: str) -> Image.Image:
    img = Image.new("L", (W, H), 255)
    d = ImageDraw.Draw(img)
    d.text((80, 400), "Process documentation", fill=0, font=FONT)
    d.text((80, 440), title, fill=0, font=FONT)
    d.text((80, 480), f"Model {model_id}", fill=90, font=FONT)
    d.text((80, 560), "Contents: 1 Diagram  2 Element descriptions", fill=90, font=FONT)
    return img


def diagram(m) -> Image.Image:
    img = Image.new("L", (W, H), 255)
    d = ImageDraw.Draw(img)
    d.text((40, 30), "1 Diagram", fill=0, font=FONT)
    pos = {}
    lanes = [(p, ln) for p in m.pools for ln in p.lanes] + [(p, None) for p in m.pools if not p.lanes]
    band = (H - 120) // max(1, len(lanes))
    nodes = {x.id: (k, x) for k, xs in (("task", m.tasks), ("event", m.events), ("gateway", m.gateways)) for x in xs}
    for row, (pool, lane) in enumerate(lanes):
        y0 = 80 + row * band
        d.rectangle([30, y0, W - 30, y0 + band - 10], outline=0)
        d.text((36, y0 + 6), pool.name + (f" / {lane.name}" if lane and lane.name else ""), fill=0, font=FONT)
        pos[pool.id] = (60, y0 + band // 2)
        refs = lane.element_refs if lane else ()
        if lane:
            pos[lane.id] = (60, y0 + band // 2)
        step = (W - 200) / max(1, len(refs))
        for k, ref in enumerate(refs):
            cx, cy = int(160 + k * step), y0 + band // 2
            pos[ref] = (cx, cy)
            kind, x = nodes[ref]
            if kind == "task":
                d.rectangle([cx - 40, cy - 22, cx + 40, cy + 22], outline=0)
            elif kind == "event":
                d.ellipse([cx - 16, cy - 16, cx + 16, cy + 16], outline=0)
            else:
                d.polygon([(cx, cy - 20), (cx + 20, cy), (cx, cy + 20), (cx - 20, cy)], outline=0)
            label = x.name or ""
            d.text((cx - 38, cy + 26), label[:18], fill=0, font=FONT)
    for f in (*m.sequence_flows, *m.message_flows):
        (x1, y1), (x2, y2) = pos[f.source], pos[f.target]
        d.line([x1, y1, x2, y2], fill=60, width=1)
        ang = math.atan2(y2 - y1, x2 - x1)
        for da in (2.6, -2.6):
            d.line([x2, y2, x2 + 9 * math.cos(ang + da), y2 + 9 * math.sin(ang + da)], fill=60)
        text = getattr(f, "condition", None) or getattr(f, "label", None)
        if text:
            d.text(((x1 + x2) // 2, (y1 + y2) // 2 - 12), text, fill=0, font=FONT)
    return img


def descriptions(m) -> Image.Image:
    img = Image.new("L", (W, H), 255)
    d = ImageDraw.Draw(img)
    d.text((40, 30), "2 Element descriptions", fill=0, font=FONT)
    y = 70
    lines = []
    for t in m.tasks:
        lines.append(f"Task '{t.name}' ({t.type} task).")
    for e in m.events:
        lines.append(f"Event '{e.name or '(unnamed)'}' of type {e.type}.")
    for g in m.gateways:
        lines.append(f"{g.type.capitalize()} gateway" + (f" '{g.name}'." if g.name else "."))
    for p in m.pools:
        lanes = ", ".join(ln.name or "(unnamed)" for ln in p.lanes) or "no lanes"
        lines.append(f"Pool '{p.name}' with lanes: {lanes}.")
    for line in lines:
        d.text((50, y), line, fill=0, font=FONT)
        y += 22
    return img


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("root", nargs="?", default="tests/fixtures/dataset")
    args = ap.parse_args()
    titles = json.loads((Path(args.root) / "titles.json").read_text())
    for bundle in sorted(p for p in Path(args.root).iterdir() if p.is_dir()):
        m = parse_model((bundle / "ground_truth.json").read_text())
        out = bundle / "pages"
        out.mkdir(exist_ok=True)
        for n, page in enumerate((cover(titles[bundle.name], bundle.name), diagram(m), descriptions(m)), start=1):
            page.save(out / f"page-{n:02d}.png", optimize=True)
        print(bundle.name, "->", out)


if __name__ == "__main__":
    main()
