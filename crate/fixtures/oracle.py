#!/usr/bin/env python3
"""Independent reference values for the fixture projects.

Written against the documented file formats only, without running any of the
Rust code:

* project digests: SHA-256 of the compact, key-ordered re-serialization of
  each ``*.catproj.json``;
* play logs: ``<name>.catplay.jsonl`` for every fixture;
* expected trace digests for the fixtures whose timeline is simple enough to
  write down by hand (hello, flipnote, pixel), as ``<name>.trace.sha256``.

The catch fixture's golden digest is produced by ``brickstage run`` and
checked here only through ``--rehash DIR``, which hashes an exported
``--format scene`` directory independently.

Usage: python3 oracle.py [--check] [--rehash DIR]
"""

import hashlib
import json
import struct
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent


def canonical(obj):
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def project_digest(path):
    # The fixture files list keys in canonical order already; json preserves it.
    return hashlib.sha256(canonical(json.loads(path.read_bytes()))).hexdigest()


def bits(x):
    return struct.pack(">d", float(x)).hex()


def scene(tick, entries):
    return canonical({
        "tick": tick,
        "entries": [
            {
                "sprite_name": name,
                "x": bits(x),
                "y": bits(y),
                "visible": visible,
                "size_percent": bits(size),
                "layer": layer,
                "costume_id": costume,
            }
            for (name, x, y, visible, size, layer, costume) in entries
        ],
    })


def outputs(tick, events):
    return canonical({"tick": tick, "events": events})


def trace_digest(records):
    h = hashlib.sha256()
    for s, o in records:
        h.update(s)
        h.update(o)
    return h.hexdigest()


def playlog(digest, seed, tick_rate, end_tick, events=()):
    lines = [canonical({
        "version": 1,
        "project_digest": digest,
        "seed": seed,
        "tick_rate": tick_rate,
        "end_tick": end_tick,
    })]
    for e in events:
        lines.append(canonical(e))
    return b"".join(line + b"\n" for line in lines)


def hello_trace():
    # One background sprite; SetCostume then Speak, both on tick 0, after
    # which the only script is finished.
    recs = []
    for t in range(3):
        ev = []
        if t == 0:
            ev = [
                {"kind": "speak", "sprite": "Background", "text": "Hello world!"},
                {"kind": "program_ended"},
            ]
        recs.append((scene(t, [("Background", 0, 0, True, 100, 0, "bg0")]), outputs(t, ev)))
    return recs


def flipnote_trace(end_tick):
    # 30 ticks/s; each one-second Wait is 30 ticks, so pages flip at 30/60/90.
    recs = []
    for t in range(end_tick + 1):
        page = "page%d" % min(t // 30, 3)
        ev = []
        if t == 0:
            ev = [{"kind": "sound_start", "sprite": "Background", "sound_id": "song"}]
        if t == 90:
            ev = [{"kind": "program_ended"}]
        recs.append((scene(t, [("Background", 0, 0, True, 100, 0, page)]), outputs(t, ev)))
    return recs


def pixel_trace(end_tick):
    # 10 ticks/s; a 500 ms Wait is 5 ticks, then PlaceAt(1, 1).
    recs = []
    for t in range(end_tick + 1):
        x, y = (1, 1) if t >= 5 else (0, 0)
        ev = [{"kind": "program_ended"}] if t == 5 else []
        recs.append((scene(t, [("dot", x, y, True, 100, 0, "red")]), outputs(t, ev)))
    return recs


def rehash(directory):
    d = Path(directory)
    h = hashlib.sha256()
    for s in sorted(d.glob("frame_*.scene.json")):
        o = s.with_name(s.name.replace(".scene.json", ".outputs.json"))
        h.update(s.read_bytes())
        h.update(o.read_bytes())
    return h.hexdigest()


def build():
    files = {}
    digests = {p.parent.name: project_digest(p) for p in sorted(HERE.glob("*/*.catproj.json"))}

    files["hello/hello.catplay.jsonl"] = playlog(digests["hello"], 0, 30, 2)
    files["hello/hello.trace.sha256"] = trace_digest(hello_trace()) + "\n"

    files["flipnote/flipnote.catplay.jsonl"] = playlog(digests["flipnote"], 0, 30, 100)
    files["flipnote/flipnote.trace.sha256"] = trace_digest(flipnote_trace(100)) + "\n"

    files["pixel/pixel.catplay.jsonl"] = playlog(digests["pixel"], 0, 10, 10)
    files["pixel/pixel.trace.sha256"] = trace_digest(pixel_trace(10)) + "\n"

    # The mole sits at (149, 261) between the shuffles on ticks 30 and 60
    # under seed 7; the first tap hits it, the second lands on the sky.
    files["catch/catch.catplay.jsonl"] = playlog(digests["catch"], 7, 30, 150, [
        {"tick": 45, "type": "tap", "x": 149.0, "y": 261.0},
        {"tick": 80, "type": "tap", "x": -12.5, "y": 33.25},
        {"tick": 150, "type": "stop"},
    ])
    for name, d in digests.items():
        files["%s/%s.project.sha256" % (name, name)] = d + "\n"
    return files


def main(argv):
    if "--rehash" in argv:
        print(rehash(argv[argv.index("--rehash") + 1]))
        return 0
    check = "--check" in argv
    bad = 0
    for rel, content in build().items():
        data = content.encode() if isinstance(content, str) else content
        path = HERE / rel
        if check:
            if not path.exists() or path.read_bytes() != data:
                print("stale: %s" % rel)
                bad += 1
        else:
            path.write_bytes(data)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
