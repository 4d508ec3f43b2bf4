#!/usr/bin/env python3
"""Regenerates data/texture64.pgm, the bundled 64x64 test texture.

The image is built from closed-form pieces only (no RNG), so the output is
byte-stable: a smooth background, a few hard-edged shapes, and one patch of
fine oriented stripes.
"""
import math
import pathlib
import sys

N = 64


def value(i, j):
    x = -1.0 + (2 * j + 1) / N
    y = -1.0 + (2 * i + 1) / N
    v = 0.45 + 0.2 * math.sin(1.5 * x + 0.7) * math.cos(1.1 * y - 0.4)
    # Disk and bar with hard edges.
    if (x + 0.45) ** 2 + (y + 0.4) ** 2 < 0.28 ** 2:
        v = 0.85
    if abs(x - 0.35) < 0.5 and abs(y + 0.55) < 0.07:
        v = 0.15
    # Fine stripes confined to the lower-right quadrant.
    if x > 0.1 and y > 0.15:
        w = math.exp(-((x - 0.55) ** 2 + (y - 0.6) ** 2) / 0.12)
        v += 0.3 * w * math.sin(2 * math.pi * (5.0 * x + 3.0 * y))
    # A soft ring on the left.
    r = math.hypot(x + 0.5, y - 0.5)
    v += 0.12 * math.cos(2 * math.pi * 3.0 * r) * math.exp(-r * r / 0.1)
    return min(1.0, max(0.0, v))


def main(out):
    pixels = bytes(round(value(i, j) * 255) for i in range(N) for j in range(N))
    with open(out, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (N, N))
        f.write(pixels)


if __name__ == "__main__":
    root = pathlib.Path(__file__).resolve().parent.parent
    main(sys.argv[1] if len(sys.argv) > 1 else root / "data" / "texture64.pgm")
