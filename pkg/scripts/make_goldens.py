"""Regenerate the preprocessing goldens in tests/golden from the scalar oracles.

The outputs are produced by ``tests/oracles.py`` only, never by the package,
so the golden suite checks the vectorized pipeline against an independent
implementation.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=oracles.GOLDEN_DIR)
    ap.add_argument("--seed", type=int, default=20240)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    # smooth-ish content plus noise so interpolation is exercised
    yy, xx = np.mgrid[0:210, 0:160]
    frames = []
    for k in range(6):
        base = 127 + 100 * np.sin(xx / (7.0 + k)) * np.cos(yy / (11.0 + k))
        rgb = np.stack([base, base[::-1], base[:, ::-1]], axis=-1) + rng.integers(-20, 21, (210, 160, 3))
        frames.append(np.clip(rgb, 0, 255).astype(np.uint8))
    for k, f in enumerate(frames):
        oracles.write_golden(f"input_{k}.bin", f, args.out)
    maxed = np.maximum(frames[0], frames[1])
    oracles.write_golden("frame_max.bin", maxed, args.out)
    gray = oracles.luma_oracle(maxed)
    oracles.write_golden("grayscale.bin", gray, args.out)
    oracles.write_golden("resize_crop.bin", oracles.resize_crop_oracle(gray), args.out)
    processed = [oracles.resize_crop_oracle(oracles.luma_oracle(f)) for f in frames]
    oracles.write_golden("stack_first.bin", oracles.stack_oracle(processed[:1]), args.out)
    oracles.write_golden("stack_six.bin", oracles.stack_oracle(processed), args.out)
    print(f"goldens written to {args.out}")


if __name__ == "__main__":
    main()
