"""Build the bundled 5-vs-6 MNIST fixture as gzipped IDX files.

Source: the MIT-licensed ``mnist`` npm package (digits/5.json, digits/6.json),
which stores each pixel as ``k / 255`` rounded to three decimals. Rounding back
with ``rint(v * 255)`` recovers the original bytes exactly.

Usage::

    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/make_mnist56_fixture.py package/src/digits tests/data
"""

import gzip
import json
import sys
from pathlib import Path

import numpy as np

from advactive.datasets import encode_idx


def main(src: str, dst: str) -> None:
    images, labels = [], []
    for digit in (5, 6):
        values = np.asarray(json.loads(Path(src, f"{digit}.json").read_text())["data"])
        pixels = np.rint(values * 255).astype(np.uint8).reshape(-1, 28, 28)
        if not np.array_equal(np.round(pixels / 255, 3), values.reshape(pixels.shape)):
            raise SystemExit(f"digit {digit}: pixel bytes not recoverable")
        images.append(pixels)
        labels.append(np.full(len(pixels), digit, dtype=np.uint8))
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    for name, arr in (("images", np.concatenate(images)), ("labels", np.concatenate(labels))):
        suffix = "idx3-ubyte" if name == "images" else "idx1-ubyte"
        with gzip.GzipFile(out / f"mnist56-{name}-{suffix}.gz", "wb", mtime=0) as fh:
            fh.write(encode_idx(arr))


if __name__ == "__main__":
    main(*sys.argv[1:3])
