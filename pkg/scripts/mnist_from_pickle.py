"""Write the four MNIST IDX files from a ``mnist.pkl.gz`` archive.

The archive (train/valid/test tuples of float32 rows scaled by 1/256) ships
inside the ``mnist_hub`` wheel on PyPI. Train and valid are concatenated
back into the original 60000-image training split; pixel bytes are
recovered exactly.

    pip download --no-deps mnist_hub -d /tmp/mh
    python -m zipfile -e /tmp/mh/mnist_hub-*.whl /tmp/mh/x
    python scripts/mnist_from_pickle.py /tmp/mh/x/mnist/data/mnist.pkl.gz data/mnist
"""
import argparse
import gzip
import pickle
from pathlib import Path

import numpy as np

from ldmlab.dataio import MNIST_FILES, write_idx


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("pickle")
    ap.add_argument("out_dir")
    args = ap.parse_args()
    with gzip.open(args.pickle, "rb") as fh:
        train, valid, test = pickle.load(fh, encoding="latin1")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = {
        "train": (np.concatenate([train[0], valid[0]]), np.concatenate([train[1], valid[1]])),
        "test": test,
    }
    for split, (x, y) in splits.items():
        pix = np.asarray(x, dtype=np.float64) * 256.0
        if np.abs(pix - np.round(pix)).max() > 0 or pix.max() > 255:
            raise SystemExit("pixels are not multiples of 1/256; unexpected archive")
        img_name, lab_name = MNIST_FILES[split]
        write_idx(out / (img_name + ".gz"), np.round(pix).astype(np.uint8).reshape(-1, 28, 28), compress=True)
        write_idx(out / (lab_name + ".gz"), np.asarray(y, dtype=np.uint8), compress=True)
        print(f"{split}: {len(y)} images -> {out}")


if __name__ == "__main__":
    main()
