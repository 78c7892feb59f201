"""Regenerate the bundled alist files under src/sct/data/ldpc/."""

from pathlib import Path

import numpy as np

from sct.modular.ldpc import construct_qc, write_alist

OUT = Path(__file__).resolve().parents[1] / "src" / "sct" / "data" / "ldpc"

# (file, block rows, block cols, info column degrees, seed); lifting size 27
CODES = [
    ("qc648_r12.alist", 12, 24, [8, 6, 4, 4, 3, 3, 3, 3, 3, 3, 3, 3], 1),
    ("qc648_r23.alist", 8, 24, [6, 5, 4, 4] + [3] * 12, 2),
    ("qc648_r34.alist", 6, 24, [4, 4, 4, 4] + [3] * 14, 2),
]

HAMMING_74 = np.array([
    [1, 1, 0, 1, 1, 0, 0],
    [1, 0, 1, 1, 0, 1, 0],
    [0, 1, 1, 1, 0, 0, 1],
], dtype=np.uint8)


def main():
    for fname, mb, nb, degrees, seed in CODES:
        H = construct_qc(mb, nb, 27, degrees, seed=seed)
        (OUT / fname).write_text(write_alist(H))
        print(fname, H.shape)
    (OUT / "hamming74.alist").write_text(write_alist(HAMMING_74))


if __name__ == "__main__":
    main()
