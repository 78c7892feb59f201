"""LDPC codes: alist I/O, systematic encoding and sum-product decoding.

Parity-check matrices are plain data.  At load time the matrix is reduced over
GF(2) so that encoding is a dense matrix product; the decoder is a
vectorised flooding sum-product over a batch of codewords.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

LLR_CLAMP = 30.0
MAX_ITERATIONS = 50


class LdpcError(ValueError):
    pass


def read_alist(source) -> np.ndarray:
    """Parse an alist description (path or text) into a dense 0/1 matrix."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    tokens = [int(t) for t in text.split()]
    try:
        n, m = tokens[0], tokens[1]
        max_col = tokens[2]
        pos = 4 + n + m
        col_weights = tokens[4:4 + n]
        H = np.zeros((m, n), dtype=np.uint8)
        for j in range(n):
            rows = tokens[pos:pos + max_col]
            pos += max_col
            live = [r for r in rows if r > 0]
            if len(live) != col_weights[j]:
                raise LdpcError(f"column {j}: weight mismatch in alist")
            for r in live:
                H[r - 1, j] = 1
    except IndexError as exc:
        raise LdpcError("truncated alist") from exc
    return H


def write_alist(H: np.ndarray) -> str:
    H = np.asarray(H, dtype=np.uint8)
    m, n = H.shape
    cols = [np.flatnonzero(H[:, j]) + 1 for j in range(n)]
    rows = [np.flatnonzero(H[i]) + 1 for i in range(m)]
    max_col = max(len(c) for c in cols)
    max_row = max(len(r) for r in rows)
    lines = [f"{n} {m}", f"{max_col} {max_row}",
             " ".join(str(len(c)) for c in cols),
             " ".join(str(len(r)) for r in rows)]
    for c in cols:
        lines.append(" ".join(str(v) for v in list(c) + [0] * (max_col - len(c))))
    for r in rows:
        lines.append(" ".join(str(v) for v in list(r) + [0] * (max_row - len(r))))
    return "\n".join(lines) + "\n"


def _row_reduce(H: np.ndarray):
    """Reduced row echelon form over GF(2), pivoting on the rightmost columns.

    Returns (R, pivot_cols) with R restricted to its rank rows.
    """
    A = H[:, ::-1].copy()
    m, n = A.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hits = np.flatnonzero(A[row:, col])
        if hits.size == 0:
            continue
        r = row + hits[0]
        if r != row:
            A[[row, r]] = A[[r, row]]
        others = np.flatnonzero(A[:, col])
        others = others[others != row]
        A[others] ^= A[row]
        pivots.append(col)
        row += 1
    R = A[:row, ::-1]
    pivot_cols = [n - 1 - c for c in pivots]
    return R, pivot_cols


@dataclass(eq=False)
class LdpcCode:
    H: np.ndarray
    name: str = ""
    n: int = field(init=False)
    k: int = field(init=False)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.uint8)
        if H.ndim != 2 or H.size == 0:
            raise LdpcError("parity-check matrix must be a non-empty 2-D array")
        if np.any(H.sum(axis=0) == 0) or np.any(H.sum(axis=1) == 0):
            raise LdpcError("parity-check matrix has an empty row or column")
        self.H = H
        m, n = H.shape
        R, pivot_cols = _row_reduce(H)
        rank = len(pivot_cols)
        if rank >= n:
            raise LdpcError("parity-check matrix leaves no information bits")
        info = np.setdiff1d(np.arange(n), pivot_cols)
        self.n = n
        self.k = n - rank
        self.info_positions = info
        self.parity_positions = np.asarray(pivot_cols)
        # c[pivot_r] = sum_j R[r, info_j] * c[info_j]
        self._parity_map = R[:, info].T.astype(np.int64)
        self._build_graph()

    @property
    def rate(self) -> float:
        return self.k / self.n

    @classmethod
    def from_alist(cls, source, name: str = "") -> "LdpcCode":
        return cls(read_alist(source), name=name)

    def _build_graph(self):
        chk, var = np.nonzero(self.H)  # row-major: sorted by check
        self.edge_chk = chk
        self.edge_var = var
        self.chk_starts = np.flatnonzero(np.r_[True, chk[1:] != chk[:-1]])
        order = np.argsort(var, kind="stable")
        self.var_order = order
        sv = var[order]
        self.var_starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])

    def encode(self, bits) -> np.ndarray:
        """Systematic encoding of one message (k,) or a batch (B, k)."""
        msg = np.asarray(bits, dtype=np.int64)
        single = msg.ndim == 1
        msg = np.atleast_2d(msg)
        if msg.shape[1] != self.k:
            raise LdpcError(f"expected {self.k} message bits, got {msg.shape[1]}")
        cw = np.zeros((msg.shape[0], self.n), dtype=np.uint8)
        cw[:, self.info_positions] = msg
        cw[:, self.parity_positions] = (msg @ self._parity_map) & 1
        return cw[0] if single else cw

    def extract(self, codewords) -> np.ndarray:
        return np.asarray(codewords)[..., self.info_positions]

    def syndrome(self, codewords) -> np.ndarray:
        c = np.atleast_2d(np.asarray(codewords, dtype=np.int64))
        return (c @ self.H.T.astype(np.int64)) & 1

    def decode(self, llrs, max_iter: int = MAX_ITERATIONS):
        """Sum-product decoding.

        llrs: (n,) or (B, n), positive means bit 0 more likely.
        Returns (hard codeword bits, converged flags, iterations used).
        """
        L = np.clip(np.asarray(llrs, dtype=np.float64), -LLR_CLAMP, LLR_CLAMP)
        single = L.ndim == 1
        L = np.atleast_2d(L)
        B = L.shape[0]
        hard = (L < 0).astype(np.uint8)
        done = self._syndrome_ok(hard)
        out = hard.copy()
        iters = np.zeros(B, dtype=np.int64)
        active = np.flatnonzero(~done)
        v2c = L[:, self.edge_var]
        it = 0
        while active.size and it < max_iter:
            it += 1
            La = L[active]
            msg = v2c[active]
            c2v = self._check_update(msg)
            total = La + np.add.reduceat(c2v[:, self.var_order], self.var_starts, axis=1)
            v2c[active] = total[:, self.edge_var] - c2v
            h = (total < 0).astype(np.uint8)
            ok = self._syndrome_ok(h)
            out[active] = h
            iters[active] = it
            done[active[ok]] = True
            active = active[~ok]
        if single:
            return out[0], bool(done[0]), int(iters[0])
        return out, done, iters

    def _check_update(self, msg: np.ndarray) -> np.ndarray:
        mag = np.abs(msg)
        neg = msg < 0
        phi = _phi(mag)
        total = np.add.reduceat(phi, self.chk_starts, axis=1)[:, self.edge_chk]
        parity = np.add.reduceat(neg.astype(np.int64), self.chk_starts, axis=1)[:, self.edge_chk] & 1
        ext = _phi(np.maximum(total - phi, 0.0))
        sign = np.where((parity ^ neg) != 0, -1.0, 1.0)
        return np.clip(sign * ext, -LLR_CLAMP, LLR_CLAMP)

    def _syndrome_ok(self, hard: np.ndarray) -> np.ndarray:
        s = np.add.reduceat(hard[:, self.edge_var].astype(np.int64), self.chk_starts, axis=1) & 1
        return ~s.any(axis=1)


def _phi(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 1e-12, 60.0)
    return -np.log(np.tanh(x / 2.0))


_CACHE: dict[str, LdpcCode] = {}

BUILTIN_CODES = {
    "hamming74": "hamming74.alist",
    "qc648_r12": "qc648_r12.alist",
    "qc648_r23": "qc648_r23.alist",
    "qc648_r34": "qc648_r34.alist",
}

RATE_TO_CODE = {(1, 2): "qc648_r12", (2, 3): "qc648_r23", (3, 4): "qc648_r34"}


def load_code(name: str) -> LdpcCode:
    """Load a bundled code by name, or an alist file by path."""
    if name in _CACHE:
        return _CACHE[name]
    if name in BUILTIN_CODES:
        text = resources.files("sct.data.ldpc").joinpath(BUILTIN_CODES[name]).read_text()
        code = LdpcCode.from_alist(text, name=name)
    else:
        code = LdpcCode.from_alist(Path(name), name=Path(name).stem)
    _CACHE[name] = code
    return code


def construct_qc(mb: int, nb: int, z: int, info_degrees, seed: int = 0,
                 max_tries: int = 2000) -> np.ndarray:
    """Quasi-cyclic H with a dual-diagonal parity part and random info shifts.

    info_degrees gives the column weight of each of the nb - mb information
    block columns.  Shifts are drawn to avoid length-4 cycles where possible.
    """
    kb = nb - mb
    if len(info_degrees) != kb:
        raise LdpcError("need one degree per information block column")
    rng = np.random.default_rng(seed)
    base = -np.ones((mb, nb), dtype=np.int64)
    # parity part: weight-3 first column, then a staircase
    base[0, kb] = 1
    base[mb // 2, kb] = 0
    base[mb - 1, kb] = 1
    for i in range(mb - 1):
        base[i, kb + 1 + i] = 0
        base[i + 1, kb + 1 + i] = 0
    row_load = np.zeros(mb, dtype=np.int64)
    for j in np.argsort(-np.asarray(info_degrees), kind="stable"):
        d = info_degrees[j]
        for _ in range(max_tries):
            # favour lightly loaded rows to keep check degrees even
            w = np.exp(-(row_load - row_load.min()))
            rows = rng.choice(mb, size=d, replace=False, p=w / w.sum())
            shifts = rng.integers(0, z, size=d)
            trial = base.copy()
            trial[rows, j] = shifts
            if not _has_4cycle(trial, z, j):
                break
        base = trial
        row_load[rows] += 1
    return _expand(base, z)


def _has_4cycle(base: np.ndarray, z: int, col: int) -> bool:
    mb, nb = base.shape
    rows = np.flatnonzero(base[:, col] >= 0)
    for a in range(len(rows)):
        for b in range(a + 1, len(rows)):
            r1, r2 = rows[a], rows[b]
            for c in range(nb):
                if c == col or base[r1, c] < 0 or base[r2, c] < 0:
                    continue
                if (base[r1, col] - base[r2, col] + base[r2, c] - base[r1, c]) % z == 0:
                    return True
    return False


def _expand(base: np.ndarray, z: int) -> np.ndarray:
    mb, nb = base.shape
    H = np.zeros((mb * z, nb * z), dtype=np.uint8)
    eye = np.eye(z, dtype=np.uint8)
    for i in range(mb):
        for j in range(nb):
            s = base[i, j]
            if s >= 0:
                H[i * z:(i + 1) * z, j * z:(j + 1) * z] = np.roll(eye, s, axis=1)
    return H
