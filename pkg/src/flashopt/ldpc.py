"""Quasi-cyclic LDPC construction, systematic encoding, sum-product decoding.

Codes are built from seeded constructions (circulant lifts of a base
pattern, or progressive edge growth for the random preset) so results
are reproducible without shipping matrices.  Encoding uses a one-time
Gaussian elimination over GF(2) that records which columns ended up as
parity positions; the remaining (free) columns carry the info bits.

The decoder is a flooding sum-product with the tanh-product check rule.
The check-node inner loop exists twice: a numba njit kernel using exact
prefix/suffix products, and a vectorized numpy fallback using log
magnitudes and sign parities.  `FLASHOPT_NO_NUMBA=1` selects the numpy
path globally; `backend=` overrides per call (see benchmarks/).

LLR sign convention matches the quantizer tables: positive favors bit 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import functools
from functools import lru_cache

import numpy as np

from ._accel import DEFAULT_BACKEND, njit

MAX_BUILD_TRIES = 20
RATE_TOL = 0.005
_ATANH_LIM = 1.0 - 1e-15


@dataclass(frozen=True)
class ParityMatrix:
    """Sparse binary parity-check matrix with edge arrays for decoding."""

    n_rows: int
    n_cols: int
    edge_check: np.ndarray  # check index per edge, sorted by (check, var)
    edge_var: np.ndarray    # variable index per edge, same order
    check_ptr: np.ndarray = field(init=False)
    max_degree: int = field(init=False)

    def __post_init__(self):
        ec = np.asarray(self.edge_check, dtype=np.int64)
        ev = np.asarray(self.edge_var, dtype=np.int64)
        if ec.shape != ev.shape or ec.ndim != 1 or ec.size == 0:
            raise ValueError("edge arrays must be matching nonempty 1-D arrays")
        if ec.min() < 0 or ec.max() >= self.n_rows:
            raise ValueError("check index out of range")
        if ev.min() < 0 or ev.max() >= self.n_cols:
            raise ValueError("variable index out of range")
        order = np.lexsort((ev, ec))
        ec, ev = ec[order], ev[order]
        packed = ec * self.n_cols + ev
        if np.unique(packed).size != packed.size:
            raise ValueError("duplicate edges in parity matrix")
        if np.unique(ev).size != self.n_cols:
            raise ValueError("every column must have weight at least 1")
        counts = np.bincount(ec, minlength=self.n_rows)
        ptr = np.zeros(self.n_rows + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        object.__setattr__(self, "edge_check", ec)
        object.__setattr__(self, "edge_var", ev)
        object.__setattr__(self, "check_ptr", ptr)
        object.__setattr__(self, "max_degree", int(counts.max()))

    @classmethod
    def from_dense(cls, h) -> "ParityMatrix":
        h = np.asarray(h)
        rows, cols = np.nonzero(h)
        return cls(h.shape[0], h.shape[1], rows, cols)

    def dense(self) -> np.ndarray:
        h = np.zeros((self.n_rows, self.n_cols), dtype=np.uint8)
        h[self.edge_check, self.edge_var] = 1
        return h

    def check_neighbors(self, ci: int) -> np.ndarray:
        return self.edge_var[self.check_ptr[ci]:self.check_ptr[ci + 1]]

    def var_neighbors(self, vi: int) -> np.ndarray:
        return self.edge_check[self.edge_var == vi]

    def col_weights(self) -> np.ndarray:
        return np.bincount(self.edge_var, minlength=self.n_cols)

    def row_weights(self) -> np.ndarray:
        return np.bincount(self.edge_check, minlength=self.n_rows)


def export_matrix(pm: ParityMatrix, path) -> None:
    """Sparse text format: header "M N", then per row its column indices."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{pm.n_rows} {pm.n_cols}\n")
        for ci in range(pm.n_rows):
            cols = " ".join(str(int(v)) for v in np.sort(pm.check_neighbors(ci)))
            fh.write(cols + "\n")


def parse_matrix(path) -> ParityMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise ValueError(f"{path}: expected 'M N' header")
        m, n = int(first[0]), int(first[1])
        checks, vars_ = [], []
        for ci in range(m):
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated after {ci} rows")
            for tok in line.split():
                checks.append(ci)
                vars_.append(int(tok))
    return ParityMatrix(m, n, np.array(checks), np.array(vars_))


@dataclass(frozen=True)
class CodeSpec:
    """Construction request for one code family member."""

    name: str
    n: int
    rate: float
    col_weight: int
    base_rows: int = 0   # QC lift geometry; zero for random codes
    base_cols: int = 0
    z: int = 0
    m_rows: int = 0      # explicit row count for random codes

    @property
    def is_qc(self) -> bool:
        return self.z > 0


PRESETS = {
    "4k-qc": CodeSpec(name="4k-qc", n=4544, rate=0.9, col_weight=5,
                      base_rows=7, base_cols=71, z=64),
    "2k-qc": CodeSpec(name="2k-qc", n=2624, rate=0.9, col_weight=4,
                      base_rows=4, base_cols=41, z=64),
    "2k-random": CodeSpec(name="2k-random", n=1998, rate=0.89, col_weight=4,
                          m_rows=223),
}


def qc_expand(shifts, z: int) -> ParityMatrix:
    """Lift a base shift table: -1 blocks vanish, s becomes I shifted by s.

    Block entry s places ones at (i, (i + s) mod z) within the block.
    """
    shifts = np.asarray(shifts, dtype=np.int64)
    if shifts.ndim != 2:
        raise ValueError("shift table must be 2-D")
    if np.any((shifts < -1) | (shifts >= z)):
        raise ValueError(f"shifts must be -1 or in [0, {z})")
    br, bc = np.nonzero(shifts >= 0)
    if br.size == 0:
        raise ValueError("all-zero matrix has empty columns")
    i = np.arange(z)
    rows = (br[:, None] * z + i[None, :]).ravel()
    cols = (bc[:, None] * z + (i[None, :] + shifts[br, bc][:, None]) % z).ravel()
    return ParityMatrix(shifts.shape[0] * z, shifts.shape[1] * z, rows, cols)


# -- seeded constructions ----------------------------------------------------

def _qc_base_pattern(spec: CodeSpec) -> np.ndarray:
    """Which blocks are present: col_weight rows per base column, balanced."""
    pattern = np.zeros((spec.base_rows, spec.base_cols), dtype=bool)
    for c in range(spec.base_cols):
        for k in range(spec.col_weight):
            pattern[(spec.col_weight * c + k) % spec.base_rows, c] = True
    return pattern


def _qc_shift_table(pattern: np.ndarray, z: int, rng) -> np.ndarray | None:
    """Greedy girth-aware shift assignment; None when a cell runs dry."""
    br, bc = pattern.shape
    shifts = np.full((br, bc), -1, dtype=np.int64)
    for c in range(bc):
        for r in range(br):
            if not pattern[r, c]:
                continue
            forbidden = set()
            for r2 in range(br):
                if r2 == r or shifts[r2, c] < 0:
                    continue
                both = pattern[r] & pattern[r2] & (np.arange(bc) < c)
                for c2 in np.nonzero(both)[0]:
                    if shifts[r, c2] < 0 or shifts[r2, c2] < 0:
                        continue
                    forbidden.add(int(shifts[r, c2] - shifts[r2, c2] + shifts[r2, c]) % z)
            for s in rng.permutation(z):
                if int(s) not in forbidden:
                    shifts[r, c] = s
                    break
            else:
                return None
    return shifts


def _qc_four_cycle_free(shifts: np.ndarray, z: int) -> bool:
    br, bc = shifts.shape
    for r1 in range(br):
        for r2 in range(r1 + 1, br):
            cols = np.nonzero((shifts[r1] >= 0) & (shifts[r2] >= 0))[0]
            diff = (shifts[r1, cols] - shifts[r2, cols]) % z
            if np.unique(diff).size != diff.size:
                return False
    return True


def _build_qc(spec: CodeSpec, rng) -> ParityMatrix | None:
    pattern = _qc_base_pattern(spec)
    shifts = _qc_shift_table(pattern, spec.z, rng)
    if shifts is None or not _qc_four_cycle_free(shifts, spec.z):
        return None
    return qc_expand(shifts, spec.z)


def _peg_bfs(hf: np.ndarray, v: int):
    """Checks reachable from variable v, plus the last BFS frontier."""
    reach_v = np.zeros(hf.shape[1])
    reach_v[v] = 1.0
    reached = np.zeros(hf.shape[0], dtype=bool)
    frontier = reached
    while True:
        now = (hf @ reach_v) > 0.0
        new = now & ~reached
        if not new.any():
            return reached, frontier
        frontier = new
        reached = now
        reach_v = (hf.T @ now.astype(float)) > 0.0


def _build_peg(spec: CodeSpec, rng) -> ParityMatrix | None:
    """Progressive edge growth at fixed column weight."""
    m, n = spec.m_rows, spec.n
    hf = np.zeros((m, n))
    deg = np.zeros(m, dtype=np.int64)
    for v in range(n):
        for k in range(spec.col_weight):
            if k == 0:
                cand = np.arange(m)
            else:
                reached, frontier = _peg_bfs(hf, v)
                cand = np.nonzero(~reached)[0]
                if cand.size == 0:
                    cand = np.nonzero(frontier)[0]
            cand = cand[hf[cand, v] == 0]
            if cand.size == 0:
                return None
            best = cand[deg[cand] == deg[cand].min()]
            pick = int(best[rng.integers(best.size)])
            hf[pick, v] = 1.0
            deg[pick] += 1
    rows, cols = np.nonzero(hf)
    pm = ParityMatrix(m, n, rows, cols)
    return pm if _pairwise_four_cycle_free(pm) else None


def _pairwise_four_cycle_free(pm: ParityMatrix) -> bool:
    """No two variables may share more than one check."""
    seen = set()
    for v in range(pm.n_cols):
        checks = np.sort(pm.var_neighbors(v))
        for a in range(checks.size):
            for b in range(a + 1, checks.size):
                key = int(checks[a]) * pm.n_rows + int(checks[b])
                if key in seen:
                    return False
                seen.add(key)
    return True


# -- encoding ----------------------------------------------------------------

def _gf2_rref(h: np.ndarray):
    """In-place reduced row echelon over GF(2); returns pivot columns."""
    m, n = h.shape
    pivots = []
    r = 0
    for c in range(n):
        if r == m:
            break
        hit = np.nonzero(h[r:, c])[0]
        if hit.size == 0:
            continue
        pr = r + int(hit[0])
        if pr != r:
            h[[r, pr]] = h[[pr, r]]
        others = np.nonzero(h[:, c])[0]
        others = others[others != r]
        if others.size:
            h[others] ^= h[r]
        pivots.append(c)
        r += 1
    return pivots


@dataclass(frozen=True)
class LdpcCode:
    """Built code: parity matrix plus systematic-encoding tables."""

    spec: CodeSpec
    h: ParityMatrix
    rank: int
    pivot_cols: np.ndarray  # parity positions
    free_cols: np.ndarray   # systematic (info) positions
    parity_map: np.ndarray  # rank x info_len over GF(2)

    @property
    def n(self) -> int:
        return self.h.n_cols

    @property
    def info_len(self) -> int:
        return self.free_cols.size

    @property
    def measured_rate(self) -> float:
        return self.info_len / self.n

    @functools.cached_property
    def _parity_map_f(self) -> np.ndarray:
        # float copy so encoding rides BLAS; row sums stay exactly
        # representable (they never exceed the code length).
        return self.parity_map.astype(np.float64)


def code_from_matrix(pm: ParityMatrix, spec: CodeSpec | None = None) -> LdpcCode:
    """Attach encoder tables to an arbitrary parity matrix."""
    work = pm.dense().copy()
    pivots = _gf2_rref(work)
    rank = len(pivots)
    pivot_cols = np.asarray(pivots, dtype=np.int64)
    mask = np.ones(pm.n_cols, dtype=bool)
    mask[pivot_cols] = False
    free_cols = np.nonzero(mask)[0]
    parity_map = work[:rank][:, free_cols].copy()
    if spec is None:
        spec = CodeSpec(name="custom", n=pm.n_cols,
                        rate=free_cols.size / pm.n_cols,
                        col_weight=int(pm.col_weights().max()))
    return LdpcCode(spec=spec, h=pm, rank=rank, pivot_cols=pivot_cols,
                    free_cols=free_cols, parity_map=parity_map)


def build_code(spec, seed: int = 0) -> LdpcCode:
    """Build a preset (by name or CodeSpec); deterministic per seed."""
    if isinstance(spec, str):
        try:
            spec = PRESETS[spec.lower()]
        except KeyError:
            raise ValueError(f"unknown code preset: {spec!r}") from None
    return _build_cached(spec, seed)


@lru_cache(maxsize=8)
def _build_cached(spec: CodeSpec, seed: int) -> LdpcCode:
    for attempt in range(MAX_BUILD_TRIES):
        rng = np.random.default_rng((seed, attempt))
        pm = _build_qc(spec, rng) if spec.is_qc else _build_peg(spec, rng)
        if pm is None:
            continue
        code = code_from_matrix(pm, spec)
        if abs(code.measured_rate - spec.rate) > RATE_TOL:
            continue
        return code
    raise ValueError(f"could not build {spec.name} within {MAX_BUILD_TRIES} attempts")


def encode(code: LdpcCode, info) -> np.ndarray:
    """Systematic codeword: info on free columns, parity solved from RREF."""
    info = np.asarray(info)
    if info.shape != (code.info_len,):
        raise ValueError(f"expected {code.info_len} info bits, got {info.shape}")
    info = info.astype(np.int64) & 1
    c = np.zeros(code.n, dtype=np.uint8)
    c[code.free_cols] = info
    sums = code._parity_map_f @ info.astype(np.float64)
    c[code.pivot_cols] = np.rint(sums).astype(np.int64) & 1
    return c


def syndrome(pm, bits) -> np.ndarray:
    """Parity of each check; accepts a code or its parity matrix."""
    pm = getattr(pm, "h", pm)
    bits = np.asarray(bits).astype(np.int64) & 1
    return np.bincount(pm.edge_check, weights=bits[pm.edge_var],
                       minlength=pm.n_rows).astype(np.int64) & 1


# -- sum-product decoding ----------------------------------------------------

@njit(cache=True)
def _check_products_kernel(t, check_ptr, max_deg):
    """Per-edge product of the other tanh values in the same check."""
    out = np.empty_like(t)
    fwd = np.empty(max_deg)
    for ci in range(check_ptr.shape[0] - 1):
        s = check_ptr[ci]
        e = check_ptr[ci + 1]
        acc = 1.0
        for k in range(e - s):
            fwd[k] = acc
            acc *= t[s + k]
        back = 1.0
        for k in range(e - s - 1, -1, -1):
            out[s + k] = fwd[k] * back
            back *= t[s + k]
    return out


def _check_products_numpy(t, edge_check, n_rows):
    """Same exclusion products via log magnitudes and sign parity."""
    mag = np.abs(t)
    zero = mag == 0.0
    logmag = np.where(zero, 0.0, np.log(np.where(zero, 1.0, mag)))
    neg = t < 0.0
    per_check_log = np.bincount(edge_check, weights=logmag, minlength=n_rows)
    per_check_zero = np.bincount(edge_check, weights=zero.astype(float), minlength=n_rows)
    per_check_neg = np.bincount(edge_check, weights=neg.astype(float), minlength=n_rows)
    zeros_among_others = per_check_zero[edge_check] - zero
    mag_out = np.exp(per_check_log[edge_check] - logmag)
    mag_out[zeros_among_others > 0] = 0.0
    neg_among_others = per_check_neg[edge_check] - neg
    sign = 1.0 - 2.0 * (neg_among_others.astype(np.int64) & 1)
    return sign * mag_out


def check_messages(v2c, pm: ParityMatrix, backend: str | None = None) -> np.ndarray:
    """Check-node update: per-edge extrinsic message from the tanh rule."""
    backend = backend or DEFAULT_BACKEND
    t = np.tanh(0.5 * np.asarray(v2c, dtype=float))
    if backend == "numba":
        prod = _check_products_kernel(t, pm.check_ptr, pm.max_degree)
    elif backend == "numpy":
        prod = _check_products_numpy(t, pm.edge_check, pm.n_rows)
    else:
        raise ValueError(f"unknown backend: {backend!r}")
    return 2.0 * np.arctanh(np.clip(prod, -_ATANH_LIM, _ATANH_LIM))


def sp_decode(code: LdpcCode, llrs, i_max: int = 25, clamp: float = 30.0,
              backend: str | None = None):
    """Flooding sum-product decode; returns (bits, converged, iterations).

    Convergence requires a zero syndrome with every posterior strictly
    signed; an all-zero posterior (no channel information) therefore
    reports converged=False even though the trivial word checks out.
    """
    pm = code.h
    llr = np.asarray(llrs, dtype=float)
    if llr.shape != (pm.n_cols,):
        raise ValueError(f"expected {pm.n_cols} LLRs, got {llr.shape}")
    # Internal sign convention is log(p0/p1); inputs use the opposite.
    intr = np.clip(-llr, -clamp, clamp)
    v2c = intr[pm.edge_var]
    hard = np.zeros(pm.n_cols, dtype=np.uint8)
    for it in range(1, max(int(i_max), 1) + 1):
        c2v = np.clip(check_messages(v2c, pm, backend), -clamp, clamp)
        total = intr + np.bincount(pm.edge_var, weights=c2v, minlength=pm.n_cols)
        v2c = np.clip(total[pm.edge_var] - c2v, -clamp, clamp)
        hard = (total < 0.0).astype(np.uint8)
        if not np.any(syndrome(pm, hard)) and np.all(total != 0.0):
            return hard, True, it
    return hard, False, int(i_max)
