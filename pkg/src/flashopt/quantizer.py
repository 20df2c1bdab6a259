"""Read-region quantization of the flash voltage axis.

A set of J read thresholds splits the voltage axis into J+1 half-open
regions.  Sensing a cell returns only the region index, so the analog
channel collapses to a discrete memoryless channel with four inputs (the
charge states) and J+1 outputs.  This module builds that channel, its
per-page binary marginals under the Gray mapping, the per-region LLR
tables used by the soft decoder, and the classic hard-decision thresholds
at the pairwise density crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .channel import N_STATES, StateModel

L_MAX = 30.0  # LLR clamp, natural-log units
_SQRT2 = math.sqrt(2.0)


def _q(x):
    """Gaussian upper-tail probability (vectorized)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


@dataclass(frozen=True)
class ThresholdSet:
    """Ordered read thresholds d_1 < ... < d_J, all positive."""

    d: tuple

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("thresholds must be a nonempty 1-D sequence")
        if d[0] <= 0:
            raise ValueError("first threshold must be positive")
        if not np.all(np.diff(d) > 0):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "d", tuple(float(x) for x in d))

    @property
    def j_levels(self) -> int:
        return len(self.d)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.d, dtype=float)

    @classmethod
    def from_file(cls, path) -> "ThresholdSet":
        return cls(tuple(_read_floats(path)))

    def to_file(self, path) -> None:
        _write_floats(path, self.d)


def _read_floats(path):
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            values.append(float(line))
    return values


def _write_floats(path, values) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in values:
            fh.write(f"{v:.17g}\n")


_GRAY_BITS = ((1, 1), (1, 0), (0, 0), (0, 1))  # state -> (msb, lsb)


@dataclass(frozen=True)
class GrayMap:
    """Fixed Gray assignment of (msb, lsb) pairs to the four states."""

    bits: tuple = _GRAY_BITS

    def __post_init__(self):
        if tuple(tuple(b) for b in self.bits) != _GRAY_BITS:
            raise ValueError("only the standard MLC Gray mapping is supported")

    def page_bits(self, page: str) -> np.ndarray:
        """Per-state bit values of one page, as an array of length 4."""
        k = _page_index(page)
        return np.array([b[k] for b in self.bits], dtype=np.int64)

    def states_with_bit(self, page: str, value: int) -> tuple:
        bits = self.page_bits(page)
        return tuple(int(s) for s in np.nonzero(bits == value)[0])

    def state_of(self, msb, lsb):
        """Map bit arrays (or scalars) to state indices."""
        msb = np.asarray(msb, dtype=np.int64)
        lsb = np.asarray(lsb, dtype=np.int64)
        lut = np.empty(4, dtype=np.int64)
        for s, (m, l) in enumerate(self.bits):
            lut[2 * m + l] = s
        out = lut[2 * msb + lsb]
        return out if out.ndim else int(out)


def _page_index(page: str) -> int:
    page = page.lower()
    if page == "msb":
        return 0
    if page == "lsb":
        return 1
    raise ValueError(f"unknown page: {page!r}")


GRAY = GrayMap()


@dataclass(frozen=True)
class DmcChannel:
    """Discrete memoryless channel: input prior and region transition rows."""

    prior: np.ndarray
    w: np.ndarray  # rows = inputs, cols = regions

    def __post_init__(self):
        prior = np.asarray(self.prior, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or prior.ndim != 1 or w.shape[0] != prior.size:
            raise ValueError("prior length must match transition rows")
        if abs(prior.sum() - 1.0) > 1e-9:
            raise ValueError("prior must sum to 1")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("every transition row must sum to 1")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "w", w)

    @property
    def n_regions(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True)
class LlrTable:
    """Per-region LLRs, column 0 for the MSB page and column 1 for the LSB."""

    llr: np.ndarray  # shape (J+1, 2), natural-log units

    def __post_init__(self):
        llr = np.asarray(self.llr, dtype=float)
        if llr.ndim != 2 or llr.shape[1] != 2:
            raise ValueError("llr table must have shape (regions, 2)")
        if not np.all(np.isfinite(llr)):
            raise ValueError("llr table must be finite after clamping")
        object.__setattr__(self, "llr", llr)

    @classmethod
    def from_file(cls, path) -> "LlrTable":
        flat = np.asarray(_read_floats(path), dtype=float)
        if flat.size % 2:
            raise ValueError(f"{path}: expected an even number of values")
        return cls(flat.reshape(-1, 2))

    def to_file(self, path) -> None:
        # Row-major: region 0 MSB, region 0 LSB, region 1 MSB, ...
        _write_floats(path, self.llr.reshape(-1))


def _gaussian_crossing(a: StateModel, b: StateModel) -> float:
    """Voltage where the two densities are equal, strictly between the means."""
    if a.sigma == b.sigma:
        return 0.5 * (a.mu + b.mu)
    # p_a(v) = p_b(v) reduces to a quadratic in v.
    ia, ib = 1.0 / a.sigma**2, 1.0 / b.sigma**2
    qa = ia - ib
    qb = 2.0 * (b.mu * ib - a.mu * ia)
    qc = a.mu**2 * ia - b.mu**2 * ib - 2.0 * math.log(b.sigma / a.sigma)
    roots = np.roots([qa, qb, qc])
    roots = roots[np.abs(roots.imag) < 1e-9].real
    lo, hi = min(a.mu, b.mu), max(a.mu, b.mu)
    inside = [r for r in roots if lo < r < hi]
    if not inside:
        raise ValueError("densities do not cross between the state means")
    return float(inside[0])


def hard_thresholds(models) -> tuple:
    """Density-crossing read thresholds between adjacent states."""
    mus = [m.mu for m in models]
    if not all(mus[i] < mus[i + 1] for i in range(len(mus) - 1)):
        raise ValueError("state means must be strictly increasing")
    return tuple(_gaussian_crossing(models[i], models[i + 1]) for i in range(len(models) - 1))


def quantize(v, d: ThresholdSet):
    """Region index of voltage(s) ``v``: j such that v lies in [d_j, d_{j+1}).

    The leftmost region extends to -inf so retention-shifted negative
    samples stay representable; a sample exactly at d_j belongs to region j.
    """
    edges = d.as_array()
    out = np.searchsorted(edges, np.asarray(v, dtype=float), side="right")
    return out if out.ndim else int(out)


def transition_matrix(models, d: ThresholdSet, prior=None) -> DmcChannel:
    """DMC from state Gaussians to read regions (tail-difference masses)."""
    mus = np.array([m.mu for m in models])
    sigmas = np.array([m.sigma for m in models])
    edges = np.concatenate(([-np.inf], d.as_array(), [np.inf]))
    tails = _q((edges[None, :] - mus[:, None]) / sigmas[:, None])
    w = np.clip(tails[:, :-1] - tails[:, 1:], 0.0, 1.0)
    if prior is None:
        prior = np.full(len(models), 1.0 / len(models))
    return DmcChannel(prior=prior, w=w)


def output_distribution(ch: DmcChannel) -> np.ndarray:
    """Region probabilities under the channel's input prior."""
    return ch.prior @ ch.w


def llr_table(models, d: ThresholdSet, g: GrayMap = GRAY, l_max: float = L_MAX) -> LlrTable:
    """Per-region LLRs of both pages: log of bit-1 mass over bit-0 mass.

    Regions holding only bit-1 (or only bit-0) mass clamp to +-l_max, and
    an entirely empty region contributes 0 (no information).
    """
    if len(models) != N_STATES:
        raise ValueError(f"expected {N_STATES} state models")
    ch = transition_matrix(models, d)
    out = np.zeros((ch.n_regions, 2))
    for k, page in enumerate(("msb", "lsb")):
        ones = list(g.states_with_bit(page, 1))
        num = ch.w[ones].sum(axis=0)
        den = ch.w.sum(axis=0) - num
        for j in range(ch.n_regions):
            if num[j] <= 0.0 and den[j] <= 0.0:
                out[j, k] = 0.0
            elif den[j] <= 0.0:
                out[j, k] = l_max
            elif num[j] <= 0.0:
                out[j, k] = -l_max
            else:
                out[j, k] = min(max(math.log(num[j] / den[j]), -l_max), l_max)
    return LlrTable(out)


def page_subchannel(ch: DmcChannel, g: GrayMap = GRAY, page: str = "msb") -> DmcChannel:
    """Binary-input marginal of one page: rows indexed by bit value 0, 1."""
    if ch.w.shape[0] != N_STATES:
        raise ValueError("page_subchannel expects the 4-state channel")
    rows = []
    for bit in (0, 1):
        states = list(g.states_with_bit(page, bit))
        rows.append(ch.w[states].mean(axis=0))
    return DmcChannel(prior=np.array([0.5, 0.5]), w=np.array(rows))
