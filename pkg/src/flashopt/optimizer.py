"""Read-threshold design by cross iterative search.

The objective is the finite-blocklength maximum decoding-error
probability averaged over the two pages of an MLC cell.  Starting from
thresholds derived from the pairwise hard-decision crossings, the search
sweeps one threshold at a time over a fixed grid of half-width lam
around its current value (clipped so the ordering never breaks), keeps
the argmin, and repeats until the objective stops moving.  Seeded random
restarts from jittered initial points guard against local minima; the
best run wins, with ties broken toward the smaller threshold vector.

A mutual-information-maximizing variant of the same search provides the
classic baseline for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import Condition, FlashParams, state_models
from .fbl import info_variance, mutual_information, t_stat, eps_max
from .quantizer import GRAY, ThresholdSet, page_subchannel, transition_matrix

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class CisConfig:
    """Knobs of the coordinate search."""

    j_levels: int = 6
    lam: float = 0.2       # half-width of the per-coordinate window [V]
    rho: float = 1e-9      # stop when the objective moves less than this
    i_max: int = 50        # sweep cap
    grid_step: float = 0.01
    restarts: int = 4      # additional jittered starts
    uniform_init: bool = False  # evenly spaced init instead of the skewed recipe

    def __post_init__(self):
        if self.j_levels < 1:
            raise ValueError("j_levels must be at least 1")
        if self.lam <= 0 or self.grid_step <= 0:
            raise ValueError("lam and grid_step must be positive")
        if self.grid_step > self.lam:
            raise ValueError("grid_step must not exceed lam")
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        if self.restarts < 0:
            raise ValueError("restarts must be nonnegative")


# -- vectorized objective evaluation -----------------------------------------
#
# The search evaluates a whole candidate grid per coordinate, so the
# objective is computed for a batch of threshold vectors at once.  The
# single-vector public `objective` below composes the channel/fbl modules
# directly; tests pin the two routes together.

def _region_masses(d_batch: np.ndarray, mus: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Region masses per state for each candidate row; shape (C, S, J+1)."""
    c, j = d_batch.shape
    edges = np.empty((c, j + 2))
    edges[:, 0] = -np.inf
    edges[:, 1:-1] = d_batch
    edges[:, -1] = np.inf
    z = (edges[:, None, :] - mus[None, :, None]) / sigmas[None, :, None]
    tails = 0.5 * erfc(z / _SQRT2)
    return np.clip(tails[:, :, :-1] - tails[:, :, 1:], 0.0, 1.0)


def _iu_batch(wp: np.ndarray, prior: np.ndarray):
    """Mutual information and variance per candidate for (C, S, R) rows."""
    p_out = np.einsum("s,csr->cr", prior, wp)
    mask = wp > 0.0
    ratio = np.divide(wp, p_out[:, None, :], out=np.ones_like(wp), where=mask)
    dens = np.where(mask, np.log2(np.where(mask, ratio, 1.0)), 0.0)
    joint = prior[None, :, None] * wp
    i = np.sum(joint * dens, axis=(1, 2))
    u = np.sum(joint * dens * dens, axis=(1, 2)) - i * i
    return i, np.maximum(u, 0.0)


def _t_batch(i: np.ndarray, u: np.ndarray, n: int, rate: float) -> np.ndarray:
    bracket = i - rate + math.log2(n) / (2.0 * n)
    t = np.empty_like(bracket)
    pos = u > 0.0
    t[pos] = bracket[pos] * np.sqrt(n / u[pos])
    degenerate = ~pos
    t[degenerate] = np.where(bracket[degenerate] == 0.0, 0.0,
                             np.sign(bracket[degenerate]) * np.inf)
    return t


def _page_rows(w: np.ndarray, page: str) -> np.ndarray:
    """Average state rows into bit rows (index 0 = bit 0) for one page."""
    zero = list(GRAY.states_with_bit(page, 0))
    one = list(GRAY.states_with_bit(page, 1))
    return np.stack([w[:, zero].mean(axis=1), w[:, one].mean(axis=1)], axis=1)


_HALF = np.array([0.5, 0.5])


def eps_max_batch(d_batch: np.ndarray, models, n: int, rate: float) -> np.ndarray:
    """Two-page eps_max for each row of threshold candidates."""
    mus = np.array([m.mu for m in models])
    sigmas = np.array([m.sigma for m in models])
    w = _region_masses(np.atleast_2d(d_batch), mus, sigmas)
    out = np.zeros(w.shape[0])
    for page in ("msb", "lsb"):
        i, u = _iu_batch(_page_rows(w, page), _HALF)
        t = _t_batch(i, u, n, rate)
        out += 0.25 * erfc(t / _SQRT2)
    return out


def binary_eps_batch(d_batch: np.ndarray, models, n: int, rate: float) -> np.ndarray:
    """Single-page Q(T) objective for a two-state synthetic channel."""
    mus = np.array([m.mu for m in models])
    sigmas = np.array([m.sigma for m in models])
    w = _region_masses(np.atleast_2d(d_batch), mus, sigmas)
    i, u = _iu_batch(w, _HALF)
    t = _t_batch(i, u, n, rate)
    return 0.5 * erfc(t / _SQRT2)


def neg_mi_batch(d_batch: np.ndarray, models) -> np.ndarray:
    """Negated full-alphabet mutual information per candidate row."""
    mus = np.array([m.mu for m in models])
    sigmas = np.array([m.sigma for m in models])
    w = _region_masses(np.atleast_2d(d_batch), mus, sigmas)
    prior = np.full(len(models), 1.0 / len(models))
    i, _ = _iu_batch(w, prior)
    return -i


def objective(d: ThresholdSet, cond: Condition, params: FlashParams,
              n: int, rate: float) -> float:
    """Two-page eps_max of the quantized channel at one operating point."""
    models = state_models(cond, params)
    ch = transition_matrix(models, d)
    ts = []
    for page in ("msb", "lsb"):
        sub = page_subchannel(ch, GRAY, page)
        ts.append(t_stat(n, rate, mutual_information(sub), info_variance(sub)))
    return eps_max(ts[0], ts[1])


# -- search ------------------------------------------------------------------

def init_thresholds(models, j_levels: int, uniform: bool = False) -> ThresholdSet:
    """Initial thresholds spanning the hard-decision range.

    The default recipe anchors d_1 one spacing below the first crossing
    and d_J one spacing above the last, leaving a double-width gap after
    d_1; the uniform variant spaces all thresholds evenly over the same
    span.
    """
    if j_levels < 3:
        raise ValueError("initialization needs at least 3 levels")
    from .quantizer import hard_thresholds

    h = hard_thresholds(models)
    h1, h3 = h[0], h[-1]
    delta = (h3 - h1) / (j_levels - 1)
    if uniform:
        d = np.linspace(h1 - delta, h3 + delta, j_levels)
    else:
        d = np.empty(j_levels)
        d[0] = h1 - delta
        for j in range(2, j_levels):
            d[j - 1] = h1 + (j - 1) * delta
        d[-1] = h3 + delta
    return ThresholdSet(tuple(d))


def coordinate_search(f, d0: np.ndarray, cfg: CisConfig, lower: float = 0.0):
    """Cyclic per-coordinate grid descent of a batch objective.

    ``f`` maps an array of candidate threshold rows (C, J) to objective
    values (C,).  Each coordinate is restricted to the open interval
    between its neighbours (and above ``lower``), so ordering is
    preserved at every step; an empty window leaves the coordinate
    unchanged.  Returns the final vector and the per-sweep objective
    history (nonincreasing, starting at the initial value).
    """
    d = np.asarray(d0, dtype=float).copy()
    n_dim = d.size
    steps = int(round(cfg.lam / cfg.grid_step))
    offsets = np.arange(-steps, steps + 1) * cfg.grid_step
    history = [float(f(d[None, :])[0])]
    for _ in range(cfg.i_max):
        for j in range(n_dim):
            lo = d[j - 1] if j > 0 else lower
            hi = d[j + 1] if j < n_dim - 1 else np.inf
            cand = d[j] + offsets
            cand = cand[(cand > lo) & (cand < hi)]
            if cand.size == 0:
                continue
            rows = np.repeat(d[None, :], cand.size, axis=0)
            rows[:, j] = cand
            vals = f(rows)
            d[j] = cand[int(np.argmin(vals))]
        history.append(float(f(d[None, :])[0]))
        if abs(history[-1] - history[-2]) < cfg.rho:
            break
    return d, history


def _jittered_starts(d0: np.ndarray, delta: float, cfg: CisConfig, seed):
    rng = np.random.default_rng(seed)
    starts = [d0.copy()]
    for _ in range(cfg.restarts):
        for _ in range(100):
            cand = np.sort(d0 + rng.uniform(-delta / 4, delta / 4, size=d0.size))
            if cand[0] > 0 and np.all(np.diff(cand) > 0):
                starts.append(cand)
                break
    return starts


def _multi_start(f, models, cfg: CisConfig, seed):
    d0 = init_thresholds(models, cfg.j_levels, cfg.uniform_init).as_array()
    from .quantizer import hard_thresholds

    h = hard_thresholds(models)
    delta = (h[-1] - h[0]) / (cfg.j_levels - 1)
    best = None
    for start in _jittered_starts(d0, delta, cfg, seed):
        d, history = coordinate_search(f, start, cfg)
        key = (history[-1], tuple(d))
        if best is None or key < best[0]:
            best = (key, d, history)
    return best[1], best[2]


def cis_optimize(cond: Condition, params: FlashParams, n: int, rate: float,
                 cfg: CisConfig = CisConfig(), seed: int = 0):
    """Minimize the two-page eps_max; returns thresholds and eps history."""
    models = state_models(cond, params)

    def f(rows):
        return eps_max_batch(rows, models, n, rate)

    d, history = _multi_start(f, models, cfg, seed)
    return ThresholdSet(tuple(d)), history


def mmi_optimize(cond: Condition, params: FlashParams,
                 cfg: CisConfig = CisConfig(), seed: int = 0) -> ThresholdSet:
    """Same search maximizing full-alphabet mutual information."""
    models = state_models(cond, params)

    def f(rows):
        return neg_mi_batch(rows, models)

    d, _ = _multi_start(f, models, cfg, seed)
    return ThresholdSet(tuple(d))
