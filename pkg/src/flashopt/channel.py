"""Voltage-domain model of a 2-bit MLC flash read channel.

Each cell stores one of four nominal charge states.  The readback voltage
of a cell is modelled as a Gaussian whose mean and spread depend on the
state, the program/erase cycle count, and the retention time:

  * the erased state keeps its wide erase distribution,
  * programmed states start as narrow Gaussians centred half a program
    step below their verify target,
  * random telegraph noise widens every state with cycling,
  * charge leakage during retention shifts programmed states downward and
    adds a proportional spread.

Cell-to-cell coupling from neighbouring wordlines is modelled separately
and is not folded into the per-state Gaussians; the helpers at the bottom
expose the aggressor arithmetic for callers that want it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

N_STATES = 4


@dataclass(frozen=True)
class FlashParams:
    """Device constants of the voltage model.

    Defaults describe the 2-bit MLC reference device used throughout the
    package; load alternatives from a JSON file via :meth:`from_file`.
    """

    v_target: tuple = (1.4, 2.6, 3.2, 3.93)  # verify targets per state [V]
    v_p: float = 0.2          # incremental program step [V]
    sigma_e: float = 0.34     # erased-state spread [V]
    sigma_pn: float = 0.05    # programming noise spread [V]
    rtn_coeff: float = 0.00027  # telegraph-noise power-law scale
    rtn_exp: float = 0.64       # telegraph-noise power-law exponent
    beta0: float = 1e-5       # leakage cycling terms: amplitude ...
    beta1: float = 8e-5
    alpha0: float = 0.68      # ... and exponents
    alpha1: float = 0.52
    k_x: float = 0.1          # coupling ratios: bitline neighbour,
    k_y: float = 0.08         # wordline neighbour,
    k_xy: float = 0.006       # diagonal neighbour
    drn_log: str = "natural"  # retention time scaling: "natural" or "log10"

    def __post_init__(self):
        if len(self.v_target) != N_STATES:
            raise ValueError(f"expected {N_STATES} verify targets, got {len(self.v_target)}")
        diffs = np.diff(np.asarray(self.v_target, dtype=float))
        if not np.all(diffs > 0):
            raise ValueError("verify targets must be strictly increasing")
        if self.v_p <= 0:
            raise ValueError("program step v_p must be positive")
        for name in ("sigma_e", "sigma_pn", "rtn_coeff"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.drn_log not in ("natural", "log10"):
            raise ValueError("drn_log must be 'natural' or 'log10'")

    @classmethod
    def from_file(cls, path) -> "FlashParams":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: expected a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"{path}: unknown parameter(s) {sorted(unknown)}")
        if "v_target" in raw:
            raw["v_target"] = tuple(raw["v_target"])
        return cls(**raw)

    def to_file(self, path) -> None:
        data = asdict(self)
        data["v_target"] = list(data["v_target"])
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class Condition:
    """Operating point: cycling count and retention time [hours]."""

    n_pe: float = 0.0
    t_ret: float = 0.0

    def __post_init__(self):
        if self.n_pe < 0:
            raise ValueError("cycle count n_pe must be nonnegative")
        if self.t_ret < 0:
            raise ValueError("retention time t_ret must be nonnegative")


@dataclass(frozen=True)
class StateModel:
    """Gaussian readback distribution of one charge state."""

    state: int
    mu: float     # mean [V]
    sigma: float  # standard deviation [V]

    def __post_init__(self):
        if not 0 <= self.state < N_STATES:
            raise ValueError(f"state index out of range: {self.state}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


DEFAULT_PARAMS = FlashParams()


def rtn_sigma(n_pe: float, params: FlashParams = DEFAULT_PARAMS) -> float:
    """Telegraph-noise spread after ``n_pe`` program/erase cycles [V]."""
    if n_pe < 0:
        raise ValueError("n_pe must be nonnegative")
    return params.rtn_coeff * float(n_pe) ** params.rtn_exp


def _log_ret(t_ret: float, params: FlashParams) -> float:
    if params.drn_log == "log10":
        return math.log10(1.0 + t_ret)
    return math.log1p(t_ret)


def drn_params(state: int, cond: Condition, params: FlashParams = DEFAULT_PARAMS):
    """Retention-loss mean shift and spread for one state, as ``(mu_r, sigma_r)``.

    The shift grows with the log of retention time and with the voltage
    distance from the erased state, scaled by a two-term cycling power
    law.  The erased state does not leak, so its shift is zero.
    """
    if not 0 <= state < N_STATES:
        raise ValueError(f"state must be in [0, {N_STATES})")
    dv = params.v_target[state] - params.v_target[0]
    wear = params.beta0 * cond.n_pe ** params.alpha0 + params.beta1 * cond.n_pe ** params.alpha1
    mu_r = _log_ret(cond.t_ret, params) * dv * wear
    return mu_r, 0.4 * abs(mu_r)


def state_model(state: int, cond: Condition, params: FlashParams = DEFAULT_PARAMS) -> StateModel:
    """Effective Gaussian for one state at the given operating point."""
    mu_r, sigma_r = drn_params(state, cond, params)
    s_rtn = rtn_sigma(cond.n_pe, params)
    if state == 0:
        mu = params.v_target[0] - mu_r
        var = params.sigma_e**2 + s_rtn**2 + sigma_r**2
    else:
        mu = params.v_target[state] - params.v_p / 2 - mu_r
        var = params.sigma_pn**2 + s_rtn**2 + sigma_r**2
    return StateModel(state, mu, math.sqrt(var))


def state_models(cond: Condition, params: FlashParams = DEFAULT_PARAMS):
    """All four state Gaussians at the given operating point."""
    return [state_model(s, cond, params) for s in range(N_STATES)]


def pdf_at(model: StateModel, v):
    """Gaussian density of ``model`` evaluated at voltage(s) ``v``."""
    v = np.asarray(v, dtype=float)
    z = (v - model.mu) / model.sigma
    out = np.exp(-0.5 * z * z) / (model.sigma * math.sqrt(2.0 * math.pi))
    return out if out.ndim else float(out)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_voltage(state: int, cond: Condition, params: FlashParams = DEFAULT_PARAMS,
                   rng=0, size=None):
    """Draw readback voltage(s) for cells programmed to ``state``."""
    m = state_model(state, cond, params)
    rng = _as_rng(rng)
    out = m.mu + m.sigma * rng.standard_normal(size)
    return out


def sample_wordline(states, cond: Condition, params: FlashParams = DEFAULT_PARAMS, rng=0):
    """Vectorized draw: one voltage per entry of the state array ``states``."""
    states = np.asarray(states)
    if states.size and (states.min() < 0 or states.max() >= N_STATES):
        raise ValueError("state indices out of range")
    models = state_models(cond, params)
    mus = np.array([m.mu for m in models])
    sigmas = np.array([m.sigma for m in models])
    rng = _as_rng(rng)
    return mus[states] + sigmas[states] * rng.standard_normal(states.shape)


# -- cell-to-cell interference helpers --------------------------------------

def cci_shift(delta_v, zeta) -> float:
    """Aggregate coupling shift: sum of aggressor swings times ratios."""
    delta_v = np.asarray(delta_v, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if delta_v.shape != zeta.shape:
        raise ValueError("delta_v and zeta must have matching shapes")
    return float(np.sum(delta_v * zeta))


def cci_erased_means(params: FlashParams = DEFAULT_PARAMS):
    """Mean erased-state voltage of even and odd pages under full coupling.

    Even pages see both bitline neighbours plus the diagonal pairs; odd
    pages only the wordline and diagonal aggressors.  The aggressor swing
    is taken as the average over a uniform victim's neighbours.
    """
    v0, v3 = params.v_target[0], params.v_target[-1]
    v_mean = (v0 + v3) / 2 - v0
    mu_even = v0 + v_mean * (2 * params.k_x + params.k_y + 2 * params.k_xy)
    mu_odd = v0 + v_mean * (params.k_y + params.k_xy)
    return mu_even, mu_odd
