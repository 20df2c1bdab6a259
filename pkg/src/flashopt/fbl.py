"""Finite-blocklength channel metrics.

For a discrete memoryless channel and a code of length n and rate R, the
normal approximation expresses the achievable rate and the block error
probability through the mutual information I, the unconditional
information variance U, and the statistic

    T = (I - R + log2(n) / (2n)) * sqrt(n / U).

All rates and information quantities here are in bits (base-2 logs),
matching code rates expressed in information bits per channel bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

_SQRT2 = math.sqrt(2.0)


def q_func(x):
    """Standard Gaussian upper-tail probability Q(x)."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)
    return out if out.ndim else float(out)


def q_inv(p):
    """Inverse of q_func on (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("q_inv requires 0 < p < 1")
    out = _SQRT2 * erfcinv(2.0 * arr)
    return out if out.ndim else float(out)


def _density_terms(ch):
    """Joint mass and base-2 information density per (input, region) cell."""
    p_out = ch.prior @ ch.w
    joint = ch.prior[:, None] * ch.w
    mask = joint > 0.0
    dens = np.zeros_like(joint)
    dens[mask] = np.log2(ch.w[mask] / np.broadcast_to(p_out, ch.w.shape)[mask])
    return joint, dens


def mutual_information(ch) -> float:
    """I(P, W) in bits; zero-probability cells contribute nothing."""
    joint, dens = _density_terms(ch)
    return float(np.sum(joint * dens))


def info_variance(ch) -> float:
    """Unconditional information variance U(P, W) in bits squared."""
    joint, dens = _density_terms(ch)
    i = np.sum(joint * dens)
    return float(np.sum(joint * dens * dens) - i * i)


def t_stat(n: int, rate: float, i: float, u: float) -> float:
    """Normal-approximation statistic T for a length-n rate-``rate`` code.

    A zero variance makes the statistic infinite with the sign of the
    bracket (exactly zero bracket gives 0); tiny negative u from float
    cancellation is treated as zero.
    """
    if n < 1:
        raise ValueError("block length must be at least 1")
    if u < -1e-12:
        raise ValueError("information variance must be nonnegative")
    bracket = i - rate + math.log2(n) / (2.0 * n)
    if u <= 0.0:
        if bracket == 0.0:
            return 0.0
        return math.copysign(math.inf, bracket)
    return bracket * math.sqrt(n / u)


def eps_max(t_msb: float, t_lsb: float) -> float:
    """Worst-page-averaged decoding error probability from two T statistics."""
    return 0.5 * (q_func(t_msb) + q_func(t_lsb))


def achievable_rate(n: int, eps: float, i: float, u: float) -> float:
    """Rate achievable at error probability ``eps`` and block length ``n``."""
    if n < 1:
        raise ValueError("block length must be at least 1")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie strictly between 0 and 1")
    if u < -1e-12:
        raise ValueError("information variance must be nonnegative")
    u = max(u, 0.0)
    return i - math.sqrt(u / n) * q_inv(eps) + math.log2(n) / (2.0 * n)


@dataclass(frozen=True)
class FblMetrics:
    """Summary of one channel at one code operating point."""

    i_bits: float
    u_bits2: float
    t_stat: float
    eps_max: float


def channel_metrics(ch, n: int, rate: float) -> FblMetrics:
    """Metrics of a single (page) channel; eps here is the one-page Q(T)."""
    i = mutual_information(ch)
    u = info_variance(ch)
    t = t_stat(n, rate, i, u)
    return FblMetrics(i_bits=i, u_bits2=u, t_stat=t, eps_max=float(q_func(t)))
