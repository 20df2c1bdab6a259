"""Monte-Carlo experiment drivers.

Three entry points, each sweeping a grid of wear/retention conditions:

* run_fer: frame error rate of both logical pages under soft decoding,
  with thresholds chosen by any supported source.
* run_ccr: channel capacity region style summary, reporting the
  finite-blocklength achievable rate at each condition.
* run_pipeline: read-retry controller simulation; failed first reads
  trigger a network re-estimate of the thresholds and one retry.

All randomness is keyed by (seed, point, frame) so any row of a sweep
can be reproduced in isolation and runs are byte-identical across
machines.  Output CSVs carry no timestamps for the same reason.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .channel import Condition, FlashParams, sample_wordline, state_models
from .fbl import achievable_rate, mutual_information, info_variance
from .ldpc import LdpcCode, PRESETS, build_code, encode, sp_decode
from .mlp import MlpModel, forward, histogram_features, load_model
from .optimizer import CisConfig, cis_optimize, mmi_optimize
from .quantizer import (GRAY, LlrTable, ThresholdSet, hard_thresholds,
                        llr_table, page_subchannel, quantize,
                        transition_matrix)

SOURCES = ("hard", "mmi", "cis", "cis-t0", "dnn", "file")


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared knobs for the sweep drivers."""

    code: str = "2k-qc"
    source: str = "cis"
    j_levels: int = 6
    pe_list: tuple = (15000.0,)
    t_list: tuple = (0.0,)
    frames: int = 2000
    i_max: int = 25
    seed: int = 0
    code_seed: int = 0
    max_frame_errors: int = 100
    rate_eps: float = 1e-4
    refresh_interval: int = 1000
    thresholds_file: str | None = None
    model_file: str | None = None
    out: str | None = None
    code_list: tuple = ()
    j_list: tuple = ()
    params: FlashParams = field(default_factory=FlashParams)
    cis: CisConfig = field(default_factory=CisConfig)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown threshold source {self.source!r}")
        if self.frames < 1 or self.i_max < 1 or self.max_frame_errors < 1:
            raise ValueError("frames, i_max, and max_frame_errors must be positive")
        if not self.pe_list or not self.t_list:
            raise ValueError("pe_list and t_list must be nonempty")
        if not 0 < self.rate_eps < 1:
            raise ValueError("rate_eps must lie in (0, 1)")
        if self.refresh_interval < 0:
            raise ValueError("refresh_interval must be >= 0 (0 disables)")
        if self.cis.j_levels != self.j_levels:
            object.__setattr__(self, "cis", replace(self.cis, j_levels=self.j_levels))


@dataclass(frozen=True)
class PipelineStats:
    """Per-condition controller tallies."""

    frames: int
    first_pass_failures: int
    dnn_invocations: int
    bad_blocks: int

    def __post_init__(self):
        if not 0 <= self.bad_blocks <= self.first_pass_failures <= self.frames:
            raise ValueError("inconsistent tallies")

    @property
    def first_pass_fer(self) -> float:
        return self.first_pass_failures / self.frames

    @property
    def final_fer(self) -> float:
        return self.bad_blocks / self.frames


def cp_interval(errors: int, trials: int, conf: float = 0.95):
    """Clopper-Pearson binomial confidence interval for an error count."""
    if not 0 <= errors <= trials or trials < 1:
        raise ValueError("need 0 <= errors <= trials with trials >= 1")
    alpha = 1.0 - conf
    lo = 0.0 if errors == 0 else float(stats.beta.ppf(alpha / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(stats.beta.isf(alpha / 2, errors + 1, trials - errors))
    return lo, hi


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def _repair_increasing(values: np.ndarray) -> np.ndarray:
    """Force a strictly increasing positive sequence (defensive nudge)."""
    out = np.sort(np.asarray(values, dtype=float))
    floor = 1e-6
    for i in range(out.size):
        if out[i] <= floor:
            out[i] = floor + 1e-9
        floor = out[i]
    return out


def predict_thresholds(model: MlpModel, features) -> ThresholdSet:
    """Network output as a usable threshold set."""
    return ThresholdSet(tuple(_repair_increasing(forward(model, features))))


def resolve_thresholds(cfg: ExperimentConfig, cond: Condition, n: int, rate: float,
                       model: MlpModel | None = None,
                       features=None) -> ThresholdSet:
    """Thresholds for one sweep point according to cfg.source.

    The "hard" source always yields the three pairwise-crossing levels
    regardless of cfg.j_levels.  The "dnn" source featurizes `features`
    (readback voltages are not available here, so callers supply the
    histogram) through `model`.
    """
    models = state_models(cond, cfg.params)
    if cfg.source == "hard":
        return ThresholdSet(tuple(hard_thresholds(models)))
    if cfg.source == "mmi":
        return mmi_optimize(cond, cfg.params, cfg.cis, seed=cfg.seed)
    if cfg.source == "cis":
        return cis_optimize(cond, cfg.params, n, rate, cfg.cis, seed=cfg.seed)[0]
    if cfg.source == "cis-t0":
        ref = Condition(cond.n_pe, 0.0)
        return cis_optimize(ref, cfg.params, n, rate, cfg.cis, seed=cfg.seed)[0]
    if cfg.source == "file":
        if cfg.thresholds_file is None:
            raise ValueError("source 'file' needs thresholds_file")
        return ThresholdSet.from_file(cfg.thresholds_file)
    if model is None:
        raise ValueError("source 'dnn' needs a model")
    if features is None:
        raise ValueError("source 'dnn' needs a feature histogram")
    return predict_thresholds(model, features)


def _load_model_if_needed(cfg: ExperimentConfig, model):
    if model is not None:
        return model
    if cfg.model_file is not None:
        return load_model(cfg.model_file)
    return None


def _frame_rng(cfg: ExperimentConfig, point: int, frame: int):
    # Tagged streams: any frame of any sweep point reproduces in isolation.
    return np.random.default_rng((cfg.seed, 1, point, frame))


def _pilot_rng(cfg: ExperimentConfig, point: int):
    return np.random.default_rng((cfg.seed, 2, point))


def _simulate_block(code: LdpcCode, cond: Condition, params: FlashParams, rng):
    """Encode two fresh pages, program, and read back cell voltages."""
    info_m = rng.integers(0, 2, size=code.info_len, dtype=np.uint8)
    info_l = rng.integers(0, 2, size=code.info_len, dtype=np.uint8)
    code_m = encode(code, info_m)
    code_l = encode(code, info_l)
    states = GRAY.state_of(code_m, code_l)
    volts = sample_wordline(states, cond, params, rng)
    return code_m, code_l, volts


def _decode_block(code: LdpcCode, volts, d: ThresholdSet, table: LlrTable,
                  code_m, code_l, i_max: int):
    """Both pages through the soft decoder; True means block success."""
    regions = quantize(volts, d)
    llrs = table.llr[regions]
    bits_m, ok_m, _ = sp_decode(code, llrs[:, 0], i_max=i_max)
    if not (ok_m and np.array_equal(bits_m, code_m)):
        return False
    bits_l, ok_l, _ = sp_decode(code, llrs[:, 1], i_max=i_max)
    return ok_l and np.array_equal(bits_l, code_l)


def run_fer(cfg: ExperimentConfig, model: MlpModel | None = None):
    """Frame error rate sweep; returns one row dict per condition.

    A frame counts as an error when either page fails to converge or
    decodes to the wrong codeword.  Points stop early once
    cfg.max_frame_errors errors are in, so deep-FER points stay cheap.
    For source "dnn" each point featurizes one pilot block read at the
    true condition with zero-retention reference thresholds, mirroring
    how the controller would estimate wear state online.
    """
    code = build_code(cfg.code, seed=cfg.code_seed)
    model = _load_model_if_needed(cfg, model)
    spec = code.spec
    rows = []
    point = 0
    ref_cache: dict = {}
    for n_pe in cfg.pe_list:
        for t_ret in cfg.t_list:
            cond = Condition(n_pe, t_ret)
            features = None
            if cfg.source == "dnn":
                if n_pe not in ref_cache:
                    ref_cache[n_pe] = cis_optimize(Condition(n_pe, 0.0), cfg.params,
                                                   spec.n, spec.rate, cfg.cis,
                                                   seed=cfg.seed)[0]
                pilot = _pilot_rng(cfg, point)
                states = pilot.integers(0, 4, size=spec.n)
                volts = sample_wordline(states, cond, cfg.params, pilot)
                features = histogram_features(volts, ref_cache[n_pe])
            d = resolve_thresholds(cfg, cond, spec.n, spec.rate, model, features)
            table = llr_table(state_models(cond, cfg.params), d)
            errors = 0
            frames_run = 0
            for frame in range(cfg.frames):
                rng = _frame_rng(cfg, point, frame)
                code_m, code_l, volts = _simulate_block(code, cond, cfg.params, rng)
                ok = _decode_block(code, volts, d, table, code_m, code_l, cfg.i_max)
                frames_run += 1
                if not ok:
                    errors += 1
                    if errors >= cfg.max_frame_errors:
                        break
            rows.append({"source": cfg.source, "code": cfg.code,
                         "n_pe": float(n_pe), "t_ret": float(t_ret),
                         "frames": frames_run, "errors": errors,
                         "fer": errors / frames_run})
            point += 1
    if cfg.out:
        _write_csv(cfg.out,
                   ["source", "code", "n_pe", "t_ret", "frames", "errors", "fer"],
                   [(r["source"], r["code"], r["n_pe"], r["t_ret"],
                     r["frames"], r["errors"], r["fer"]) for r in rows])
    return rows


def run_ccr(cfg: ExperimentConfig):
    """Achievable-rate sweep over codes, quantizer sizes, and conditions.

    Thresholds are re-optimized (CIS) at every point; the reported rate
    is the two-page average of the finite-blocklength achievable rate at
    target error cfg.rate_eps.  No parity matrices are built; only the
    preset blocklength and rate enter the calculation.
    """
    codes = cfg.code_list or (cfg.code,)
    j_values = cfg.j_list or (cfg.j_levels,)
    rows = []
    for code_name in codes:
        spec = PRESETS[code_name]
        for j in j_values:
            cis_cfg = replace(cfg.cis, j_levels=j)
            for n_pe in cfg.pe_list:
                for t_ret in cfg.t_list:
                    cond = Condition(n_pe, t_ret)
                    d, _ = cis_optimize(cond, cfg.params, spec.n, spec.rate,
                                        cis_cfg, seed=cfg.seed)
                    models = state_models(cond, cfg.params)
                    ch4 = transition_matrix(models, d)
                    rates = []
                    for page in ("msb", "lsb"):
                        ch = page_subchannel(ch4, page=page)
                        i_bits = mutual_information(ch)
                        u_bits = info_variance(ch)
                        rates.append(achievable_rate(spec.n, cfg.rate_eps,
                                                     i_bits, u_bits))
                    rows.append({"code": code_name, "j_levels": j,
                                 "n_pe": float(n_pe), "t_ret": float(t_ret),
                                 "n": spec.n, "rate": np.mean(rates)})
    if cfg.out:
        _write_csv(cfg.out, ["code", "j_levels", "n_pe", "t_ret", "n", "rate"],
                   [(r["code"], r["j_levels"], r["n_pe"], r["t_ret"],
                     r["n"], float(r["rate"])) for r in rows])
    return rows


def run_pipeline(cfg: ExperimentConfig, model: MlpModel | None = None):
    """Read-retry controller: stale thresholds, retry via the network.

    Each point starts from thresholds chosen by cfg.source (the natural
    choice for a retention transient is "cis-t0": optimal for the wear
    level but blind to elapsed time).  Every block is read with the
    current thresholds first; on failure the block's own voltage
    histogram, taken against the zero-retention reference quantizer, is
    pushed through the network and the block is retried once with the
    predicted thresholds.  A block failing both reads is bad.  The
    retry thresholds are not kept: the persistent set only changes at
    the refresh cadence (every cfg.refresh_interval blocks, using the
    latest block histogram), matching a controller that batches
    calibration.  LLR tables always come from the true condition's
    state statistics evaluated at whichever thresholds are active.
    """
    code = build_code(cfg.code, seed=cfg.code_seed)
    model = _load_model_if_needed(cfg, model)
    if model is None:
        raise ValueError("run_pipeline needs a model (model or cfg.model_file)")
    spec = code.spec
    models_cache: dict = {}
    results = []
    point = 0
    for n_pe in cfg.pe_list:
        ref = cis_optimize(Condition(n_pe, 0.0), cfg.params, spec.n, spec.rate,
                           cfg.cis, seed=cfg.seed)[0]
        for t_ret in cfg.t_list:
            cond = Condition(n_pe, t_ret)
            cond_models = models_cache.setdefault(cond, state_models(cond, cfg.params))
            features = None
            if cfg.source == "dnn":
                pilot = _pilot_rng(cfg, point)
                states = pilot.integers(0, 4, size=spec.n)
                volts = sample_wordline(states, cond, cfg.params, pilot)
                features = histogram_features(volts, ref)
            current = resolve_thresholds(cfg, cond, spec.n, spec.rate, model, features)
            table = llr_table(cond_models, current)
            first_fail = 0
            invocations = 0
            bad = 0
            last_feats = None
            for frame in range(cfg.frames):
                if (cfg.refresh_interval and frame and last_feats is not None
                        and frame % cfg.refresh_interval == 0):
                    invocations += 1
                    current = predict_thresholds(model, last_feats)
                    table = llr_table(cond_models, current)
                rng = _frame_rng(cfg, point, frame)
                code_m, code_l, volts = _simulate_block(code, cond, cfg.params, rng)
                last_feats = histogram_features(volts, ref)
                if _decode_block(code, volts, current, table, code_m, code_l, cfg.i_max):
                    continue
                first_fail += 1
                invocations += 1
                retry = predict_thresholds(model, last_feats)
                retry_table = llr_table(cond_models, retry)
                if not _decode_block(code, volts, retry, retry_table,
                                     code_m, code_l, cfg.i_max):
                    bad += 1
            stats_row = PipelineStats(frames=cfg.frames, first_pass_failures=first_fail,
                                      dnn_invocations=invocations, bad_blocks=bad)
            results.append((cond, stats_row))
            point += 1
    if cfg.out:
        _write_csv(cfg.out,
                   ["n_pe", "t_ret", "frames", "first_pass_failures",
                    "dnn_invocations", "bad_blocks", "first_pass_fer", "final_fer"],
                   [(c.n_pe, c.t_ret, s.frames, s.first_pass_failures,
                     s.dnn_invocations, s.bad_blocks, s.first_pass_fer, s.final_fer)
                    for c, s in results])
    return results
