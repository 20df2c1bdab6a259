"""Histogram-to-thresholds regression with a small dense network.

The controller counts how many readback voltages fall into each region
of a fixed reference quantizer; those J+1 fractions are the only input.
A fully connected net (logistic activations throughout, including the
output layer) regresses the J optimized read thresholds, normalized by a
fixed voltage scale so targets fit the logistic range.  Region
occupancies move by only a few parts per thousand across operating
conditions, so inputs are standardized per feature with statistics
recorded on the model at training time.  Training is plain minibatch
Adam on the mean-squared error, optionally with cosine learning-rate
decay, implemented directly on numpy arrays; no autograd framework is
involved.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import Condition, FlashParams, sample_wordline, N_STATES
from .optimizer import CisConfig, cis_optimize
from .quantizer import ThresholdSet, quantize

THRESHOLD_SCALE = 6.0  # volts; labels are divided by this for training
DEFAULT_HIDDEN = (512, 256, 128)

_MODEL_MAGIC = b"FOPTMLP\x00"
_MODEL_VERSION = 2


@dataclass
class MlpModel:
    """Dense network parameters; weights[i] has shape (dims[i], dims[i+1]).

    Inputs are standardized before the first layer, (x - x_shift) / x_scale;
    identity by default and fitted to the dataset by train().
    """

    dims: tuple
    weights: list
    biases: list
    scale: float = THRESHOLD_SCALE
    x_shift: np.ndarray = None
    x_scale: np.ndarray = None

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ValueError("need at least input and output layers")
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.dims) - 1:
            raise ValueError("parameter count does not match layer count")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i], self.dims[i + 1]) or b.shape != (self.dims[i + 1],):
                raise ValueError(f"layer {i} shape mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} contains non-finite parameters")
        if self.x_shift is None:
            self.x_shift = np.zeros(self.dims[0])
        if self.x_scale is None:
            self.x_scale = np.ones(self.dims[0])
        self.x_shift = np.asarray(self.x_shift, dtype=float)
        self.x_scale = np.asarray(self.x_scale, dtype=float)
        if self.x_shift.shape != (self.dims[0],) or self.x_scale.shape != (self.dims[0],):
            raise ValueError("input standardization shape mismatch")
        if not (np.all(np.isfinite(self.x_shift)) and np.all(np.isfinite(self.x_scale))):
            raise ValueError("input standardization contains non-finite values")
        if np.any(self.x_scale <= 0.0):
            raise ValueError("x_scale entries must be positive")

    @property
    def n_inputs(self) -> int:
        return self.dims[0]

    @property
    def n_outputs(self) -> int:
        return self.dims[-1]


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer recipe; defaults are the full-scale settings."""

    lr: float = 1e-5
    epochs: int = 100_000
    batch: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_final: float = 0.0  # >0 enables cosine decay from lr down to this

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch < 1:
            raise ValueError("lr, epochs, and batch must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not 0.0 <= self.lr_final <= self.lr:
            raise ValueError("lr_final must lie in [0, lr]")


@dataclass(frozen=True)
class Sample:
    """One training pair: histogram fractions and normalized thresholds."""

    features: tuple
    label: tuple

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        y = np.asarray(self.label, dtype=float)
        if abs(f.sum() - 1.0) > 1e-9:
            raise ValueError("features must sum to 1")
        if np.any(y <= 0.0) or np.any(y >= 1.0) or not np.all(np.diff(y) > 0):
            raise ValueError("labels must be strictly increasing within (0, 1)")
        object.__setattr__(self, "features", tuple(float(v) for v in f))
        object.__setattr__(self, "label", tuple(float(v) for v in y))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def xavier_model(dims, seed: int = 0, scale: float = THRESHOLD_SCALE) -> MlpModel:
    """Uniform Xavier-initialized model with zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for nin, nout in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (nin + nout))
        weights.append(rng.uniform(-limit, limit, size=(nin, nout)))
        biases.append(np.zeros(nout))
    return MlpModel(dims=tuple(dims), weights=weights, biases=biases, scale=scale)


def default_model(j_levels: int = 6, seed: int = 0) -> MlpModel:
    dims = (j_levels + 1, *DEFAULT_HIDDEN, j_levels)
    return xavier_model(dims, seed=seed)


def _forward_pass(model: MlpModel, x: np.ndarray):
    """All layer activations for a batch; x has shape (B, n_inputs)."""
    acts = [(x - model.x_shift) / model.x_scale]
    for w, b in zip(model.weights, model.biases):
        acts.append(_sigmoid(acts[-1] @ w + b))
    return acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Thresholds (volts, ascending) predicted from one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_inputs,):
        raise ValueError(f"expected {model.n_inputs} features, got {x.shape}")
    y = _forward_pass(model, x[None, :])[-1][0]
    return np.sort(y) * model.scale


def mse_loss(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """Per-output mean squared error averaged over the batch."""
    pred = _forward_pass(model, x)[-1]
    return float(np.mean((y - pred) ** 2))


def backprop(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Loss and parameter gradients for one batch."""
    acts = _forward_pass(model, x)
    pred = acts[-1]
    batch = x.shape[0]
    loss = float(np.mean((y - pred) ** 2))
    # d loss / d pred for loss summed as mean over batch and outputs
    delta = (2.0 / (batch * model.n_outputs)) * (pred - y)
    grads_w, grads_b = [], []
    for layer in range(len(model.weights) - 1, -1, -1):
        a_out = acts[layer + 1]
        delta = delta * a_out * (1.0 - a_out)
        grads_w.append(acts[layer].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if layer:
            delta = delta @ model.weights[layer].T
    return loss, grads_w[::-1], grads_b[::-1]


def train(dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0,
          dims=None, scale: float = THRESHOLD_SCALE):
    """Train a fresh model on Samples; returns (model, per-epoch loss)."""
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    x = np.array([s.features for s in dataset])
    y = np.array([s.label for s in dataset])
    if dims is None:
        dims = (x.shape[1], *DEFAULT_HIDDEN, y.shape[1])
    model = xavier_model(dims, seed=seed, scale=scale)
    model.x_shift = x.mean(axis=0)
    sd = x.std(axis=0)
    model.x_scale = np.where(sd > 0.0, sd, 1.0)
    rng = np.random.default_rng((seed, 1))
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    total = cfg.epochs * ((len(dataset) + cfg.batch - 1) // cfg.batch)
    step = 0
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for lo in range(0, len(dataset), cfg.batch):
            sel = order[lo:lo + cfg.batch]
            loss, gw, gb = backprop(model, x[sel], y[sel])
            epoch_losses.append(loss)
            if cfg.lr_final > 0.0:
                frac = 0.5 * (1.0 + np.cos(np.pi * step / total))
                lr = cfg.lr_final + (cfg.lr - cfg.lr_final) * frac
            else:
                lr = cfg.lr
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for i in range(len(model.weights)):
                for m, v, g, p in ((m_w[i], v_w[i], gw[i], model.weights[i]),
                                   (m_b[i], v_b[i], gb[i], model.biases[i])):
                    m *= cfg.beta1
                    m += (1.0 - cfg.beta1) * g
                    v *= cfg.beta2
                    v += (1.0 - cfg.beta2) * g * g
                    p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        losses.append(float(np.mean(epoch_losses)))
    return model, losses


def adam_step_inplace(model: MlpModel, grads_w, grads_b, state, cfg: TrainConfig):
    """Single exposed Adam update (used by tests); state dict is mutated."""
    if not state:
        state.update(step=0,
                     m_w=[np.zeros_like(w) for w in model.weights],
                     v_w=[np.zeros_like(w) for w in model.weights],
                     m_b=[np.zeros_like(b) for b in model.biases],
                     v_b=[np.zeros_like(b) for b in model.biases])
    state["step"] += 1
    t = state["step"]
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for i in range(len(model.weights)):
        for m, v, g, p in ((state["m_w"][i], state["v_w"][i], grads_w[i], model.weights[i]),
                           (state["m_b"][i], state["v_b"][i], grads_b[i], model.biases[i])):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


# -- features and data generation --------------------------------------------

def histogram_features(voltages, d: ThresholdSet) -> np.ndarray:
    """Fraction of readings per region of the reference quantizer."""
    voltages = np.asarray(voltages, dtype=float)
    if voltages.size == 0:
        raise ValueError("voltage list must be nonempty")
    regions = quantize(voltages, d)
    counts = np.bincount(regions, minlength=d.j_levels + 1)
    return counts / voltages.size


@dataclass(frozen=True)
class GenConfig:
    """Dataset generation settings (desk-scale defaults)."""

    count: int = 2000
    block_n: int = 2624          # code length the labels optimize for
    rate: float = 0.9            # and its rate
    cis: CisConfig = field(default_factory=CisConfig)
    scale: float = THRESHOLD_SCALE

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be positive")


def reference_thresholds(n_pe: float, params: FlashParams, cfg: GenConfig) -> ThresholdSet:
    """Featurization reference: thresholds optimized at zero retention."""
    d, _ = cis_optimize(Condition(n_pe, 0.0), params, cfg.block_n, cfg.rate,
                        cfg.cis, seed=0)
    return d


def _draw_retention(rng, t_range) -> float:
    lo, hi = t_range
    if not 0 <= lo < hi:
        raise ValueError("t_range must satisfy 0 <= lo < hi")
    return float(rng.uniform(lo, hi))


def gen_training_data(params: FlashParams, pe_set, t_range, cells: int,
                      cfg: GenConfig = GenConfig(), seed: int = 0):
    """Seeded dataset: histogram features against CIS-optimal labels.

    Cycling counts are drawn uniformly from pe_set and retention times
    log-uniformly (via log(1+T)) over t_range, so early retention is well
    represented.  A sample whose CIS labels fall outside (0, scale) or
    fail to order strictly is skipped with a warning.
    """
    pe_set = list(pe_set)
    if not pe_set:
        raise ValueError("pe_set must be nonempty")
    if cells < 1:
        raise ValueError("cells must be positive")
    refs = {pe: reference_thresholds(pe, params, cfg) for pe in pe_set}
    children = np.random.SeedSequence(seed).spawn(cfg.count)
    samples = []
    for child in children:
        rng = np.random.default_rng(child)
        n_pe = pe_set[rng.integers(len(pe_set))]
        cond = Condition(n_pe, _draw_retention(rng, t_range))
        states = rng.integers(0, N_STATES, size=cells)
        volts = sample_wordline(states, cond, params, rng)
        feats = histogram_features(volts, refs[n_pe])
        d_opt, _ = cis_optimize(cond, params, cfg.block_n, cfg.rate, cfg.cis, seed=0)
        label = d_opt.as_array() / cfg.scale
        if np.any(label <= 0) or np.any(label >= 1) or not np.all(np.diff(label) > 0):
            warnings.warn(f"skipping sample at {cond}: labels outside the unit range")
            continue
        samples.append(Sample(features=tuple(feats), label=tuple(label)))
    return samples


# -- serialization -----------------------------------------------------------

def save_model(model: MlpModel, path) -> None:
    """Packed little-endian format: header, dims, input stats, per-layer W and b."""
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<IId", _MODEL_VERSION, len(model.dims), model.scale))
        fh.write(struct.pack(f"<{len(model.dims)}I", *model.dims))
        fh.write(np.ascontiguousarray(model.x_shift, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.x_scale, dtype="<f8").tobytes())
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MODEL_MAGIC))
        if magic != _MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file")
        version, n_dims, scale = struct.unpack("<IId", fh.read(16))
        if version != _MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
        x_shift = np.frombuffer(fh.read(8 * dims[0]), dtype="<f8").copy()
        x_scale = np.frombuffer(fh.read(8 * dims[0]), dtype="<f8").copy()
        weights, biases = [], []
        for nin, nout in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(fh.read(8 * nin * nout), dtype="<f8").reshape(nin, nout)
            b = np.frombuffer(fh.read(8 * nout), dtype="<f8")
            weights.append(w.copy())
            biases.append(b.copy())
    return MlpModel(dims=dims, weights=weights, biases=biases, scale=scale,
                    x_shift=x_shift, x_scale=x_scale)


def save_dataset(samples, path) -> None:
    """One sample per line: features then labels, comma separated."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            vals = list(s.features) + list(s.label)
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")


def load_dataset(path, n_features: int):
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            vals = [float(tok) for tok in line.split(",")]
            if len(vals) <= n_features:
                raise ValueError(f"{path}:{ln}: expected features plus labels")
            samples.append(Sample(features=tuple(vals[:n_features]),
                                  label=tuple(vals[n_features:])))
    return samples
