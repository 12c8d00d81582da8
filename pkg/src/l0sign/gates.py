"""Hard concrete gates: stretched, clamped binary concrete variables.

A gate turns a learned location `log_alpha` into an edge weight in [0, 1].
During training uniform noise u is pushed through a sigmoid at temperature
`temperature`, stretched to (stretch_low, stretch_high), and clamped, which
leaves point mass at exactly 0 and 1 while staying differentiable in
between. At evaluation time the noise-free estimator
clamp(sigmoid(log_alpha) * (high - low) + low, 0, 1) is used. The expected
L0 cost of a gate has the closed form
P(gate > 0) = sigmoid(log_alpha - temperature * log(-low / high)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc

NOISE_EPS = 1e-8  # uniform draws are clamped to [NOISE_EPS, 1 - NOISE_EPS]


@dataclass(frozen=True)
class GateConfig:
    temperature: float = 2.0 / 3.0
    stretch_low: float = -0.1
    stretch_high: float = 1.1

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if not (self.stretch_low < 0.0 < 1.0 < self.stretch_high):
            raise ValueError(
                "stretch interval must satisfy low < 0 < 1 < high, got "
                f"({self.stretch_low}, {self.stretch_high})"
            )

    @property
    def l0_shift(self) -> float:
        """temperature * log(-low / high); open_probability(x) = sigmoid(x - shift)."""
        return self.temperature * math.log(-self.stretch_low / self.stretch_high)


DEFAULT_GATE = GateConfig()


@dataclass(frozen=True)
class GateSample:
    """One stochastic gate draw: clamped value, pre-clamp value, and the noise used."""

    value: float
    pre_clamp: float
    noise: float


@dataclass(frozen=True)
class GateBatch:
    """Vectorized gate draws for one instance's pair slots."""

    value: np.ndarray
    pre_clamp: np.ndarray
    noise: np.ndarray | None  # None for the deterministic estimator


def sample_array(log_alpha: np.ndarray, u: np.ndarray, config: GateConfig = DEFAULT_GATE) -> GateBatch:
    log_alpha = np.asarray(log_alpha, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != log_alpha.shape:
        raise nc.ShapeError(f"noise shape {u.shape} does not match log_alpha {log_alpha.shape}")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("gate noise must lie strictly inside (0, 1)")
    s = nc.sigmoid((np.log(u) - np.log1p(-u) + log_alpha) / config.temperature)
    pre = s * (config.stretch_high - config.stretch_low) + config.stretch_low
    return GateBatch(value=np.clip(pre, 0.0, 1.0), pre_clamp=pre, noise=u)


def sample(log_alpha: float, u: float, config: GateConfig = DEFAULT_GATE) -> GateSample:
    """Draw one gate value from its hard concrete distribution at noise u."""
    batch = sample_array(np.asarray([log_alpha]), np.asarray([u]), config)
    return GateSample(
        value=float(batch.value[0]), pre_clamp=float(batch.pre_clamp[0]), noise=float(u)
    )


def eval_deterministic(log_alpha, config: GateConfig = DEFAULT_GATE):
    """Noise-free gate estimate; scalar in, float out; array in, array out."""
    la = np.asarray(log_alpha, dtype=np.float64)
    pre = nc.sigmoid(la) * (config.stretch_high - config.stretch_low) + config.stretch_low
    out = np.clip(pre, 0.0, 1.0)
    return float(out) if np.isscalar(log_alpha) or la.ndim == 0 else out


def deterministic_batch(log_alpha: np.ndarray, config: GateConfig = DEFAULT_GATE) -> GateBatch:
    la = np.asarray(log_alpha, dtype=np.float64)
    pre = nc.sigmoid(la) * (config.stretch_high - config.stretch_low) + config.stretch_low
    return GateBatch(value=np.clip(pre, 0.0, 1.0), pre_clamp=pre, noise=None)


def binary_batch(log_alpha: np.ndarray, config: GateConfig = DEFAULT_GATE) -> GateBatch:
    """Hard 0/1 gates: 1.0 exactly where the deterministic gate is open.

    Evaluation-only alternative to the graded deterministic gate; the step
    has no useful gradient, so training never uses it.
    """
    la = np.asarray(log_alpha, dtype=np.float64)
    pre = nc.sigmoid(la) * (config.stretch_high - config.stretch_low) + config.stretch_low
    return GateBatch(value=(pre > 0.0).astype(np.float64), pre_clamp=pre, noise=None)


def edge_exists(log_alpha, config: GateConfig = DEFAULT_GATE):
    """The existence predicate: a strictly positive deterministic gate."""
    out = np.asarray(eval_deterministic(log_alpha, config)) > 0.0
    return bool(out) if out.ndim == 0 else out


def open_probability(log_alpha, config: GateConfig = DEFAULT_GATE):
    """P(stochastic gate > 0), the per-gate expected L0 cost."""
    la = np.asarray(log_alpha, dtype=np.float64)
    out = nc.sigmoid(la - config.l0_shift)
    return float(out) if np.isscalar(log_alpha) or la.ndim == 0 else out


def open_probability_grad(log_alpha, config: GateConfig = DEFAULT_GATE):
    """d open_probability / d log_alpha = p (1 - p)."""
    p = np.asarray(open_probability(log_alpha, config))
    out = p * (1.0 - p)
    return float(out) if out.ndim == 0 else out


def grad_log_alpha(drawn: GateSample | GateBatch, config: GateConfig = DEFAULT_GATE):
    """d gate_value / d log_alpha at the drawn noise; 0 where the clamp is active."""
    pre = np.asarray(drawn.pre_clamp, dtype=np.float64)
    span = config.stretch_high - config.stretch_low
    s = (pre - config.stretch_low) / span
    inside = (pre > 0.0) & (pre < 1.0)
    grad = np.where(inside, span * s * (1.0 - s) / config.temperature, 0.0)
    if isinstance(drawn, GateSample):
        return float(grad)
    return grad


def deterministic_grad_log_alpha(log_alpha, config: GateConfig = DEFAULT_GATE):
    """d eval_deterministic / d log_alpha; 0 where the clamp is active."""
    la = np.asarray(log_alpha, dtype=np.float64)
    s = nc.sigmoid(la)
    span = config.stretch_high - config.stretch_low
    pre = s * span + config.stretch_low
    inside = (pre > 0.0) & (pre < 1.0)
    out = np.where(inside, span * s * (1.0 - s), 0.0)
    return float(out) if out.ndim == 0 else out


class NoiseStream:
    """Counter-based uniform noise keyed by (seed, epoch, sample, pair).

    Pair p of sample n in epoch t always sees the same u no matter how the
    batch is composed or in which order samples are visited, so training
    runs and gradient checks are bit-reproducible. Draws are clamped to
    [NOISE_EPS, 1 - NOISE_EPS].
    """

    def __init__(self, seed: int) -> None:
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)

    def pair_uniforms(self, epoch: int, sample_index: int, count: int) -> np.ndarray:
        if epoch < 0 or sample_index < 0 or count < 0:
            raise ValueError("epoch, sample_index, and count must be non-negative")
        key = np.array([self.seed, epoch], dtype=np.uint64)
        counter = np.array([0, sample_index, 0, 0], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
        u = gen.random(count)
        return np.clip(u, NOISE_EPS, 1.0 - NOISE_EPS)
