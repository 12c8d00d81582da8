"""Feature-graph classifier with learned pairwise interaction gates.

Each instance is a graph whose nodes are its active feature indices; no
edges are given. For every unordered node pair (self-pairs included) an
edge MLP on the product of edge-side embeddings produces the gate location
log_alpha, a hard concrete gate turns it into an edge weight in [0, 1],
and a pair MLP on the product of value-scaled node embeddings produces an
interaction vector. Each node averages the gated interaction vectors of
its pairs with soft-degree normalization, is rescaled by its feature
value, read out through a weight vector, and the node readouts are
averaged into the raw score. The gradient pass mirrors this fixed shape
in reverse using the numcore rules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import gates, numcore as nc
from .data import Instance
from .gates import GateBatch, GateConfig

DEGREE_EPS = 1e-8  # soft-degree floor in the aggregation denominator

PARAM_ORDER = (
    "node_embed",
    "edge_embed",
    "edge_hidden_w",
    "edge_hidden_b",
    "edge_out_w",
    "edge_out_b",
    "pair_hidden_w",
    "pair_hidden_b",
    "pair_out_w",
    "pair_out_b",
    "readout",
)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    edge_dim: int = 8
    interaction_dim: int = 8
    hidden_dim: int = 32
    gate: GateConfig = field(default_factory=GateConfig)

    def __post_init__(self) -> None:
        for name in ("vocab_size", "edge_dim", "interaction_dim", "hidden_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def to_json_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "edge_dim": self.edge_dim,
            "interaction_dim": self.interaction_dim,
            "hidden_dim": self.hidden_dim,
            "gate": {
                "temperature": self.gate.temperature,
                "stretch_low": self.gate.stretch_low,
                "stretch_high": self.gate.stretch_high,
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        g = d["gate"]
        return cls(
            vocab_size=int(d["vocab_size"]),
            edge_dim=int(d["edge_dim"]),
            interaction_dim=int(d["interaction_dim"]),
            hidden_dim=int(d["hidden_dim"]),
            gate=GateConfig(
                temperature=float(g["temperature"]),
                stretch_low=float(g["stretch_low"]),
                stretch_high=float(g["stretch_high"]),
            ),
        )


class ModelParams:
    """Model configuration plus its named parameter store."""

    def __init__(self, config: ModelConfig, store: nc.ParamStore) -> None:
        got = tuple(store.names())
        if got != PARAM_ORDER:
            raise ValueError(f"parameter store order {got} does not match {PARAM_ORDER}")
        self.config = config
        self.store = store

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "ModelParams":
        """Training initialization.

        Embeddings start at a working scale (Normal(0, 0.3)) so interaction
        vectors and their loss gradients are non-negligible from the first
        batch. The gate MLP starts small (quarter-scale hidden layer,
        output weights in +-0.1) with its output bias at +2.5: every gate
        begins open and nearly identical, and the location of each gate is
        then moved by per-pair evidence rather than by the shared
        initialization noise of the MLP. With the adaptive optimizer's
        scale-free first steps, a conventional full-scale gate MLP lets the
        shared component of the gate locations crash below zero within an
        epoch or two, closing all gates before the interaction side has
        learned which ones are worth protecting.
        """
        rng = np.random.default_rng(seed)
        j, b, d, h = config.vocab_size, config.edge_dim, config.interaction_dim, config.hidden_dim

        def kaiming(shape: tuple[int, int]) -> np.ndarray:
            bound = np.sqrt(6.0 / shape[1])
            return rng.uniform(-bound, bound, size=shape)

        store = nc.ParamStore()
        store.add("node_embed", rng.normal(0.0, 0.3, size=(j, d)))
        store.add("edge_embed", rng.normal(0.0, 0.3, size=(j, b)))
        store.add("edge_hidden_w", 0.25 * kaiming((h, b)))
        store.add("edge_hidden_b", np.zeros(h))
        store.add("edge_out_w", rng.uniform(-0.1, 0.1, size=(1, h)))
        store.add("edge_out_b", np.asarray([2.5]))
        store.add("pair_hidden_w", kaiming((h, d)))
        store.add("pair_hidden_b", np.zeros(h))
        store.add("pair_out_w", kaiming((d, h)))
        store.add("pair_out_b", np.zeros(d))
        store.add("readout", kaiming((1, d))[0])
        return cls(config, store)

    @classmethod
    def random(cls, config: ModelConfig, seed: int, scale: float = 0.7) -> "ModelParams":
        """Every parameter ~ Normal(0, scale): a generic-position model for
        gradient checks and symmetry tests. The training init keeps
        embeddings small and biases zero, which parks every ReLU
        pre-activation within ~1e-4 of its kink; finite differences need to
        probe far from such boundaries."""
        rng = np.random.default_rng(seed)
        base = cls.init(config, seed)
        store = nc.ParamStore()
        for name in PARAM_ORDER:
            store.add(name, rng.normal(0.0, scale, size=base.value(name).shape))
        return cls(config, store)

    def clone(self) -> "ModelParams":
        return ModelParams(self.config, self.store.clone())

    def value(self, name: str) -> np.ndarray:
        return self.store.value(name)


@lru_cache(maxsize=256)
def pair_slots(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Slot index arrays (i, j) for all unordered pairs with i <= j, in
    lexicographic order; self-pairs included. k nodes give k(k+1)/2 slots."""
    pi, pj = np.triu_indices(k)
    pi.setflags(write=False)
    pj.setflags(write=False)
    return pi, pj


def pair_count(k: int) -> int:
    return k * (k + 1) // 2


def edges_for_instance(instance: Instance, edge_set: Iterable[tuple[int, int]]) -> np.ndarray:
    """Per-slot 0/1 gate values: slot (a, b) is 1 iff the unordered feature
    pair is in edge_set. Self edges must be listed explicitly as (i, i)."""
    normalized = {(min(i, j), max(i, j)) for i, j in edge_set}
    pi, pj = pair_slots(instance.n_nodes)
    ids = instance.node_array
    return np.asarray(
        [1.0 if (int(ids[a]), int(ids[b])) in normalized else 0.0 for a, b in zip(pi, pj)]
    )


def complete_edges(instance: Instance, include_self: bool = True) -> np.ndarray:
    pi, pj = pair_slots(instance.n_nodes)
    if include_self:
        return np.ones(pi.shape[0])
    return (pi != pj).astype(np.float64)


@dataclass
class Forward:
    """Every intermediate of one instance forward pass, kept for the
    reverse pass and for explanations."""

    instance: Instance
    mode: str  # "stochastic" | "deterministic" | "pinned"
    pair_i: np.ndarray
    pair_j: np.ndarray
    offdiag: np.ndarray
    edge_vecs: np.ndarray | None  # (k, edge_dim), None when pinned
    node_vecs: np.ndarray  # (k, d) value-scaled embeddings u_i
    edge_prod: np.ndarray | None
    edge_pre: np.ndarray | None
    edge_act: np.ndarray | None
    log_alpha: np.ndarray | None
    gate: GateBatch | None  # None when pinned
    edge_values: np.ndarray  # (P,) gate values actually used
    pair_prod: np.ndarray
    pair_pre: np.ndarray
    pair_act: np.ndarray
    interactions: np.ndarray  # (P, d) pair MLP outputs
    node_sum: np.ndarray  # (k, d) gated sums
    soft_degree: np.ndarray  # (k,)
    denom: np.ndarray  # (k,) max(soft_degree, DEGREE_EPS) or the override
    degree_overridden: bool
    node_update: np.ndarray  # (k, d) v'_i
    node_readout: np.ndarray  # (k,)
    score: float


def forward(
    instance: Instance,
    params: ModelParams,
    *,
    noise: np.ndarray | None = None,
    pinned_edges: np.ndarray | None = None,
    degree_override: np.ndarray | None = None,
    binary_gates: bool = False,
) -> Forward:
    """Run the fixed computation shape once.

    Gate source: `pinned_edges` fixes the per-slot gate values and skips the
    edge MLP entirely; otherwise gates come from the edge MLP, stochastic
    when `noise` (per-slot uniforms) is given, deterministic when not.
    `binary_gates` thresholds the deterministic gate to exact 0/1 values, an
    evaluation-only variant with no gradient path.
    """
    if binary_gates and noise is not None:
        raise ValueError("binary gates are an evaluation option; drop the noise argument")
    if binary_gates and pinned_edges is not None:
        raise ValueError("binary gates need predicted logits; got pinned edges")
    cfg = params.config
    ids = instance.node_array
    x = instance.value_array
    k = instance.n_nodes
    pi, pj = pair_slots(k)
    n_slots = pi.shape[0]
    offdiag = pi != pj

    node_vecs = x[:, None] * params.value("node_embed")[ids]

    if pinned_edges is not None:
        pinned = np.asarray(pinned_edges, dtype=np.float64)
        if pinned.shape != (n_slots,):
            raise nc.ShapeError(f"pinned edges shape {pinned.shape}, expected ({n_slots},)")
        mode = "pinned"
        edge_vecs = edge_prod = edge_pre = edge_act = log_alpha = None
        gate = None
        edge_values = pinned
    else:
        edge_vecs = params.value("edge_embed")[ids]
        edge_prod = nc.elementwise_product(edge_vecs[pi], edge_vecs[pj])
        edge_pre = nc.linear(params.value("edge_hidden_w"), edge_prod, params.value("edge_hidden_b"))
        edge_act = nc.relu(edge_pre)
        log_alpha = nc.linear(params.value("edge_out_w"), edge_act, params.value("edge_out_b"))[:, 0]
        if noise is not None:
            if np.shape(noise) != (n_slots,):
                raise nc.ShapeError(f"noise shape {np.shape(noise)}, expected ({n_slots},)")
            mode = "stochastic"
            gate = gates.sample_array(log_alpha, noise, cfg.gate)
        elif binary_gates:
            mode = "binary"
            gate = gates.binary_batch(log_alpha, cfg.gate)
        else:
            mode = "deterministic"
            gate = gates.deterministic_batch(log_alpha, cfg.gate)
        edge_values = gate.value

    pair_prod = nc.elementwise_product(node_vecs[pi], node_vecs[pj])
    pair_pre = nc.linear(params.value("pair_hidden_w"), pair_prod, params.value("pair_hidden_b"))
    pair_act = nc.relu(pair_pre)
    interactions = nc.linear(params.value("pair_out_w"), pair_act, params.value("pair_out_b"))

    gated = edge_values[:, None] * interactions
    node_sum = np.zeros((k, cfg.interaction_dim))
    np.add.at(node_sum, pi, gated)
    np.add.at(node_sum, pj[offdiag], gated[offdiag])
    soft_degree = np.zeros(k)
    np.add.at(soft_degree, pi, edge_values)
    np.add.at(soft_degree, pj[offdiag], edge_values[offdiag])

    if degree_override is not None:
        denom = np.asarray(degree_override, dtype=np.float64)
        if denom.shape != (k,):
            raise nc.ShapeError(f"degree override shape {denom.shape}, expected ({k},)")
        overridden = True
    else:
        denom = np.maximum(soft_degree, DEGREE_EPS)
        overridden = False

    node_update = node_sum / denom[:, None]
    scaled = x[:, None] * node_update
    node_readout = nc.linear(params.value("readout")[None, :], scaled, np.zeros(1))[:, 0]
    score = float(node_readout.mean())

    return Forward(
        instance=instance,
        mode=mode,
        pair_i=pi,
        pair_j=pj,
        offdiag=offdiag,
        edge_vecs=edge_vecs,
        node_vecs=node_vecs,
        edge_prod=edge_prod,
        edge_pre=edge_pre,
        edge_act=edge_act,
        log_alpha=log_alpha,
        gate=gate,
        edge_values=edge_values,
        pair_prod=pair_prod,
        pair_pre=pair_pre,
        pair_act=pair_act,
        interactions=interactions,
        node_sum=node_sum,
        soft_degree=soft_degree,
        denom=denom,
        degree_overridden=overridden,
        node_update=node_update,
        node_readout=node_readout,
        score=score,
    )


def backward(
    trace: Forward,
    params: ModelParams,
    d_score: float,
    *,
    d_interactions: np.ndarray | None = None,
    d_log_alpha: np.ndarray | None = None,
) -> None:
    """Accumulate gradients of (d_score * score + extras) into the store.

    `d_interactions` and `d_log_alpha` are direct penalty gradients applied
    at the interaction vectors and gate locations (already scaled by the
    caller). Pinned-edge traces leave the edge side untouched.
    """
    store = params.store
    inst = trace.instance
    ids = inst.node_array
    x = inst.value_array
    k = inst.n_nodes
    pi, pj, off = trace.pair_i, trace.pair_j, trace.offdiag

    # score = mean of node readouts; readout row r_i = readout . (x_i v'_i)
    g_node_readout = np.full(k, d_score / k)
    scaled = x[:, None] * trace.node_update
    g_w, g_scaled, _ = nc.linear_backward(
        params.value("readout")[None, :], scaled, g_node_readout[:, None]
    )
    store.accumulate("readout", g_w[0])
    g_node_update = x[:, None] * g_scaled

    # node_update = node_sum / denom
    g_node_sum = g_node_update / trace.denom[:, None]
    if trace.degree_overridden:
        g_soft_degree = np.zeros(k)
    else:
        g_denom = -(g_node_update * trace.node_sum).sum(axis=1) / trace.denom**2
        g_soft_degree = np.where(trace.soft_degree > DEGREE_EPS, g_denom, 0.0)

    # node_sum gathers gated interactions into both endpoint nodes
    g_gated = g_node_sum[pi] + np.where(off[:, None], g_node_sum[pj], 0.0)
    g_edge_values = (g_gated * trace.interactions).sum(axis=1)
    g_edge_values += g_soft_degree[pi] + np.where(off, g_soft_degree[pj], 0.0)
    g_interactions = trace.edge_values[:, None] * g_gated
    if d_interactions is not None:
        g_interactions = g_interactions + d_interactions

    # pair MLP
    g_w, g_pair_act, g_b = nc.linear_backward(
        params.value("pair_out_w"), trace.pair_act, g_interactions
    )
    store.accumulate("pair_out_w", g_w)
    store.accumulate("pair_out_b", g_b)
    g_pair_pre = nc.relu_backward(trace.pair_pre, g_pair_act)
    g_w, g_pair_prod, g_b = nc.linear_backward(
        params.value("pair_hidden_w"), trace.pair_prod, g_pair_pre
    )
    store.accumulate("pair_hidden_w", g_w)
    store.accumulate("pair_hidden_b", g_b)
    g_ui, g_uj = nc.elementwise_product_backward(
        trace.node_vecs[pi], trace.node_vecs[pj], g_pair_prod
    )
    g_node_vecs = np.zeros_like(trace.node_vecs)
    np.add.at(g_node_vecs, pi, g_ui)
    np.add.at(g_node_vecs, pj, g_uj)
    g_embed = np.zeros_like(store.value("node_embed"))
    np.add.at(g_embed, ids, x[:, None] * g_node_vecs)
    store.accumulate("node_embed", g_embed)

    # edge side (absent for pinned gates)
    if trace.mode == "pinned":
        if d_log_alpha is not None:
            raise ValueError("log_alpha gradient supplied for a pinned-edge trace")
        return
    if trace.mode == "binary":
        raise ValueError("binary-gate traces are evaluation-only; no gradient exists")
    if trace.mode == "stochastic":
        gate_grad = gates.grad_log_alpha(trace.gate, params.config.gate)
    else:
        gate_grad = gates.deterministic_grad_log_alpha(trace.log_alpha, params.config.gate)
    g_log_alpha = g_edge_values * gate_grad
    if d_log_alpha is not None:
        g_log_alpha = g_log_alpha + d_log_alpha

    g_w, g_edge_act, g_b = nc.linear_backward(
        params.value("edge_out_w"), trace.edge_act, g_log_alpha[:, None]
    )
    store.accumulate("edge_out_w", g_w)
    store.accumulate("edge_out_b", g_b)
    g_edge_pre = nc.relu_backward(trace.edge_pre, g_edge_act)
    g_w, g_edge_prod, g_b = nc.linear_backward(
        params.value("edge_hidden_w"), trace.edge_prod, g_edge_pre
    )
    store.accumulate("edge_hidden_w", g_w)
    store.accumulate("edge_hidden_b", g_b)
    g_vei, g_vej = nc.elementwise_product_backward(
        trace.edge_vecs[pi], trace.edge_vecs[pj], g_edge_prod
    )
    g_edge_vecs = np.zeros_like(trace.edge_vecs)
    np.add.at(g_edge_vecs, pi, g_vei)
    np.add.at(g_edge_vecs, pj, g_vej)
    g_table = np.zeros_like(store.value("edge_embed"))
    np.add.at(g_table, ids, g_edge_vecs)
    store.accumulate("edge_embed", g_table)


# ---------------------------------------------------------------------------
# Public prediction surface.

@dataclass(frozen=True)
class PairAnalysis:
    """One unordered feature pair of one instance: gate, interaction, and its
    additive share of the raw score."""

    i: int
    j: int
    gate: float
    log_alpha: float | None
    interaction: np.ndarray
    contribution: float


@dataclass(frozen=True)
class Prediction:
    score: float
    node_updates: np.ndarray  # (k, interaction_dim)
    pairs: tuple[PairAnalysis, ...]


def _contributions(trace: Forward, params: ModelParams) -> np.ndarray:
    """Additive per-slot shares: score == contributions.sum() exactly (the
    readout is linear and each slot enters both endpoint node averages)."""
    inst = trace.instance
    x = inst.value_array
    k = inst.n_nodes
    pi, pj, off = trace.pair_i, trace.pair_j, trace.offdiag
    weight_per_node = x / trace.denom
    slot_weight = weight_per_node[pi] + np.where(off, weight_per_node[pj], 0.0)
    readout_of_z = trace.interactions @ params.value("readout")
    return trace.edge_values * readout_of_z * slot_weight / k


def _prediction_from(trace: Forward, params: ModelParams) -> Prediction:
    ids = trace.instance.node_array
    contrib = _contributions(trace, params)
    pairs = tuple(
        PairAnalysis(
            i=int(ids[a]),
            j=int(ids[b]),
            gate=float(trace.edge_values[p]),
            log_alpha=None if trace.log_alpha is None else float(trace.log_alpha[p]),
            interaction=trace.interactions[p].copy(),
            contribution=float(contrib[p]),
        )
        for p, (a, b) in enumerate(zip(trace.pair_i, trace.pair_j))
    )
    return Prediction(score=trace.score, node_updates=trace.node_update.copy(), pairs=pairs)


def predict(
    instance: Instance,
    params: ModelParams,
    *,
    noise: np.ndarray | None = None,
    binary_gates: bool = False,
) -> Prediction:
    """Gated prediction; deterministic gates unless per-slot noise is given."""
    return _prediction_from(
        forward(instance, params, noise=noise, binary_gates=binary_gates), params
    )


def predict_fixed(
    instance: Instance,
    params: ModelParams,
    edges: np.ndarray | Iterable[tuple[int, int]],
) -> Prediction:
    """Prediction with gates pinned to explicit values: either a per-slot
    array or a set of unordered feature-id pairs (membership = gate 1)."""
    if isinstance(edges, np.ndarray):
        pinned = edges
    else:
        pinned = edges_for_instance(instance, edges)
    return _prediction_from(forward(instance, params, pinned_edges=pinned), params)


def score_only(
    instance: Instance,
    params: ModelParams,
    *,
    pinned_edges: np.ndarray | None = None,
    binary_gates: bool = False,
) -> float:
    """Raw score with deterministic (or pinned) gates, skipping analysis."""
    return forward(
        instance, params, pinned_edges=pinned_edges, binary_gates=binary_gates
    ).score


def edge_logit(i: int, j: int, params: ModelParams) -> float:
    """Gate location for the unordered feature pair (i, j); symmetric in its
    arguments because the pair enters as an elementwise product."""
    vocab = params.config.vocab_size
    if not (0 <= i < vocab and 0 <= j < vocab):
        raise ValueError(f"pair ({i}, {j}) outside vocabulary of {vocab}")
    table = params.value("edge_embed")
    prod = nc.elementwise_product(table[i], table[j])
    hidden = nc.relu(nc.linear(params.value("edge_hidden_w"), prod, params.value("edge_hidden_b")))
    return float(nc.linear(params.value("edge_out_w"), hidden, params.value("edge_out_b"))[0])


def interaction_vector(u_i: np.ndarray, u_j: np.ndarray, params: ModelParams) -> np.ndarray:
    """Pair MLP output for two value-scaled node vectors; symmetric."""
    prod = nc.elementwise_product(nc.as_vector(u_i), nc.as_vector(u_j))
    hidden = nc.relu(nc.linear(params.value("pair_hidden_w"), prod, params.value("pair_hidden_b")))
    return nc.linear(params.value("pair_out_w"), hidden, params.value("pair_out_b"))


def score_from_node_vectors(
    node_vectors: np.ndarray,
    values: np.ndarray,
    edge_values: np.ndarray,
    params: ModelParams,
    interaction_fn: Callable[[np.ndarray, np.ndarray, "ModelParams"], np.ndarray] | None = None,
) -> float:
    """Raw score from explicit value-scaled node vectors and pinned gates.

    The probe path: node vectors replace x_i * embed[id], gates are fixed,
    and `interaction_fn` (default: the pair MLP) maps each vector pair to
    its interaction vector.
    """
    fn = interaction_fn or interaction_vector
    vecs = np.asarray(node_vectors, dtype=np.float64)
    x = np.asarray(values, dtype=np.float64)
    k = vecs.shape[0]
    pi, pj = pair_slots(k)
    e = np.asarray(edge_values, dtype=np.float64)
    if e.shape != pi.shape:
        raise nc.ShapeError(f"edge values shape {e.shape}, expected {pi.shape}")
    d = params.config.interaction_dim
    node_sum = np.zeros((k, d))
    soft_degree = np.zeros(k)
    for p in range(pi.shape[0]):
        a, b = int(pi[p]), int(pj[p])
        z = fn(vecs[a], vecs[b], params)
        node_sum[a] += e[p] * z
        soft_degree[a] += e[p]
        if a != b:
            node_sum[b] += e[p] * z
            soft_degree[b] += e[p]
    denom = np.maximum(soft_degree, DEGREE_EPS)
    node_update = node_sum / denom[:, None]
    return float((x[:, None] * node_update @ params.value("readout")).mean())


def make_probe_grid(
    dim: int, n_points: int = 3, amplitude: float = 1.0, seed: int = 0
) -> list[np.ndarray]:
    """Random probe vectors for the additivity check."""
    rng = np.random.default_rng(seed)
    return [amplitude * rng.standard_normal(dim) for _ in range(n_points)]


def additivity_probe(
    instance: Instance,
    params: ModelParams,
    edge_values: np.ndarray,
    pair: tuple[int, int],
    probes_i: Sequence[np.ndarray],
    probes_j: Sequence[np.ndarray],
    interaction_fn: Callable[[np.ndarray, np.ndarray, "ModelParams"], np.ndarray] | None = None,
) -> float:
    """Max |mixed second difference| of the score over a probe grid.

    With gates fixed, D(a, b) = f(a, b) - f(a, b0) - f(a0, b) + f(a0, b0)
    where f scores the instance with node slots `pair` = (si, sj) carrying
    vectors (a, b) and (a0, b0) is the unperturbed reference. D vanishes
    identically iff the score is additive across the two nodes, i.e. iff
    their gate carries no interaction effect.
    """
    si, sj = pair
    if si == sj:
        raise ValueError("probe pair must name two distinct node slots")
    base = forward(instance, params, pinned_edges=np.asarray(edge_values, dtype=np.float64))
    vecs0 = base.node_vecs
    x = instance.value_array

    def f(a: np.ndarray, b: np.ndarray) -> float:
        vecs = vecs0.copy()
        vecs[si] = a
        vecs[sj] = b
        return score_from_node_vectors(vecs, x, edge_values, params, interaction_fn)

    ref_i, ref_j = vecs0[si], vecs0[sj]
    f_ref = f(ref_i, ref_j)
    f_a = {idx: f(a, ref_j) for idx, a in enumerate(probes_i)}
    f_b = {idx: f(ref_i, b) for idx, b in enumerate(probes_j)}
    worst = 0.0
    for ia, a in enumerate(probes_i):
        for jb, b in enumerate(probes_j):
            d = f(a, b) - f_a[ia] - f_b[jb] + f_ref
            worst = max(worst, abs(d))
    return worst


# ---------------------------------------------------------------------------
# Checkpoints: one JSON header line, then raw little-endian float64 blocks
# in PARAM_ORDER.

CHECKPOINT_FORMAT = "l0sign-checkpoint/1"


def save_checkpoint(path, params: ModelParams, seed: int, extra: dict | None = None) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "seed": int(seed),
        "model": params.config.to_json_dict(),
        "params": [
            {"name": name, "shape": list(params.value(name).shape)} for name in PARAM_ORDER
        ],
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name in PARAM_ORDER:
            fh.write(np.ascontiguousarray(params.value(name), dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unrecognized checkpoint format {header.get('format')!r}")
        config = ModelConfig.from_json_dict(header["model"])
        store = nc.ParamStore()
        for entry in header["params"]:
            shape = tuple(int(s) for s in entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            block = fh.read(count * 8)
            if len(block) != count * 8:
                raise ValueError(f"checkpoint truncated in parameter {entry['name']!r}")
            store.add(entry["name"], np.frombuffer(block, dtype="<f8").reshape(shape).copy())
    return ModelParams(config, store), header
