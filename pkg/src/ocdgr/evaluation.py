"""Partition functions (exact and AIS), test log-probabilities, and k-NN scoring."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DomainError, EmptyBatchError, InfeasibleSizeError, ScheduleError
from .model import BinaryBatch, RbmParameters, free_energy, hidden_free_energy, sample_bernoulli, softplus

# Largest layer that exact enumeration will attempt (2^25 states).
EXACT_ENUM_LIMIT = 25
_ENUM_BLOCK_BITS = 16


@dataclass
class AisSchedule:
    """Annealing path: inverse temperatures from 0 to 1 plus a chain count."""

    betas: np.ndarray
    n_chains: int

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 2:
            raise ScheduleError("schedule needs at least two betas")
        if betas[0] != 0.0 or betas[-1] != 1.0:
            raise ScheduleError("schedule must start at 0.0 and end at 1.0")
        if np.any(np.diff(betas) < 0):
            raise ScheduleError("betas must be nondecreasing")
        if self.n_chains < 1:
            raise ScheduleError("n_chains must be >= 1")
        self.betas = betas

    @classmethod
    def uniform(cls, n_betas: int, n_chains: int) -> "AisSchedule":
        return cls(np.linspace(0.0, 1.0, n_betas), n_chains)

    @classmethod
    def paper_preset(cls) -> "AisSchedule":
        """The classic three-segment ladder used in published RBM evaluations:
        500 betas on [0, 0.5), 4000 on [0.5, 0.9), 10000 on [0.9, 1.0], 100 chains."""
        betas = np.concatenate([
            np.linspace(0.0, 0.5, 500, endpoint=False),
            np.linspace(0.5, 0.9, 4000, endpoint=False),
            np.linspace(0.9, 1.0, 10001),
        ])
        return cls(betas, 100)


def _enum_states(width: int):
    """Yield blocks of all binary vectors of the given width."""
    block_bits = min(width, _ENUM_BLOCK_BITS)
    block = 1 << block_bits
    low = ((np.arange(block)[:, None] >> np.arange(block_bits)) & 1).astype(np.float64)
    for high in range(1 << (width - block_bits)):
        high_bits = ((high >> np.arange(width - block_bits)) & 1).astype(np.float64)
        states = np.empty((block, width))
        states[:, :block_bits] = low
        states[:, block_bits:] = high_bits
        yield states


def exact_log_z(params: RbmParameters) -> float:
    """log Z by enumerating the smaller layer; exact up to float rounding."""
    if min(params.n_v, params.n_h) > EXACT_ENUM_LIMIT:
        raise InfeasibleSizeError(
            f"exact log Z needs min(n_v, n_h) <= {EXACT_ENUM_LIMIT}, "
            f"got {params.n_v} x {params.n_h}; use AIS instead"
        )
    if params.n_v <= params.n_h:
        width, fe = params.n_v, lambda s: free_energy(params, s)
    else:
        width, fe = params.n_h, lambda s: hidden_free_energy(params, s)
    block_sums = [logsumexp(-fe(states)) for states in _enum_states(width)]
    return float(logsumexp(block_sums))


def ais_log_z(params: RbmParameters, schedule: AisSchedule, rng: np.random.Generator):
    """Annealed importance sampling estimate of log Z.

    The base model keeps the target's visible biases but has zero weights
    and hidden biases, so its partition function is available in closed
    form. Intermediate unnormalized distributions scale the weight and
    hidden-bias terms by beta; one Gibbs sweep is applied per beta step.
    Returns (estimate, std), with std from the delta method across chains.
    """
    a, b, w = params.visible_bias, params.hidden_bias, params.weights
    n = schedule.n_chains
    betas = schedule.betas
    log_z_base = params.n_h * np.log(2.0) + softplus(a).sum()

    v = sample_bernoulli(np.broadcast_to(expit(a), (n, params.n_v)), rng).astype(np.float64)
    log_w = np.zeros(n)
    prev_beta = betas[0]
    act = v @ w.T + b  # hidden pre-activations at the current v
    for i, beta in enumerate(betas[1:], start=1):
        # log p*_beta(v) - log p*_prev(v); the visible-bias term cancels
        log_w += softplus(beta * act).sum(axis=1) - softplus(prev_beta * act).sum(axis=1)
        if i < betas.size - 1:
            # one alternating Gibbs sweep at the current inverse temperature
            h = sample_bernoulli(expit(beta * act), rng)
            v = sample_bernoulli(expit(beta * (h @ w) + a), rng).astype(np.float64)
            act = v @ w.T + b
        prev_beta = beta

    log_mean_w = logsumexp(log_w) - np.log(n)
    estimate = float(log_z_base + log_mean_w)
    if n == 1:
        return estimate, float("inf")
    u = np.exp(log_w - log_mean_w)  # normalized weights, mean exactly 1
    std = float(u.std(ddof=1) / np.sqrt(n))
    return estimate, std


@dataclass
class EvaluationReport:
    """Log-probability summary of a test set under one model."""

    log_z: float
    log_z_std: float
    mean_log_prob: float
    per_class_mean: Dict[int, float]
    cross_class_std: float
    n_test: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "log_z": self.log_z,
            "log_z_std": self.log_z_std,
            "mean_log_prob": self.mean_log_prob,
            "per_class_mean": {str(k): v for k, v in self.per_class_mean.items()},
            "cross_class_std": self.cross_class_std,
            "n_test": self.n_test,
        }
        d.update(self.extra)
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def test_log_prob_report(params: RbmParameters, test: BinaryBatch, log_z: float,
                         log_z_std: float = 0.0) -> EvaluationReport:
    """Per-row log p(v) = -F(v) - log Z, averaged overall and per class.

    cross_class_std is the population standard deviation of the per-class
    means; it is NaN when the test set carries no labels.
    """
    if len(test) == 0:
        raise EmptyBatchError("test set is empty")
    log_probs = -free_energy(params, test.rows.astype(np.float64)) - log_z
    per_class: Dict[int, float] = {}
    if test.labels is not None:
        for c in np.unique(test.labels):
            per_class[int(c)] = float(log_probs[test.labels == c].mean())
    cross = float(np.std(list(per_class.values()))) if per_class else float("nan")
    return EvaluationReport(
        log_z=float(log_z),
        log_z_std=float(log_z_std),
        mean_log_prob=float(log_probs.mean()),
        per_class_mean=per_class,
        cross_class_std=cross,
        n_test=len(test),
    )


def _hamming_distances(queries: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    q = queries.astype(np.int32)
    p = prototypes.astype(np.int32)
    # |q xor p| = |q| + |p| - 2 q.p for binary vectors
    return q.sum(axis=1)[:, None] + p.sum(axis=1)[None, :] - 2 * (q @ p.T)


def knn_classify(prototypes: BinaryBatch, queries: BinaryBatch, k: int) -> np.ndarray:
    """Hamming-distance k-NN with majority vote.

    Vote ties go to the tied class with the smallest mean distance among
    its neighbors, then to the lowest class id.
    """
    if len(prototypes) == 0:
        raise EmptyBatchError("prototype set is empty")
    if prototypes.labels is None:
        raise DomainError("prototypes must be labeled")
    if not 1 <= k <= len(prototypes):
        raise DomainError(f"k must be in [1, {len(prototypes)}]")
    dists = _hamming_distances(queries.rows, prototypes.rows)
    # stable sort keeps results deterministic under distance ties
    nearest = np.argsort(dists, axis=1, kind="stable")[:, :k]
    out = np.empty(len(queries), dtype=np.int64)
    for qi in range(len(queries)):
        idx = nearest[qi]
        labels = prototypes.labels[idx]
        d = dists[qi, idx]
        classes, counts = np.unique(labels, return_counts=True)
        tied = classes[counts == counts.max()]
        if tied.size == 1:
            out[qi] = tied[0]
            continue
        mean_d = np.array([d[labels == c].mean() for c in tied])
        best = tied[mean_d == mean_d.min()]
        out[qi] = best.min()
    return out


def class_histogram(generated: BinaryBatch, prototypes: BinaryBatch, k: int) -> Dict[int, int]:
    """Counts of k-NN class assignments over a batch of generated samples."""
    if len(generated) == 0:
        raise EmptyBatchError("no generated samples to classify")
    labels = knn_classify(prototypes, generated, k)
    values, counts = np.unique(labels, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}
