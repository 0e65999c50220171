"""Signed and non-negative distributions on finite index sets.

All types are frozen; their numeric payloads are read-only numpy arrays.
Logarithms are natural throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from scipy.special import rel_entr

from .errors import EmptySample, LabelMismatch

NORMALIZATION_TOL = 1e-9


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_labels(labels, size):
    labels = tuple(labels) if labels is not None else tuple(range(size))
    if len(labels) != size:
        raise LabelMismatch(f"{len(labels)} labels for {size} weights")
    if len(set(labels)) != size:
        raise ValueError("labels must be unique")
    return labels


def _normalized(values: np.ndarray, what: str) -> np.ndarray:
    total = values.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"{what} sum to {total!r}, not 1 (tolerance {NORMALIZATION_TOL})")
    if total != 1.0:
        values = values / total
    return values


@dataclass(frozen=True)
class SignedMeasure:
    """Real weights on a finite set of states, summing to one.

    Weights may be negative. Sums within ``1e-9`` of one are renormalized;
    anything further off is rejected.
    """

    labels: tuple
    weights: np.ndarray

    def __init__(self, weights: Sequence[float], labels: Sequence[Hashable] | None = None):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a non-empty finite sequence")
        if not np.any(w != 0):
            raise ValueError("at least one weight must be nonzero")
        w = _normalized(w, "weights")
        object.__setattr__(self, "labels", _check_labels(labels, w.size))
        object.__setattr__(self, "weights", _frozen(w))

    def __len__(self):
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, SignedMeasure):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.labels, self.weights.tobytes()))

    @property
    def is_classical(self) -> bool:
        return bool(np.all(self.weights >= 0))


@dataclass(frozen=True)
class ProbDist:
    """A non-negative probability vector with state labels."""

    labels: tuple
    probs: np.ndarray

    def __init__(self, probs: Sequence[float], labels: Sequence[Hashable] | None = None):
        p = np.asarray(probs, dtype=float).ravel()
        if p.size == 0 or not np.all(np.isfinite(p)):
            raise ValueError("probs must be a non-empty finite sequence")
        if np.any(p < 0):
            raise ValueError(f"negative probability {p.min()!r}")
        p = _normalized(p, "probabilities")
        object.__setattr__(self, "labels", _check_labels(labels, p.size))
        object.__setattr__(self, "probs", _frozen(p))

    def __len__(self):
        return self.probs.size

    def __eq__(self, other):
        if not isinstance(other, ProbDist):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((self.labels, self.probs.tobytes()))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


@dataclass(frozen=True)
class FrequencyDist:
    """Integer counts from ``n_samples`` draws, with derived frequencies."""

    counts: np.ndarray
    n_samples: int
    labels: tuple

    def __init__(self, counts: Sequence[int], labels: Sequence[Hashable] | None = None):
        c = np.asarray(counts)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.round(c)):
                raise ValueError("counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        n = int(c.sum())
        if n == 0:
            raise EmptySample("no samples: counts sum to zero")
        object.__setattr__(self, "counts", _frozen(c, dtype=np.int64))
        object.__setattr__(self, "n_samples", n)
        object.__setattr__(self, "labels", _check_labels(labels, c.size))

    def __len__(self):
        return self.counts.size

    def __eq__(self, other):
        if not isinstance(other, FrequencyDist):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash((self.labels, self.counts.tobytes()))

    @property
    def probs(self) -> np.ndarray:
        return _frozen(self.counts / self.n_samples)

    def as_dist(self) -> ProbDist:
        return ProbDist(self.counts / self.n_samples, self.labels)


def _pair(a, b, what="distributions"):
    """Extract aligned float arrays from two distribution-like inputs."""
    la = getattr(a, "labels", None)
    lb = getattr(b, "labels", None)
    if la is not None and lb is not None and la != lb:
        raise LabelMismatch(f"{what} are defined on different label sets")
    x = np.asarray(getattr(a, "probs", a), dtype=float)
    y = np.asarray(getattr(b, "probs", b), dtype=float)
    if x.shape != y.shape:
        raise LabelMismatch(f"{what} have shapes {x.shape} and {y.shape}")
    return x, y


def kl_divergence(q, p) -> float:
    """Relative entropy D(q || p) in nats.

    Accepts `ProbDist` instances or plain arrays. Uses 0 log(0/x) = 0 and
    returns ``inf`` when q puts mass where p has none.
    """
    x, y = _pair(q, p)
    # rel_entr already implements both conventions elementwise
    terms = rel_entr(x, y)
    total = float(terms.sum())
    return max(total, 0.0) if np.isfinite(total) else float("inf")


def total_variation_weight(lam: SignedMeasure) -> float:
    """Sum of absolute weights; 1 exactly when no weight is negative."""
    w = getattr(lam, "weights", lam)
    w = np.asarray(w, dtype=float)
    if np.all(w >= 0):
        return 1.0
    return float(np.abs(w).sum())


def l1_distance(a, b) -> float:
    x, y = _pair(a, b)
    return float(np.abs(x - y).sum())


def empirical_from_counts(counts: Sequence[int], labels=None) -> FrequencyDist:
    return FrequencyDist(counts, labels)
