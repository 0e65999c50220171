"""Classical simulation of a signed measure by sampling a doubled phase space.

The doubled space is laid out as ``[plus copy of every state, minus copy of
every state]``; zero-weight slots are kept so that index ``j`` and ``m + j``
both refer to state ``j`` of the base space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NegativeImage, NegativeNetMass, SignedNormalizationFailure
from .measures import FrequencyDist, ProbDist, SignedMeasure, _frozen, total_variation_weight
from .scenario import PhaseSpace, states_consistent_with

CANCEL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OutcomeMap:
    """Deterministic map from state indices to observable indices."""

    targets: np.ndarray
    n_outcomes: int
    labels: tuple

    def __init__(self, targets: Sequence[int], n_outcomes: int | None = None, labels=None):
        t = np.asarray(targets, dtype=np.int64)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("targets must be a non-empty 1-d sequence")
        n = int(t.max()) + 1 if n_outcomes is None else int(n_outcomes)
        if t.min() < 0 or t.max() >= n:
            raise ValueError("targets out of range")
        labels = tuple(range(n)) if labels is None else tuple(labels)
        if len(labels) != n:
            raise ValueError("one label per observable is required")
        object.__setattr__(self, "targets", _frozen(t, dtype=np.int64))
        object.__setattr__(self, "n_outcomes", n)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.targets.size

    def aggregate(self, values) -> np.ndarray:
        """Sum ``values`` (indexed by state) into observable bins."""
        return np.bincount(self.targets, weights=np.asarray(values, dtype=float),
                           minlength=self.n_outcomes)


def identity_map(m: int) -> OutcomeMap:
    return OutcomeMap(np.arange(m), m)


def context_map(space: PhaseSpace, context: Sequence[str]) -> OutcomeMap:
    """Outcome map induced by measuring ``context`` on every phase-space state."""
    outcomes = space.scenario.joint_outcomes()
    targets = np.empty(len(space), dtype=np.int64)
    for i, outcome in enumerate(outcomes):
        targets[states_consistent_with(space, context, outcome)] = i
    return OutcomeMap(targets, len(outcomes), outcomes)


@dataclass(frozen=True, eq=False)
class DoubledSimulation:
    lam: SignedMeasure
    Lambda: float
    nu_plus: np.ndarray
    nu_minus: np.ndarray

    @property
    def m(self) -> int:
        return self.nu_plus.size

    @property
    def nu(self) -> np.ndarray:
        """Simulation measure on the doubled space (length ``2m``)."""
        return _frozen(np.concatenate([self.nu_plus, self.nu_minus]))

    @property
    def labels(self) -> tuple:
        base = self.lam.labels
        return tuple(f"+{x}" for x in base) + tuple(f"-{x}" for x in base)

    def as_dist(self) -> ProbDist:
        return ProbDist(self.nu, self.labels)

    @property
    def signs(self) -> np.ndarray:
        """Sign attached to each slot of the doubled space."""
        return np.concatenate([np.ones(self.m), -np.ones(self.m)])

    def collapse(self, g) -> np.ndarray:
        """Re-index a doubled-space vector onto the base states.

        Slot ``j`` keeps the plus-copy entry when ``lam_j >= 0`` and the
        minus-copy entry otherwise. Mass on the opposite copy is a
        zero-probability event under the simulation and is rejected.
        """
        g = np.asarray(getattr(g, "probs", g), dtype=float)
        if g.size != 2 * self.m:
            raise DimensionMismatch(f"expected {2 * self.m} entries, got {g.size}")
        neg = self.lam.weights < 0
        plus, minus = g[: self.m], g[self.m:]
        stray = np.where(neg, plus, minus)
        if np.any(stray > 0):
            raise ValueError("g puts mass on slots that the simulation never visits")
        return np.where(neg, minus, plus)

    @property
    def nu_collapsed(self) -> np.ndarray:
        return np.abs(self.lam.weights) / self.Lambda


def double(lam: SignedMeasure) -> DoubledSimulation:
    w = lam.weights
    Lambda = total_variation_weight(lam)
    nu_plus = np.where(w > 0, w, 0.0) / Lambda
    nu_minus = np.where(w < 0, -w, 0.0) / Lambda
    return DoubledSimulation(lam, Lambda, _frozen(nu_plus), _frozen(nu_minus))


def classical_pushforward(lam: SignedMeasure, chi: OutcomeMap) -> ProbDist:
    """Image measure of ``lam`` under ``chi``; must come out non-negative."""
    if len(chi) != len(lam):
        raise DimensionMismatch("outcome map and measure have different sizes")
    mu = chi.aggregate(lam.weights)
    if np.any(mu < -CANCEL_TOL):
        raise NegativeImage(f"image measure has negative mass {mu.min()!r}")
    return ProbDist(np.clip(mu, 0.0, None), chi.labels)


@dataclass(frozen=True, eq=False)
class PushforwardResult:
    dist: ProbDist
    F: float
    net_masses: np.ndarray


def signed_net_masses(g, chi: OutcomeMap) -> tuple[np.ndarray, float]:
    """Per-observable net masses and total net mass of a doubled-space vector."""
    g = np.asarray(getattr(g, "probs", g), dtype=float)
    m = len(chi)
    if g.size != 2 * m:
        raise DimensionMismatch(f"expected {2 * m} doubled-space entries, got {g.size}")
    net = g[:m] - g[m:]
    return chi.aggregate(net), float(net.sum())


def signed_pushforward(g, chi: OutcomeMap) -> PushforwardResult:
    """Cancel plus and minus copies, bin by ``chi`` and renormalize.

    Raises `SignedNormalizationFailure` if the total net mass is not
    positive, and `NegativeNetMass` (carrying the raw masses) if any
    observable ends up negative. Nothing is clipped beyond ``1e-12``.
    """
    masses, denom = signed_net_masses(g, chi)
    if denom <= CANCEL_TOL:
        raise SignedNormalizationFailure(f"total net mass {denom!r} is not positive", denom)
    F = 1.0 / denom
    if np.any(masses < -CANCEL_TOL):
        raise NegativeNetMass(f"negative net mass {masses.min()!r}", _frozen(masses), F)
    probs = np.clip(masses, 0.0, None) * F
    return PushforwardResult(ProbDist(probs, chi.labels), F, _frozen(masses))


@dataclass(frozen=True, eq=False)
class SignedChannel:
    """Square matrix with a single +-1 per column, and its split T = T+ - T-."""

    matrix: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.matrix)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValueError("a signed channel is square")
        nonzero = np.count_nonzero(T, axis=0)
        if np.any(nonzero != 1) or not np.all(np.isin(T, (-1, 0, 1))):
            raise ValueError("every column needs exactly one +1 or -1 entry")

    @property
    def plus(self) -> np.ndarray:
        return np.abs(self.matrix)

    @property
    def minus(self) -> np.ndarray:
        return np.where(self.matrix < 0, 2, 0).astype(self.matrix.dtype)


def build_channel(lam: SignedMeasure, chi: OutcomeMap) -> SignedChannel:
    """Signed channel of ``(lam, chi)`` on the base index set.

    Zero-weight states get a ``+1`` entry: they never carry mass, and this
    keeps ``T+`` column-stochastic.
    """
    m = len(lam)
    if len(chi) != m or chi.n_outcomes > m:
        raise DimensionMismatch("outcome map must send the state indices into themselves")
    T = np.zeros((m, m), dtype=np.int64)
    T[chi.targets, np.arange(m)] = np.where(lam.weights < 0, -1, 1)
    T.setflags(write=False)
    return SignedChannel(T)


# -- sampling --------------------------------------------------------------

def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for stream ``stream`` of master ``seed``.

    Streams are spawned through `numpy.random.SeedSequence`, so the draws of
    one stream never depend on how many others were used or in what order.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample(dist, n: int, seed: int, stream: int = 0) -> FrequencyDist:
    """Multinomial counts of ``n`` i.i.d. draws from ``dist``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p = np.asarray(getattr(dist, "probs", dist), dtype=float)
    counts = make_rng(seed, stream).multinomial(n, p)
    return FrequencyDist(counts, getattr(dist, "labels", None))
