"""Sanov-type rates and the probabilities they approximate.

Includes an exact lattice oracle for small supports, a seeded Monte Carlo
estimator, the small-deviation quadratic form, and the two-spin Ising
baseline with its noisy coarse-graining kernel.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .errors import SingularCovariance, TooLarge, ZeroProbability
from .measures import ProbDist, _pair, kl_divergence
from .simulation import make_rng

LATTICE_LIMIT = 10**7
BALL_TOL = 1e-12
MC_CHUNK = 10_000


def sanov_probability(rate: float, n: int) -> float:
    """``exp(-n * rate)``, with an infinite rate giving exactly zero."""
    if rate < 0:
        raise ValueError("rates are non-negative")
    if math.isinf(rate):
        return 0.0
    return math.exp(-n * rate)


@dataclass(frozen=True)
class RateComparison:
    d_fine: float
    d_coarse: float
    n: int
    p_fine: float
    p_coarse: float
    reversal: bool


def compare_rates(g, nu, f, mu, n: int) -> RateComparison:
    """Fine (simulation-side) against coarse (observable-side) Sanov rates."""
    d_fine = kl_divergence(g, nu)
    d_coarse = kl_divergence(f, mu)
    return RateComparison(
        d_fine=d_fine,
        d_coarse=d_coarse,
        n=n,
        p_fine=sanov_probability(d_fine, n),
        p_coarse=sanov_probability(d_coarse, n),
        reversal=bool(d_fine < d_coarse - 1e-12),
    )


# -- balls and the exact oracle ------------------------------------------

@dataclass(frozen=True)
class BallSpec:
    """Closed L1 ball of radius ``delta`` around ``center``."""

    center: ProbDist
    delta: float = 0.02

    def __post_init__(self):
        if not isinstance(self.center, ProbDist):
            object.__setattr__(self, "center", ProbDist(self.center))
        if self.delta < 0:
            raise ValueError("ball radius must be non-negative")


def lattice_size(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def _lattice_in_ball(p: np.ndarray, ball: BallSpec, n: int):
    """Yield (log-probability, frequency vector) blocks for lattice points in the ball.

    Coordinates outside the support of ``p`` always hold zero counts, so the
    enumeration runs over the support only. The two innermost coordinates
    are vectorized; the rest are walked depth-first.
    """
    center = ball.center.probs
    if center.size != p.size:
        raise ValueError("center and distribution have different sizes")
    support = np.flatnonzero(p > 0)
    k = support.size
    size = lattice_size(n, k)
    if size > LATTICE_LIMIT:
        raise TooLarge(f"lattice has {size} points (limit {LATTICE_LIMIT})")

    off_support = float(np.abs(np.delete(center, support)).sum())
    ps, cs = p[support], center[support]
    logp = np.log(ps)
    log_fact = gammaln(np.arange(n + 1) + 1.0)
    radius = ball.delta + BALL_TOL

    if k == 1:
        dist = off_support + abs(1.0 - cs[0])
        if dist <= radius:
            yield np.array([0.0]), np.array([[n]])
        return

    def walk(depth, remaining, log_acc, dist_acc, prefix):
        if dist_acc > radius:
            return
        if depth == k - 2:
            c = np.arange(remaining + 1)
            last = remaining - c
            d = (dist_acc + np.abs(c / n - cs[depth]) + np.abs(last / n - cs[depth + 1]))
            keep = d <= radius
            if not keep.any():
                return
            c, last = c[keep], last[keep]
            lp = (log_acc - log_fact[c] - log_fact[last]
                  + c * logp[depth] + last * logp[depth + 1])
            counts = np.empty((c.size, k), dtype=np.int64)
            counts[:, :depth] = prefix
            counts[:, depth] = c
            counts[:, depth + 1] = last
            yield lp, counts
            return
        for c in range(remaining + 1):
            yield from walk(depth + 1, remaining - c,
                            log_acc - log_fact[c] + c * logp[depth],
                            dist_acc + abs(c / n - cs[depth]),
                            prefix + [c])

    yield from walk(0, n, log_fact[n], off_support, [])


def _full_counts(counts: np.ndarray, p: np.ndarray) -> np.ndarray:
    full = np.zeros((counts.shape[0], p.size), dtype=np.int64)
    full[:, np.flatnonzero(p > 0)] = counts
    return full


def exact_ball_log_probability(p, ball: BallSpec, n: int) -> float:
    """Natural log of the exact multinomial probability that the empirical
    distribution of ``n`` draws lies in ``ball`` (``-inf`` if it cannot)."""
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    blocks = [lp for lp, _ in _lattice_in_ball(p, ball, n)]
    if not blocks:
        return float("-inf")
    return float(logsumexp(np.concatenate(blocks)))


def exact_ball_probability(p, ball: BallSpec, n: int) -> float:
    """Exact probability that the empirical distribution of ``n`` i.i.d.
    draws from ``p`` lands within L1 distance ``ball.delta`` of the center.

    Sums multinomial masses over the count lattice in log space. Raises
    `TooLarge` if the lattice on the support of ``p`` has more than
    ``10**7`` points.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return min(1.0, math.exp(exact_ball_log_probability(p, ball, n)))


def min_ball_kl(p, ball: BallSpec, n: int) -> float:
    """Smallest D(q || p) over frequency vectors with denominator ``n`` in the ball."""
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    best = float("inf")
    for _, counts in _lattice_in_ball(p, ball, n):
        q = _full_counts(counts, p) / n
        vals = xlogy(q, q).sum(axis=1) - xlogy(q, np.broadcast_to(p, q.shape)).sum(axis=1)
        best = min(best, float(vals.min()))
    return max(best, 0.0)


def empirical_rate(p, ball: BallSpec, n: int, probability: float | None = None) -> float:
    """``-log(P_n(ball)) / n``.

    The ball probability comes from the exact oracle unless ``probability``
    is supplied (for instance a Monte Carlo estimate).
    """
    if probability is None:
        logp = exact_ball_log_probability(p, ball, n)
    else:
        logp = math.log(probability) if probability > 0 else float("-inf")
    if math.isinf(logp):
        raise ZeroProbability("the ball has probability zero at this sample size")
    return max(-logp / n, 0.0)


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    hits: int
    trials: int


def _mc_chunk(p, center, radius, n, size, seed, stream):
    rng = make_rng(seed, stream)
    counts = rng.multinomial(n, p, size=size)
    d = np.abs(counts / n - center).sum(axis=1)
    return int(np.count_nonzero(d <= radius))


def mc_ball_probability(p, ball: BallSpec, n: int, trials: int, seed: int,
                        workers: int = 1) -> MonteCarloEstimate:
    """Fraction of ``trials`` samples of size ``n`` whose frequencies fall in the ball.

    Trials are split into fixed chunks of 10 000, chunk ``i`` drawing from
    stream ``i`` of ``seed``; the result is therefore the same for any
    number of ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    center = ball.center.probs
    radius = ball.delta + BALL_TOL
    sizes = [MC_CHUNK] * (trials // MC_CHUNK)
    if trials % MC_CHUNK:
        sizes.append(trials % MC_CHUNK)
    jobs = [(p, center, radius, n, s, seed, i) for i, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(lambda a: _mc_chunk(*a), jobs))
    else:
        hits = sum(_mc_chunk(*a) for a in jobs)
    est = hits / trials
    return MonteCarloEstimate(est, math.sqrt(est * (1.0 - est) / trials), hits, trials)


# -- small deviations -----------------------------------------------------

def multinomial_covariance(p) -> np.ndarray:
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    return np.diag(p) - np.outer(p, p)


def _deviation(q, p):
    x, y = _pair(q, p)
    d = x - y
    off = y <= 0
    if np.any(off & (np.abs(d) > 0)):
        raise SingularCovariance("q differs from p where p has no mass")
    return d, y, ~off


def small_deviation_form(q, p) -> float:
    """Quadratic form of ``q - p`` in the pseudo-inverse multinomial covariance of ``p``.

    The covariance is restricted to the support of ``p``, where its null
    space is spanned by the all-ones vector and ``q - p`` lies in the
    complement.
    """
    d, y, on = _deviation(q, p)
    cov = multinomial_covariance(y[on])
    return float(d[on] @ np.linalg.pinv(cov, rcond=1e-13, hermitian=True) @ d[on])


def chi_square_form(q, p) -> float:
    """Pearson chi-square ``sum((q - p)**2 / p)`` over the support of ``p``."""
    d, y, on = _deviation(q, p)
    return float(np.sum(d[on] ** 2 / y[on]))


# -- Ising baseline -------------------------------------------------------

ISING_STATES = ("++", "+-", "-+", "--")
ISING_SPINS = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])

# rows: microstates in ISING_STATES order; columns: macrostates A, B
ISING_KERNEL = np.array([
    [1.0, 0.0],
    [0.5, 0.5],
    [0.5, 0.5],
    [0.0, 1.0],
])
ISING_KERNEL.setflags(write=False)


@dataclass(frozen=True, eq=False)
class IsingBaseline:
    J: float
    temperature: float
    Z: float
    fine: ProbDist
    kernel: np.ndarray
    coarse: ProbDist

    def coarse_grain(self, g) -> np.ndarray:
        return np.asarray(getattr(g, "probs", g), dtype=float) @ self.kernel


def ising_baseline(J: float = 1.0, temperature: float = 1.0) -> IsingBaseline:
    """Gibbs distribution of two coupled spins and its noisy two-state image."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    energy = -J * ISING_SPINS[:, 0] * ISING_SPINS[:, 1]
    weights = np.exp(-energy / temperature)
    Z = float(weights.sum())
    fine = ProbDist(weights / Z, ISING_STATES)
    coarse = ProbDist(fine.probs @ ISING_KERNEL, ("A", "B"))
    return IsingBaseline(J, temperature, Z, fine, ISING_KERNEL, coarse)
