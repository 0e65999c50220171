"""Where the simulation's large deviations beat the observable process.

Three analyses live here:

* the cheapest simulation-side deviation ``g`` whose signed pushforward is a
  given observable frequency ``f`` (an I-projection onto a linear family);
* the exact and first-order sides of the signed data processing bound for a
  measure with a single negative weight;
* the near-uniform family that injects negativity ``-eps`` into a uniform
  distribution, with its rate gap and slope at ``eps = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp, xlogy

from .errors import Infeasible, InvalidConfig, NonConvergence, ShapeViolation, StepTooLarge
from .measures import ProbDist, SignedMeasure, kl_divergence
from .simulation import (
    DoubledSimulation,
    OutcomeMap,
    build_channel,
    classical_pushforward,
    double,
    signed_pushforward,
)

# -- I-projection under the pushforward constraint ------------------------


@dataclass(frozen=True, eq=False)
class ReversalProblem:
    sim: DoubledSimulation
    chi: OutcomeMap
    target_f: ProbDist

    def __post_init__(self):
        f = self.target_f
        if not isinstance(f, ProbDist):
            f = ProbDist(f, self.chi.labels)
            object.__setattr__(self, "target_f", f)
        if len(f) != self.chi.n_outcomes:
            raise ValueError("target has the wrong number of observables")
        if len(self.chi) != self.sim.m:
            raise ValueError("outcome map does not match the phase space")

    def constraint_matrix(self) -> np.ndarray:
        """Rows ``i``: net mass on observable ``i`` minus ``f_i`` times total net mass.

        Columns index the doubled space. ``A @ g = 0`` together with a
        positive total net mass is equivalent to ``Gamma(g) = f``.
        """
        m = self.sim.m
        signs = self.sim.signs
        obs = np.concatenate([self.chi.targets, self.chi.targets])
        A = np.zeros((self.chi.n_outcomes, 2 * m))
        A[obs, np.arange(2 * m)] = signs
        A -= np.outer(self.target_f.probs, signs)
        return A


@dataclass(frozen=True, eq=False)
class IProjection:
    g: ProbDist
    d: float
    constraint_residual: float
    duality_gap: float
    iterations: int
    theta: np.ndarray = field(repr=False)


def _maximal_support(A: np.ndarray, candidates: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices that some feasible point of ``{A x = 0, sum x = 1, x >= 0}`` charges."""
    Ac = A[:, candidates]
    k = candidates.size
    A_eq = np.vstack([Ac, np.ones(k)])
    b_eq = np.zeros(A_eq.shape[0])
    b_eq[-1] = 1.0
    keep = np.zeros(k, dtype=bool)
    for j in range(k):
        if keep[j]:
            continue
        c = np.zeros(k)
        c[j] = -1.0
        res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:
            raise Infeasible("no doubled-space distribution pushes forward to the target")
        if res.status != 0:
            raise NonConvergence(res.message)
        # any optimal vertex also certifies the other indices it charges
        keep |= res.x > tol
    return candidates[keep]


def min_kl_given_pushforward(prob: ReversalProblem, max_iter: int = 100_000,
                             tol: float = 1e-12, theta0=None) -> IProjection:
    """Minimize D(g || nu) subject to ``Gamma(g) = f``.

    The constraint set is a linear family, so the minimizer is an
    exponential tilt ``g_j ∝ nu_j exp(theta . a_j)`` of ``nu`` on the
    largest support the family allows. That support is found by linear
    programming; ``theta`` then minimizes the convex log-partition
    function by damped Newton steps, starting from ``theta0`` (zero, i.e.
    ``g = nu``, by default).
    """
    nu = prob.sim.nu
    A = prob.constraint_matrix()
    support = _maximal_support(A, np.flatnonzero(nu > 0))
    As = A[:, support]
    log_nu = np.log(nu[support])

    def tilt(theta):
        logits = log_nu + theta @ As
        logZ = logsumexp(logits)
        return np.exp(logits - logZ), logZ

    theta = np.zeros(A.shape[0]) if theta0 is None else np.array(theta0, dtype=float)
    g, logZ = tilt(theta)
    for it in range(1, max_iter + 1):
        grad = As @ g
        if np.abs(grad).max() <= tol:
            break
        centered = As - grad[:, None]
        H = (centered * g) @ centered.T
        step = -np.linalg.lstsq(H, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)) or grad @ step >= 0:
            step = -grad
        t, slope = 1.0, grad @ step
        while t >= 1e-12:
            g_new, logZ_new = tilt(theta + t * step)
            if logZ_new <= logZ + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no decrease representable in floating point: converged as far as possible
            break
        theta, g, logZ = theta + t * step, g_new, logZ_new
    else:
        raise NonConvergence(f"I-projection did not converge in {max_iter} iterations")

    full = np.zeros(nu.size)
    full[support] = g
    residual = float(np.abs(A @ full).max())
    d = kl_divergence(full, nu)
    # the dual value is -logZ when the constraint holds exactly
    gap = abs(d + logZ)
    if residual > 1e-8:
        raise NonConvergence(f"constraint residual {residual:.3g} after {it} iterations")
    if (full[: prob.sim.m] - full[prob.sim.m:]).sum() <= 0:
        raise Infeasible("optimal deviation has non-positive total net mass")
    return IProjection(ProbDist(full, prob.sim.labels), d, residual, gap, it, theta)


# -- signed data processing bound ----------------------------------------


@dataclass(frozen=True)
class SdpiBoundReport:
    lam1_abs: float
    Lambda: float
    K_nu: float
    K_g: float
    nu1: float
    g1: float
    F: float
    lhs: float
    rhs: float
    slack: float
    factor: float
    d_fine: float
    exact_rhs: float
    exact_slack: float

    @property
    def exact_holds(self) -> bool:
        return self.exact_slack >= -1e-12

    @property
    def nu_ratio(self) -> float:
        return self.nu1 / self.K_nu if self.K_nu > 0 else float("inf")

    @property
    def g_ratio(self) -> float:
        return self.g1 / self.K_g if self.K_g > 0 else float("inf")


def _xlogratio(x, y):
    return float(xlogy(x, x) - xlogy(x, y))


def sdpi_bound_check(lam: SignedMeasure, chi: OutcomeMap, g) -> SdpiBoundReport:
    """Evaluate both sides of the signed data processing bound for ``g``.

    ``lam`` has at most one negative weight and all others strictly
    positive; with no negative weight the bound is the classical one.
    ``g`` is a distribution on the doubled space.

    ``lhs``/``rhs`` compare D(f || mu) with ``(1 + 2|lam_neg|/Lambda) D(g || nu)``,
    which only holds to first order and is reported as a diagnostic.
    ``exact_rhs`` is the bound obtained before any expansion, where the
    only inequality used is the classical DPI for ``T+``; it must hold.
    """
    w = lam.weights
    negative = np.flatnonzero(w < 0)
    if negative.size > 1 or np.any(np.delete(w, negative) <= 0):
        raise ShapeViolation("expected one negative weight and all others positive")
    sim = double(lam)
    T = build_channel(lam, chi)
    nu = sim.nu_collapsed
    gc = sim.collapse(g)
    Tnu, Tg = T.matrix @ nu, T.matrix @ gc
    push = signed_pushforward(np.asarray(getattr(g, "probs", g), dtype=float), chi)
    F = push.F
    f = push.dist.probs
    mu = classical_pushforward(lam, chi).probs

    d_coarse = kl_divergence(f, mu)
    d_fine = kl_divergence(gc, nu)

    if negative.size:
        j = int(negative[0])
        i = int(chi.targets[j])
        nu1, g1 = float(nu[j]), float(gc[j])
        K_nu, K_g = float(Tnu[i] + nu1), float(Tg[i] + g1)
        lam1 = float(-w[j])
        tilt = (F * _xlogratio(K_g - g1, K_nu - nu1)
                - F * _xlogratio(K_g + g1, K_nu + nu1))
    else:
        nu1 = g1 = lam1 = 0.0
        K_nu = K_g = float("nan")
        tilt = 0.0
    exact_rhs = tilt + F * d_fine + math.log(F / sim.Lambda)
    factor = 1.0 + 2.0 * lam1 / sim.Lambda
    rhs = factor * d_fine
    return SdpiBoundReport(
        lam1_abs=lam1, Lambda=sim.Lambda, K_nu=K_nu, K_g=K_g, nu1=nu1, g1=g1, F=F,
        lhs=d_coarse, rhs=rhs, slack=rhs - d_coarse, factor=factor, d_fine=d_fine,
        exact_rhs=exact_rhs, exact_slack=exact_rhs - d_coarse,
    )


# -- near-uniform family ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class NearUniformConfig:
    """Size ``m``, negativity ``epsilon``, coupling ``c`` and target ``f``.

    ``target_f`` has ``m + 1`` entries indexed from 0, with ``f_0 = 0``.
    """

    m: int
    epsilon: float
    target_f: tuple
    c: float = 1.0

    def __post_init__(self):
        f = np.asarray(self.target_f, dtype=float)
        object.__setattr__(self, "target_f", tuple(float(x) for x in f))
        if int(self.m) != self.m or self.m < 2:
            raise InvalidConfig("m must be an integer >= 2")
        if f.size != self.m + 1:
            raise InvalidConfig(f"target needs m + 1 = {self.m + 1} entries, got {f.size}")
        if f[0] != 0:
            raise InvalidConfig("target must put no mass on state 0")
        if np.any(f < 0) or abs(f.sum() - 1) > 1e-9:
            raise InvalidConfig("target must be a probability vector")
        if not self.c > 0:
            raise InvalidConfig("c must be positive (g_0 = c * epsilon is a probability)")
        if self.epsilon < 0 or 2 * self.c * self.epsilon >= 1:
            raise InvalidConfig("need 0 <= epsilon < 1 / (2c)")

    def with_epsilon(self, epsilon: float) -> "NearUniformConfig":
        return NearUniformConfig(self.m, epsilon, self.target_f, self.c)

    @property
    def f(self) -> np.ndarray:
        return np.array(self.target_f)

    @property
    def mu(self) -> np.ndarray:
        return np.r_[0.0, np.full(self.m, 1.0 / self.m)]


@dataclass(frozen=True, eq=False)
class NearUniformFamily:
    """Members of the family, indexed on the ``m + 1`` base states.

    ``nu`` and ``g`` are in collapsed form: entry 0 is the minus copy of
    state 0, every other entry the plus copy.
    """

    lam: SignedMeasure
    nu: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    f: np.ndarray
    chi: OutcomeMap

    def doubled_g(self) -> np.ndarray:
        k = self.g.size
        full = np.zeros(2 * k)
        full[1:k] = self.g[1:]
        full[k] = self.g[0]
        return full


def near_uniform_map(m: int) -> OutcomeMap:
    return OutcomeMap(np.r_[1, np.arange(1, m + 1)], m + 1)


def near_uniform_family(cfg: NearUniformConfig) -> NearUniformFamily:
    m, eps, c = cfg.m, cfg.epsilon, cfg.c
    lam = np.r_[-eps, 1.0 / m + eps, np.full(m - 1, 1.0 / m)]
    if eps == 0:
        lam[0] = 0.0
    nu = np.abs(lam) / (1 + 2 * eps)
    f = cfg.f
    g0 = c * eps
    scale = 1 - 2 * g0
    g = np.r_[g0, g0 + scale * f[1], scale * f[2:]]
    return NearUniformFamily(SignedMeasure(lam), nu, cfg.mu, g, f, near_uniform_map(m))


def near_uniform_gap_direct(cfg: NearUniformConfig) -> float:
    fam = near_uniform_family(cfg)
    return kl_divergence(fam.g, fam.nu) - kl_divergence(fam.f, fam.mu)


def near_uniform_gap_closed_form(cfg: NearUniformConfig) -> float:
    """Rate gap written out in ``eps``, ``c``, ``f_1`` and D(f || mu) only."""
    m, eps, c = cfg.m, cfg.epsilon, cfg.c
    f1 = cfg.f[1]
    D = kl_divergence(cfg.f, cfg.mu)
    x = c * eps + (1 - 2 * c * eps) * f1
    y = 1.0 / m + eps
    return (math.log1p(2 * eps) + c * eps * math.log(c)
            + _xlogratio(x, y)
            - 2 * c * eps * D
            - (1 - 2 * c * eps) * float(xlogy(f1, f1 * m))
            + (1 - f1) * (1 - 2 * c * eps) * math.log1p(-2 * c * eps))


@dataclass(frozen=True)
class NearUniformGap:
    epsilon: float
    direct: float
    closed_form: float

    @property
    def value(self) -> float:
        return self.direct


def near_uniform_gap(cfg: NearUniformConfig, tol: float = 1e-10) -> NearUniformGap:
    """D(g || nu) - D(f || mu), evaluated by direct KL and by the closed form.

    Raises `AssertionError` if the two disagree by more than ``tol``.
    """
    direct = near_uniform_gap_direct(cfg)
    closed = near_uniform_gap_closed_form(cfg)
    if not abs(direct - closed) <= tol:
        raise AssertionError(f"gap paths disagree: {direct!r} vs {closed!r}")
    return NearUniformGap(cfg.epsilon, direct, closed)


def near_uniform_slope_analytic(cfg: NearUniformConfig, epsilon: float | None = None) -> float:
    """Derivative of the rate gap with respect to ``eps``, in closed form."""
    m, c = cfg.m, cfg.c
    eps = cfg.epsilon if epsilon is None else epsilon
    f1 = cfg.f[1]
    D = kl_divergence(cfg.f, cfg.mu)
    x = c * eps + (1 - 2 * c * eps) * f1
    y = 1.0 / m + eps
    dx = c - 2 * c * f1
    log_ratio = math.log(x / y) if x > 0 else float("-inf")
    return (2 / (1 + 2 * eps) + c * math.log(c) + dx * log_ratio
            + dx - x / y
            - 2 * c * D + 2 * c * float(xlogy(f1, f1 * m))
            + (1 - f1) * (-2 * c * math.log1p(-2 * c * eps) - 2 * c))


def near_uniform_slope_at_zero(cfg: NearUniformConfig) -> float:
    """``2 + c log c + c log(f_1 m) - f_1 m - 2c D(f || mu) - c``."""
    c, m, f1 = cfg.c, cfg.m, cfg.f[1]
    D = kl_divergence(cfg.f, cfg.mu)
    log_f1m = math.log(f1 * m) if f1 > 0 else float("-inf")
    return 2 + c * math.log(c) + c * log_f1m - f1 * m - 2 * c * D - c


@dataclass(frozen=True)
class SlopeEstimate:
    epsilon: float
    h: float
    finite_difference: float
    analytic: float

    @property
    def relative_error(self) -> float:
        if self.analytic == 0:
            return abs(self.finite_difference)
        return abs(self.finite_difference - self.analytic) / abs(self.analytic)


def near_uniform_derivative(cfg: NearUniformConfig, h: float = 1e-4) -> SlopeEstimate:
    """Finite-difference slope of the rate gap at ``cfg.epsilon``.

    At ``eps < 2h`` (in particular at zero) the second-order forward
    stencil on ``[eps, eps + 2h]`` is used, since the family is undefined
    for negative ``eps``; elsewhere a central difference. The analytic
    slope is reported alongside.
    """
    if h > 1e-3:
        raise StepTooLarge(f"step {h} exceeds 1e-3")
    if h < 1e-6:
        raise InvalidConfig(f"step {h} is below 1e-6")
    eps = cfg.epsilon
    gap = lambda e: near_uniform_gap_direct(cfg.with_epsilon(e))  # noqa: E731
    if eps < 2 * h:
        fd = (-3 * gap(eps) + 4 * gap(eps + h) - gap(eps + 2 * h)) / (2 * h)
    else:
        fd = (gap(eps + h) - gap(eps - h)) / (2 * h)
    analytic = near_uniform_slope_at_zero(cfg) if eps == 0 else near_uniform_slope_analytic(cfg)
    return SlopeEstimate(eps, h, fd, analytic)
