"""Risk measures in minimax saddle-point form, with CVaR as the shipped case.

CVaR at level alpha of a cost X is the mean of the worst (1 - alpha)
probability mass, equivalently

    min_eta { eta + (1 - alpha)^-1 E[max(X - eta, 0)] }.

``cvar_exact`` evaluates this exactly on finite distributions via the tail;
``sasp_estimate`` runs the projected subgradient descent-ascent scheme with
suffix averaging used for online risk estimation, which only needs samples
of X.  alpha = 0 recovers the expectation in both routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

PROB_TOL = 1e-12


@dataclass
class DiscreteDistribution:
    """Finite distribution given by atoms and matching probabilities."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float).reshape(-1)
        self.probs = np.asarray(self.probs, dtype=float).reshape(-1)

    def validate(self) -> list[str]:
        report = []
        if self.atoms.shape != self.probs.shape:
            report.append("atoms and probs length mismatch")
        if np.any(self.probs < -PROB_TOL):
            report.append("negative probability")
        if abs(self.probs.sum() - 1.0) > PROB_TOL:
            report.append(f"total mass {self.probs.sum():.15g} != 1")
        if not np.all(np.isfinite(self.atoms)):
            report.append("non-finite atom")
        return report

    def mean(self) -> float:
        return float(self.atoms @ self.probs)


def cvar_exact(dist: DiscreteDistribution, alpha: float) -> float:
    """Exact CVaR_alpha: mean of the worst (1 - alpha) probability mass.

    The minimizing eta is the alpha-quantile; an atom straddling the quantile
    contributes fractionally.  alpha = 0 gives the plain expectation.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    atoms = dist.atoms
    probs = dist.probs
    if atoms.size == 0:
        raise ValueError("empty distribution")
    if alpha == 0.0:
        return float(atoms @ probs) / float(probs.sum())

    order = np.argsort(atoms)[::-1]  # worst (largest cost) first
    tail = 1.0 - alpha
    remaining = tail
    acc = 0.0
    for idx in order:
        take = min(probs[idx], remaining)
        if take > 0.0:
            acc += atoms[idx] * take
            remaining -= take
        if remaining <= PROB_TOL:
            break
    return acc / tail


def empirical_cvar(samples, alpha: float) -> float:
    """CVaR of the empirical distribution of the samples.

    Convention: CVaR_alpha = mean of the worst (1 - alpha) fraction, so it is
    nondecreasing in alpha and CVaR_0 is the sample mean.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("empty sample set")
    n = samples.size
    return cvar_exact(DiscreteDistribution(samples, np.full(n, 1.0 / n)), alpha)


def cvar_g(x: float, eta: float, alpha: float) -> float:
    """Integrand eta + (1-alpha)^-1 max(x - eta, 0) of the CVaR minimization."""
    if alpha >= 1.0:
        raise ValueError(f"alpha must be < 1, got {alpha}")
    return eta + max(x - eta, 0.0) / (1.0 - alpha)


def cvar_g_sub_eta(x: float, eta: float, alpha: float) -> float:
    """Subgradient of cvar_g in eta; the kink at x == eta takes the left branch.

    The indicator is strict (x > eta), which fixes one valid selection and
    makes stochastic runs reproducible.
    """
    return 1.0 - (1.0 / (1.0 - alpha)) * (1.0 if x > eta else 0.0)


@dataclass(frozen=True)
class Box:
    """Axis-aligned compact box; the degenerate lo == hi case is a point."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, dtype=float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, dtype=float)))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box needs lo <= hi componentwise")

    @property
    def dim(self) -> int:
        return self.lo.size

    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


def project(domain: Box, point) -> np.ndarray:
    """Euclidean projection onto a box: idempotent and nonexpansive."""
    return np.clip(np.atleast_1d(np.asarray(point, dtype=float)), domain.lo, domain.hi)


@dataclass
class SaddleRiskSpec:
    """A risk measure written as min_y max_z E[g(X, y, z)].

    g must be convex in y, concave in z, with uniformly bounded subgradients
    on the compact domains; ``lipschitz_bound`` is the constant K_G > 1 used
    for default step sizing.
    """

    y_domain: Box
    z_domain: Box
    g: Callable[[float, np.ndarray, np.ndarray], float]
    g_sub_y: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    g_sub_z: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    lipschitz_bound: float
    alpha: float | None = None  # set for the CVaR instance; None otherwise

    def default_step_constant(self) -> float:
        d = max(self.y_domain.diameter(), self.z_domain.diameter())
        return (d if d > 0 else 1.0) / self.lipschitz_bound

    def exact_value(self, dist: DiscreteDistribution, grid: int = 2001) -> float:
        """min_y max_z of the expected integrand, by grid search on the box.

        Exact only for 1-d y with degenerate z (the CVaR case); used as a
        reference, not in any hot path.
        """
        if self.y_domain.dim != 1 or self.z_domain.diameter() > 0:
            raise NotImplementedError("grid evaluation covers 1-d y, point z only")
        z = self.z_domain.center()
        etas = np.linspace(self.y_domain.lo[0], self.y_domain.hi[0], grid)
        best = math.inf
        for eta in etas:
            val = sum(
                p * self.g(x, np.array([eta]), z)
                for x, p in zip(dist.atoms, dist.probs)
            )
            if val < best:
                best = val
        return best


def make_cvar_spec(alpha: float, eta_min: float, eta_max: float) -> SaddleRiskSpec:
    """CVaR as a saddle spec: y is the threshold eta on [eta_min, eta_max],
    z is a single point (the integrand has no z dependence).

    Exact minimization over the box reproduces cvar_exact whenever the cost
    support lies inside [eta_min, eta_max]; outside the box the value is
    the clipped-interval minimum, which can understate the true CVaR.
    """
    if not eta_min < eta_max:
        raise ValueError(f"empty eta interval [{eta_min}, {eta_max}]")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    inv = 1.0 / (1.0 - alpha)
    K = max(inv, abs(1.0 - inv), 1.0 + 1e-9)

    def g(x, y, z):
        return cvar_g(x, float(y[0]), alpha)

    def g_sub_y(x, y, z):
        return np.array([cvar_g_sub_eta(x, float(y[0]), alpha)])

    def g_sub_z(x, y, z):
        return np.zeros(1)

    return SaddleRiskSpec(
        y_domain=Box(np.array([eta_min]), np.array([eta_max])),
        z_domain=Box(np.zeros(1), np.zeros(1)),
        g=g,
        g_sub_y=g_sub_y,
        g_sub_z=g_sub_z,
        lipschitz_bound=K,
        alpha=alpha,
    )


def make_neutral_spec() -> SaddleRiskSpec:
    """Risk-neutral instance: g(x, y, z) = x with degenerate domains.

    With this spec the learner's update law is exactly classical Nash
    Q-learning; the saddle iterates never move.
    """
    zero = Box(np.zeros(1), np.zeros(1))
    return SaddleRiskSpec(
        y_domain=zero,
        z_domain=zero,
        g=lambda x, y, z: x,
        g_sub_y=lambda x, y, z: np.zeros(1),
        g_sub_z=lambda x, y, z: np.zeros(1),
        lipschitz_bound=1.0 + 1e-9,
        alpha=0.0,
    )


def half_window(t: int) -> int:
    """Default suffix-averaging start tau_*(t) = ceil(t / 2)."""
    return (t + 1) // 2


@dataclass
class SaspResult:
    y: np.ndarray
    z: np.ndarray
    value: float
    iterates_y: np.ndarray | None = None
    iterates_z: np.ndarray | None = None


def sasp_estimate(
    spec: SaddleRiskSpec,
    sampler: Callable,
    steps: int,
    rng,
    step_constant: float | None = None,
    step_exponent: float = 0.75,
    window_rule: Callable[[int], int] = half_window,
    h_y: float = 1.0,
    h_z: float = 1.0,
    holdout: int | None = None,
    keep_iterates: bool = False,
) -> SaspResult:
    """Projected subgradient descent (y) / ascent (z) with suffix averaging.

    Runs ``steps`` iterations with fresh samples X_t = sampler(rng); step
    sizes are C * t^-a with a in (1/2, 1].  Returns the average of the
    iterates over [tau_*(T), T] and the plug-in value estimate
    mean_batch g(X, y_avg, z_avg) over a held-out batch.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0.5 < step_exponent <= 1.0:
        raise ValueError(f"step exponent must lie in (1/2, 1], got {step_exponent}")
    C = spec.default_step_constant() if step_constant is None else step_constant

    scalar_cvar = (
        spec.alpha is not None
        and spec.y_domain.dim == 1
        and spec.z_domain.diameter() == 0.0
    )
    if scalar_cvar and not keep_iterates:
        y_avg, z_avg = _sasp_scalar_cvar(
            spec, sampler, steps, rng, C, step_exponent, window_rule, h_y
        )
        ys_arr = zs_arr = None
    else:
        y = spec.y_domain.center()
        z = spec.z_domain.center()
        ys = np.empty((steps, spec.y_domain.dim))
        zs = np.empty((steps, spec.z_domain.dim))
        for t in range(1, steps + 1):
            x = float(sampler(rng))
            if not math.isfinite(x):
                raise ValueError(f"non-finite sample {x} at step {t}")
            lam = C * t ** (-step_exponent)
            y = project(spec.y_domain, y - lam * h_y * spec.g_sub_y(x, y, z))
            z = project(spec.z_domain, z + lam * h_z * spec.g_sub_z(x, y, z))
            ys[t - 1] = y
            zs[t - 1] = z
        start = max(1, min(window_rule(steps), steps))
        y_avg = ys[start - 1 :].mean(axis=0)
        z_avg = zs[start - 1 :].mean(axis=0)
        ys_arr = ys if keep_iterates else None
        zs_arr = zs if keep_iterates else None

    n_hold = max(256, steps // 10) if holdout is None else holdout
    batch = np.array([float(sampler(rng)) for _ in range(n_hold)])
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite sample in held-out batch")
    value = float(np.mean([spec.g(x, y_avg, z_avg) for x in batch]))
    return SaspResult(y=y_avg, z=z_avg, value=value, iterates_y=ys_arr, iterates_z=zs_arr)


def _sasp_scalar_cvar(spec, sampler, steps, rng, C, a, window_rule, h_y):
    """Plain-float loop for the 1-d CVaR spec; avoids array overhead at T=1e5."""
    alpha = spec.alpha
    inv = 1.0 / (1.0 - alpha)
    lo = float(spec.y_domain.lo[0])
    hi = float(spec.y_domain.hi[0])
    eta = 0.5 * (lo + hi)
    trail = []
    for t in range(1, steps + 1):
        x = float(sampler(rng))
        if not math.isfinite(x):
            raise ValueError(f"non-finite sample {x} at step {t}")
        sub = 1.0 - inv if x > eta else 1.0
        eta -= C * t ** (-a) * h_y * sub
        if eta < lo:
            eta = lo
        elif eta > hi:
            eta = hi
        trail.append(eta)
    start = max(1, min(window_rule(steps), steps))
    eta_avg = math.fsum(trail[start - 1 :]) / (steps - start + 1)
    return np.array([eta_avg]), np.zeros(1)


# --- risk models for the exact dynamic-programming layer --------------------

JOINT = "joint"
TRANSITION = "transition"


@dataclass(frozen=True)
class RiskModel:
    """Per-player one-step risk used by the exact evaluation layer.

    scope selects which stochasticity the CVaR envelope acts on:

    * ``joint``      - CVaR of the full cost-to-go over the joint
                       (action, next state) distribution: risk from both the
                       other players' mixing and the transitions.
    * ``transition`` - per joint action, CVaR over next states only, mixed
                       risk-neutrally over actions.  This is the objective
                       the Q-learner's fixed point and the multilinear
                       equilibrium system characterize; it is linear in each
                       player's own strategy.

    alpha = 0 makes the two coincide with the risk-neutral expectation.
    """

    alpha: float = 0.0
    scope: str = JOINT

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.scope not in (JOINT, TRANSITION):
            raise ValueError(f"unknown risk scope {self.scope!r}")

    @classmethod
    def neutral(cls) -> "RiskModel":
        return cls(alpha=0.0, scope=JOINT)

    @classmethod
    def cvar(cls, alpha: float, scope: str = JOINT) -> "RiskModel":
        return cls(alpha=alpha, scope=scope)

    @property
    def is_neutral(self) -> bool:
        return self.alpha == 0.0

    def saddle_spec(self, eta_min: float, eta_max: float) -> SaddleRiskSpec:
        if self.is_neutral:
            return make_neutral_spec()
        return make_cvar_spec(self.alpha, eta_min, eta_max)
