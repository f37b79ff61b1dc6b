"""Powell dogleg trust-region solver for small dense least-squares problems.

A problem exposes four callables:

``linearize(x) -> (cost, A, g)``
    cost ``F = 1/2 sum rho(|r_k|^2)``, Gauss-Newton matrix ``A`` and gradient ``g``
``cost(x) -> float``
``retract(x, h) -> x'``
    apply a tangent-space step
``norm(x) -> float``
    magnitude used by the parameter-change test
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SolverDiverged

log = logging.getLogger(__name__)

# cost below which a problem counts as solved exactly
ZERO_COST = 1e-28


@dataclass
class SolverConfig:
    max_iterations: int = 300
    gradient_tolerance: float = 1e-10
    parameter_tolerance: float = 1e-10
    function_tolerance: float = 1e-8
    initial_trust_radius: float = 1e4
    loss: str = "none"          # "none" or "huber"
    huber_delta: float = 1.0    # pixels

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("gradient_tolerance", "parameter_tolerance", "function_tolerance",
                     "initial_trust_radius", "huber_delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.loss not in ("none", "huber"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SolverConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolveResult:
    x: object
    cost: float
    initial_cost: float
    iterations: int
    converged: bool
    termination: str
    cost_history: list = field(default_factory=list)


def robust_weights(sq_norms, config: SolverConfig):
    """Per-block loss values rho(s) and first derivatives rho'(s)."""
    if config.loss == "none":
        return sq_norms, np.ones_like(sq_norms)
    d2 = config.huber_delta ** 2
    inside = sq_norms <= d2
    root = np.sqrt(np.maximum(sq_norms, d2))
    rho = np.where(inside, sq_norms, 2.0 * config.huber_delta * root - d2)
    w = np.where(inside, 1.0, config.huber_delta / root)
    return rho, w


def _gauss_newton_step(A, g):
    # tiny ridge keeps gauge directions (zero curvature, zero gradient) at zero
    scale = max(float(np.max(np.diag(A))), 1e-300)
    Areg = A + (1e-12 * scale) * np.eye(len(g))
    try:
        c = scipy.linalg.cho_factor(Areg, check_finite=False)
        return scipy.linalg.cho_solve(c, -g, check_finite=False)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, -g, rcond=None)[0]


def dogleg_step(A, g, radius):
    """Powell dogleg step for the model g.h + 1/2 h.A.h within |h| <= radius."""
    h_gn = _gauss_newton_step(A, g)
    n_gn = np.linalg.norm(h_gn)
    if n_gn <= radius:
        return h_gn, "gauss-newton"
    gg = float(g @ g)
    gAg = float(g @ A @ g)
    if gAg <= 0:
        return -radius * g / np.sqrt(gg), "steepest"
    h_sd = -(gg / gAg) * g
    n_sd = np.linalg.norm(h_sd)
    if n_sd >= radius:
        return (radius / n_sd) * h_sd, "steepest"
    # largest beta in [0, 1] with |h_sd + beta (h_gn - h_sd)| = radius
    d = h_gn - h_sd
    a = float(d @ d)
    b = 2.0 * float(h_sd @ d)
    c = n_sd * n_sd - radius * radius
    beta = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return h_sd + beta * d, "dogleg"


def solve(problem, x0, config: SolverConfig) -> SolveResult:
    x = x0
    cost, A, g = problem.linearize(x)
    if not np.isfinite(cost):
        raise SolverDiverged("initial cost is not finite")
    initial_cost = cost
    history = [cost]
    radius = config.initial_trust_radius
    termination = "max-iterations"
    converged = False
    it = 0
    while it < config.max_iterations:
        if cost <= ZERO_COST:
            termination, converged = "zero-cost", True
            break
        if np.max(np.abs(g)) <= config.gradient_tolerance:
            termination, converged = "gradient", True
            break
        it += 1
        h, kind = dogleg_step(A, g, radius)
        hn = np.linalg.norm(h)
        if hn <= config.parameter_tolerance * (problem.norm(x) + config.parameter_tolerance):
            termination, converged = "parameter", True
            break
        predicted = -(float(g @ h) + 0.5 * float(h @ A @ h))
        x_new = problem.retract(x, h)
        new_cost = problem.cost(x_new)
        if not np.isfinite(new_cost):
            radius *= 0.25
            if radius < 1e-32:
                raise SolverDiverged("cost became non-finite")
            continue
        actual = cost - new_cost
        rho = actual / predicted if predicted > 0 else -1.0
        log.debug("iter %d %s cost %.6g -> %.6g rho %.3g radius %.3g",
                  it, kind, cost, new_cost, rho, radius)
        if rho > 1e-3 and actual > 0:
            x = x_new
            rel = actual / cost
            cost, A, g = problem.linearize(x)
            history.append(cost)
            radius = max(radius, 3.0 * hn) if rho > 0.75 else radius
            if rho < 0.25:
                radius = 0.5 * hn
            if rel <= config.function_tolerance:
                termination, converged = "function", True
                break
        else:
            radius = 0.25 * hn
            if radius <= 1e-14 * (problem.norm(x) + 1e-14):
                termination, converged = "parameter", True
                break
    return SolveResult(x=x, cost=cost, initial_cost=initial_cost, iterations=it,
                       converged=converged, termination=termination, cost_history=history)
