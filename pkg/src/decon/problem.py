"""Decentralized least-squares sensing instances.

Each agent i holds private data (M_i, y_i) with y_i = M_i x + e_i and the
local objective f_i(v) = 0.5 * ||M_i v - y_i||^2. Sensing matrices are
rescaled so every local gradient shares one Lipschitz constant, and the exact
minimizer of the averaged objective is solved from the normal equations at
generation time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import SymMatrix, wnorm_sq
from .mixing import MixingPair

__all__ = [
    "ProblemError",
    "SensingProblem",
    "RscReport",
    "generate",
    "from_data",
    "grad",
    "mu_g",
    "mu_g_value",
    "check_rsc",
    "save_problem",
    "load_problem",
]

_SINGULAR_TOL = 1e-12


class ProblemError(ValueError):
    """Problem generation or evaluation failure."""


@dataclass(frozen=True)
class SensingProblem:
    """Immutable decentralized sensing instance.

    sensing: (n, m, p) per-agent matrices, measurements: (n, m). lipschitz is
    the shared spectral norm of every M_i^T M_i; mu_fbar is the smallest
    eigenvalue of the averaged Hessian (1/n) sum M_i^T M_i.
    """

    n: int
    p: int
    m: int
    sensing: np.ndarray
    measurements: np.ndarray
    noise_std: float
    seed: int | None
    lipschitz: float
    mu_fbar: float
    xstar: np.ndarray
    x_true: np.ndarray | None = None
    Xstar: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.sensing, self.measurements, self.xstar):
            arr.setflags(write=False)
        if self.x_true is not None:
            self.x_true.setflags(write=False)
        stacked = np.tile(self.xstar, (self.n, 1))
        stacked.setflags(write=False)
        object.__setattr__(self, "Xstar", stacked)

    def agent_value(self, i: int, v: np.ndarray) -> float:
        r = self.sensing[i] @ v - self.measurements[i]
        return 0.5 * float(r @ r)

    def agent_grad(self, i: int, v: np.ndarray) -> np.ndarray:
        return self.sensing[i].T @ (self.sensing[i] @ v - self.measurements[i])

    def grad(self, x: np.ndarray) -> np.ndarray:
        return grad(self, x)

    def bar_hessian(self) -> SymMatrix:
        return SymMatrix(
            np.einsum("imp,imq->pq", self.sensing, self.sensing) / self.n,
            name="averaged hessian",
        )


def _solve_normal_equations(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve of the p x p normal equations, eigendecomposition fallback."""
    try:
        c = np.linalg.cholesky(gram)
        return np.linalg.solve(c.T, np.linalg.solve(c, rhs))
    except np.linalg.LinAlgError:
        sym = SymMatrix(gram, name="normal equations")
        return sym.pinv().a @ rhs


def _finalize(n, p, m, sensing, measurements, noise_std, seed, lipschitz, x_true) -> SensingProblem:
    gram = np.einsum("imp,imq->pq", sensing, sensing)
    bar = SymMatrix(gram / n, name="averaged hessian")
    mu_fbar = bar.lambda_min
    if mu_fbar <= _SINGULAR_TOL * max(1.0, bar.lambda_max):
        raise ProblemError(
            f"averaged objective is not strongly convex: lambda_min of the "
            f"averaged hessian is {mu_fbar:.3e} (n*m = {n * m} vs p = {p})"
        )
    rhs = np.einsum("imp,im->p", sensing, measurements)
    xstar = _solve_normal_equations(gram, rhs)
    resid = float(np.linalg.norm(gram @ xstar - rhs))
    if resid > 1e-9 * max(1.0, float(np.linalg.norm(rhs))):
        raise ProblemError(f"normal equations solve residual too large: {resid:.3e}")
    return SensingProblem(
        n=n, p=p, m=m, sensing=sensing, measurements=measurements,
        noise_std=noise_std, seed=seed, lipschitz=lipschitz,
        mu_fbar=mu_fbar, xstar=xstar, x_true=x_true,
    )


def generate(n: int, p: int, m_i: int, noise_std: float = 0.1, seed: int = 0,
             lipschitz: float = 10.0) -> SensingProblem:
    """Gaussian sensing data, rescaled so ||M_i^T M_i|| equals `lipschitz`.

    Reproducible: the same (n, p, m_i, noise_std, seed) give bit-identical
    data. Raises if the averaged Hessian is singular (possible when n*m_i < p).
    """
    if min(n, p, m_i) < 1:
        raise ProblemError(f"need n, p, m_i >= 1, got ({n}, {p}, {m_i})")
    rng = np.random.default_rng(seed)
    x_true = rng.standard_normal(p)
    sensing = rng.standard_normal((n, m_i, p))
    noise = rng.standard_normal((n, m_i)) * noise_std
    for i in range(n):
        gram_i = SymMatrix(sensing[i].T @ sensing[i], name=f"M_{i}^T M_{i}")
        top = gram_i.lambda_max
        if top <= 0.0:
            raise ProblemError(f"agent {i} drew a zero sensing matrix")
        sensing[i] *= np.sqrt(lipschitz / top)
    measurements = np.einsum("imp,p->im", sensing, x_true) + noise
    return _finalize(n, p, m_i, sensing, measurements, noise_std, seed, lipschitz, x_true)


def from_data(sensing: np.ndarray, measurements: np.ndarray, noise_std: float = 0.0,
              seed: int | None = None, lipschitz: float | None = None) -> SensingProblem:
    """Wrap explicit per-agent data (used by tests and problem replay)."""
    sensing = np.array(sensing, dtype=float)
    measurements = np.array(measurements, dtype=float)
    n, m, p = sensing.shape
    if lipschitz is None:
        lipschitz = max(
            SymMatrix(sensing[i].T @ sensing[i], name=f"M_{i}^T M_{i}").lambda_max
            for i in range(n)
        )
    return _finalize(n, p, m, sensing, measurements, noise_std, seed, lipschitz, None)


def grad(prob: SensingProblem, x: np.ndarray) -> np.ndarray:
    """Stacked gradient: row i is M_i^T (M_i x_i - y_i)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.n, prob.p):
        raise ProblemError(f"expected stacked shape {(prob.n, prob.p)}, got {x.shape}")
    residual = np.einsum("imp,ip->im", prob.sensing, x) - prob.measurements
    return np.einsum("imp,im->ip", prob.sensing, residual)


def mu_g_value(mu_fbar: float, lipschitz: float, lam_min_pos_iw: float, eta: float) -> float:
    """Restricted strong convexity modulus of the consensus-penalized objective:

        min( mu_fbar / 2,  mu_fbar^2 * lam_min_pos(I - w) / (mu_fbar^2 + 16 L^2) * eta )
    """
    if eta <= 0.0:
        raise ProblemError(f"eta must be positive, got {eta}")
    second = mu_fbar**2 * lam_min_pos_iw / (mu_fbar**2 + 16.0 * lipschitz**2) * eta
    return min(mu_fbar / 2.0, second)


def mu_g(prob: SensingProblem, mp: MixingPair, eta: float) -> float:
    return mu_g_value(prob.mu_fbar, prob.lipschitz, mp.lam_min_pos_iw, eta)


@dataclass(frozen=True)
class RscReport:
    samples: int
    eta: float
    mu_g: float
    min_slack: float
    violations: int


def check_rsc(prob: SensingProblem, mp: MixingPair, eta: float, samples: int = 1000,
              seed: int = 0) -> RscReport:
    """Sample the restricted strong convexity inequality of the penalized objective.

    For random stacked points x, checks
        <x - x*, grad f(x) - grad f(x*)> + eta ||x - x*||^2_{I-w} >= mu_g ||x - x*||^2.
    Slacks below -1e-9 count as violations (none are expected).
    """
    mg = mu_g(prob, mp, eta)
    rng = np.random.default_rng(seed)
    i_minus_w = np.eye(mp.n) - mp.w.a
    gstar = grad(prob, prob.Xstar)
    scales = (0.1, 1.0, 3.0)
    min_slack = np.inf
    violations = 0
    for s in range(samples):
        delta = rng.standard_normal((prob.n, prob.p)) * scales[s % len(scales)]
        x = prob.Xstar + delta
        lhs = float(np.sum(delta * (grad(prob, x) - gstar))) + eta * wnorm_sq(delta, i_minus_w)
        slack = lhs - mg * float(np.sum(delta * delta))
        min_slack = min(min_slack, slack)
        if slack < -1e-9:
            violations += 1
    return RscReport(samples=samples, eta=eta, mu_g=mg, min_slack=float(min_slack),
                     violations=violations)


def save_problem(prob: SensingProblem, path: str) -> None:
    """JSON dump with enough digits for exact replay."""
    payload = {
        "n": prob.n,
        "p": prob.p,
        "m": prob.m,
        "noise_std": prob.noise_std,
        "seed": prob.seed,
        "lipschitz": prob.lipschitz,
        "sensing": prob.sensing.tolist(),
        "measurements": prob.measurements.tolist(),
        "x_true": None if prob.x_true is None else prob.x_true.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_problem(path: str) -> SensingProblem:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    prob = from_data(
        np.array(payload["sensing"], dtype=float),
        np.array(payload["measurements"], dtype=float),
        noise_std=payload["noise_std"],
        seed=payload["seed"],
        lipschitz=payload["lipschitz"],
    )
    if payload.get("x_true") is not None:
        object.__setattr__(prob, "x_true", np.array(payload["x_true"], dtype=float))
        prob.x_true.setflags(write=False)
    return prob
