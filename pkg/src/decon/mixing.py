"""Mixing-matrix construction and validation.

Builds Metropolis weights on a communication graph, applies the spectral
relaxation map (1+c)W - cI, validates the four-part mixing assumption with
its relaxed spectrum (-5/3, 1], and assembles every derived matrix the
contraction certificates need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .linalg import SymMatrix, pinv_psd

__all__ = [
    "MixingValidationError",
    "MixingPair",
    "DerivedMatrices",
    "metropolis",
    "relax",
    "theta_default",
    "validate",
    "build_derived",
    "dump_matrix_text",
    "parse_matrix_text",
]

# Eigenvalue threshold separating "zero" from "nonzero" in null-space checks;
# mixing weights are O(1) so this is far below any genuine spectral gap.
_NULLSPACE_TOL = 1e-8
# Slack allowed on the semidefinite orderings of the mixing assumption.
_PSD_SLACK = -1e-10
_SPECTRUM_FLOOR = -5.0 / 3.0


class MixingValidationError(ValueError):
    """One or more parts of the mixing assumption failed.

    Carries the full list of named violations so callers can report them all.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class MixingPair:
    """Validated mixing pair (w, w_tilde) with cached spectral metadata.

    theta parametrizes the positive-definite combination
    w_bar = theta * w_tilde + (1 - theta) * I used by the certificates.
    """

    w: SymMatrix
    wt: SymMatrix
    graph: Graph
    theta: float
    lam_min_w: float
    lam_max_w: float
    lam2_w: float
    beta: float
    lam_min_wt: float
    lam_min_pos_iw: float
    lam_max_iw: float

    @property
    def n(self) -> int:
        return self.w.dim


@dataclass(frozen=True)
class DerivedMatrices:
    """Matrices derived from a validated mixing pair.

    wbar  = theta*wt + (1-theta)*I           (positive definite)
    h     = (I + wt)/2                       (positive definite)
    m     = pinv(wt - w)                     (PSD, zero on the consensus line)
    g     = w + I - 2*wt                     (PSD; zero when wt = (I+w)/2)
    mtilde = pinv((I - w)/2) - theta*I       (norm over the disagreement space)
    """

    wbar: SymMatrix
    h: SymMatrix
    m: SymMatrix
    g: SymMatrix
    mtilde: SymMatrix
    theta: float


def metropolis(g: Graph) -> SymMatrix:
    """Metropolis constant edge weights: w_ij = 1/(1 + max(deg_i, deg_j))."""
    n = g.n
    w = np.zeros((n, n))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(g.degrees[i], g.degrees[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return SymMatrix(w, name="metropolis")


def relax(w: SymMatrix, factor: float) -> SymMatrix:
    """Spectral relaxation w_new = (1+c)w - cI.

    Preserves eigenvectors and maps each eigenvalue lam to (1+c)lam - c; the
    factor c = 1/3 sends the classical spectrum (-1, 1] onto (-5/3, 1].
    """
    if factor < 0.0:
        raise MixingValidationError([f"relax factor must be >= 0, got {factor}"])
    if factor == 0.0:
        return w
    lam_min, lam_max = w.lambda_min, w.lambda_max
    if lam_min <= -1.0 - 1e-10 or lam_max > 1.0 + 1e-10:
        raise MixingValidationError(
            [f"relax input spectrum [{lam_min:.6f}, {lam_max:.6f}] outside (-1, 1]"]
        )
    new = SymMatrix((1.0 + factor) * w.a - factor * np.eye(w.dim), name=f"relaxed({w.name})")
    if new.lambda_min <= _SPECTRUM_FLOOR + 1e-12:
        raise MixingValidationError(
            [f"relaxed spectrum too wide: lambda_min = {new.lambda_min:.6f} <= -5/3"]
        )
    return new


def theta_default(lam_min_wt: float) -> float:
    """Upper endpoint of the admissible theta interval (3/4, min{1/(1-lam_min), 1}].

    Note the endpoint itself makes w_bar singular when lam_min_wt < 0; callers
    wanting a working certificate should stay strictly inside (see `validate`).
    """
    upper = 1.0 if lam_min_wt >= 1.0 else min(1.0, 1.0 / (1.0 - lam_min_wt))
    if upper <= 0.75:
        raise MixingValidationError(
            [f"admissible theta interval (3/4, {upper:.6f}] is empty: "
             f"lambda_min(w_tilde) = {lam_min_wt:.6f} is too negative"]
        )
    return upper


def _default_theta_inside(lam_min_wt: float) -> float:
    """Operating theta: sits strictly inside the admissible interval.

    With a positive definite w_tilde the closed endpoint 1 is safe; otherwise
    the midpoint of (3/4, upper) keeps w_bar positive definite.
    """
    upper = theta_default(lam_min_wt)
    if lam_min_wt > _NULLSPACE_TOL:
        return upper
    return 0.5 * (0.75 + upper)


def validate(w: SymMatrix, wt: SymMatrix, g: Graph, theta: float | None = None) -> MixingPair:
    """Check all four parts of the mixing assumption and package the pair.

    Raises MixingValidationError listing every violated part. The null-space
    conditions are checked spectrally: the disagreement matrices wt - w and
    I - w must kill the all-ones vector and nothing else.
    """
    n = g.n
    violations: list[str] = []
    if w.dim != n or wt.dim != n:
        raise MixingValidationError(
            [f"dimension mismatch: graph has {n} nodes, matrices are {w.dim} and {wt.dim}"]
        )

    # Part 1: zero weight between non-neighbors. Agents are numbered from 1 in
    # messages (node indices stay 0-based internally).
    mask = ~g.adjacency & ~np.eye(n, dtype=bool)
    for name, mat in (("w", w.a), ("w_tilde", wt.a)):
        bad = np.abs(mat[mask])
        if bad.size and bad.max() > 1e-12:
            i, j = [int(t[0]) for t in np.nonzero((np.abs(mat) > 1e-12) & mask)]
            violations.append(
                f"part 1 (decentralized): {name} couples agents {i + 1} and {j + 1} "
                f"(weight {mat[i, j]:.3e}) but they share no edge"
            )

    # Part 2: symmetry (SymMatrix construction symmetrizes, so this is a guard
    # against bypassing the wrapper).
    for name, mat in (("w", w.a), ("w_tilde", wt.a)):
        if not np.array_equal(mat, mat.T):
            violations.append(f"part 2 (symmetry): {name} is not symmetric")

    ones = np.ones((n, 1))
    diff = SymMatrix(wt.a - w.a, name="w_tilde - w")
    i_minus_w = SymMatrix(np.eye(n) - w.a, name="I - w")

    # Part 3: Null(w - w_tilde) = span(1) and (I - w_tilde) 1 = 0.
    resid = float(np.abs(diff.a @ ones).max())
    if resid > _NULLSPACE_TOL:
        violations.append(f"part 3 (null space): (w_tilde - w) 1 has residual {resid:.3e}")
    dw = diff.eigenvalues
    if dw[0] < _PSD_SLACK:
        violations.append(f"part 3 (null space): w_tilde - w has negative eigenvalue {dw[0]:.3e}")
    elif n >= 2 and dw[1] <= _NULLSPACE_TOL:
        violations.append(
            f"part 3 (null space): Null(w - w_tilde) is larger than span(1) "
            f"(second-smallest eigenvalue {dw[1]:.3e})"
        )
    resid = float(np.abs((np.eye(n) - wt.a) @ ones).max())
    if resid > _NULLSPACE_TOL:
        violations.append(f"part 3 (null space): (I - w_tilde) 1 has residual {resid:.3e}")

    # Null(I - w) = span(1) is required by both algorithms (consensus fixed
    # points exist and are unique up to the consensus line).
    resid = float(np.abs(i_minus_w.a @ ones).max())
    if resid > _NULLSPACE_TOL:
        violations.append(f"null space of I - w: (I - w) 1 has residual {resid:.3e}")
    iw_eigs = i_minus_w.eigenvalues
    if n >= 2 and iw_eigs[1] <= _NULLSPACE_TOL:
        violations.append(
            f"null space of I - w: larger than span(1) "
            f"(second-smallest eigenvalue {iw_eigs[1]:.3e})"
        )

    # Part 4: (I+w)/2 >= w_tilde > -I/3 and w_tilde >= w.
    upper_gap = SymMatrix((np.eye(n) + w.a) / 2.0 - wt.a, name="(I+w)/2 - w_tilde")
    if upper_gap.lambda_min < _PSD_SLACK:
        violations.append(
            f"part 4 (spectral): (I+w)/2 - w_tilde has eigenvalue {upper_gap.lambda_min:.3e} < 0"
        )
    lower_gap = wt.lambda_min + 1.0 / 3.0
    if lower_gap < _PSD_SLACK:
        violations.append(
            f"part 4 (spectral): w_tilde + I/3 has eigenvalue {lower_gap:.3e} < 0 "
            f"(lambda_min(w_tilde) = {wt.lambda_min:.6f})"
        )
    if dw[0] < _PSD_SLACK:
        violations.append(f"part 4 (spectral): w_tilde - w has eigenvalue {dw[0]:.3e} < 0")

    if violations:
        raise MixingValidationError(violations)

    lam_min_wt = wt.lambda_min
    if theta is None:
        theta = _default_theta_inside(lam_min_wt)
    else:
        upper = theta_default(lam_min_wt)
        # theta = 3/4 exactly is tolerated when w_tilde is PD (the boundary
        # choice used for stepsize-bound reporting); certificates built from
        # it will report themselves as vacuous.
        lower_ok = theta > 0.75 or (theta == 0.75 and lam_min_wt > _NULLSPACE_TOL)
        if not (lower_ok and theta <= upper + 1e-12):
            raise MixingValidationError(
                [f"theta = {theta} outside the admissible interval (3/4, {upper:.6f}]"]
            )

    w_eigs = w.eigenvalues
    return MixingPair(
        w=w,
        wt=wt,
        graph=g,
        theta=float(theta),
        lam_min_w=float(w_eigs[0]),
        lam_max_w=float(w_eigs[-1]),
        lam2_w=float(w_eigs[-2]) if n >= 2 else float(w_eigs[-1]),
        beta=float(1.0 - w_eigs[-2]) if n >= 2 else 0.0,
        lam_min_wt=float(lam_min_wt),
        lam_min_pos_iw=i_minus_w.lambda_min_pos(),
        lam_max_iw=float(iw_eigs[-1]),
    )


def build_derived(mp: MixingPair) -> DerivedMatrices:
    """Assemble wbar, h, m, g, mtilde for a validated pair and check their signs."""
    n = mp.n
    theta = mp.theta
    eye = np.eye(n)
    wbar = SymMatrix(theta * mp.wt.a + (1.0 - theta) * eye, name="w_bar")
    if wbar.lambda_min <= 1e-12:
        raise MixingValidationError(
            [f"w_bar is not positive definite at theta = {theta} "
             f"(lambda_min = {wbar.lambda_min:.3e}); use a smaller theta"]
        )
    h = SymMatrix((eye + mp.wt.a) / 2.0, name="h")
    if h.lambda_min <= 0.0:
        raise MixingValidationError([f"h = (I + w_tilde)/2 is not PD (lambda_min = {h.lambda_min:.3e})"])
    m = pinv_psd(SymMatrix(mp.wt.a - mp.w.a, name="w_tilde - w"))
    g = SymMatrix(mp.w.a + eye - 2.0 * mp.wt.a, name="g")
    if g.lambda_min < _PSD_SLACK:
        raise MixingValidationError([f"g = w + I - 2 w_tilde has eigenvalue {g.lambda_min:.3e} < 0"])
    half_iw = SymMatrix((eye - mp.w.a) / 2.0, name="(I - w)/2")
    mtilde = SymMatrix(half_iw.pinv().a - theta * eye, name="m_tilde")

    # Identity w_tilde = w_bar - (1-theta)(I - w_tilde), by construction.
    resid = float(np.abs(mp.wt.a - (wbar.a - (1.0 - theta) * (eye - mp.wt.a))).max())
    if resid > 1e-12:
        raise AssertionError(f"w_bar identity violated entrywise by {resid:.3e}")
    # mtilde maps the all-ones vector to -theta * 1.
    ones = np.ones(n)
    resid = float(np.abs(mtilde.a @ ones + theta * ones).max())
    if resid > 1e-10:
        raise AssertionError(f"m_tilde 1 != -theta 1 (residual {resid:.3e})")

    return DerivedMatrices(wbar=wbar, h=h, m=m, g=g, mtilde=mtilde, theta=theta)


def dump_matrix_text(a: SymMatrix | np.ndarray) -> str:
    """One row per line, space-separated, 17 significant digits."""
    arr = a.a if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)
    return "".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in arr)


def parse_matrix_text(text: str, name: str = "matrix") -> SymMatrix:
    rows = [[float(tok) for tok in ln.split()] for ln in text.splitlines() if ln.strip()]
    return SymMatrix(np.array(rows), name=name)
