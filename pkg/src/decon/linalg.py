"""Dense symmetric linear algebra: Jacobi eigendecomposition, PSD pseudo-inverse,
and weighted inner products / squared norms used throughout the package.

Stacked agent iterates are plain float ndarrays of shape (n_agents, dim); only
square symmetric matrices get a wrapper class (`SymMatrix`) so their
eigendecompositions can be computed once and cached.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "EigenConvergenceError",
    "NotPositiveSemidefiniteError",
    "SymMatrix",
    "eig_sym",
    "pinv_psd",
    "wnorm_sq",
    "wdot",
]

# Off-diagonal reduction target (relative to ||A||_F) and sweep cap for Jacobi.
_JACOBI_TOL = 1e-13
_JACOBI_MAX_SWEEPS = 100

# Eigenvalues below rank_tol * lambda_max are treated as exact zeros in pinv.
DEFAULT_RANK_TOL = 1e-10


class EigenConvergenceError(RuntimeError):
    """Jacobi sweeps hit the iteration cap before reducing the off-diagonal mass."""


class NotPositiveSemidefiniteError(ValueError):
    """A matrix required to be PSD has a significantly negative eigenvalue."""


def _off_diagonal_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def _jacobi_eigh(a: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations on a symmetric matrix.

    Returns eigenvalues in ascending order and the matching orthogonal
    eigenvector matrix (columns). Dense and dependency-free; intended for the
    small (n up to a few hundred) matrices this package works with.
    """
    n = a.shape[0]
    if n == 1:
        return a[0, :].copy(), np.ones((1, 1))
    a = a.copy()
    v = np.eye(n)
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return np.zeros(n), v
    threshold = _JACOBI_TOL * fro
    off = _off_diagonal_norm(a)
    for _ in range(_JACOBI_MAX_SWEEPS):
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                app, aqq = a[p, p], a[q, q]
                # Pivot already negligible against its diagonal: zero it and move on.
                guard = 100.0 * abs(apq)
                if abs(app) + guard == abs(app) and abs(aqq) + guard == abs(aqq):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                gap = aqq - app
                if abs(gap) + guard == abs(gap):
                    t = apq / gap
                else:
                    tau = gap / (2.0 * apq)
                    t = 1.0 / (abs(tau) + np.sqrt(1.0 + tau * tau))
                    if tau < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                # Rotation annihilates the pivot pair exactly.
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        off = _off_diagonal_norm(a)
    else:
        raise EigenConvergenceError(
            f"Jacobi eigensolver did not converge on {name!r}: "
            f"off-diagonal norm {off:.3e} after {_JACOBI_MAX_SWEEPS} sweeps "
            f"(target {threshold:.3e})"
        )
    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


class SymMatrix:
    """Dense symmetric matrix with a lazily cached eigendecomposition.

    Symmetry is enforced on construction by averaging with the transpose.
    The entries array is frozen so cached spectral data stays valid.
    """

    def __init__(self, entries, name: str = "matrix"):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"{name!r} must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError(f"{name!r} must have dimension >= 1")
        a = (a + a.T) / 2.0
        assert np.array_equal(a, a.T)
        a.setflags(write=False)
        self.a = a
        self.name = name
        self._eig: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"SymMatrix({self.name!r}, dim={self.dim})"

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthogonal eigenvectors, cached."""
        if self._eig is None:
            w, v = _jacobi_eigh(self.a, self.name)
            scale = max(1.0, float(np.linalg.norm(self.a)))
            recon = float(np.linalg.norm((v * w) @ v.T - self.a))
            ortho = float(np.linalg.norm(v.T @ v - np.eye(self.dim)))
            if recon > 1e-10 * scale or ortho > 1e-10:
                raise EigenConvergenceError(
                    f"eigendecomposition of {self.name!r} failed its residual check: "
                    f"reconstruction {recon:.3e}, orthogonality {ortho:.3e}"
                )
            self._eig = (w, v)
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig()[0]

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def lambda_min_pos(self, rank_tol: float = DEFAULT_RANK_TOL) -> float:
        """Smallest eigenvalue counted as nonzero (PSD matrices)."""
        w = self.eigenvalues
        cutoff = rank_tol * max(abs(w[0]), abs(w[-1]))
        positive = w[w > cutoff]
        if positive.size == 0:
            raise ValueError(f"{self.name!r} has no nonzero eigenvalue above {cutoff:.3e}")
        return float(positive[0])

    def pinv(self, rank_tol: float = DEFAULT_RANK_TOL) -> "SymMatrix":
        """Moore-Penrose pseudo-inverse of a PSD matrix.

        Eigenvalues at or below rank_tol * lambda_max are treated as exact
        zeros; an eigenvalue below -rank_tol * lambda_max means the input was
        not PSD and raises.
        """
        w, v = self.eig()
        lam_max = max(float(w[-1]), 0.0)
        cutoff = rank_tol * lam_max
        if w[0] < -cutoff:
            raise NotPositiveSemidefiniteError(
                f"{self.name!r} is not PSD: smallest eigenvalue {w[0]:.6e} "
                f"below tolerance {-cutoff:.3e}"
            )
        inv_w = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
        return SymMatrix((v * inv_w) @ v.T, name=f"pinv({self.name})")

    def inv(self) -> "SymMatrix":
        """Inverse of a positive definite matrix."""
        w, v = self.eig()
        if w[0] <= _JACOBI_TOL * max(1.0, abs(float(w[-1]))):
            raise NotPositiveSemidefiniteError(
                f"{self.name!r} is not positive definite: lambda_min = {w[0]:.6e}"
            )
        return SymMatrix((v * (1.0 / w)) @ v.T, name=f"inv({self.name})")

    def spectral_map(self, fn, name: str | None = None) -> "SymMatrix":
        """Apply fn to the eigenvalues and rebuild (same eigenvectors)."""
        w, v = self.eig()
        mapped = np.array([fn(x) for x in w], dtype=float)
        return SymMatrix((v * mapped) @ v.T, name=name or f"f({self.name})")

    def sqrt(self) -> "SymMatrix":
        if self.lambda_min < -_JACOBI_TOL * max(1.0, abs(self.lambda_max)):
            raise NotPositiveSemidefiniteError(f"{self.name!r} is not PSD; no real square root")
        return self.spectral_map(lambda x: np.sqrt(max(x, 0.0)), name=f"sqrt({self.name})")

    def isqrt(self) -> "SymMatrix":
        """Inverse square root of a positive definite matrix."""
        if self.lambda_min <= 0.0:
            raise NotPositiveSemidefiniteError(
                f"{self.name!r} is not positive definite: lambda_min = {self.lambda_min:.6e}"
            )
        return self.spectral_map(lambda x: 1.0 / np.sqrt(x), name=f"isqrt({self.name})")


def eig_sym(a: SymMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthogonal eigenvectors of a symmetric matrix."""
    return a.eig()


def pinv_psd(a: SymMatrix, rank_tol: float = DEFAULT_RANK_TOL) -> SymMatrix:
    """Pseudo-inverse of a symmetric PSD matrix, with rank decided by rank_tol."""
    return a.pinv(rank_tol)


def _as_array(h) -> np.ndarray:
    return h.a if isinstance(h, SymMatrix) else np.asarray(h, dtype=float)


def wnorm_sq(x: np.ndarray, h) -> float:
    """Squared weighted norm tr(x^T H x) for an (n, p) stacked array."""
    ha = _as_array(h)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != ha.shape[0]:
        raise ValueError(f"dimension mismatch: x has {x.shape[0]} rows, H is {ha.shape[0]}x{ha.shape[1]}")
    return float(np.sum(x * (ha @ x)))


def wdot(x: np.ndarray, y: np.ndarray, h) -> float:
    """Weighted inner product tr(x^T H y)."""
    ha = _as_array(h)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] != ha.shape[0]:
        raise ValueError(f"dimension mismatch: x has {x.shape[0]} rows, H is {ha.shape[0]}x{ha.shape[1]}")
    return float(np.sum(x * (ha @ y)))
