"""Dense Hermitian linear algebra for small density operators.

Operators are plain complex ``numpy`` arrays. The ``check_*`` helpers
validate them the way ``sklearn.utils.validation`` validates arrays: they
return a clean copy or raise ``ValueError`` with a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
PSD_ATOL = 1e-12
# modulus below which an eigenvector component is ignored when fixing its phase
PHASE_ATOL = 1e-8


class NotHermitianError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


def check_square(X, name="matrix"):
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} has non-finite entries")
    return X


def max_asymmetry(X):
    X = np.asarray(X)
    return float(np.max(np.abs(X - X.conj().T)))


def check_hermitian(X, atol=HERMITIAN_ATOL, name="operator"):
    """Validate ``X`` as Hermitian and return its exactly-Hermitian part."""
    X = check_square(X, name)
    asym = max_asymmetry(X)
    if asym > atol:
        raise NotHermitianError(
            f"{name} is not Hermitian: max |X[j,k] - conj(X[k,j])| = {asym:.3e} > {atol:.1e}"
        )
    return (X + X.conj().T) / 2


def check_density(rho, name="rho"):
    """Validate a density operator: Hermitian, unit trace, PSD."""
    rho = check_hermitian(rho, name=name)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > TRACE_ATOL:
        raise ValueError(f"{name} has trace {tr!r}, expected 1 within {TRACE_ATOL:.0e}")
    lam_min = float(np.linalg.eigvalsh(rho)[0])
    if lam_min < -PSD_ATOL:
        raise NotPSDError(f"{name} has eigenvalue {lam_min:.3e} < -{PSD_ATOL:.0e}")
    return rho


def default_rank_tol(eigenvalues):
    return 1e-12 * max(float(np.max(eigenvalues)), 1.0)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigensystem of a Hermitian operator, ascending eigenvalues.

    ``eigenvectors[:, j]`` is the eigenvector of ``eigenvalues[j]``.
    ``kernel`` holds the indices whose eigenvalue is at most ``rank_tol``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank_tol: float

    @property
    def dim(self):
        return len(self.eigenvalues)

    @property
    def kernel(self):
        return tuple(int(k) for k in np.flatnonzero(self.eigenvalues <= self.rank_tol))

    @property
    def rank(self):
        return self.dim - len(self.kernel)

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def to_eigenbasis(self, X):
        V = self.eigenvectors
        return V.conj().T @ X @ V

    def from_eigenbasis(self, X):
        V = self.eigenvectors
        return V @ X @ V.conj().T


def _normalize_phase(V):
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > PHASE_ATOL)
        if idx.size:
            first = col[idx[0]]
            V[:, j] = col * (abs(first) / first)
    return V


def _tie_key(vec):
    # index of first significant component, then the components themselves
    idx = np.flatnonzero(np.abs(vec) > PHASE_ATOL)
    lead = int(idx[0]) if idx.size else len(vec)
    return (lead,) + tuple(-x for pair in zip(vec.real, vec.imag) for x in pair)


def eigh(H, rank_tol=None, tie_tol=1e-12):
    """Deterministic Hermitian eigendecomposition.

    Eigenvalues ascend. Each eigenvector is phase-fixed so its first
    component with modulus above 1e-8 is positive real; within a group of
    tied eigenvalues, vectors are ordered by the position of that component
    and then by their entries (largest first).
    """
    H = check_hermitian(H)
    w, V = np.linalg.eigh(H)
    V = _normalize_phase(V)
    order = list(range(len(w)))
    scale = max(1.0, float(np.max(np.abs(w))))
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[start] <= tie_tol * scale:
            stop += 1
        if stop - start > 1:
            group = sorted(range(start, stop), key=lambda j: _tie_key(V[:, j]))
            order[start:stop] = group
        start = stop
    w = w[order]
    V = V[:, order]
    if rank_tol is None:
        rank_tol = default_rank_tol(w)
    return SpectralDecomposition(w, V, float(rank_tol))


def eigen_noise_floor(H):
    """Rounding scale of computed eigenvalues of ``H``.

    The solver's rotations perturb eigenvalues by a few ulps of the
    off-diagonal mass they annihilate; an exactly diagonal input is exact.
    """
    off = H - np.diag(np.diag(H))
    return 4 * H.shape[0] * np.finfo(float).eps * float(np.linalg.norm(off))


def _psd_eigh(rho):
    rho = check_hermitian(rho, name="rho")
    w, V = np.linalg.eigh(rho)
    if w[0] < -PSD_ATOL:
        raise NotPSDError(f"rho has eigenvalue {w[0]:.3e} < -{PSD_ATOL:.0e}")
    # eigenvalues at rounding level are zeros; their square roots would not be
    return np.where(w > eigen_noise_floor(rho), w, 0.0), V


def mat_sqrt(rho):
    """Principal square root of a PSD operator (tiny negative eigenvalues clamped)."""
    w, V = _psd_eigh(rho)
    return (V * np.sqrt(w)) @ V.conj().T


def schatten_norm(X, p=2):
    if p < 1:
        raise ValueError(f"Schatten norm needs p >= 1, got {p}")
    X = np.asarray(X, dtype=complex)
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix has non-finite entries")
    s = np.linalg.svd(X, compute_uv=False)
    if np.isinf(p):
        return float(s.max(initial=0.0))
    return float(np.sum(s**p) ** (1.0 / p))


def fidelity(rho, sigma):
    """Uhlmann fidelity ``||sqrt(rho) sqrt(sigma)||_1`` (root convention, in [0, 1])."""
    return schatten_norm(mat_sqrt(rho) @ mat_sqrt(sigma), 1)


def parallel_amplitudes(rho, sigma):
    """Amplitudes ``A = sqrt(rho)``, ``B = sqrt(sigma) V`` with ``A^+ B >= 0``.

    ``V`` is the unitary from the polar decomposition of ``sqrt(sigma) sqrt(rho)``;
    ``||B - A||_2`` is then the Bures distance.
    """
    A = mat_sqrt(rho)
    root_sigma = mat_sqrt(sigma)
    W, _, Zh = np.linalg.svd(A @ root_sigma)
    return A, root_sigma @ (Zh.conj().T @ W.conj().T)


def bures_distance_sq(rho, sigma):
    """``2 (1 - fidelity)``, evaluated as ``||B - A||_2^2`` over parallel
    amplitudes so that nearby states keep their relative precision."""
    A, B = parallel_amplitudes(rho, sigma)
    return float(np.sum(np.abs(B - A) ** 2))


def bhattacharyya(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.sum(np.sqrt(p * q)))
