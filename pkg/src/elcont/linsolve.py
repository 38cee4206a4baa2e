"""Sparse direct solves, bordered systems, determinant signs and small eigenvalues."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_RTOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    """A pivot fell below the singularity threshold."""


class BorderedSingularError(SingularMatrixError):
    """The bordered matrix itself is singular."""


def _as_csc(A):
    if sp.issparse(A):
        return sp.csc_matrix(A, dtype=float)
    return sp.csc_matrix(np.asarray(A, dtype=float))


def _perm_parity(perm):
    perm = np.asarray(perm)
    seen = np.zeros(len(perm), dtype=bool)
    parity = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            parity = -parity
    return parity


class LuFactorization:
    """Sparse LU of a square matrix, reusable for several right-hand sides."""

    def __init__(self, A):
        A = _as_csc(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = A.shape
        self.scale = float(abs(A).max()) if A.nnz else 0.0
        self.singular = False
        self._lu = None
        if self.scale == 0.0:
            self.singular = True
            return
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError:
            self.singular = True
            return
        d = self._lu.U.diagonal()
        self.pivots = d
        if np.any(np.abs(d) < PIVOT_RTOL * self.scale) or not np.all(np.isfinite(d)):
            self.singular = True

    def det_sign(self):
        if self.singular:
            return 0
        s = _perm_parity(self._lu.perm_r) * _perm_parity(self._lu.perm_c)
        return int(s * np.prod(np.sign(self.pivots)))

    def solve(self, b):
        if self.singular:
            raise SingularMatrixError("matrix is numerically singular")
        return self._lu.solve(np.asarray(b, dtype=float))


def lu_solve(A, b):
    """Solve ``A x = b``; raises ``SingularMatrixError`` for singular ``A``."""
    return LuFactorization(A).solve(b)


def det_sign(A):
    """Sign of det(A) in {-1, 0, +1} from the LU pivots and permutation parity."""
    return LuFactorization(A).det_sign()


def solve_bordered(A, col, row, corner, rhs, lu=None):
    """Solve ``[[A, col], [row^T, corner]] z = rhs`` by block elimination.

    Two solves with ``A`` and a scalar Schur complement, followed by one step
    of iterative refinement on the full bordered residual. When ``A`` itself
    is singular (e.g. at a fold) the assembled bordered matrix is factored
    directly instead.
    """
    A = sp.csc_matrix(A) if sp.issparse(A) else _as_csc(A)
    n = A.shape[0]
    col = np.asarray(col, dtype=float)
    row = np.asarray(row, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (n + 1,):
        raise ValueError("rhs must have length n + 1")
    lu = LuFactorization(A) if lu is None else lu

    def apply(z):
        return np.concatenate([A @ z[:n] + col * z[n], [row @ z[:n] + corner * z[n]]])

    if not lu.singular:
        w = lu.solve(col)
        schur = corner - row @ w
        scale = abs(corner) + np.linalg.norm(row) * np.linalg.norm(w)
        if abs(schur) > 1e-13 * max(scale, 1e-300):

            def block(r):
                x1 = lu.solve(r[:n])
                y = (r[n] - row @ x1) / schur
                return np.concatenate([x1 - y * w, [y]])

            z = block(rhs)
            z += block(rhs - apply(z))
            return z
    B = sp.bmat([[A, sp.csc_matrix(col.reshape(-1, 1))], [sp.csc_matrix(row.reshape(1, -1)), sp.csc_matrix([[corner]])]], format="csc")
    full = LuFactorization(B)
    if full.singular:
        raise BorderedSingularError("bordered matrix is singular")
    z = full.solve(rhs)
    z += full.solve(rhs - apply(z))
    return z


def bordered_matrix(A, col, row, corner):
    return sp.bmat(
        [[sp.csc_matrix(A), sp.csc_matrix(np.reshape(col, (-1, 1)))], [sp.csc_matrix(np.reshape(row, (1, -1))), sp.csc_matrix([[corner]])]],
        format="csc",
    )


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    k: int
    converged: np.ndarray

    @property
    def n_negative(self):
        return int(np.sum(self.eigenvalues < 0))


def lower_spectrum_bound(A, M):
    """Lower bound for the generalized eigenvalues of (A, M) for P1-type mass matrices.

    Gershgorin bound ``g`` of D^-1/2 A D^-1/2 with D the row-summed (lumped)
    mass; since D/4 <= M <= D for linear triangles, lambda >= g when g >= 0
    and lambda >= 4 g otherwise.
    """
    A = sp.csr_matrix(A)
    d = np.asarray(abs(sp.csr_matrix(M)).sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s) @ A @ sp.diags(s)
    diag = S.diagonal()
    off = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(diag)
    g = float(np.min(diag - off))
    return g if g >= 0 else 4.0 * g


def eigs_generalized(A, M, k, sigma=None, tol=0.0, maxiter=None):
    """The ``k`` smallest eigenpairs of the symmetric pencil ``A psi = lambda M psi``.

    Shift-invert Lanczos about ``sigma`` (default: one below a guaranteed lower
    bound of the spectrum), so the eigenvalues nearest the shift are the
    smallest ones. Eigenvectors are M-orthonormal.
    """
    A = sp.csc_matrix(A)
    M = sp.csc_matrix(M)
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if k >= n - 1 or n <= 16:
        w, v = sla.eigh(A.toarray(), M.toarray())
        return EigenResult(w[:k], v[:, :k], k, np.ones(k, dtype=bool))
    if sigma is None:
        sigma = lower_spectrum_bound(A, M) - 1.0
    ncv = min(n, max(2 * k + 1, k + 20))
    # fixed start vector: results do not depend on earlier ARPACK calls
    v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w, v = spla.eigsh(A, k=k, M=M, sigma=sigma, which="LM", ncv=ncv, tol=tol, maxiter=maxiter, v0=v0)
        converged = np.ones(k, dtype=bool)
    except spla.ArpackNoConvergence as exc:
        w, v = exc.eigenvalues, exc.eigenvectors
        converged = np.zeros(k, dtype=bool)
        converged[: len(w)] = True
        if len(w) == 0:
            return EigenResult(np.array([]), np.zeros((n, 0)), k, converged)
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    norms = np.sqrt(np.einsum("ij,ij->j", v, M @ v))
    v = v / norms
    return EigenResult(w, v, k, converged[: len(w)] if len(converged) >= len(w) else converged)
