"""Linear algebra kernels: bordered solves, eigenpairs, PCG and incomplete Cholesky."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class AssumptionViolation(ValueError):
    """Raised when a stiffness matrix does not have the constants as its only null vector."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve does not reach its tolerance."""

    def __init__(self, message: str, x: np.ndarray, residual: float):
        super().__init__(message)
        self.x = x
        self.residual = residual


# ----------------------------------------------------------------------------
# bordered system [[A, c], [c^T, 0]]

@dataclass
class AugmentedFactor:
    """Sparse LU factor of the bordered matrix ``[[A, c], [c^T, 0]]``."""

    n: int
    constraint: np.ndarray
    lu: spla.SuperLU

    def solve(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        """Return ``(w, m)`` with ``A w + m c = rhs`` and ``c^T w = 0``."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs has length {rhs.shape[0]}, expected {self.n}")
        tail = np.zeros((1,) + rhs.shape[1:])
        sol = self.lu.solve(np.concatenate([rhs, tail]))
        return sol[: self.n], sol[self.n]


def factor_augmented(A: sp.spmatrix, constraint: np.ndarray | None = None) -> AugmentedFactor:
    """Factor the bordered system once so later solves cost one pair of sweeps.

    ``constraint`` defaults to the vector of ones.  A singular factor means
    that ``A`` has a null space larger than the constants, or one not
    detected by the constraint.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    c = np.ones(n) if constraint is None else np.asarray(constraint, dtype=float)
    col = sp.csr_matrix(c.reshape(-1, 1))
    K = sp.bmat([[A, col], [col.T, None]], format="csc")
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise AssumptionViolation(
            "bordered matrix is singular: A must be positive semidefinite "
            "with a one-dimensional null space spanned by the constants"
        ) from exc
    diag = np.abs(lu.U.diagonal())
    if not np.all(diag > 1e-14 * diag.max()):
        raise AssumptionViolation(
            "bordered matrix is numerically singular: A has a null space "
            "larger than the constants"
        )
    return AugmentedFactor(n=n, constraint=c, lu=lu)


def solve_augmented(f: AugmentedFactor, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    return f.solve(rhs)


# ----------------------------------------------------------------------------
# dense symmetric eigenproblem

@dataclass(frozen=True)
class EigPair:
    Q: np.ndarray
    lam: np.ndarray


def sym_eig(M: np.ndarray) -> EigPair:
    """Eigendecomposition of a symmetric matrix with ascending eigenvalues."""
    M = np.asarray(M, dtype=float)
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() > 1e-13 * scale:
        raise ValueError("matrix is not symmetric")
    lam, Q = sla.eigh(0.5 * (M + M.T))
    return EigPair(Q=Q, lam=lam)


# ----------------------------------------------------------------------------
# preconditioned conjugate gradient

@dataclass
class PcgResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def pcg(
    apply_A: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    rel_tol: float = 1e-8,
    max_iter: int = 500,
    deflate: np.ndarray | None = None,
) -> PcgResult:
    """Preconditioned conjugate gradients for a symmetric semidefinite operator.

    The iteration stops when ``||rhs - A x|| <= rel_tol * ||rhs||`` in the
    Euclidean norm.  When ``deflate`` is given, every correction ``z`` is
    projected as ``z - 1 (deflate . z) / (deflate . 1)`` so the update of the
    iterate has no component along the constants in that inner product.
    ``history`` holds the residual norm of every iterate.
    """
    rhs = np.asarray(rhs, dtype=float)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return PcgResult(x=np.zeros_like(rhs), iterations=0, residual=0.0, history=[0.0])

    if deflate is not None:
        w = np.asarray(deflate, dtype=float)
        wsum = w.sum()

        def project(z):
            return z - (w @ z) / wsum
    else:
        def project(z):
            return z

    M = precond if precond is not None else (lambda r: r.copy())
    r = rhs - apply_A(x)
    rnorm = np.linalg.norm(r)
    history = [rnorm]
    tol = rel_tol * bnorm
    if rnorm <= tol:
        return PcgResult(x=x, iterations=0, residual=rnorm / bnorm, history=history)

    z = project(M(r))
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        q = apply_A(p)
        pq = p @ q
        if pq <= 0.0:
            raise ConvergenceError("operator is not positive on the search direction",
                                   x, rnorm / bnorm)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rnorm = np.linalg.norm(r)
        history.append(rnorm)
        if rnorm <= tol:
            return PcgResult(x=x, iterations=it, residual=rnorm / bnorm, history=history)
        z = project(M(r))
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"PCG did not converge in {max_iter} iterations (relative residual "
        f"{rnorm / bnorm:.3e})", x, rnorm / bnorm)


# ----------------------------------------------------------------------------
# incomplete Cholesky with threshold dropping

@numba.njit(cache=True)
def _ict_factor(n, indptr, indices, data, drop_tol):
    # Left-looking column factorization.  ``data`` holds the lower triangle of
    # the (already boosted) matrix in CSC layout with sorted row indices.
    cap = max(2 * data.size, 16)
    Lp = np.zeros(n + 1, np.int64)
    Li = np.empty(cap, np.int64)
    Lx = np.empty(cap, np.float64)
    nnz = 0
    # per column k: position of the next unused entry (row >= current column)
    nextpos = np.zeros(n, np.int64)
    # linked lists of columns k whose next entry sits in row j
    head = -np.ones(n, np.int64)
    link = -np.ones(n, np.int64)
    work = np.zeros(n)
    mark = -np.ones(n, np.int64)
    pattern = np.empty(n, np.int64)

    for j in range(n):
        npat = 0
        colnorm = 0.0
        for q in range(indptr[j], indptr[j + 1]):
            i = indices[q]
            if i < j:
                continue
            work[i] = data[q]
            colnorm += abs(data[q])
            if mark[i] != j:
                mark[i] = j
                pattern[npat] = i
                npat += 1
        if mark[j] != j:
            mark[j] = j
            work[j] = 0.0
            pattern[npat] = j
            npat += 1
        # subtract contributions from columns k with L[j, k] != 0
        k = head[j]
        while k != -1:
            knext = link[k]
            pos = nextpos[k]
            ljk = Lx[pos]
            for q in range(pos, Lp[k + 1]):
                i = Li[q]
                if mark[i] != j:
                    mark[i] = j
                    work[i] = 0.0
                    pattern[npat] = i
                    npat += 1
                work[i] -= Lx[q] * ljk
            # advance column k to its next row and relink
            pos += 1
            nextpos[k] = pos
            if pos < Lp[k + 1]:
                r = Li[pos]
                link[k] = head[r]
                head[r] = k
            k = knext
        diag = work[j]
        if diag <= 0.0:
            return Lp, Li, Lx, -1 - j
        ljj = np.sqrt(diag)
        thresh = drop_tol * colnorm
        rows = np.sort(pattern[:npat])
        if nnz + npat > cap:
            cap = 2 * (nnz + npat)
            Li2 = np.empty(cap, np.int64)
            Lx2 = np.empty(cap, np.float64)
            Li2[:nnz] = Li[:nnz]
            Lx2[:nnz] = Lx[:nnz]
            Li = Li2
            Lx = Lx2
        start = nnz
        for t in range(npat):
            i = rows[t]
            if i == j:
                Li[nnz] = j
                Lx[nnz] = ljj
                nnz += 1
            else:
                val = work[i] / ljj
                if abs(val) >= thresh:
                    Li[nnz] = i
                    Lx[nnz] = val
                    nnz += 1
            work[i] = 0.0
        Lp[j + 1] = nnz
        # column j becomes available for later columns via its first off-diagonal row
        if nnz - start > 1:
            nextpos[j] = start + 1
            r = Li[start + 1]
            link[j] = head[r]
            head[r] = j
    return Lp, Li[:nnz].copy(), Lx[:nnz].copy(), 0


@numba.njit(cache=True)
def _ic_solve(n, Lp, Li, Lx, r):
    y = r.copy()
    for j in range(n):
        y[j] /= Lx[Lp[j]]
        yj = y[j]
        for q in range(Lp[j] + 1, Lp[j + 1]):
            y[Li[q]] -= Lx[q] * yj
    for j in range(n - 1, -1, -1):
        s = y[j]
        for q in range(Lp[j] + 1, Lp[j + 1]):
            s -= Lx[q] * y[Li[q]]
        y[j] = s / Lx[Lp[j]]
    return y


@dataclass(frozen=True)
class ICholFactor:
    """Incomplete Cholesky factor ``L`` (lower triangular, CSC) of a boosted matrix."""

    L: sp.csc_matrix
    diag_boost: float
    drop_tol: float

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Preconditioner action ``L^{-T} L^{-1} r``."""
        L = self.L
        return _ic_solve(L.shape[0], L.indptr.astype(np.int64), L.indices.astype(np.int64),
                         L.data, np.asarray(r, dtype=float))

    __call__ = apply


def ichol(A: sp.spmatrix, diag_boost: float = 0.0, drop_tol: float = 0.0) -> ICholFactor:
    """Threshold incomplete Cholesky factorization of ``A + diag_boost * diag(A)``.

    Column ``j`` of ``L`` keeps an off-diagonal entry only when its magnitude
    is at least ``drop_tol`` times the 1-norm of the lower part of column
    ``j`` of the boosted matrix.  ``drop_tol = 0`` and ``diag_boost = 0``
    give the complete factor.
    """
    if diag_boost < 0:
        raise ValueError("diag_boost must be nonnegative")
    A = sp.csc_matrix(A, dtype=float)
    n = A.shape[0]
    B = (A + diag_boost * sp.diags(A.diagonal())).tocsc()
    low = sp.tril(B, format="csc")
    low.sort_indices()
    Lp, Li, Lx, status = _ict_factor(n, low.indptr.astype(np.int64),
                                     low.indices.astype(np.int64), low.data, float(drop_tol))
    if status < 0:
        raise ValueError(
            f"incomplete Cholesky broke down at pivot {-1 - status}; "
            "increase diag_boost"
        )
    L = sp.csc_matrix((Lx, Li, Lp), shape=(n, n))
    return ICholFactor(L=L, diag_boost=diag_boost, drop_tol=drop_tol)
