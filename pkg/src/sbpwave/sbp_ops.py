"""Summation-by-parts operators for the second derivative on equidistant grids.

An operator bundle represents

    D = H^{-1} (-A - b_1 e_1 d_1^T + b_n e_n d_n^T)

where ``H`` is a positive diagonal quadrature (carrying one factor of ``h``),
``A`` is symmetric positive semidefinite (carrying ``1/h``) and ``d_1``,
``d_n`` are one-sided first-derivative stencils (carrying ``1/h``).  The
endpoint coefficient values ``b_1`` and ``b_n`` are kept separate from the
stencils.

Coefficient tables live in ``sbpwave/data`` as plain text.  Constant
coefficient tables give the boundary rows of ``h A`` and the interior row of
``h^2 D``.  Variable coefficient tables give ``h A(b) = sum_j b_j K_j`` where
each ``K_j`` is an interior piece shifted to node ``j`` plus, for the first
few nodes, a correction block at the boundary (mirrored at the right end).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np
import scipy.sparse as sp

ORDERS = {1: (2, 1), 2: (4, 2), 3: (6, 3)}


@dataclass(frozen=True)
class Grid1D:
    """Equidistant grid with ``n`` points on ``[x_lo, x_hi]``."""

    n: int
    x_lo: float = 0.0
    x_hi: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs at least two points, got n={self.n}")
        if not self.x_hi > self.x_lo:
            raise ValueError("grid interval must satisfy x_hi > x_lo")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        x = self.x_lo + self.h * np.arange(self.n)
        x[-1] = self.x_hi
        return x

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo


@dataclass(frozen=True)
class CoefficientProfile:
    """Squared wave speed ``b(x)``, either one constant or samples on the grid."""

    value: float | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if (self.value is None) == (self.values is None):
            raise ValueError("give exactly one of value or values")
        if self.value is not None and not self.value > 0:
            raise ValueError(f"coefficient must be positive, got {self.value}")
        if self.values is not None:
            arr = np.asarray(self.values, dtype=float)
            if arr.ndim != 1 or not np.all(arr > 0):
                raise ValueError("sampled coefficient must be a positive 1D array")
            object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, value: float) -> "CoefficientProfile":
        return cls(value=float(value))

    @classmethod
    def sampled(cls, values) -> "CoefficientProfile":
        return cls(values=np.asarray(values, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.value is not None

    def sample(self, n: int) -> np.ndarray:
        if self.value is not None:
            return np.full(n, self.value)
        if self.values.size != n:
            raise ValueError(
                f"coefficient profile has {self.values.size} samples, grid has {n}"
            )
        return self.values

    @property
    def max(self) -> float:
        return self.value if self.value is not None else float(self.values.max())


@dataclass(frozen=True)
class SbpOps:
    """Operator bundle ``(H, A, d1, dn, b1, bn)`` of half-order ``p``."""

    p: int
    grid: Grid1D
    H: np.ndarray
    A: sp.csr_matrix
    d1: np.ndarray
    dn: np.ndarray
    b1: float
    bn: float
    coeff: np.ndarray | None = None
    variable: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def order(self) -> tuple[int, int]:
        return ORDERS[self.p]

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def e1(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[0] = 1.0
        return e

    @property
    def en(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[-1] = 1.0
        return e

    @property
    def HD(self) -> sp.csr_matrix:
        """The product ``H D`` assembled from its decomposition."""
        if "HD" not in self._cache:
            n = self.n
            bnd = sp.csr_matrix(
                (np.concatenate([-self.b1 * self.d1, self.bn * self.dn]),
                 (np.concatenate([np.zeros(n, int), np.full(n, n - 1)]),
                  np.concatenate([np.arange(n), np.arange(n)]))),
                shape=(n, n),
            )
            hd = (-self.A + bnd).tocsr()
            hd.eliminate_zeros()
            self._cache["HD"] = hd
        return self._cache["HD"]

    @property
    def D(self) -> sp.csr_matrix:
        """Second-derivative operator ``H^{-1}(-A - b1 e1 d1^T + bn en dn^T)``."""
        if "D" not in self._cache:
            self._cache["D"] = sp.diags(1.0 / self.H) @ self.HD
        return self._cache["D"]


# ----------------------------------------------------------------------------
# coefficient tables

def _parse_number(tok: str) -> float:
    if "/" in tok:
        return float(Fraction(tok))
    return float(tok)


@functools.lru_cache(maxsize=None)
def load_table(name: str) -> dict[str, np.ndarray]:
    """Read one coefficient table from the package data directory."""
    text = resources.files("sbpwave").joinpath("data").joinpath(name).read_text()
    sections: dict[str, list[list[float]]] = {}
    current = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            current = line.strip("[]")
            sections[current] = []
            continue
        sections[current].append([_parse_number(t) for t in line.split()])
    out = {}
    for key, rows in sections.items():
        width = max(len(r) for r in rows)
        arr = np.zeros((len(rows), width))
        for i, r in enumerate(rows):
            arr[i, : len(r)] = r
        out[key] = arr
    return out


def _check_p(p: int) -> None:
    if p not in ORDERS:
        raise ValueError(f"unsupported half-order p={p}; choose from 1, 2, 3")


def min_points(p: int, variable: bool = False) -> int:
    """Smallest grid size for which the two boundary closures do not overlap."""
    _check_p(p)
    if variable:
        tab = load_table(f"variable_p{p}.txt")
        width = max(tab[k].shape[0] for k in tab if k.startswith("corner"))
    else:
        tab = load_table(f"constant_p{p}.txt")
        width = tab["block"].shape[0]
    return max(2 * width, 2 * tab["H"].shape[0], 2 * p + 1)


def _quadrature_and_stencil(p: int, grid: Grid1D, table: dict) -> tuple:
    n, h = grid.n, grid.h
    w = np.ones(n)
    hb = table["H"][:, 0]
    w[: hb.size] = hb
    w[n - hb.size:] = hb[::-1]
    d1c = table["d1"][0]
    d1 = np.zeros(n)
    d1[: d1c.size] = d1c / h
    dn = -d1[::-1].copy()
    return h * w, d1, dn


def _check_grid(p: int, grid: Grid1D, variable: bool) -> None:
    need = min_points(p, variable)
    if grid.n < need:
        raise ValueError(
            f"grid with n={grid.n} is too small for the order-{2 * p} closure "
            f"(need n >= {need})"
        )


def build_constant_ops(p: int, grid: Grid1D, b: float = 1.0) -> SbpOps:
    """Constant-coefficient operator of half-order ``p`` scaled by ``b``."""
    _check_p(p)
    if not b > 0:
        raise ValueError(f"coefficient must be positive, got {b}")
    _check_grid(p, grid, variable=False)
    tab = load_table(f"constant_p{p}.txt")
    n, h = grid.n, grid.h
    stencil = tab["stencil"][0]
    block = tab["block"]
    nb = block.shape[0]

    K = sp.diags(
        [-stencil[k] * np.ones(n - abs(k - p)) for k in range(2 * p + 1)],
        [k - p for k in range(2 * p + 1)],
        shape=(n, n),
        format="lil",
    )
    width = block.shape[1]
    for i in range(nb):
        for j in range(width):
            K[i, j] = block[i, j]
            K[j, i] = block[i, j]
            K[n - 1 - i, n - 1 - j] = block[i, j]
            K[n - 1 - j, n - 1 - i] = block[i, j]
    A = (b / h) * K.tocsr()
    A.eliminate_zeros()
    H, d1, dn = _quadrature_and_stencil(p, grid, tab)
    return SbpOps(p=p, grid=grid, H=H, A=A, d1=d1, dn=dn, b1=float(b), bn=float(b),
                  coeff=np.full(n, float(b)), variable=False)


def variable_stiffness(p: int, bvals: np.ndarray) -> sp.csr_matrix:
    """Assemble ``h A(b)`` from the interior piece and the boundary corrections."""
    tab = load_table(f"variable_p{p}.txt")
    n = bvals.size
    kint = tab["interior"]
    m = 2 * p + 1
    rows, cols, vals = [], [], []
    j = np.arange(n)
    for a in range(m):
        for c in range(m):
            if kint[a, c] == 0.0:
                continue
            ra, rc = j + a - p, j + c - p
            ok = (ra >= 0) & (ra < n) & (rc >= 0) & (rc < n)
            rows.append(ra[ok])
            cols.append(rc[ok])
            vals.append(kint[a, c] * bvals[ok])
    for key, blk in tab.items():
        if not key.startswith("corner"):
            continue
        jj = int(key.split()[1])
        r, c = np.nonzero(blk)
        coef = blk[r, c]
        rows += [r, n - 1 - r]
        cols += [c, n - 1 - c]
        vals += [coef * bvals[jj], coef * bvals[n - 1 - jj]]
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    K.sum_duplicates()
    # enforce exact symmetry of the stored matrix
    K = ((K + K.T) * 0.5).tocsr()
    K.eliminate_zeros()
    return K


def build_variable_ops(p: int, grid: Grid1D, b: CoefficientProfile) -> SbpOps:
    """Variable-coefficient operator approximating ``d/dx (b(x) d/dx)``."""
    _check_p(p)
    if not isinstance(b, CoefficientProfile):
        b = CoefficientProfile.sampled(b)
    _check_grid(p, grid, variable=True)
    bvals = b.sample(grid.n)
    tab = load_table(f"variable_p{p}.txt")
    A = variable_stiffness(p, bvals) / grid.h
    H, d1, dn = _quadrature_and_stencil(p, grid, tab)
    return SbpOps(p=p, grid=grid, H=H, A=A, d1=d1, dn=dn,
                  b1=float(bvals[0]), bn=float(bvals[-1]), coeff=bvals.copy(), variable=True)


def sbp_residual(ops: SbpOps) -> float:
    """Relative max-norm defect of ``H D + A + b1 e1 d1^T - bn en dn^T``."""
    n = ops.n
    M = sp.diags(ops.H) @ ops.D + ops.A
    M = M.toarray()
    M[0, :] += ops.b1 * ops.d1
    M[n - 1, :] -= ops.bn * ops.dn
    return float(np.abs(M).max() / abs(ops.A).max())


@dataclass(frozen=True)
class NullspaceReport:
    A1_norm: float
    second_smallest_eig: float
    smallest_eig: float
    near_zero_count: int

    @property
    def ok(self) -> bool:
        return self.near_zero_count == 1 and self.second_smallest_eig > 0


def nullspace_rank_check(ops: SbpOps, rel_tol: float = 1e-12) -> NullspaceReport:
    """Dense check that ``A`` annihilates constants and has rank ``n - 1``."""
    if ops.n > 2000:
        raise ValueError("dense eigensolve limited to n <= 2000")
    A = ops.A.toarray()
    ev = np.linalg.eigvalsh(A)
    scale = np.abs(ev).max()
    return NullspaceReport(
        A1_norm=float(np.linalg.norm(A @ np.ones(ops.n))),
        second_smallest_eig=float(ev[1]),
        smallest_eig=float(ev[0]),
        near_zero_count=int(np.sum(np.abs(ev) < rel_tol * scale)),
    )


def interior_characteristic_roots(p: int = 2) -> np.ndarray:
    """Roots of the characteristic polynomial of the interior stencil.

    The polynomial is palindromic, so it is reduced with ``mu = lam + 1/lam``
    and each quadratic ``lam^2 - mu lam + 1`` is solved in closed form.  This
    returns the double root at one exactly instead of a perturbed pair.
    """
    if p != 2:
        raise ValueError("characteristic roots are provided for p=2 only")
    c = -load_table("constant_p2.txt")["stencil"][0]
    # c0 (lam^2 + lam^-2) + c1 (lam + lam^-1) + c2 = c0 mu^2 + c1 mu + (c2 - 2 c0)
    mus = np.roots([c[0], c[1], c[2] - 2 * c[0]])
    roots = []
    for mu in np.sort(mus.real):
        disc = mu * mu - 4.0
        if abs(disc) < 1e-12:
            roots += [1.0 if mu > 0 else -1.0] * 2
        else:
            s = np.sqrt(disc)
            big = (mu + np.sign(mu) * s) / 2
            roots += [big, 1.0 / big]
    return np.sort(np.array(roots))


def characteristic_polynomial(p: int = 2) -> np.ndarray:
    """Coefficients (highest degree first) of the interior characteristic polynomial."""
    if p != 2:
        raise ValueError("characteristic roots are provided for p=2 only")
    return -load_table("constant_p2.txt")["stencil"][0]
