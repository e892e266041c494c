"""Stokes-Dirichlet eigenpairs on the unit square through the stream function.

In two dimensions a divergence-free velocity with no-slip data is the curl
``(d psi/dy, -d psi/dx)`` of a clamped stream function, and the Stokes
eigenproblem turns into clamped-plate buckling

    Delta^2 psi = -mu Delta psi,   psi = d psi/dn = 0 on the boundary,

which eliminates the pressure.  Discretely we solve the symmetric-definite
pencil ``B psi = mu A psi`` with ``A`` the 5-point ``-Delta_h`` and ``B`` the
13-point clamped biharmonic.

Velocities are formed with one-sided differences on the staggered layout
described in :mod:`stokeslab.grid`.  With ``D`` the forward difference,
``A = Dx^T Dx + Dy^T Dy`` holds exactly, so the discrete kinetic energy of the
curl equals ``h^2 psi^T A psi`` and the discrete divergence of the curl is the
zero operator.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .grid import Grid, ObservationMask

__all__ = [
    "RESOLUTION_CONSTANT",
    "ResolutionError",
    "ResidualError",
    "StokesEigenbasis",
    "assemble_biharmonic",
    "assemble_laplacian",
    "basis_csv",
    "component_gram",
    "curl_operators",
    "divergence_operator",
    "dump_field",
    "forward_difference",
    "mock_sine_basis",
    "resolution_limit",
    "solve_buckling",
    "velocity_laplacian",
]

#: retained modes must satisfy ``mu_m <= RESOLUTION_CONSTANT / h**2``
RESOLUTION_CONSTANT = np.pi**2 / 2
RESIDUAL_TOLERANCE = 1e-8


class ResolutionError(ValueError):
    """The requested basis contains modes too oscillatory for the mesh."""


class ResidualError(ArithmeticError):
    """An eigenpair failed the relative residual check."""


def resolution_limit(grid: Grid) -> float:
    """Largest eigenvalue the mesh is trusted to resolve."""
    return RESOLUTION_CONSTANT / grid.h**2


# ---------------------------------------------------------------------------
# operators


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    """1D ``-d^2/dx^2`` with homogeneous Dirichlet ends."""
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") / h**2


def forward_difference(n: int, h: float) -> sp.csr_matrix:
    """Map ``n`` interior node values to ``n + 1`` midpoint derivatives.

    Row ``r`` evaluates ``(f_{r+1} - f_r) / h`` at the midpoint between node
    ``r`` and node ``r + 1`` (1-based), with zero boundary values, so that
    ``D^T D`` is the Dirichlet second difference.
    """
    rows = np.arange(n + 1)
    main = sp.coo_matrix((np.ones(n), (rows[:n], np.arange(n))), shape=(n + 1, n))
    sub = sp.coo_matrix((-np.ones(n), (rows[1:], np.arange(n))), shape=(n + 1, n))
    return ((main + sub) / h).tocsr()


def assemble_laplacian(grid: Grid) -> sp.csr_matrix:
    """5-point ``-Delta_h`` on interior nodes (SPD), index ``i * N + j``."""
    n = grid.n
    T = _second_difference(n, grid.h)
    eye = sp.identity(n, format="csr")
    return (sp.kron(T, eye) + sp.kron(eye, T)).tocsr()


def _wall_count(n: int) -> np.ndarray:
    w = np.zeros(n)
    w[0] += 1
    w[-1] += 1
    return (w[:, None] + w[None, :]).ravel()


def assemble_biharmonic(grid: Grid) -> sp.csr_matrix:
    """13-point clamped biharmonic.

    Ghost values mirror the first interior row (``psi_ghost = psi_mirror``),
    which enforces the zero normal derivative.  Relative to ``A @ A`` (which
    silently assumes ``Delta psi = 0`` on the wall) each wall adjacent to a
    node adds ``2 / h**4`` to its diagonal.
    """
    A = assemble_laplacian(grid)
    corr = sp.diags(2.0 * _wall_count(grid.n) / grid.h**4)
    return (A @ A + corr).tocsr()


def curl_operators(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse maps ``psi -> u = d psi/dy`` and ``psi -> v = -d psi/dx``.

    ``u`` lands on the ``(N, N + 1)`` family and ``v`` on ``(N + 1, N)``.
    """
    n = grid.n
    D = forward_difference(n, grid.h)
    eye = sp.identity(n, format="csr")
    return sp.kron(eye, D).tocsr(), (-sp.kron(D, eye)).tocsr()


def divergence_operator(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Maps of ``u`` and ``v`` to ``du/dx`` and ``dv/dy`` at cell centres.

    The centres form an ``(N + 1, N + 1)`` array; the divergence of a field is
    ``Du @ u + Dv @ v``.
    """
    n = grid.n
    D = forward_difference(n, grid.h)
    eye = sp.identity(n + 1, format="csr")
    return sp.kron(D, eye).tocsr(), sp.kron(eye, D).tocsr()


def _no_slip_second_difference(n: int, h: float) -> sp.csr_matrix:
    """1D ``d^2/dy^2`` on ``n + 1`` staggered points with walls half a cell out.

    The ghost value is the negated mirror value so the wall value vanishes,
    which puts ``-3`` in the two corner entries.
    """
    m = n + 1
    main = -2 * np.ones(m)
    main[0] = main[-1] = -3
    return sp.diags([np.ones(m - 1), main, np.ones(m - 1)], [-1, 0, 1], format="csr") / h**2


def velocity_laplacian(grid: Grid, component: int = 1) -> sp.csr_matrix:
    """``Delta_h`` (negative semidefinite) acting on one velocity component.

    Along the node axis the component has plain Dirichlet ends; along the
    staggered axis the no-slip condition is imposed by antisymmetric ghosts.
    """
    n, h = grid.n, grid.h
    Tn = -_second_difference(n, h)
    Ts = _no_slip_second_difference(n, h)
    if component == 1:
        return (sp.kron(Tn, sp.identity(n + 1)) + sp.kron(sp.identity(n), Ts)).tocsr()
    if component == 2:
        return (sp.kron(Ts, sp.identity(n)) + sp.kron(sp.identity(n + 1), Tn)).tocsr()
    raise ValueError(f"component must be 1 or 2, got {component}")


# ---------------------------------------------------------------------------
# the eigenbasis


@dataclass(frozen=True, eq=False)
class StokesEigenbasis:
    """Truncated velocity eigenbasis.

    Attributes
    ----------
    grid : Grid
    mu : ndarray, shape (m,)
        Ascending eigenvalues.
    psi : ndarray, shape (N*N, m)
        Stream functions, scaled so the velocities have unit discrete L2 norm.
    e1, e2 : ndarray
        Velocity components as columns, shapes ``(N*(N+1), m)`` and
        ``((N+1)*N, m)``, row-major over their point families.
    residuals : ndarray, shape (m,)
        ``h * ||B psi_j - mu_j A psi_j||_2``.
    stiffness, mass : sparse matrices
        The pencil ``(B, A)`` the pairs were computed from.
    """

    grid: Grid
    mu: np.ndarray
    psi: np.ndarray = field(repr=False)
    e1: np.ndarray = field(repr=False)
    e2: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    stiffness: sp.spmatrix = field(repr=False)
    mass: sp.spmatrix = field(repr=False)
    _grams: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.mu)

    def component(self, c: int) -> np.ndarray:
        if c == 1:
            return self.e1
        if c == 2:
            return self.e2
        raise ValueError(f"component must be 1 or 2, got {c}")

    def velocity(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Mode ``j`` (0-based) as a pair of 2D arrays."""
        g = self.grid
        return self.e1[:, j].reshape(g.shape_of("u")), self.e2[:, j].reshape(g.shape_of("v"))

    def window(self, lam: float) -> np.ndarray:
        """Indices ``j`` with ``mu_j <= lam``."""
        return np.flatnonzero(self.mu <= lam)

    def observation_factor(self, mask: ObservationMask, component: int = 1) -> np.ndarray:
        """Matrix ``F`` with ``F.T @ F`` the masked Gram of one component."""
        sel = mask.component(component).ravel()
        return self.grid.h * self.component(component)[sel]

    def truncated(self, m: int) -> "StokesEigenbasis":
        """The first ``m`` modes as a new basis."""
        if not 1 <= m <= self.m:
            raise ValueError(f"cannot truncate a basis of {self.m} modes to {m}")
        return StokesEigenbasis(
            self.grid, self.mu[:m], self.psi[:, :m], self.e1[:, :m], self.e2[:, :m],
            self.residuals[:m], self.stiffness, self.mass,
        )


def _residuals(grid, B, A, psi, mu) -> np.ndarray:
    R = B @ psi - (A @ psi) * mu
    return grid.h * np.linalg.norm(R, axis=0)


def _from_stream_functions(grid, mu, psi, B, A) -> StokesEigenbasis:
    Cy, Cx = curl_operators(grid)
    e1 = np.asarray(Cy @ psi)
    e2 = np.asarray(Cx @ psi)
    res = _residuals(grid, B, A, psi, mu)
    for arr in (mu, psi, e1, e2, res):
        arr.setflags(write=False)
    return StokesEigenbasis(grid, mu, psi, e1, e2, res, B, A)


def solve_buckling(grid: Grid, m: int, *, check_resolution: bool = True,
                   tol: float = RESIDUAL_TOLERANCE) -> StokesEigenbasis:
    """Lowest ``m`` Stokes eigenpairs through the buckling pencil.

    The pencil is reduced with a Cholesky factorization of ``A`` and solved
    by a dense symmetric eigensolver (LAPACK ``sygvd`` via
    :func:`scipy.linalg.eigh`).

    Raises
    ------
    ValueError
        If ``m`` is not in ``[1, N**2]``.
    ResolutionError
        If ``mu_m`` exceeds :func:`resolution_limit` and ``check_resolution``.
    ResidualError
        If some ``r_j > tol * mu_j``.
    numpy.linalg.LinAlgError
        If the factorization fails.
    """
    if int(m) != m or not 1 <= m <= grid.size:
        raise ValueError(f"m must be an integer in [1, {grid.size}], got {m!r}")
    m = int(m)
    A = assemble_laplacian(grid)
    B = assemble_biharmonic(grid)
    mu, psi = la.eigh(B.toarray(), A.toarray(), subset_by_index=[0, m - 1])
    # eigh returns A-orthonormal vectors; the velocity energy is h^2 psi^T A psi
    psi = psi / grid.h
    # fix the sign so that output is reproducible across runs
    pivot = np.argmax(np.abs(psi), axis=0)
    psi = psi * np.sign(psi[pivot, np.arange(m)])
    if check_resolution and mu[-1] > resolution_limit(grid):
        raise ResolutionError(
            f"mu_{m} = {mu[-1]:.6g} exceeds the resolution limit {resolution_limit(grid):.6g} "
            f"for N={grid.n}; lower m or refine the mesh"
        )
    basis = _from_stream_functions(grid, mu, psi, B, A)
    bad = np.flatnonzero(basis.residuals > tol * mu)
    if bad.size:
        j = bad[0]
        raise ResidualError(
            f"eigenpair {j + 1} has residual {basis.residuals[j]:.3e} > {tol:g} * mu = {tol * mu[j]:.3e}"
        )
    return basis


def mock_sine_basis(grid: Grid, m: int, dtype=np.longdouble) -> StokesEigenbasis:
    """Exact discrete modes for testing residual identities.

    Uses the sine eigenvectors of the 5-point Laplacian ``A`` with stiffness
    ``A @ A``, so ``B psi = mu A psi`` holds with ``mu`` the Laplacian
    eigenvalue.  The velocities are the curls of these modes.

    Any stored eigenvector carries rounding noise of relative size ``eps``,
    which the fourth-order stiffness amplifies by ``~1/h**4``; in float64 this
    puts the residual floor near ``1e-11`` relative at ``N = 32``.  The stream
    functions and the pencil are therefore kept in ``dtype`` (extended
    precision by default, where the platform provides it) while velocities
    and eigenvalues are stored in float64 like any other basis.
    """
    n = grid.n
    h = dtype(1) / dtype(n + 1)
    k = np.arange(1, n + 1, dtype=dtype)
    pi = 4 * np.arctan(dtype(1))
    # 4 sin^2 avoids the cancellation in 2 - 2 cos for low modes
    lam1 = 4 * np.sin(k * pi * h / 2) ** 2 / h**2
    S = np.sin(np.outer(k, k) * pi * h)
    lam = (lam1[:, None] + lam1[None, :]).ravel()
    order = np.argsort(lam, kind="stable")[:m]
    kx, ky = np.unravel_index(order, (n, n))
    psi = np.einsum("ik,jk->ijk", S[:, kx], S[:, ky]).reshape(n * n, m)
    A = _second_difference_pencil(n, h, dtype)
    psi = psi / np.sqrt(h**2 * np.einsum("ik,ik->k", psi, A @ psi))
    mu = np.asarray(lam[order], dtype=float)
    B = (A @ A).tocsr()
    Cy, Cx = curl_operators(grid)
    e1 = np.asarray(Cy @ psi, dtype=float)
    e2 = np.asarray(Cx @ psi, dtype=float)
    res = np.asarray(_residuals(grid, B, A, psi, mu), dtype=float)
    for arr in (mu, psi, e1, e2, res):
        arr.setflags(write=False)
    return StokesEigenbasis(grid, mu, psi, e1, e2, res, B, A)


def _second_difference_pencil(n, h, dtype):
    T = sp.diags([-np.ones(n - 1, dtype), 2 * np.ones(n, dtype), -np.ones(n - 1, dtype)],
                 [-1, 0, 1], format="csr", dtype=dtype) / h**2
    eye = sp.identity(n, format="csr", dtype=dtype)
    return (sp.kron(T, eye) + sp.kron(eye, T)).tocsr()


def component_gram(basis: StokesEigenbasis, component: int, mask: ObservationMask | None = None) -> np.ndarray:
    """``G_jk = <e_{j,c}, e_{k,c}>`` over the masked points (all points if None).

    Results are cached on the basis per ``(component, rectangle)``.
    """
    key = (component, None if mask is None else (mask.grid.n, mask.rect))
    G = basis._grams.get(key)
    if G is None:
        E = basis.component(component)
        if mask is not None:
            E = E[mask.component(component).ravel()]
        F = basis.grid.h * E
        G = F.T @ F
        G = 0.5 * (G + G.T)
        G.setflags(write=False)
        basis._grams[key] = G
    return G


# ---------------------------------------------------------------------------
# plain-text export


def basis_csv(basis: StokesEigenbasis) -> str:
    """CSV with columns ``j, mu_j, residual_j`` (1-based ``j``)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "mu_j", "residual_j"])
    for j, (mu, r) in enumerate(zip(basis.mu, basis.residuals), start=1):
        w.writerow([j, repr(float(mu)), repr(float(r))])
    return buf.getvalue()


def dump_field(values: np.ndarray) -> str:
    """Row-major plain-text dump of a 2D point array, one row per line."""
    values = np.atleast_2d(values)
    return "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in values)
