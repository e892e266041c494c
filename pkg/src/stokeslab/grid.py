"""Uniform grids on the unit square, rectangular observation regions and
the discrete L2 pairings used throughout the package.

Scalar fields (stream functions) live on the ``N x N`` interior nodes
``(i h, j h)``, ``1 <= i, j <= N``.  Velocity components live on a staggered
(MAC) layout so that the discrete curl of a stream function is exactly
divergence free and exactly isometric:

* the first component ``u = d psi / dy`` sits at ``(i h, (j + 1/2) h)``,
  ``1 <= i <= N``, ``0 <= j <= N``, array shape ``(N, N + 1)``;
* the second component ``v = -d psi / dx`` sits at ``((i + 1/2) h, j h)``,
  array shape ``(N + 1, N)``.

Boundary values are never stored; homogeneous Dirichlet data is structural.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "Rect",
    "ObservationMask",
    "EmptyMaskError",
    "build_grid",
    "build_mask",
    "parse_rect",
    "inner_product",
]


class EmptyMaskError(ValueError):
    """Raised when a region contains no grid point."""


@dataclass(frozen=True)
class Grid:
    """Interior-node discretization of (0, 1)^2 with ``n`` nodes per axis."""

    n: int

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def nodes(self) -> np.ndarray:
        """1D node coordinates ``h, 2h, ..., N h``."""
        return np.arange(1, self.n + 1) * self.h

    @property
    def half_nodes(self) -> np.ndarray:
        """1D staggered coordinates ``h/2, 3h/2, ..., (N + 1/2) h``."""
        return (np.arange(self.n + 1) + 0.5) * self.h

    def shape_of(self, kind: str) -> tuple[int, int]:
        n = self.n
        return {"scalar": (n, n), "u": (n, n + 1), "v": (n + 1, n)}[kind]

    def kind_of(self, shape: tuple[int, ...]) -> str:
        n = self.n
        table = {(n, n): "scalar", (n, n + 1): "u", (n + 1, n): "v"}
        try:
            return table[tuple(shape)]
        except KeyError:
            raise ValueError(f"array of shape {shape} does not live on a grid with N={n}") from None


def build_grid(n: int) -> Grid:
    """Grid with ``n`` interior nodes per axis; stencils need ``n >= 3``."""
    if int(n) != n or n < 3:
        raise ValueError(f"N must be an integer >= 3, got {n!r}")
    return Grid(int(n))


@dataclass(frozen=True)
class Rect:
    """Half-open rectangle ``[x0, x1) x [y0, y1)``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        for name in ("x0", "x1", "y0", "y1"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0 or v > 1.0:
                raise ValueError(f"rectangle bound {name}={v} outside [0, 1]")
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"degenerate rectangle {self.describe()}")

    def contains(self, x, y):
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)

    def describe(self) -> str:
        return f"{self.x0:g},{self.x1:g},{self.y0:g},{self.y1:g}"

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def parse_rect(text: str) -> Rect:
    """Parse ``"x0,x1,y0,y1"``."""
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 4:
        raise ValueError(f"expected 'x0,x1,y0,y1', got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"non-numeric rectangle bound in {text!r}") from None
    return Rect(*vals)


@dataclass(frozen=True)
class ObservationMask:
    """Characteristic function of a rectangle on every point family of a grid."""

    grid: Grid
    rect: Rect
    nodes: np.ndarray = field(repr=False)
    u_points: np.ndarray = field(repr=False)
    v_points: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.nodes.sum())

    def for_shape(self, shape) -> np.ndarray:
        return {"scalar": self.nodes, "u": self.u_points, "v": self.v_points}[self.grid.kind_of(shape)]

    def component(self, c: int) -> np.ndarray:
        if c == 1:
            return self.u_points
        if c == 2:
            return self.v_points
        raise ValueError(f"component must be 1 or 2, got {c}")


def _indicator(rect: Rect, xs, ys) -> np.ndarray:
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return rect.contains(X, Y)


def build_mask(grid: Grid, rect: Rect | str) -> ObservationMask:
    """Flag the grid points inside ``rect`` (half-open membership).

    Raises
    ------
    EmptyMaskError
        If no interior node falls inside the rectangle.
    """
    if isinstance(rect, str):
        rect = parse_rect(rect)
    nodes = _indicator(rect, grid.nodes, grid.nodes)
    if not nodes.any():
        raise EmptyMaskError(f"region {rect.describe()} contains no interior node for N={grid.n}")
    u = _indicator(rect, grid.nodes, grid.half_nodes)
    v = _indicator(rect, grid.half_nodes, grid.nodes)
    for arr in (nodes, u, v):
        arr.setflags(write=False)
    return ObservationMask(grid, rect, nodes, u, v)


def _pairs(a):
    return tuple(a) if isinstance(a, (tuple, list)) else (a,)


def inner_product(grid: Grid, a, b, mask: ObservationMask | None = None) -> float:
    """Discrete L2 pairing ``sum(a * b) * h**2`` over the (masked) points.

    ``a`` and ``b`` are arrays on one point family, or ``(u, v)`` pairs for
    velocity fields, in which case the component pairings are summed.
    """
    pa, pb = _pairs(a), _pairs(b)
    if len(pa) != len(pb):
        raise ValueError("cannot pair a scalar field with a vector field")
    total = 0.0
    for x, y in zip(pa, pb):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
        grid.kind_of(x.shape)
        prod = x * y
        if mask is not None:
            prod = prod[mask.for_shape(x.shape)]
        total += float(prod.sum())
    return total * grid.h**2
