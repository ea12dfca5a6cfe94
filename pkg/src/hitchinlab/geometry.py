"""Model geometries, discrete Laplacians, and holomorphic coefficient data.

Everything downstream works on one of three chart geometries:

* ``radial_disc``  -- rotationally symmetric fields on a disc of chart radius
  R < 1, reduced to a 1-D grid in the radius.  The Laplacian is the radial
  part of Delta = del_z del_zbar = (1/4)(d_xx + d_yy).
* ``disc2d``       -- the full disc sampled on a uniform Cartesian lattice
  (nodes inside the circle; rim nodes act as Dirichlet boundary).
* ``torus``        -- a flat rectangular torus, periodic in both directions.
  It carries no background hyperbolic metric and is used for solver and
  positivity experiments.

All stencils are second order, have nonnegative off-diagonal entries and
zero row sums at interior nodes (M-matrix sign pattern), which is what the
discrete comparison arguments rely on.

The background metric is g0 = 2/(1-|z|^2)^2, normalised so that
Delta log g0 = g0 with the Delta above (verified symbolically; note this is
*not* the curvature -1 normalisation, which differs by a factor of 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sparse

GRID_KINDS = ("radial_disc", "disc2d", "torus")
DATUM_KINDS = ("zero", "constant", "monomial", "polynomial")

_MIN_RESOLUTION = 8


@dataclass(frozen=True)
class GridSpec:
    """Declarative description of a model-geometry grid.

    Parameters
    ----------
    kind : str
        One of ``radial_disc``, ``disc2d``, ``torus``.
    resolution : int or (int, int)
        Nodes per dimension.  Disc kinds take a single int; the torus
        accepts a pair (a single int means a square grid).
    radius : float
        Chart radius for the disc kinds; must lie in (0, 1) so the
        hyperbolic metric stays finite.
    periods : (float, float)
        Fundamental periods of the torus.
    """

    kind: str
    resolution: int | tuple[int, int] = 128
    radius: float = 0.8
    periods: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}; expected one of {GRID_KINDS}")
        res = self.resolution
        if self.kind == "torus":
            pair = (res, res) if isinstance(res, int) else tuple(res)
            if len(pair) != 2 or any(int(p) < _MIN_RESOLUTION for p in pair):
                raise ValueError(f"torus resolution must be >= {_MIN_RESOLUTION} per dimension")
            if any(p <= 0 for p in self.periods):
                raise ValueError("torus periods must be positive")
        else:
            if not isinstance(res, int) or res < _MIN_RESOLUTION:
                raise ValueError(f"resolution must be an int >= {_MIN_RESOLUTION}")
            if not (0.0 < self.radius < 1.0):
                raise ValueError("chart radius must lie in (0, 1)")

    def resolution_pair(self) -> tuple[int, int]:
        res = self.resolution
        return (res, res) if isinstance(res, int) else (int(res[0]), int(res[1]))


class Grid:
    """Realised grid: node coordinates, masks, and the Laplacian stencil.

    Attributes
    ----------
    spec : GridSpec
    n_nodes : int
    xy : ndarray, shape (n_nodes, 2)
        Cartesian chart coordinates (for ``radial_disc`` the nodes sit on
        the nonnegative real axis).
    spacing : float
        Representative mesh width (max over directions).
    boundary_mask, interior_mask : boolean ndarrays
    lap : csr_matrix
        Discrete Delta = (1/4) * Euclidean Laplacian.  Rows at boundary
        nodes are identically zero; Dirichlet handling is the caller's job.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        if spec.kind == "radial_disc":
            self._build_radial(spec)
        elif spec.kind == "disc2d":
            self._build_disc2d(spec)
        else:
            self._build_torus(spec)
        self.interior_mask = ~self.boundary_mask
        self.lap = self.lap.tocsr()
        self.lap.sum_duplicates()

    # -- constructors ------------------------------------------------------

    def _build_radial(self, spec: GridSpec):
        n = spec.resolution
        h = spec.radius / (n - 1)
        r = np.arange(n) * h
        self.n_nodes = n
        self.xy = np.column_stack([r, np.zeros(n)])
        self.spacing = h
        self.boundary_mask = np.zeros(n, dtype=bool)
        self.boundary_mask[-1] = True

        rows, cols, vals = [], [], []
        # r = 0: symmetric limit of the radial Laplacian.  For even profiles
        # Delta u(0) = (1/4) * 4 (u_1 - u_0)/h^2 + O(h^2).
        rows += [0, 0]
        cols += [0, 1]
        vals += [-1.0 / h**2, 1.0 / h**2]
        for i in range(1, n - 1):
            ri = r[i]
            west = 0.25 * (1.0 / h**2 - 1.0 / (2.0 * h * ri))
            east = 0.25 * (1.0 / h**2 + 1.0 / (2.0 * h * ri))
            rows += [i, i, i]
            cols += [i - 1, i, i + 1]
            vals += [west, -(west + east), east]
        self.lap = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))

        # annulus areas: node i owns [r_i - h/2, r_i + h/2] clipped to [0, R]
        r_out = np.minimum(r + h / 2, spec.radius)
        r_in = np.maximum(r - h / 2, 0.0)
        self._area = np.pi * (r_out**2 - r_in**2)
        self._cells_to_boundary = (n - 1) - np.arange(n)
        nbr = np.empty((n, 2), dtype=int)
        nbr[:, 0] = np.arange(n) - 1
        nbr[:, 1] = np.arange(n) + 1
        nbr[n - 1, 1] = -1
        self._nbr = nbr
        self._dir_spacing = (h,)

    def _build_disc2d(self, spec: GridSpec):
        n = spec.resolution
        R = spec.radius
        axis = np.linspace(-R, R, n)
        h = axis[1] - axis[0]
        xg, yg = np.meshgrid(axis, axis, indexing="ij")
        inside = xg**2 + yg**2 <= R**2 + 1e-12
        index = -np.ones((n, n), dtype=int)
        index[inside] = np.arange(inside.sum())
        self.n_nodes = int(inside.sum())
        self.xy = np.column_stack([xg[inside], yg[inside]])
        self.spacing = h

        def neighbor(i, j, di, dj):
            i2, j2 = i + di, j + dj
            if 0 <= i2 < n and 0 <= j2 < n and inside[i2, j2]:
                return index[i2, j2]
            return -1

        boundary = np.zeros(self.n_nodes, dtype=bool)
        nbr_table = np.full((self.n_nodes, 4), -1, dtype=int)
        rows, cols, vals = [], [], []
        coef = 0.25 / h**2
        for i in range(n):
            for j in range(n):
                if not inside[i, j]:
                    continue
                p = index[i, j]
                nbrs = [neighbor(i, j, di, dj) for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1))]
                nbr_table[p] = nbrs
                if any(q < 0 for q in nbrs):
                    boundary[p] = True
                    continue
                for q in nbrs:
                    rows.append(p)
                    cols.append(q)
                    vals.append(coef)
                rows.append(p)
                cols.append(p)
                vals.append(-4.0 * coef)
        self.boundary_mask = boundary
        self._nbr = nbr_table
        self._dir_spacing = (h, h)
        self.lap = sparse.coo_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        self._area = np.full(self.n_nodes, h * h)
        self._cells_to_boundary = self._bfs_cells(index, inside, boundary, n)

    def _bfs_cells(self, index, inside, boundary, n) -> np.ndarray:
        from collections import deque

        dist = np.full(self.n_nodes, -1, dtype=int)
        queue = deque()
        for p in np.nonzero(boundary)[0]:
            dist[p] = 0
            queue.append(p)
        where = {index[i, j]: (i, j) for i in range(n) for j in range(n) if inside[i, j]}
        while queue:
            p = queue.popleft()
            i, j = where[p]
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                i2, j2 = i + di, j + dj
                if 0 <= i2 < n and 0 <= j2 < n and inside[i2, j2]:
                    q = index[i2, j2]
                    if dist[q] < 0:
                        dist[q] = dist[p] + 1
                        queue.append(q)
        return dist

    def _build_torus(self, spec: GridSpec):
        nx, ny = spec.resolution_pair()
        lx, ly = spec.periods
        hx, hy = lx / nx, ly / ny
        x = np.arange(nx) * hx
        y = np.arange(ny) * hy
        xg, yg = np.meshgrid(x, y, indexing="ij")
        self.n_nodes = nx * ny
        self.xy = np.column_stack([xg.ravel(), yg.ravel()])
        self.spacing = max(hx, hy)
        self.boundary_mask = np.zeros(self.n_nodes, dtype=bool)

        def idx(i, j):
            return (i % nx) * ny + (j % ny)

        rows, cols, vals = [], [], []
        nbr_table = np.empty((self.n_nodes, 4), dtype=int)
        cx = 0.25 / hx**2
        cy = 0.25 / hy**2
        for i in range(nx):
            for j in range(ny):
                p = idx(i, j)
                nbr_table[p] = (idx(i - 1, j), idx(i + 1, j), idx(i, j - 1), idx(i, j + 1))
                for q, c in (
                    (idx(i + 1, j), cx),
                    (idx(i - 1, j), cx),
                    (idx(i, j + 1), cy),
                    (idx(i, j - 1), cy),
                ):
                    rows.append(p)
                    cols.append(q)
                    vals.append(c)
                rows.append(p)
                cols.append(p)
                vals.append(-2.0 * (cx + cy))
        self.lap = sparse.coo_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        self._area = np.full(self.n_nodes, hx * hy)
        self._cells_to_boundary = np.full(self.n_nodes, np.iinfo(np.int32).max)
        self._shape = (nx, ny)
        self._nbr = nbr_table
        self._dir_spacing = (hx, hy)

    # -- queries -----------------------------------------------------------

    @property
    def kind(self) -> str:
        return self.spec.kind

    def z(self) -> np.ndarray:
        """Complex chart coordinate of every node."""
        return self.xy[:, 0] + 1j * self.xy[:, 1]

    def area_weights(self) -> np.ndarray:
        """Quadrature weight (Euclidean area dx dy) owned by each node."""
        return self._area.copy()

    def cells_to_boundary(self) -> np.ndarray:
        """Graph distance (in grid steps) from each node to the boundary."""
        return self._cells_to_boundary.copy()

    def directional_neighbors(self) -> tuple[np.ndarray, tuple[float, ...]]:
        """Neighbor table and per-direction spacings for first-order stencils.

        Columns come in (minus, plus) pairs per axis; -1 marks a missing
        neighbor (outside the domain).  Used for upwinded drift terms.
        """
        return self._nbr.copy(), self._dir_spacing

    def verdict_region(self, margin_cells: int = 5) -> np.ndarray:
        """Interior nodes at least ``margin_cells`` grid steps from the boundary.

        Theorem verdicts are only asserted on this region; on the torus it is
        every node.
        """
        return self._cells_to_boundary >= margin_cells

    def __repr__(self):
        return f"Grid({self.spec.kind}, n_nodes={self.n_nodes}, spacing={self.spacing:.3g})"


@dataclass(frozen=True)
class ScalarField:
    """A real scalar field sampled on a grid's nodes.

    Values must be finite; non-finite intermediates are treated as blow-up
    by the callers that can produce them.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has {vals.shape} values for a grid with {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("scalar field contains non-finite values")
        object.__setattr__(self, "values", vals)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


@dataclass(frozen=True)
class HolomorphicDatum:
    """A holomorphic coefficient: zero, a constant, c*z^l, or a polynomial.

    Coefficients are stored exactly and |datum|^2 is always evaluated from
    the closed form -- never by sampling and differentiating.

    ``coefficients`` is the full coefficient tuple in increasing degree for
    the polynomial kind; for ``monomial`` it holds the single coefficient c
    and ``degree`` the exponent l.
    """

    kind: str
    coefficients: tuple[complex, ...] = ()
    degree: int = 0

    def __post_init__(self):
        if self.kind not in DATUM_KINDS:
            raise ValueError(f"unknown datum kind {self.kind!r}")
        object.__setattr__(self, "coefficients", tuple(complex(c) for c in self.coefficients))
        if self.kind == "zero" and self.coefficients:
            raise ValueError("zero datum takes no coefficients")
        if self.kind in ("constant", "monomial") and len(self.coefficients) != 1:
            raise ValueError(f"{self.kind} datum takes exactly one coefficient")
        if self.kind == "monomial" and self.degree < 0:
            raise ValueError("monomial degree must be nonnegative")
        if self.kind == "polynomial" and not self.coefficients:
            raise ValueError("polynomial datum needs at least one coefficient")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "HolomorphicDatum":
        return HolomorphicDatum("zero")

    @staticmethod
    def constant(c: complex) -> "HolomorphicDatum":
        return HolomorphicDatum("constant", (c,))

    @staticmethod
    def monomial(c: complex, degree: int) -> "HolomorphicDatum":
        return HolomorphicDatum("monomial", (c,), degree)

    @staticmethod
    def polynomial(coeffs: Sequence[complex]) -> "HolomorphicDatum":
        return HolomorphicDatum("polynomial", tuple(coeffs))

    # -- algebra -----------------------------------------------------------

    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        return all(c == 0 for c in self.coefficients)

    def scaled(self, s: complex) -> "HolomorphicDatum":
        if self.kind == "zero":
            return self
        return HolomorphicDatum(self.kind, tuple(s * c for c in self.coefficients), self.degree)

    def __mul__(self, other: "HolomorphicDatum") -> "HolomorphicDatum":
        if not isinstance(other, HolomorphicDatum):
            return NotImplemented
        if self.is_zero() or other.is_zero():
            return HolomorphicDatum.zero()
        a, b = self._as_monomial_or_poly(), other._as_monomial_or_poly()
        if a[0] == "monomial" and b[0] == "monomial":
            return HolomorphicDatum.monomial(a[1] * b[1], a[2] + b[2])
        pa, pb = self._poly_coeffs(), other._poly_coeffs()
        prod = np.convolve(pa, pb)
        return HolomorphicDatum.polynomial(tuple(prod))

    def squared(self) -> "HolomorphicDatum":
        return self * self

    def _as_monomial_or_poly(self):
        if self.kind == "constant":
            return ("monomial", self.coefficients[0], 0)
        if self.kind == "monomial":
            return ("monomial", self.coefficients[0], self.degree)
        return ("polynomial", None, None)

    def _poly_coeffs(self) -> np.ndarray:
        if self.kind == "zero":
            return np.array([0j])
        if self.kind == "constant":
            return np.array([self.coefficients[0]])
        if self.kind == "monomial":
            out = np.zeros(self.degree + 1, dtype=complex)
            out[-1] = self.coefficients[0]
            return out
        return np.array(self.coefficients, dtype=complex)

    # -- evaluation --------------------------------------------------------

    def value(self, z: np.ndarray) -> np.ndarray:
        """Evaluate the datum at complex chart points."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "constant":
            return np.full_like(z, self.coefficients[0])
        if self.kind == "monomial":
            return self.coefficients[0] * z**self.degree
        acc = np.zeros_like(z)
        for c in reversed(self.coefficients):  # Horner
            acc = acc * z + c
        return acc

    def norm_squared(self, z: np.ndarray) -> np.ndarray:
        """|datum(z)|^2, exactly (for a monomial this is |c|^2 |z|^(2l))."""
        if self.kind == "monomial":
            return abs(self.coefficients[0]) ** 2 * np.abs(np.asarray(z, complex)) ** (
                2 * self.degree
            )
        v = self.value(z)
        return (v * v.conjugate()).real

    def valid_on(self, grid: Grid) -> bool:
        """Whether the datum makes sense on the grid's chart.

        The radial reduction only admits rotationally symmetric |datum|^2,
        i.e. zero/constant/monomial.  On the torus only constants (and zero)
        are holomorphic; richer periodic coefficient fields are injected
        directly at system-assembly time.
        """
        if grid.kind == "radial_disc":
            return self.kind in ("zero", "constant", "monomial")
        if grid.kind == "torus":
            return self.kind in ("zero", "constant")
        return True


# -- module-level operations ----------------------------------------------


def build_grid(spec: GridSpec) -> Grid:
    """Materialise a grid from its declarative description."""
    return Grid(spec)


def hyperbolic_metric(grid: Grid) -> ScalarField:
    """Background metric density g0 = 2/(1-|z|^2)^2 on a disc-kind grid.

    Normalised so that Delta log g0 = g0 for Delta = (1/4)(d_xx + d_yy).
    """
    if grid.kind == "torus":
        raise ValueError("the flat torus carries no hyperbolic background metric")
    rsq = (grid.xy**2).sum(axis=1)
    return ScalarField(grid, 2.0 / (1.0 - rsq) ** 2)


def eval_norm_squared(datum: HolomorphicDatum, grid: Grid) -> ScalarField:
    """|datum|^2 sampled on the grid (exact closed form)."""
    if not datum.valid_on(grid):
        raise ValueError(f"{datum.kind} datum is not valid on a {grid.kind} chart")
    return ScalarField(grid, datum.norm_squared(grid.z()))


def zero_set(datum: HolomorphicDatum, grid: Grid, tol: float = 0.0) -> np.ndarray:
    """Node indices where |datum|^2 <= tol * max |datum|^2 (default: exact zeros)."""
    nsq = eval_norm_squared(datum, grid).values
    scale = nsq.max()
    if scale == 0.0:
        return np.arange(grid.n_nodes)
    return np.nonzero(nsq <= tol * scale)[0]
