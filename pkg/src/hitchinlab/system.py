"""Assembly of the coupled log-metric equations for cyclic Higgs bundles.

A rank-n cyclic bundle carries n "arrow" coefficients (gamma_1, ..., gamma_n);
the harmonic metric is diagonal, h = diag(h_1, ..., h_n) with det h = 1, and
its logs satisfy the Toda-type system

    Delta log h_k + |gamma_k|^2 h_k^{-1} h_{k+1} - |gamma_{k-1}|^2 h_{k-1}^{-1} h_k = 0

with indices mod n and Delta = del_z del_zbar.  The determinant constraint is
eliminated algebraically (the last log-metric is minus the sum of the others),
so the discrete unknowns are genuinely independent.

Variants
--------
* ``general_cyclic``     : data (gamma_1..gamma_n), n-1 unknowns.
* ``hitchin_component``  : data (q_n); the real form with all interior arrows 1
                           forces h_{n+1-k} = h_k^{-1}, leaving floor(n/2) unknowns.
* ``slnr_even``/``slnr_odd`` : data (nu, gamma_1..gamma_{m-1}, mu), m = floor(n/2);
                           same symmetric reduction with general coefficients.
* ``sp4_gothen``         : data (mu, nu); rank 4 with arrows (1, mu, 1, nu) and
                           two unknowns (h_1, h_2).

The scale parameter ``t`` always multiplies the final arrow (gamma_n or nu).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sparse

from .geometry import (
    Grid,
    HolomorphicDatum,
    ScalarField,
    eval_norm_squared,
    hyperbolic_metric,
)

VARIANTS = ("general_cyclic", "hitchin_component", "slnr_even", "slnr_odd", "sp4_gothen")
SYMMETRIC_VARIANTS = ("hitchin_component", "slnr_even", "slnr_odd", "sp4_gothen")


class BlowupError(RuntimeError):
    """Raised when residual/Jacobian evaluation produces non-finite values."""


def _one() -> HolomorphicDatum:
    return HolomorphicDatum.constant(1.0)


@dataclass(frozen=True)
class CyclicSpec:
    """Holomorphic data of a cyclic bundle plus the last-arrow scale t.

    ``data`` ordering by variant:
      general_cyclic    : (gamma_1, ..., gamma_n)
      hitchin_component : (q_n,)
      slnr_even/odd     : (nu, gamma_1, ..., gamma_{m-1}, mu)
      sp4_gothen        : (mu, nu)

    ``degrees`` optionally records deg(L_1..L_n) for stability bookkeeping.
    """

    n: int
    variant: str
    data: tuple[HolomorphicDatum, ...]
    t: complex = 1.0
    degrees: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "data", tuple(self.data))
        object.__setattr__(self, "t", complex(self.t))
        if self.degrees is not None:
            degs = tuple(int(d) for d in self.degrees)
            if len(degs) != self.n or sum(degs) != 0:
                raise ValueError("degrees must list deg(L_1..L_n) and sum to zero")
            object.__setattr__(self, "degrees", degs)
        n, m = self.n, self.n // 2
        v = self.variant
        if n < 2:
            raise ValueError("rank must be at least 2")
        if v == "general_cyclic":
            if len(self.data) != n:
                raise ValueError(f"general_cyclic rank {n} needs {n} data entries")
            if any(d.is_zero() for d in self.data[:-1]):
                raise ValueError("interior arrows gamma_1..gamma_{n-1} must not vanish identically")
        elif v == "hitchin_component":
            if len(self.data) != 1:
                raise ValueError("hitchin_component takes exactly one datum (q_n)")
        elif v in ("slnr_even", "slnr_odd"):
            if v == "slnr_even" and n % 2:
                raise ValueError("slnr_even needs even rank")
            if v == "slnr_odd" and (n % 2 == 0 or n < 3):
                raise ValueError("slnr_odd needs odd rank >= 3")
            if len(self.data) != m + 1:
                raise ValueError(f"{v} rank {n} needs {m + 1} data entries (nu, gammas, mu)")
            if any(d.is_zero() for d in self.data[1:]):
                raise ValueError("gamma and mu entries must not vanish identically")
        elif v == "sp4_gothen":
            if n != 4:
                raise ValueError("sp4_gothen is a rank-4 variant")
            if len(self.data) != 2:
                raise ValueError("sp4_gothen takes (mu, nu)")
            if self.data[0].is_zero():
                raise ValueError("mu must not vanish identically")

    # -- structure ---------------------------------------------------------

    @property
    def n_unknowns(self) -> int:
        if self.variant == "general_cyclic":
            return self.n - 1
        return self.n // 2

    @property
    def is_symmetric(self) -> bool:
        return self.variant in SYMMETRIC_VARIANTS

    def corner_datum(self) -> HolomorphicDatum:
        """The final arrow (gamma_n, q_n, or nu), before scaling by t."""
        if self.variant == "general_cyclic":
            return self.data[-1]
        if self.variant == "hitchin_component":
            return self.data[0]
        if self.variant == "sp4_gothen":
            return self.data[1]
        return self.data[0]

    def middle_datum(self) -> HolomorphicDatum:
        """The top arrow mu of the symmetric variants (1 for hitchin_component)."""
        if self.variant == "hitchin_component":
            return _one()
        if self.variant == "sp4_gothen":
            return self.data[0]
        if self.variant in ("slnr_even", "slnr_odd"):
            return self.data[-1]
        raise ValueError("general_cyclic has no distinguished middle arrow")

    def rung_data(self) -> tuple[HolomorphicDatum, ...]:
        """gamma_1..gamma_{m-1} of the symmetric ladder."""
        m = self.n // 2
        if self.variant == "hitchin_component":
            return tuple(_one() for _ in range(m - 1))
        if self.variant == "sp4_gothen":
            return (_one(),)
        if self.variant in ("slnr_even", "slnr_odd"):
            return self.data[1:-1]
        raise ValueError("general_cyclic has no symmetric ladder")

    def cyclic_data(self) -> tuple[HolomorphicDatum, ...]:
        """All n arrows (gamma_1..gamma_n) of the equivalent cyclic bundle.

        The symmetric variants unfold as (gammas, mu, mirrored gammas, nu),
        with mu repeated once more for odd rank.  The scale t is *not*
        applied here.
        """
        if self.variant == "general_cyclic":
            return self.data
        m = self.n // 2
        rungs = self.rung_data()
        mu = self.middle_datum()
        nu = self.corner_datum()
        if self.n % 2 == 0:
            return (*rungs, mu, *reversed(rungs), nu)
        return (*rungs, mu, mu, *reversed(rungs), nu)

    def partner_differential(self) -> HolomorphicDatum:
        """q_n of the Hitchin-section bundle in the same determinant fiber.

        For even rank q_n = gamma_1^2 .. gamma_{m-1}^2 * mu * nu, for odd rank
        the mu factor enters squared.
        """
        if not self.is_symmetric:
            raise ValueError("fiber partner is defined for the symmetric variants")
        q = self.corner_datum().scaled(self.t)
        mu = self.middle_datum()
        q = q * mu if self.n % 2 == 0 else q * mu * mu
        for g in self.rung_data():
            q = q * g * g
        return q


def make_spec(
    variant: str,
    n: int,
    data: Sequence[HolomorphicDatum],
    t: complex = 1.0,
    degrees: Sequence[int] | None = None,
) -> CyclicSpec:
    return CyclicSpec(n=n, variant=variant, data=tuple(data), t=t,
                      degrees=None if degrees is None else tuple(degrees))


@dataclass
class LogMetricState:
    """Per-node log-metric unknowns, stored node-major as an (N, m) array."""

    grid: Grid
    u: np.ndarray
    residual_norm: float = np.inf

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim != 2 or self.u.shape[0] != self.grid.n_nodes:
            raise ValueError("state array must have shape (n_nodes, n_unknowns)")

    @property
    def n_unknowns(self) -> int:
        return self.u.shape[1]

    def field(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.u[:, k].copy())

    def copy(self) -> "LogMetricState":
        return LogMetricState(self.grid, self.u.copy(), self.residual_norm)

    def as_vector(self) -> np.ndarray:
        return self.u.ravel().copy()

    @staticmethod
    def from_vector(grid: Grid, m: int, vec: np.ndarray) -> "LogMetricState":
        return LogMetricState(grid, np.asarray(vec, float).reshape(grid.n_nodes, m))


# -- Fuchsian reference state ---------------------------------------------


def fuchsian_log_metrics(n: int, n_unknowns: int, grid: Grid) -> np.ndarray:
    """Log-metrics of the uniformising solution (vanishing corner arrow).

    The consecutive metric ratios are h_k^{-1} h_{k+1} = (1/2) k (n-k) g0;
    combined with det h = 1 this fixes every h_k.  Returned as an (N, m)
    array matching either the symmetric reduction (m = floor(n/2)) or the
    eliminated cyclic formulation (m = n-1).
    """
    g0 = hyperbolic_metric(grid).values
    log_g0 = np.log(g0)
    N = grid.n_nodes
    step = [np.log(0.5 * k * (n - k)) + log_g0 for k in range(1, n)]
    m_sym = n // 2
    if n_unknowns == m_sym and n_unknowns != n - 1:
        u = np.empty((N, m_sym))
        if n % 2 == 0:
            u[:, m_sym - 1] = -0.5 * (np.log(0.5 * m_sym**2) + log_g0)
        else:
            u[:, m_sym - 1] = -(np.log(0.5 * m_sym * (m_sym + 1)) + log_g0)
        for k in range(m_sym - 1, 0, -1):
            u[:, k - 1] = u[:, k] - step[k - 1]
        return u
    if n_unknowns == n - 1:
        # w_k = w_1 + sum_{j<k} step_j with sum_k w_k = 0
        w1 = -sum((n - j) * step[j - 1] for j in range(1, n)) / n
        u = np.empty((N, n - 1))
        acc = w1.copy()
        u[:, 0] = acc
        for k in range(1, n - 1):
            acc = acc + step[k - 1]
            u[:, k] = acc
        return u
    raise ValueError("n_unknowns must be floor(n/2) or n-1")


def fuchsian_state(spec: CyclicSpec, grid: Grid) -> LogMetricState:
    """Uniformising reference state for any variant on a disc-kind grid."""
    if grid.kind == "torus":
        raise ValueError("the torus has no uniformising reference state")
    return LogMetricState(grid, fuchsian_log_metrics(spec.n, spec.n_unknowns, grid))


def expand_log_metrics(spec: CyclicSpec, state: LogMetricState) -> np.ndarray:
    """All n log-metrics (log h_1 .. log h_n) of the cyclic bundle, (N, n).

    Uses det h = 1 for the eliminated formulation and the symmetry
    h_{n+1-k} = h_k^{-1} for the symmetric variants.
    """
    u = state.u
    n = spec.n
    if spec.variant == "general_cyclic":
        return np.column_stack([u, -u.sum(axis=1)])
    m = n // 2
    if n % 2 == 0:
        return np.column_stack([u, -u[:, ::-1]])
    zero = np.zeros((u.shape[0], 1))
    return np.column_stack([u, zero, -u[:, ::-1]])


# -- assembled system ------------------------------------------------------


class HitchinSystem:
    """A spec bound to a grid with boundary data and coefficient fields.

    The nonlinear residual for the independent unknowns u (an (N, m) array)
    is R(u) = Lap u + F(u), where F collects the exponential couplings; the
    rows at Dirichlet nodes read u - boundary_value instead.
    """

    def __init__(
        self,
        spec: CyclicSpec,
        grid: Grid,
        boundary_values: np.ndarray | None,
        coeff_sq: np.ndarray,
    ):
        self.spec = spec
        self.grid = grid
        self.m = spec.n_unknowns
        self.coeff_sq = coeff_sq  # (N, n) squared arrow coefficients, t^2 in last column
        if grid.kind == "torus":
            self.boundary_values = None
        else:
            bv = np.zeros((grid.n_nodes, self.m)) if boundary_values is None else boundary_values
            if bv.shape != (grid.n_nodes, self.m):
                raise ValueError("boundary value array has wrong shape")
            self.boundary_values = bv
        self._kron_lap = sparse.kron(grid.lap, sparse.identity(self.m), format="csr")
        if spec.variant == "general_cyclic":
            self._d_mat = self._cyclic_derivative_matrix(spec.n)

    @staticmethod
    def _cyclic_derivative_matrix(n: int) -> np.ndarray:
        """d[i, j] = d(log arrow_i ratio)/d(w_j) for the eliminated unknowns."""
        m = n - 1
        d = np.zeros((n, m))
        for i in range(n):
            head, tail = (i + 1) % n, i
            for j in range(m):
                c = 0.0
                c += (1.0 if head == j else 0.0) if head < m else -1.0
                c -= (1.0 if tail == j else 0.0) if tail < m else -1.0
                d[i, j] = c
        return d

    # -- nonlinear couplings ----------------------------------------------

    def _symmetric_terms(self, u: np.ndarray):
        """Arrow terms s_rung (N, m-1), s_corner (N,), s_top (N,)."""
        n, m = self.spec.n, self.m
        G = self.coeff_sq
        with np.errstate(over="ignore", invalid="ignore"):
            s_rung = G[:, :m - 1] * np.exp(u[:, 1:m] - u[:, :m - 1]) if m > 1 else np.zeros((u.shape[0], 0))
            s_corner = G[:, n - 1] * np.exp(2.0 * u[:, 0])
            if n % 2 == 0:
                s_top = G[:, m - 1] * np.exp(-2.0 * u[:, m - 1])
            else:
                s_top = G[:, m - 1] * np.exp(-u[:, m - 1])
        return s_rung, s_corner, s_top

    def _coupling_residual(self, u: np.ndarray) -> np.ndarray:
        N, m = u.shape
        if self.spec.variant == "general_cyclic":
            w = np.column_stack([u, -u.sum(axis=1)])
            G = self.coeff_sq
            with np.errstate(over="ignore", invalid="ignore"):
                a = G * np.exp(np.roll(w, -1, axis=1) - w)
            return a[:, :m] - np.roll(a, 1, axis=1)[:, :m]
        s_rung, s_corner, s_top = self._symmetric_terms(u)
        F = np.zeros((N, m))
        if m == 1:
            F[:, 0] = s_top - s_corner
            return F
        F[:, 0] = s_rung[:, 0] - s_corner
        for k in range(1, m - 1):
            F[:, k] = s_rung[:, k] - s_rung[:, k - 1]
        F[:, m - 1] = s_top - s_rung[:, m - 2]
        return F

    def _coupling_blocks(self, u: np.ndarray) -> np.ndarray:
        """Per-node dense derivative blocks of the coupling, shape (N, m, m)."""
        N, m = u.shape
        D = np.zeros((N, m, m))
        if self.spec.variant == "general_cyclic":
            w = np.column_stack([u, -u.sum(axis=1)])
            G = self.coeff_sq
            with np.errstate(over="ignore", invalid="ignore"):
                a = G * np.exp(np.roll(w, -1, axis=1) - w)
            d = self._d_mat
            for k in range(m):
                km1 = (k - 1) % self.spec.n
                D[:, k, :] = a[:, k, None] * d[k] - a[:, km1, None] * d[km1]
            return D
        s_rung, s_corner, s_top = self._symmetric_terms(u)
        for k in range(m - 1):
            D[:, k, k] -= s_rung[:, k]
            D[:, k, k + 1] += s_rung[:, k]
            D[:, k + 1, k] += s_rung[:, k]
            D[:, k + 1, k + 1] -= s_rung[:, k]
        D[:, 0, 0] -= 2.0 * s_corner
        top_factor = 2.0 if self.spec.n % 2 == 0 else 1.0
        D[:, m - 1, m - 1] -= top_factor * s_top
        return D

    # -- residual and Jacobian --------------------------------------------

    def residual_array(self, u: np.ndarray) -> np.ndarray:
        """Residual as an (N, m) array; may contain non-finite values."""
        R = (self.grid.lap @ u) + self._coupling_residual(u)
        if self.boundary_values is not None:
            b = self.grid.boundary_mask
            R[b, :] = u[b, :] - self.boundary_values[b, :]
        return R

    def jacobian_matrix(self, u: np.ndarray) -> sparse.csr_matrix:
        D = self._coupling_blocks(u)
        if not np.all(np.isfinite(D)):
            raise BlowupError("non-finite Jacobian entries (state blew up)")
        if self.boundary_values is not None:
            D[self.grid.boundary_mask, :, :] = 0.0
        N, m = D.shape[0], self.m
        blocks = sparse.bsr_matrix(
            (D, np.arange(N), np.arange(N + 1)), shape=(N * m, N * m)
        )
        J = self._kron_lap + blocks.tocsr()
        if self.boundary_values is not None:
            sel = np.repeat(self.grid.boundary_mask, m).astype(float)
            J = J + sparse.diags(sel)
        return J.tocsr()

    def initial_state(self) -> LogMetricState:
        """Default Newton seed: uniformising state on discs, zeros on the torus."""
        if self.grid.kind == "torus":
            return LogMetricState(self.grid, np.zeros((self.grid.n_nodes, self.m)))
        u = fuchsian_log_metrics(self.spec.n, self.m, self.grid)
        b = self.grid.boundary_mask
        u[b, :] = self.boundary_values[b, :]
        return LogMetricState(self.grid, u)


def _coefficient_fields(spec: CyclicSpec, grid: Grid) -> np.ndarray:
    """(N, n) squared magnitudes of all cyclic arrows, with |t|^2 folded in."""
    cols = []
    for datum in spec.cyclic_data():
        cols.append(eval_norm_squared(datum, grid).values)
    G = np.column_stack(cols)
    G[:, -1] *= abs(spec.t) ** 2
    return G


def make_system(
    spec: CyclicSpec,
    grid: Grid,
    boundary: str | Sequence = "fuchsian",
    coefficient_fields: Sequence[np.ndarray] | None = None,
) -> HitchinSystem:
    """Bind a spec to a grid.

    ``boundary`` is ``"fuchsian"`` (disc kinds; Dirichlet data from the
    uniformising state), ``"periodic"`` (torus), or an explicit per-unknown
    array/constant list for custom Dirichlet data.

    ``coefficient_fields`` overrides the squared arrow magnitudes with raw
    nonnegative per-node fields (one per cyclic arrow, scale t still applied
    to the last).  This is how non-constant smooth coefficients are injected
    on the torus, where only constants are globally holomorphic.
    """
    m = spec.n_unknowns
    if coefficient_fields is not None:
        fields = [np.asarray(f, dtype=float) for f in coefficient_fields]
        if len(fields) != spec.n:
            raise ValueError(f"need {spec.n} coefficient fields")
        for f in fields:
            if f.shape != (grid.n_nodes,) or np.any(f < 0) or not np.all(np.isfinite(f)):
                raise ValueError("coefficient fields must be finite, nonnegative node arrays")
        G = np.column_stack(fields)
        G[:, -1] *= abs(spec.t) ** 2
    else:
        G = _coefficient_fields(spec, grid)

    if grid.kind == "torus":
        if isinstance(boundary, str) and boundary != "periodic":
            raise ValueError("torus grids take boundary='periodic'")
        return HitchinSystem(spec, grid, None, G)

    if isinstance(boundary, str):
        if boundary != "fuchsian":
            raise ValueError("disc grids take boundary='fuchsian' or explicit values")
        bv = fuchsian_log_metrics(spec.n, m, grid)
    else:
        parts = list(boundary)
        if len(parts) != m:
            raise ValueError(f"need {m} boundary entries, got {len(parts)}")
        cols = []
        for p in parts:
            arr = np.asarray(p, dtype=float)
            if arr.ndim == 0:
                arr = np.full(grid.n_nodes, float(arr))
            if arr.shape != (grid.n_nodes,):
                raise ValueError("boundary entries must be scalars or per-node arrays")
            cols.append(arr)
        bv = np.column_stack(cols)
    return HitchinSystem(spec, grid, bv, G)


def residual(system: HitchinSystem, state: LogMetricState) -> list[ScalarField]:
    """Pointwise residual fields, one per independent unknown."""
    R = system.residual_array(state.u)
    if not np.all(np.isfinite(R)):
        raise BlowupError("non-finite residual (state blew up)")
    return [ScalarField(system.grid, R[:, k].copy()) for k in range(system.m)]


def jacobian(system: HitchinSystem, state: LogMetricState) -> sparse.csr_matrix:
    """Exact sparse Jacobian of the residual at the given state."""
    return system.jacobian_matrix(state.u)


# -- spec transformations --------------------------------------------------


def scale_last_arrow(spec: CyclicSpec, t: complex) -> CyclicSpec:
    """(gamma_1, ..., gamma_n) -> (gamma_1, ..., t * gamma_n)."""
    return replace(spec, t=spec.t * complex(t))


def gauge_image(spec: CyclicSpec, t: complex) -> CyclicSpec:
    """Multiply every arrow by t^(1/n) (principal root).

    Scaling the last arrow by t and scaling all arrows by t^(1/n) give
    gauge-equivalent bundles; their solved pullback metrics must agree once
    boundary data is shifted consistently (see ``gauge_log_offsets``).
    """
    t = complex(t)
    if t == 0:
        raise ValueError("gauge image needs t != 0")
    root = t ** (1.0 / spec.n)
    return replace(spec, data=tuple(d.scaled(root) for d in spec.data))


def gauge_log_offsets(spec: CyclicSpec, t: complex) -> np.ndarray:
    """Constant shifts of log h_k matching gauge_image against scale_last_arrow.

    The diagonal gauge that rescales the last arrow shifts
    log h_k by ((n + 1 - 2k)/n) log|t| for k = 1..n; the first n_unknowns
    entries apply to the independent unknowns of either formulation.
    """
    n = spec.n
    lt = np.log(abs(complex(t)))
    return np.array([(n + 1 - 2 * k) / n * lt for k in range(1, spec.n_unknowns + 1)])


# -- stability -------------------------------------------------------------


def stability_check(degrees: Sequence[int], which_gamma_zero: int | None = None) -> bool:
    """Stability of the cyclic bundle from line-bundle degrees.

    With all arrows nonvanishing the bundle is automatically stable.  When
    the final arrow is identically zero (``which_gamma_zero = n``), the
    invariant subbundles L_n, L_n + L_{n-1}, ... must all have negative
    degree: sum_{i=1}^{k} deg L_{n+1-i} < 0 for k = 1..n-1.
    """
    degs = [int(d) for d in degrees]
    if sum(degs) != 0:
        raise ValueError("line bundle degrees must sum to zero")
    if which_gamma_zero is None:
        return True
    if which_gamma_zero != len(degs):
        raise ValueError("only the final arrow may vanish for a cyclic bundle")
    partial = np.cumsum(degs[::-1])[: len(degs) - 1]
    return bool(np.all(partial < 0))


def hitchin_component_degrees(n: int, genus: int) -> tuple[int, ...]:
    """deg(L_k) for the Hitchin-section bundle: L_k = K^((n+1-2k)/2)."""
    return tuple((n + 1 - 2 * k) * (genus - 1) for k in range(1, n + 1))


def sp4_gothen_degrees(deg_n: int, genus: int) -> tuple[int, ...]:
    """deg(L_k) for the rank-4 bundle N + N K^{-1} + N^{-1} K + N^{-1}."""
    d, k = deg_n, 2 * genus - 2
    return (d, d - k, k - d, -d)
