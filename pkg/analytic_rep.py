"""Analytic representation G(z) of states of a d-dimensional system on a torus.

G(z) = pi^(-1/4) sum_m g_m Theta_3[pi m/d - z sqrt(pi/(2d)); i/d]

is quasi-periodic on the lattice sqrt(2 pi d) (Z + iZ), has exactly d zeros in
each cell and, up to a constant, equals the product over its zeros of
Theta_3[sqrt(pi/(2d)) (z - zeta_n) + pi(1+i)/2; i].
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from errors import ConfigError, DomainError, PreconditionError
from theta import (
    THETA_I, THETA_ZERO, ThetaValue, from_log, params_for_dimension,
    scaled_prod, scaled_sum, theta3, theta3_with_deriv,
)

logger = logging.getLogger(__name__)

PI_QUARTER = math.pi ** -0.25
NORM_TOL = 1e-12
REF_MIN_DISTANCE = 1e-3


def _scale(d):
    return math.sqrt(math.pi / (2 * d))


def constraint_constant(d):
    """d^(3/2) sqrt(pi/2) (1+i): the sum of zeros in the (0, 0) cell, modulo the lattice."""
    return d ** 1.5 * math.sqrt(math.pi / 2) * (1 + 1j)


def round_to_lattice(w, side):
    """Nearest lattice point side * (a + ib) to w (elementwise)."""
    w = np.asarray(w, dtype=complex)
    return side * (np.rint(w.real / side) + 1j * np.rint(w.imag / side))


# ── JSON helpers ──────────────────────────────────────────────────────────

def complex_to_pair(z):
    z = complex(z)
    return [z.real, z.imag]


def pair_to_complex(pair, field_name="value"):
    """Parse [re, im] (or a bare real number) into a complex."""
    if isinstance(pair, (int, float)) and not isinstance(pair, bool):
        return complex(pair)
    if (isinstance(pair, (list, tuple)) and len(pair) == 2
            and all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in pair)):
        return complex(pair[0], pair[1])
    raise ConfigError(field_name, f"expected [re, im], got {pair!r}")


def _require(data, key, context):
    if not isinstance(data, dict):
        raise ConfigError(context, "expected a JSON object")
    if key not in data:
        raise ConfigError(f"{context}.{key}" if context else key, "missing")
    return data[key]


def _parse_dimension(data, context):
    d = _require(data, "d", context)
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ConfigError(f"{context}.d" if context else "d", f"expected a positive integer, got {d!r}")
    return d


def parse_cell(data, d, context=""):
    """Cell from the optional "cell": [M, N] entry of a JSON object."""
    cell_idx = data.get("cell", [0, 0])
    if (not isinstance(cell_idx, list) or len(cell_idx) != 2
            or not all(isinstance(i, int) and not isinstance(i, bool) for i in cell_idx)):
        raise ConfigError(f"{context}.cell" if context else "cell", f"expected [M, N] integers, got {cell_idx!r}")
    return Cell(d, *cell_idx)


# ── Domain types ──────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class QuantumState:
    """Coefficients g_m of a pure state in the position basis |X;m>."""
    g: np.ndarray
    check_norm: bool = field(default=True, repr=False)

    def __post_init__(self):
        g = np.array(self.g, dtype=complex).reshape(-1)
        if g.size < 1:
            raise DomainError("a state needs at least one coefficient")
        if not np.all(np.isfinite(g)):
            raise DomainError("state coefficients must be finite")
        norm = float(np.sum(np.abs(g) ** 2))
        if self.check_norm and abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"state is not normalized: sum |g_m|^2 = {norm!r}")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def d(self):
        return self.g.size

    @classmethod
    def from_coefficients(cls, g):
        """Normalize an arbitrary nonzero vector into a state."""
        g = np.asarray(g, dtype=complex).reshape(-1)
        norm = np.linalg.norm(g)
        if norm == 0:
            raise DomainError("cannot normalize the zero vector")
        return cls(g / norm)

    def to_dict(self):
        return {"d": self.d, "g": [complex_to_pair(c) for c in self.g]}

    @classmethod
    def from_dict(cls, data, context="state"):
        d = _parse_dimension(data, context)
        raw = _require(data, "g", context)
        if not isinstance(raw, list) or len(raw) != d:
            raise ConfigError(f"{context}.g", f"expected {d} coefficients")
        g = [pair_to_complex(p, f"{context}.g[{i}]") for i, p in enumerate(raw)]
        try:
            return cls(g)
        except DomainError as e:
            raise ConfigError(f"{context}.g", str(e)) from e


def conjugate_state(state):
    """|g*> = sum_m g_m^* |X;m>."""
    return QuantumState(np.conj(state.g))


@dataclass(frozen=True)
class Cell:
    """Cell [M s, (M+1) s) x [N s, (N+1) s) with s = sqrt(2 pi d)."""
    d: int
    M: int = 0
    N: int = 0

    @property
    def side(self):
        return math.sqrt(2 * math.pi * self.d)

    @property
    def origin(self):
        return self.side * complex(self.M, self.N)

    def contains(self, z, slack=0.0):
        w = (np.asarray(z, dtype=complex) - self.origin) / self.side
        lo, hi = -slack, 1 + slack
        return (w.real >= lo) & (w.real < hi) & (w.imag >= lo) & (w.imag < hi)

    def reduce(self, z):
        """Lattice-equivalent representative inside the half-open cell."""
        z = np.asarray(z, dtype=complex)
        reduced = z - self.side * self._cell_offset(z)
        # a point just below the lower edge can round onto the upper edge
        w = (reduced - self.origin) / self.side
        re = np.where((w.real < 0.0) | (w.real >= 1.0), self.origin.real, reduced.real)
        im = np.where((w.imag < 0.0) | (w.imag >= 1.0), self.origin.imag, reduced.imag)
        reduced = re + 1j * im
        return complex(reduced) if reduced.ndim == 0 else reduced

    def _cell_offset(self, z):
        w = (z - self.origin) / self.side
        return np.floor(w.real) + 1j * np.floor(w.imag)

    def nearest_representative(self, z, ref):
        """Representative of z modulo the lattice closest to ref."""
        z = np.asarray(z, dtype=complex)
        rep = z + round_to_lattice(np.asarray(ref) - z, self.side)
        return complex(rep) if rep.ndim == 0 else rep

    def lattice_distance(self, a, b):
        """Distance between a and b on the torus."""
        diff = np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)
        return np.abs(diff - round_to_lattice(diff, self.side))


@dataclass(frozen=True)
class AnalyticFunction:
    state: QuantumState
    cell: Cell = None

    def __post_init__(self):
        if self.cell is None:
            object.__setattr__(self, "cell", Cell(self.state.d))
        if self.cell.d != self.state.d:
            raise DomainError(f"cell dimension {self.cell.d} != state dimension {self.state.d}")

    @property
    def d(self):
        return self.state.d

    def __call__(self, z):
        return evaluate(self, z)


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """The d zeros of G in one cell, in label order.

    clusters records zeros of multiplicity > 1 as (zero, multiplicity) pairs;
    such zeros appear repeated in `zeros`.
    """
    zeros: np.ndarray
    cell: Cell
    clusters: tuple = ()

    def __post_init__(self):
        zeros = np.array(self.zeros, dtype=complex).reshape(-1)
        if zeros.size != self.cell.d:
            raise DomainError(f"expected {self.cell.d} zeros, got {zeros.size}")
        if not np.all(self.cell.contains(zeros, slack=1e-12)):
            raise DomainError("zeros must lie inside the cell; use ZeroSet.from_representatives")
        zeros.setflags(write=False)
        object.__setattr__(self, "zeros", zeros)

    @property
    def d(self):
        return self.cell.d

    @classmethod
    def from_representatives(cls, zeros, cell, clusters=()):
        return cls(cell.reduce(np.asarray(zeros, dtype=complex)), cell, clusters)

    def to_dict(self):
        return {
            "d": self.d,
            "cell": [self.cell.M, self.cell.N],
            "zeros": [complex_to_pair(z) for z in self.zeros],
        }

    @classmethod
    def from_dict(cls, data, context="zeros"):
        d = _parse_dimension(data, context)
        cell = parse_cell(data, d, context)
        raw = _require(data, "zeros", context)
        if not isinstance(raw, list) or len(raw) != d:
            raise ConfigError(f"{context}.zeros", f"expected {d} zeros")
        zeros = [pair_to_complex(p, f"{context}.zeros[{i}]") for i, p in enumerate(raw)]
        return cls.from_representatives(zeros, cell)


@dataclass(frozen=True)
class NormalizationConstant:
    """N({zeta_n}) of the product form, in scaled form."""
    value: complex
    log_scale: float = 0.0

    @property
    def scaled(self):
        return ThetaValue(self.value, self.log_scale)

    def to_complex(self):
        return self.value * math.exp(self.log_scale)


# ── Evaluation ────────────────────────────────────────────────────────────

def basis_arguments(d, z):
    z = np.asarray(z, dtype=complex)
    m = np.arange(d)
    return math.pi * m / d - z[..., None] * _scale(d)


def evaluate(G, z):
    """G(z) in scaled form; z may be a scalar or an array."""
    thetas = theta3(basis_arguments(G.d, z), params_for_dimension(G.d))
    result = scaled_sum(thetas, weights=G.state.g) * PI_QUARTER
    return _squeeze(result)


def evaluate_with_derivative(G, z):
    """(G(z), G'(z)) with G'(z) = -sqrt(pi/(2d)) pi^(-1/4) sum_m g_m Theta_3'(...)."""
    base, slope = theta3_with_deriv(basis_arguments(G.d, z), params_for_dimension(G.d))
    value = scaled_sum(base, weights=G.state.g) * PI_QUARTER
    deriv = scaled_sum(slope, weights=G.state.g) * (-_scale(G.d) * PI_QUARTER)
    return _squeeze(value), _squeeze(deriv)


def _squeeze(tv):
    if np.ndim(tv.value) == 0:
        return ThetaValue(complex(tv.value), float(tv.log_scale))
    return tv


# ── Scalar product and coefficient recovery ───────────────────────────────

@dataclass(frozen=True)
class QuadratureResult:
    value: object
    quadrature_n: int
    error_estimate: float
    warning: str = None

    @property
    def accurate(self):
        return self.warning is None


def _midpoint_grid(cell, n):
    offsets = (np.arange(n) + 0.5) / n * cell.side
    x, y = np.meshgrid(offsets, offsets, indexing="xy")
    return cell.origin + x + 1j * y


def _as_scaled(values):
    if isinstance(values, ThetaValue):
        return values
    return ThetaValue(np.asarray(values, dtype=complex), 0.0)


def _quadrature(integrand, cell, n, tol):
    if n < 8:
        raise DomainError(f"quadrature_n must be at least 8, got {n}")

    def rule(k):
        z = _midpoint_grid(cell, k)
        weight = (cell.side / k) ** 2
        return integrand(z) * weight

    fine = rule(n)
    coarse = rule(max(n // 2, 4))
    error = float(np.max(np.abs(np.asarray(fine) - np.asarray(coarse))))
    warning = None
    if n < 64:
        warning = f"quadrature_n={n} is below the recommended minimum of 64"
    elif error > tol:
        warning = f"quadrature error estimate {error:.2e} exceeds {tol:.0e}; increase quadrature_n"
    if warning:
        logger.warning(warning)
    return fine, error, warning


def scalar_product(f, g, quadrature_n=256, cell=None, tol=1e-6):
    """<f*|g> = (d^(3/2) sqrt(2 pi))^-1 int_S dmu(z) F(z*) G(z) = sum_m f_m g_m.

    No conjugation is applied to f; pass conjugate_state(f) for <f|g>.
    """
    if f.d != g.d:
        raise DomainError(f"dimension mismatch: {f.d} != {g.d}")
    cell = cell or Cell(f.d)
    F = AnalyticFunction(f, cell)
    G = AnalyticFunction(g, cell)

    def integrand(z):
        prod = evaluate(F, np.conj(z)) * evaluate(G, z)
        density = prod.value * np.exp(prod.log_scale - z.imag ** 2)
        return np.sum(density)

    norm = 1.0 / (f.d ** 1.5 * math.sqrt(2 * math.pi))
    value, error, warning = _quadrature(lambda z: integrand(z) * norm, cell, quadrature_n, tol)
    return QuadratureResult(complex(value), quadrature_n, error, warning)


def coefficients_from_function(G, d, cell=None, quadrature_n=256, tol=1e-6):
    """g_m = 2^(-1/2) pi^(-3/4) d^(-3/2) int_S dmu(z) Theta_3[pi m/d - z sqrt(pi/(2d)); i/d] G(z*).

    G is any callable mapping an array of z to complex values (or ThetaValues).
    """
    cell = cell or Cell(d)
    params = params_for_dimension(d)
    prefactor = 2 ** -0.5 * math.pi ** -0.75 * d ** -1.5

    def integrand(z):
        basis = theta3(basis_arguments(d, z), params)
        conj_values = _as_scaled(G(np.conj(z)))
        scale = basis.log_scale + np.asarray(conj_values.log_scale)[..., None] - z.imag[..., None] ** 2
        terms = basis.value * np.asarray(conj_values.value)[..., None] * np.exp(scale)
        return prefactor * terms.reshape(-1, d).sum(axis=0)

    value, error, warning = _quadrature(integrand, cell, quadrature_n, tol)
    return QuadratureResult(np.asarray(value), quadrature_n, error, warning)


# ── Zeros: constraint, product form, normalization ────────────────────────

def _zero_array(zeros):
    if isinstance(zeros, ZeroSet):
        return np.asarray(zeros.zeros, dtype=complex)
    return np.asarray(zeros, dtype=complex).reshape(-1)


def _constraint_offset(zeros, cell):
    zeros = _zero_array(zeros)
    return complex(np.sum(zeros)) - cell.origin - constraint_constant(cell.d)


def sum_constraint_defect(zs, cell=None):
    """Distance of sum(zeta_n) from side (M+iN) + d^(3/2) sqrt(pi/2)(1+i), modulo the lattice."""
    cell = zs.cell if isinstance(zs, ZeroSet) else cell
    offset = _constraint_offset(zs, cell)
    return float(abs(offset - complex(round_to_lattice(offset, cell.side))))


def effective_cell_index(zeros, d):
    """(M, N) such that the given representatives sum to side (M+iN) + constant."""
    cell = Cell(d)
    w = _constraint_offset(zeros, cell) / cell.side
    return int(round(w.real)), int(round(w.imag))


def product_form(zeros, d, z):
    """exp(-i sqrt(2 pi/d) N z) prod_n Theta_3[sqrt(pi/(2d))(z - zeta_n) + pi(1+i)/2; i].

    N is the effective cell index of the representatives, so any lifts of the
    zeros on the covering plane may be used.
    """
    zeros = _zero_array(zeros)
    z = np.asarray(z, dtype=complex)
    _, n_index = effective_cell_index(zeros, d)
    u = _scale(d) * (z[..., None] - zeros) + THETA_ZERO
    factors = scaled_prod(theta3(u, THETA_I))
    phase = from_log(-1j * math.sqrt(2 * math.pi / d) * n_index * z)
    return _squeeze(factors * phase)


def _check_constraint(zeros, d, tol=1e-6):
    defect = sum_constraint_defect(zeros, Cell(d))
    if defect > tol:
        raise PreconditionError(f"zeros violate the sum constraint (defect {defect:.3e} > {tol:.0e})")


def reference_candidates(cell):
    xs = (np.arange(4) + 0.5) / 4
    ys = (np.arange(2) + 0.5) / 2
    return np.array([cell.origin + cell.side * complex(x, y) for y in ys for x in xs])


def choose_reference_point(zeros, cell):
    """Coarse-grid point farthest (on the torus) from every zero."""
    zeros = _zero_array(zeros)
    candidates = reference_candidates(cell)
    clearance = [float(np.min(cell.lattice_distance(c, zeros))) for c in candidates]
    return complex(candidates[int(np.argmax(clearance))])


def compute_normalization(state, zs, z_ref=None):
    """N({zeta}) = G(z_ref) / product_form(z_ref); independent of z_ref."""
    zeros = _zero_array(zs)
    cell = Cell(state.d)
    if z_ref is None:
        z_ref = choose_reference_point(zeros, cell)
    nearest = float(np.min(cell.lattice_distance(z_ref, zeros)))
    if nearest < REF_MIN_DISTANCE:
        raise PreconditionError(f"z_ref={z_ref} lies within {nearest:.1e} of a zero")
    quotient = (evaluate(AnalyticFunction(state, cell), z_ref) / product_form(zeros, state.d, z_ref)).normalized()
    return NormalizationConstant(complex(quotient.value), float(quotient.log_scale))


class ProductForm:
    """Callable G(z) = N({zeta}) exp(-i sqrt(2 pi/d) N z) prod Theta_3[...]."""

    def __init__(self, zeros, d, norm):
        self.zeros = _zero_array(zeros)
        self.d = d
        self.norm = norm

    def __call__(self, z):
        return product_form(self.zeros, self.d, z) * self.norm.scaled


def reconstruct_from_zeros(zs, state=None):
    """Product-form evaluator and its normalization constant for a zero set.

    Without an explicit state, the state is recovered from the zeros first.
    """
    zeros = _zero_array(zs)
    d = zs.d if isinstance(zs, ZeroSet) else zeros.size
    _check_constraint(zeros, d)
    if state is None:
        from zeros import state_from_zeros
        state = state_from_zeros(zeros, Cell(d))
    norm = compute_normalization(state, zeros)
    return ProductForm(zeros, d, norm), norm
