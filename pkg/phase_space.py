"""Displacement operators on Z(d) x Z(d) and their real powers.

Z and X are the clock and shift operators in the position basis,
D(alpha, beta) = Z^alpha X^beta times a phase. A real power op^t acts as a
time evolution whose zero paths are compared against shifted copies of
themselves.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur
from scipy.optimize import linear_sum_assignment

import settings
from analytic_rep import PI_QUARTER, Cell, QuantumState, ZeroSet, _scale
from errors import ConfigError, DomainError, InsufficientCoverageError
from evolution import PathBundle, _collect_zeros, link_samples
from theta import from_log, params_for_dimension, scaled_sum, theta3
from zeros import RootFindConfig

logger = logging.getLogger(__name__)

BRANCH_CUT_TOL = 1e-12


def omega(m, d):
    """omega(m) = exp(2 pi i m / d), elementwise."""
    return np.exp(2j * math.pi * np.asarray(m) / d)


def mod_inverse(a, d):
    return pow(int(a), -1, int(d))


# ── Fourier ───────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FourierMatrix:
    """F_mn = d^(-1/2) omega(mn); |P;n> = F|X;n>."""
    d: int
    matrix: np.ndarray

    def momentum_coefficients(self, g):
        """g~ with sum_m g~_m |P;m> = sum_m g_m |X;m>."""
        return self.matrix.conj().T @ np.asarray(g, dtype=complex)

    def position_coefficients(self, g_tilde):
        return self.matrix @ np.asarray(g_tilde, dtype=complex)


def build_fourier(d):
    if d < 1:
        raise DomainError(f"d must be positive, got {d}")
    m = np.arange(d)
    return FourierMatrix(d, omega(np.outer(m, m), d) / math.sqrt(d))


# ── Displacement operators ────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class DisplacementOp:
    d: int
    alpha: int
    beta: int
    matrix: np.ndarray
    name: str = "D"
    _eig: list = field(default_factory=list, repr=False)

    def eigenpairs(self):
        """Eigenvalues e_m and orthonormal eigenvectors |u_m> (columns).

        The complex Schur form of a normal matrix is diagonal, so its unitary
        factor is an orthonormal eigenbasis even inside degenerate eigenspaces.
        """
        if not self._eig:
            upper, vectors = schur(self.matrix, output="complex")
            self._eig.append((np.diag(upper).copy(), vectors))
        return self._eig[0]

    def spec(self):
        if self.name in ("X", "Z"):
            return {"d": self.d, "op": self.name}
        return {"d": self.d, "alpha": self.alpha, "beta": self.beta}

    def __matmul__(self, other):
        return self.matrix @ other


def _check_dimension(d):
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise DomainError(f"d must be a positive integer, got {d!r}")


def build_Z(d):
    _check_dimension(d)
    return DisplacementOp(d, 1, 0, np.diag(omega(np.arange(d), d)), "Z")


def build_X(d):
    """Cyclic shift X|X;n> = |X;n+1>."""
    _check_dimension(d)
    matrix = np.zeros((d, d), dtype=complex)
    n = np.arange(d)
    matrix[(n + 1) % d, n] = 1.0
    return DisplacementOp(d, 0, 1, matrix, "X")


def build_D(d, alpha, beta, convention=None):
    """D(alpha, beta) = Z^alpha X^beta omega(-2^(-1) alpha beta), d odd when alpha beta != 0.

    The 'printed' convention multiplies by the constant phase omega(-2^(-1/2))
    instead; global phases do not move zeros.
    """
    _check_dimension(d)
    alpha, beta = int(alpha) % d, int(beta) % d
    convention = convention or settings.d_phase_convention()
    if (alpha * beta) % d and d % 2 == 0:
        raise DomainError(f"D({alpha}, {beta}) needs odd d so that 2^(-1) exists in Z({d})")
    Z = np.linalg.matrix_power(build_Z(d).matrix, alpha)
    X = np.linalg.matrix_power(build_X(d).matrix, beta)
    if convention == "printed":
        phase = omega(-2 ** -0.5, d)
    elif (alpha * beta) % d:
        phase = omega(-mod_inverse(2, d) * alpha * beta, d)
    else:
        phase = 1.0
    return DisplacementOp(d, alpha, beta, Z @ X * phase, "D")


def operator_from_spec(spec):
    """DisplacementOp from {"d", "op": "X"|"Z"} or {"d", "alpha", "beta"}."""
    if not isinstance(spec, dict) or not isinstance(spec.get("d"), int):
        raise ConfigError("displacement.d", "expected a positive integer")
    d = spec["d"]
    try:
        if "op" in spec:
            builders = {"X": build_X, "Z": build_Z}
            if spec["op"] not in builders:
                raise ConfigError("displacement.op", f"expected 'X' or 'Z', got {spec['op']!r}")
            return builders[spec["op"]](d)
        for key in ("alpha", "beta"):
            if not isinstance(spec.get(key), int):
                raise ConfigError(f"displacement.{key}", "expected an integer")
        return build_D(d, spec["alpha"], spec["beta"])
    except DomainError as e:
        raise ConfigError("displacement", str(e)) from e


def principal_log(values):
    """i * Arg(e) for unimodular e; e = -1 is flagged and mapped to +i pi."""
    values = np.asarray(values, dtype=complex)
    angles = np.angle(values)
    at_cut = np.abs(values + 1.0) < BRANCH_CUT_TOL
    if at_cut.any():
        logger.warning("Eigenvalue -1 on the branch cut of the logarithm; using Log(-1) = i pi")
        angles = np.where(at_cut, math.pi, angles)
    return 1j * angles, bool(at_cut.any())


def fractional_power(op, t):
    """op^t = sum_m exp(t Log e_m) |u_m><u_m| with the principal logarithm."""
    values, vectors = op.eigenpairs()
    logs, _ = principal_log(values)
    return (vectors * np.exp(t * logs)) @ vectors.conj().T


def on_branch_cut(op):
    values, _ = op.eigenpairs()
    return bool(np.any(np.abs(values + 1.0) < BRANCH_CUT_TOL))


# ── Momentum representation ───────────────────────────────────────────────

def momentum_function(g_tilde, d):
    """z -> pi^(-1/4) exp(-z^2/2) sum_m g~_m Theta_3[pi m/d - i z sqrt(pi/(2d)); i/d].

    For g = F g~ this is the same function as the position-basis
    representation evaluated at z.
    """
    g_tilde = np.asarray(g_tilde, dtype=complex)
    if g_tilde.size != d:
        raise DomainError(f"expected {d} coefficients, got {g_tilde.size}")
    params = params_for_dimension(d)
    m = np.arange(d)

    def evaluate(z):
        z = np.asarray(z, dtype=complex)
        args = math.pi * m / d - 1j * z[..., None] * _scale(d)
        total = scaled_sum(theta3(args, params), weights=g_tilde)
        return total * from_log(-z ** 2 / 2) * PI_QUARTER

    return evaluate


def momentum_route_state(g0, t, d=None):
    """X^t g computed in the momentum basis, where X is diagonal with entries omega(-m)."""
    g = np.asarray(g0.g if isinstance(g0, QuantumState) else g0, dtype=complex)
    d = d or g.size
    fourier = build_fourier(d)
    g_tilde = fourier.momentum_coefficients(g)
    logs, _ = principal_log(omega(-np.arange(d), d))
    return QuantumState.from_coefficients(fourier.position_coefficients(np.exp(t * logs) * g_tilde))


# ── Evolution ─────────────────────────────────────────────────────────────

def evolve_displacement(g0, op, times, anchor=None, root_cfg=None):
    """Zero paths of op^t |g0> over the time grid, matched on the cover."""
    if g0.d != op.d:
        raise DomainError(f"state dimension {g0.d} != operator dimension {op.d}")
    root_cfg = root_cfg or RootFindConfig()
    cell = Cell(op.d)
    times = np.asarray(times, dtype=float).reshape(-1)
    states = [QuantumState.from_coefficients(fractional_power(op, t) @ g0.g) for t in times]
    logger.info("Extracting zeros of %s^t at %d times", op.name, times.size)
    found = _collect_zeros(states, cell, root_cfg)
    lifted = link_samples(found, cell, anchor)
    initial = ZeroSet.from_representatives(lifted[0], cell)
    return PathBundle(times, lifted, cell, initial, {"displacement": op.spec()}, {"method": "displacement"})


# ── Verification ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ShiftCheck:
    n: int
    beta: int
    partner: int
    residual: float
    passed: bool


@dataclass(frozen=True)
class RealShiftReport:
    checks: tuple
    tol: float

    @property
    def max_violation(self):
        return max((c.residual for c in self.checks), default=0.0)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def rows(self):
        return [(f"n={c.n} beta={c.beta} -> path {c.partner}", c.residual, c.passed) for c in self.checks]


def verify_real_shift(bundle, d, tol=1e-4):
    """Check zeta_{n+beta}(t+beta) = zeta_n(t) + beta sqrt(2 pi/d) (mod lattice).

    For each beta the paths playing zeta_{n+beta} are assigned one-to-one by
    least total violation, so labels from the root finder need not follow n+beta.
    """
    if bundle.d != d:
        raise DomainError(f"bundle has {bundle.d} paths, expected {d}")
    cell = bundle.cell
    shift = math.sqrt(2 * math.pi / d)
    t0, t_end = bundle.times[0], bundle.times[-1]
    checks = []
    for beta in range(d):
        idx = np.flatnonzero(bundle.times + beta <= t_end + 1e-9)
        if beta and idx.size < 2:
            raise InsufficientCoverageError(f"paths end at t={t_end:.6g}; shift beta={beta} needs more time")
        later = np.array([bundle.position(t + beta) for t in bundle.times[idx]])
        expected = bundle.lifted[idx] + beta * shift
        cost = np.max(cell.lattice_distance(later[:, None, :], expected[:, :, None]), axis=0)
        for n, partner in zip(*linear_sum_assignment(cost)):
            residual = float(cost[n, partner])
            checks.append(ShiftCheck(int(n), beta, int(partner), residual, residual < tol))
    report = RealShiftReport(tuple(checks), tol)
    logger.info("Shift relation over t in [%.3g, %.3g]: max violation %.3e", t0, t_end, report.max_violation)
    return report


@dataclass(frozen=True)
class PairMatch:
    a: int
    b: int
    sigma: complex
    delta: float
    residual: float


@dataclass(frozen=True)
class ShiftedCopyReport:
    pairs: tuple
    tol: float

    def best_partner(self, a):
        candidates = [p for p in self.pairs if p.a == a]
        return min(candidates, key=lambda p: p.residual)

    @property
    def paths(self):
        return sorted({p.a for p in self.pairs})

    @property
    def max_residual(self):
        return max((self.best_partner(a).residual for a in self.paths), default=0.0)

    @property
    def passed(self):
        return self.max_residual < self.tol

    def rows(self):
        out = []
        for a in self.paths:
            p = self.best_partner(a)
            label = f"path {a} ~ path {p.b} shift {p.sigma.real:+.4f}{p.sigma.imag:+.4f}i dt {p.delta:+.4f}"
            out.append((label, p.residual, p.residual < self.tol))
        return out


def _uniform_step(times):
    steps = np.diff(times)
    if steps.size == 0:
        return 0.0
    h = float(np.mean(steps))
    if np.max(np.abs(steps - h)) > 1e-9 * max(1.0, h):
        raise DomainError("shift search needs a uniform time grid")
    return h


def _best_shift(cell, a_path, b_path, h, max_offset):
    """Best constant shift sigma and index offset s with a(t + s h) ~ b(t) + sigma."""
    n = b_path.size
    best = (math.inf, 0j, 0)
    for s in range(-max_offset, max_offset + 1):
        if s >= 0:
            diff = a_path[s:] - b_path[:n - s]
        else:
            diff = a_path[:n + s] - b_path[-s:]
        # differences taken modulo the lattice, next to the first one
        diff = cell.nearest_representative(diff, diff[0])
        sigma = complex((diff.real.max() + diff.real.min()) / 2, (diff.imag.max() + diff.imag.min()) / 2)
        residual = float(np.max(np.abs(diff - sigma)))
        if residual < best[0]:
            best = (residual, sigma, s)
    residual, sigma, s = best
    return residual, complex(cell.nearest_representative(sigma, 0j)), s * h


def verify_shifted_copies(bundle, d, tol=1e-3):
    """For each ordered pair of paths, the constant shift and time offset that best map one onto the other."""
    if bundle.d != d:
        raise DomainError(f"bundle has {bundle.d} paths, expected {d}")
    cell = bundle.cell
    if d == 1:
        return ShiftedCopyReport((PairMatch(0, 0, 0j, 0.0, 0.0),), tol)
    h = _uniform_step(bundle.times)
    max_offset = (bundle.times.size - 1) // 2
    pairs = []
    for a in range(d):
        for b in range(d):
            if a == b:
                continue
            residual, sigma, delta = _best_shift(cell, bundle.lifted[:, a], bundle.lifted[:, b], h, max_offset)
            pairs.append(PairMatch(a, b, sigma, delta, residual))
    report = ShiftedCopyReport(tuple(pairs), tol)
    logger.info("Shifted-copy search: worst best-partner residual %.3e", report.max_residual)
    return report
