"""Time evolution of the zeros under a Hermitian Hamiltonian.

The tracker is a predictor/corrector: the zeros are moved with the closed-form
derivative d zeta_n / d g_m (Euler predictor) and then polished by Newton
iteration against G built from the updated coefficients. `oracle_evolve` is
the brute-force reference that re-roots G at every requested time.
"""
import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import eigh

import settings
from analytic_rep import (
    PI_QUARTER, Cell, QuantumState, ZeroSet, _scale, basis_arguments, complex_to_pair,
    compute_normalization, effective_cell_index, pair_to_complex, parse_cell,
    sum_constraint_defect,
)
from errors import ConfigError, DegeneracyError, DomainError, StepRejectedError
from theta import (
    THETA_I, THETA_PRIME_AT_ZERO, THETA_ZERO, from_log, params_for_dimension,
    scaled_prod, theta3,
)
from zeros import RootFindConfig, complete_zeros, find_zeros, match_on_cover, refine_zeros, state_from_zeros

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
DEGENERATE_SEPARATION = 1e-6
COINCIDENT_SEPARATION = 1e-9
MAX_HALVINGS = 10
PROGRESS_EVERY = 1000
DEFAULT_DT = 1e-3
STEPS_PER_PERIOD = 5000


# ── Hamiltonian ───────────────────────────────────────────────────────────

class Hamiltonian:
    """Hermitian d x d matrix H_mn with a cached spectral decomposition."""

    def __init__(self, h):
        h = np.array(h, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
            raise DomainError(f"Hamiltonian must be a square matrix, got shape {h.shape}")
        if np.max(np.abs(h - h.conj().T)) > HERMITIAN_TOL:
            raise DomainError("Hamiltonian is not Hermitian")
        h.setflags(write=False)
        self.h = h
        self._eig = None
        self._propagators = {}

    @property
    def d(self):
        return self.h.shape[0]

    def _spectrum(self):
        if self._eig is None:
            values, vectors = eigh(self.h)
            self._eig = (values, vectors)
        return self._eig

    @property
    def eigenvalues(self):
        return self._spectrum()[0]

    @property
    def eigenvectors(self):
        return self._spectrum()[1]

    def propagator(self, t):
        """exp(itH) from the spectral decomposition."""
        t = float(t)
        if t == 0.0:
            return np.eye(self.d, dtype=complex)
        cached = self._propagators.get(t)
        if cached is None:
            values, vectors = self._spectrum()
            cached = (vectors * np.exp(1j * t * values)) @ vectors.conj().T
            if len(self._propagators) < 64:
                self._propagators[t] = cached
        return cached

    def __neg__(self):
        return Hamiltonian(-self.h)

    def to_list(self):
        return [[complex_to_pair(x) for x in row] for row in self.h]

    @classmethod
    def from_list(cls, rows, field_name="hamiltonian"):
        if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
            raise ConfigError(field_name, "expected a list of matrix rows")
        matrix = [[pair_to_complex(x, f"{field_name}[{i}][{j}]") for j, x in enumerate(row)]
                  for i, row in enumerate(rows)]
        if any(len(row) != len(matrix) for row in matrix):
            raise ConfigError(field_name, "matrix must be square")
        try:
            return cls(matrix)
        except DomainError as e:
            raise ConfigError(field_name, str(e)) from e


def detect_period(H, tol=1e-9, t_max=1e3):
    """Smallest T <= t_max with exp(iTH) = exp(i theta) * 1, as (T, theta); None otherwise."""
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    values = H.eigenvalues
    gaps = values - values[0]
    nonzero = gaps[np.abs(gaps) > tol]
    if nonzero.size == 0:
        logger.info("Spectrum is degenerate: exp(itH) is a phase for every t")
        return None
    ref = float(nonzero[0])

    denominator = 1
    for gap in gaps:
        ratio = float(gap) / ref
        approx = Fraction(ratio).limit_denominator(10 ** 6)
        if abs(ratio - float(approx)) > tol * max(1.0, abs(ratio)):
            return None
        denominator = math.lcm(denominator, approx.denominator)

    period = 2 * math.pi * denominator / abs(ref)
    if period > t_max:
        return None
    theta = math.fmod(period * float(values[0]), 2 * math.pi)
    if theta < 0:
        theta += 2 * math.pi
    logger.info("Detected period T=%.10g (theta=%.6g)", period, theta)
    return period, theta


def norm_constraint_residual(state, delta):
    """sum_m [g_m^* dg_m + g_m dg_m^*]; zero for a Hermitian generator."""
    return float(2.0 * np.real(np.vdot(state.g, delta)))


# ── Paths ─────────────────────────────────────────────────────────────────

CSV_COLUMNS = ("t", "path_index", "re_lifted", "im_lifted", "re_cell", "im_cell")


@dataclass(frozen=True, eq=False)
class PathBundle:
    """d zero paths sampled on a common time grid.

    `lifted` holds positions on the covering plane (continuous in t); the
    cell-reduced positions are derived on demand.
    """
    times: np.ndarray
    lifted: np.ndarray
    cell: Cell
    initial: ZeroSet
    generator: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        lifted = np.array(self.lifted, dtype=complex).reshape(times.size, -1)
        if lifted.shape[1] != self.cell.d:
            raise DomainError(f"expected {self.cell.d} paths, got {lifted.shape[1]}")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DomainError("time grid must be strictly increasing")
        times.setflags(write=False)
        lifted.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "lifted", lifted)

    @property
    def d(self):
        return self.cell.d

    @property
    def reduced(self):
        return self.cell.reduce(self.lifted)

    def constraint_defects(self):
        return np.array([sum_constraint_defect(row, self.cell) for row in self.lifted])

    def position(self, t):
        """Lifted positions at time t by linear interpolation."""
        re = [np.interp(t, self.times, self.lifted[:, n].real) for n in range(self.d)]
        im = [np.interp(t, self.times, self.lifted[:, n].imag) for n in range(self.d)]
        return np.array(re) + 1j * np.array(im)

    def write_csv(self, path):
        reduced = self.reduced
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for k, t in enumerate(self.times):
                for n in range(self.d):
                    z, r = self.lifted[k, n], reduced[k, n]
                    writer.writerow([repr(float(t)), n] + [repr(float(x)) for x in (z.real, z.imag, r.real, r.imag)])

    def to_dict(self):
        return {
            "d": self.d,
            "cell": [self.cell.M, self.cell.N],
            "generator": self.generator,
            "config": self.config,
            "initial_zeros": [complex_to_pair(z) for z in self.initial.zeros],
            "times": [float(t) for t in self.times],
            "paths": [[complex_to_pair(z) for z in self.lifted[:, n]] for n in range(self.d)],
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("bundle", "expected a JSON object")
        for key in ("d", "times", "paths"):
            if key not in data:
                raise ConfigError(key, "missing")
        d = data["d"]
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise ConfigError("d", f"expected a positive integer, got {d!r}")
        cell = parse_cell(data, d)
        times = data["times"]
        if (not isinstance(times, list)
                or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in times)):
            raise ConfigError("times", "expected a list of numbers")
        paths = data["paths"]
        if not isinstance(paths, list) or len(paths) != d or not all(isinstance(p, list) for p in paths):
            raise ConfigError("paths", f"expected {d} paths")
        lifted = np.array([[pair_to_complex(p, f"paths[{n}]") for p in path] for n, path in enumerate(paths)]).T
        if lifted.shape[0] != len(times):
            raise ConfigError("paths", "path length does not match the time grid")
        initial = data.get("initial_zeros") or [complex_to_pair(z) for z in lifted[0]]
        zs = ZeroSet.from_representatives([pair_to_complex(p, "initial_zeros") for p in initial], cell)
        try:
            return cls(times, lifted, cell, zs, data.get("generator", {}), data.get("config", {}))
        except DomainError as e:
            raise ConfigError("bundle", str(e)) from e

    @classmethod
    def read_json(cls, path):
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(str(path), f"invalid JSON: {e}") from e
        return cls.from_dict(data)


# ── Semi-analytic tracker ─────────────────────────────────────────────────

@dataclass(frozen=True)
class TrackerConfig:
    dt: float = None
    polish_every: int = 1
    resync_every: int = 500
    renormalize: bool = True
    coefficient_update: str = "exact"
    record_every: int = 1
    root: RootFindConfig = field(default_factory=RootFindConfig)

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.polish_every < 0 or self.resync_every < 0 or self.record_every < 1:
            raise DomainError("polish_every and resync_every must be >= 0, record_every >= 1")
        if self.coefficient_update not in ("exact", "euler"):
            raise DomainError(f"coefficient_update must be 'exact' or 'euler', got {self.coefficient_update!r}")

    def to_dict(self):
        data = asdict(self)
        data.pop("root")
        return data


def _min_separation(zeros, cell):
    if zeros.size < 2:
        return math.inf
    dist = cell.lattice_distance(zeros[:, None], zeros[None, :])
    return float(np.min(dist[~np.eye(zeros.size, dtype=bool)]))


def zero_derivatives(state, zeros, norm=None):
    """Matrix J[n, m] = d zeta_n / d g_m.

    J[n, m] = -pi^(-1/4) Theta_3[pi m/d - zeta_n c; i/d]
              / (N E(zeta_n) c A_n(zeta_n) Theta_3'[pi(1+i)/2; i])

    with c = sqrt(pi/(2d)), E the exponential prefactor of the product form
    and A_n the product of the other theta factors at zeta_n.
    """
    zeros = np.asarray(zeros.zeros if isinstance(zeros, ZeroSet) else zeros, dtype=complex).reshape(-1)
    d = state.d
    cell = Cell(d)
    if zeros.size != d:
        raise DomainError(f"expected {d} zeros, got {zeros.size}")
    if _min_separation(zeros, cell) < COINCIDENT_SEPARATION:
        raise DegeneracyError("two zeros coincide; d zeta / d g is undefined")
    if norm is None:
        norm = compute_normalization(state, zeros)
    c = _scale(d)

    basis = theta3(basis_arguments(d, zeros), params_for_dimension(d))
    if d > 1:
        u = c * (zeros[:, None] - zeros[None, :]) + THETA_ZERO
        u = u[~np.eye(d, dtype=bool)].reshape(d, d - 1)
        others = scaled_prod(theta3(u, THETA_I))
    else:
        others = from_log(np.zeros(1))

    _, n_index = effective_cell_index(zeros, d)
    prefactor = from_log(-1j * math.sqrt(2 * math.pi / d) * n_index * zeros)
    denom = others * prefactor * norm.scaled * (c * THETA_PRIME_AT_ZERO)
    if np.any(np.abs(denom.value) == 0):
        raise DegeneracyError("A_n(zeta_n) vanishes")

    log_scale = np.asarray(basis.log_scale) - np.asarray(denom.log_scale)[:, None]
    return -PI_QUARTER * basis.value / np.asarray(denom.value)[:, None] * np.exp(log_scale)


def finite_difference_derivatives(state, zeros, eps=1e-6, root_cfg=None):
    """d zeta_n / d g_m by perturbing each g_m and re-solving with find_zeros."""
    zeros = np.asarray(zeros, dtype=complex).reshape(-1)
    cell = Cell(state.d)
    J = np.empty((state.d, state.d), dtype=complex)
    for m in range(state.d):
        g = np.array(state.g)
        g[m] += eps
        moved = find_zeros(QuantumState(g, check_norm=False), cell, root_cfg).zeros
        J[:, m] = (match_on_cover(zeros, moved, cell).lifted - zeros) / eps
    return J


def _next_coefficients(state, H, dt, delta, cfg):
    if cfg.coefficient_update == "exact":
        g = H.propagator(dt) @ state.g
    else:
        g = state.g + delta
    if cfg.renormalize:
        g = g / np.linalg.norm(g)
    return QuantumState(g, check_norm=cfg.renormalize)


def _oracle_step(state, zeros, H, dt, cfg, cell):
    new_state = _next_coefficients(state, H, dt, 1j * dt * (H.h @ state.g), cfg)
    fresh = find_zeros(new_state, cell, cfg.root)
    return new_state, match_on_cover(zeros, fresh.zeros, cell).lifted


def step(state, zeros, H, dt, cfg=None, polish=True):
    """One tracker step; returns (state', zeros') with zeros' lifted next to zeros.

    dg = i dt H g; zeta' = zeta + J dg; then zeta' is Newton-polished on G(g').
    """
    cfg = cfg or TrackerConfig()
    zeros = np.asarray(zeros, dtype=complex).reshape(-1)
    cell = Cell(state.d)
    if _min_separation(zeros, cell) < DEGENERATE_SEPARATION:
        logger.info("Zeros closer than %.0e; taking an oracle step", DEGENERATE_SEPARATION)
        return _oracle_step(state, zeros, H, dt, cfg, cell)

    delta = 1j * dt * (H.h @ state.g)
    predicted = zeros + zero_derivatives(state, zeros) @ delta
    new_state = _next_coefficients(state, H, dt, delta, cfg)
    if not polish:
        result = predicted
    else:
        refined, ok = refine_zeros(new_state, predicted, cfg.root, cell)
        if not ok.all():
            raise StepRejectedError("Newton polish did not converge")
        limit = 0.25 * _min_separation(predicted, cell)
        correction = np.max(np.abs(refined - predicted))
        if correction > limit:
            raise StepRejectedError(f"polish moved a zero by {correction:.3e} (limit {limit:.3e})")
        result = refined

    jump = np.max(np.abs(result - zeros))
    if jump > cell.side / 2:
        raise StepRejectedError(f"a zero jumped by {jump:.3g} in one step; dt is too large")
    return new_state, result


def _advance(state, zeros, H, dt, cfg, polish, t):
    """step() with rejection handling: retry as 2, 4, ... substeps."""
    for halving in range(MAX_HALVINGS + 1):
        substeps = 2 ** halving
        try:
            s, z = state, zeros
            for _ in range(substeps):
                s, z = step(s, z, H, dt / substeps, cfg, polish)
            return s, z
        except StepRejectedError as e:
            if halving == MAX_HALVINGS:
                raise StepRejectedError(f"step at t={t:.6g} rejected after {MAX_HALVINGS} halvings: {e}") from e
            logger.warning("Step at t=%.6g rejected (%s); halving dt", t, e)


def _initial_data(H, state0, zeros0, cfg):
    d = H.d
    cell = Cell(d)
    if (state0 is None) == (zeros0 is None):
        raise DomainError("give exactly one of state0 and zeros0")
    if state0 is not None:
        if state0.d != d:
            raise DomainError(f"state dimension {state0.d} != Hamiltonian dimension {d}")
        return state0, np.asarray(find_zeros(state0, cell, cfg.root).zeros, dtype=complex)
    raw = np.asarray(zeros0.zeros if isinstance(zeros0, ZeroSet) else zeros0, dtype=complex).reshape(-1)
    state = state_from_zeros(raw, cell)
    return state, complete_zeros(raw, cell)


def resolve_dt(H, cfg):
    if cfg.dt is not None:
        return cfg.dt
    period = detect_period(H)
    return period[0] / STEPS_PER_PERIOD if period else DEFAULT_DT


def track(H, t_end, cfg=None, state0=None, zeros0=None):
    """Follow the zeros from t=0 to t_end; returns a PathBundle of lifted paths.

    With zeros0 the labels follow the given order and the state is recovered
    from the zeros; with state0 the labels follow find_zeros order.
    """
    cfg = cfg or TrackerConfig()
    if not t_end > 0:
        raise DomainError(f"t_end must be positive, got {t_end}")
    state, zeros = _initial_data(H, state0, zeros0, cfg)
    cell = Cell(H.d)
    dt_target = resolve_dt(H, cfg)
    n_steps = max(1, int(math.ceil(t_end / dt_target - 1e-9)))
    dt = t_end / n_steps
    initial = ZeroSet.from_representatives(zeros, cell)
    logger.info("Tracking %d zeros to t=%.6g in %d steps (dt=%.3e)", H.d, t_end, n_steps, dt)

    times, samples = [0.0], [zeros.copy()]
    for k in range(1, n_steps + 1):
        polish = cfg.polish_every > 0 and k % cfg.polish_every == 0
        state, zeros = _advance(state, zeros, H, dt, cfg, polish, (k - 1) * dt)
        if cfg.resync_every and k % cfg.resync_every == 0:
            fresh = find_zeros(state, cell, cfg.root)
            matched = match_on_cover(zeros, fresh.zeros, cell).lifted
            drift = float(np.max(np.abs(matched - zeros)))
            if drift > 1e-6:
                logger.warning("Resync at t=%.6g corrected a drift of %.3e", k * dt, drift)
            zeros = matched
        if k % cfg.record_every == 0 or k == n_steps:
            times.append(k * dt)
            samples.append(zeros.copy())
        if k % PROGRESS_EVERY == 0 or k == n_steps:
            logger.info("[%d/%d] Tracker progress (t=%.4f)", k, n_steps, k * dt)

    generator = {"hamiltonian": H.to_list()}
    config = dict(cfg.to_dict(), dt=dt, t_end=t_end)
    return PathBundle(np.array(times), np.array(samples), cell, initial, generator, config)


# ── Oracle ────────────────────────────────────────────────────────────────

def _collect_zeros(states, cell, root_cfg):
    """find_zeros for each state on a thread pool, results in input order."""
    with ThreadPoolExecutor(max_workers=settings.max_workers()) as pool:
        futures = [pool.submit(find_zeros, s, cell, root_cfg) for s in states]
        return [f.result().zeros for f in futures]


def link_samples(found, cell, anchor=None):
    """Sequential matching of per-time zero sets into continuous lifted paths."""
    previous = np.asarray(found[0] if anchor is None else anchor, dtype=complex)
    if anchor is not None:
        previous = match_on_cover(previous, found[0], cell).lifted
    lifted = [previous]
    for current in found[1:]:
        previous = match_on_cover(previous, current, cell).lifted
        lifted.append(previous)
    return np.array(lifted)


def oracle_evolve(state0, H, times, anchor=None, root_cfg=None):
    """Reference paths: g(t) = exp(itH) g(0), zeros re-found at every time."""
    root_cfg = root_cfg or RootFindConfig()
    cell = Cell(state0.d)
    times = np.asarray(times, dtype=float).reshape(-1)
    states = [QuantumState.from_coefficients(H.propagator(t) @ state0.g) for t in times]
    found = _collect_zeros(states, cell, root_cfg)
    lifted = link_samples(found, cell, anchor)
    initial = ZeroSet.from_representatives(lifted[0], cell)
    return PathBundle(times, lifted, cell, initial, {"hamiltonian": H.to_list()}, {"method": "oracle"})
