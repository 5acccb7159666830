"""Zeros of G(z) in one cell, and the inverse map from zeros back to the state.

Roots are isolated with the argument principle: the phase of G is sampled on a
grid, the winding around each grid square counts the zeros inside, squares with
more than one zero are split recursively, and each isolated zero is finished by
Newton iteration with the analytic derivative.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import svd
from scipy.optimize import linear_sum_assignment

from analytic_rep import (
    AnalyticFunction, Cell, QuantumState, ZeroSet, basis_arguments,
    constraint_constant, evaluate, evaluate_with_derivative, round_to_lattice,
)
from errors import DomainError, InversionError, ZeroCountError
from theta import params_for_dimension, theta3

logger = logging.getLogger(__name__)

BOUNDARY_MARGIN = 1e-9
MATCH_AMBIGUITY = 1e-9
SINGULAR_RATIO = 1e-12


@dataclass(frozen=True)
class RootFindConfig:
    grid_n: int = 64
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    # multiple roots only converge to about eps ** (1 / k)
    min_separation: float = 1e-6
    max_retries: int = 5
    jitter_seed: int = 0
    edge_samples: int = 16
    max_edge_depth: int = 12
    max_depth: int = 48

    def __post_init__(self):
        if self.grid_n < 8:
            raise DomainError(f"grid_n must be at least 8, got {self.grid_n}")
        if not (self.newton_tol > 0 and self.min_separation > 0):
            raise DomainError("newton_tol and min_separation must be positive")
        if self.newton_max_iter < 1 or self.max_retries < 0 or self.edge_samples < 2:
            raise DomainError("invalid iteration limits in RootFindConfig")


class _BoundaryZero(ZeroCountError):
    """A zero sits on (or numerically at) a contour used for counting."""


# ── Argument principle ────────────────────────────────────────────────────

def _wrap(angle):
    return (angle + math.pi) % (2 * math.pi) - math.pi


def _phase(G, z):
    return np.angle(evaluate(G, z).value)


def _edge_increment(G, za, zb, cfg, depth=0):
    """Continuous change of arg G along the segment za -> zb."""
    t = np.linspace(0.0, 1.0, cfg.edge_samples + 1)
    pts = za + (zb - za) * t
    inc = _wrap(np.diff(_phase(G, pts)))
    big = np.abs(inc) > math.pi / 2
    if not big.any():
        return float(inc.sum())
    if depth >= cfg.max_edge_depth:
        raise _BoundaryZero(f"zero on the segment {za:.6g} -> {zb:.6g}")
    total = float(inc[~big].sum())
    for k in np.flatnonzero(big):
        total += _edge_increment(G, pts[k], pts[k + 1], cfg, depth + 1)
    return total


def _winding(G, corner, w, h, cfg):
    a, b, c, e = corner, corner + w, corner + w + 1j * h, corner + 1j * h
    total = sum(_edge_increment(G, p, q, cfg) for p, q in ((a, b), (b, c), (c, e), (e, a)))
    return int(round(total / (2 * math.pi)))


def contour_zero_count(G, origin, side, n=2048):
    """Zeros of G inside the square [origin, origin + side(1+i)] from the
    trapezoid rule applied to (1/2 pi i) * contour integral of G'/G."""
    t = np.arange(n) / n
    corners = [origin, origin + side, origin + side * (1 + 1j), origin + 1j * side]
    total = 0j
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        pts = a + (b - a) * t
        value, deriv = evaluate_with_derivative(G, pts)
        ratio = (deriv / value).to_complex()
        total += np.sum(ratio) * (b - a) / n
    count = total / (2j * math.pi)
    if abs(count.imag) > 0.1 or abs(count.real - round(count.real)) > 0.1:
        logger.warning("Contour count %.4f%+.4fi is not close to an integer", count.real, count.imag)
    return int(round(count.real))


# ── Newton ────────────────────────────────────────────────────────────────

def _newton(G, z0, cfg):
    z = complex(z0)
    for _ in range(cfg.newton_max_iter):
        value, deriv = evaluate_with_derivative(G, z)
        if deriv.value == 0:
            return z, False
        step = complex((value / deriv).to_complex())
        if not np.isfinite(step):
            return z, False
        z -= step
        if abs(step) < cfg.newton_tol:
            return z, True
    return z, False


def _newton_multiple(G, z0, k, cfg):
    """Newton with the step scaled by the multiplicity k; keeps the iterate with
    the smallest step, since rounding stalls it near a k-fold root."""
    z = best = complex(z0)
    best_step = math.inf
    for _ in range(cfg.newton_max_iter):
        value, deriv = evaluate_with_derivative(G, z)
        if deriv.value == 0:
            break
        step = k * complex((value / deriv).to_complex())
        if not np.isfinite(step):
            break
        z -= step
        if abs(step) < best_step:
            best, best_step = z, abs(step)
        if abs(step) < cfg.newton_tol:
            break
    return best, best_step < cfg.min_separation


def _cluster(G, corner, w, h, count, cfg):
    z, ok = _newton_multiple(G, corner + complex(w / 2, h / 2), count, cfg)
    if not (ok and _inside(z, corner, w, h)):
        return None
    if count > 1:
        logger.info("Zero of multiplicity %d near %.6g%+.6gi", count, z.real, z.imag)
    return z, count


def refine_zeros(state, guesses, cfg=None, cell=None):
    """Newton-polish each guess against G; returns (zeros, converged mask)."""
    cfg = cfg or RootFindConfig()
    G = AnalyticFunction(state, cell or Cell(state.d))
    z = np.array(guesses, dtype=complex).reshape(-1)
    ok = np.zeros(z.size, dtype=bool)
    active = np.arange(z.size)
    for _ in range(cfg.newton_max_iter):
        if active.size == 0:
            break
        value, deriv = evaluate_with_derivative(G, z[active])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = np.asarray((value / deriv).to_complex(), dtype=complex)
        bad = ~np.isfinite(step)
        z[active] -= np.where(bad, 0, step)
        done = (np.abs(step) < cfg.newton_tol) & ~bad
        ok[active[done]] = True
        active = active[~(done | bad)]
    return z, ok


# ── Isolation ─────────────────────────────────────────────────────────────

def _inside(z, corner, w, h):
    margin = max(BOUNDARY_MARGIN, 1e-6 * max(w, h))
    dz = z - corner
    return -margin <= dz.real <= w + margin and -margin <= dz.imag <= h + margin


def _isolate(G, corner, w, h, count, cfg, depth=0):
    """List of (zero, multiplicity) inside a rectangle known to hold `count` zeros."""
    center = corner + complex(w / 2, h / 2)
    if count == 1:
        z, ok = _newton(G, center, cfg)
        if ok and _inside(z, corner, w, h):
            return [(z, 1)]
    if max(w, h) <= cfg.min_separation or depth >= cfg.max_depth:
        found = _cluster(G, corner, w, h, count, cfg)
        return [found or (center, count)]

    # Off-centre splits break ties when a zero lies on the midline.
    for attempt in range(3):
        fx, fy = 0.5 + 0.0137 * attempt, 0.5 - 0.0091 * attempt
        w0, h0 = w * fx, h * fy
        children = [
            (corner, w0, h0),
            (corner + w0, w - w0, h0),
            (corner + 1j * h0, w0, h - h0),
            (corner + complex(w0, h0), w - w0, h - h0),
        ]
        try:
            counts = [_winding(G, c, cw, ch, cfg) for c, cw, ch in children]
        except _BoundaryZero:
            continue
        if sum(counts) == count and min(counts) >= 0:
            break
    else:
        # phase sampling breaks down next to a multiple zero
        found = _cluster(G, corner, w, h, count, cfg)
        if found is None:
            raise ZeroCountError(f"could not split a box holding {count} zeros at {corner:.6g}")
        return [found]

    found = []
    for (c, cw, ch), k in zip(children, counts):
        if k:
            found.extend(_isolate(G, c, cw, ch, k, cfg, depth + 1))
    return found


def _locate(G, origin, side, cfg):
    n = cfg.grid_n
    ticks = np.arange(n + 1) / n * side
    nodes = origin + ticks[None, :] + 1j * ticks[:, None]
    phase = _phase(G, nodes)

    horiz = _wrap(np.diff(phase, axis=1))
    vert = _wrap(np.diff(phase, axis=0))
    for j, i in np.argwhere(np.abs(horiz) > math.pi / 2):
        horiz[j, i] = _edge_increment(G, nodes[j, i], nodes[j, i + 1], cfg)
    for j, i in np.argwhere(np.abs(vert) > math.pi / 2):
        vert[j, i] = _edge_increment(G, nodes[j, i], nodes[j + 1, i], cfg)

    winding = horiz[:-1, :] + vert[:, 1:] - horiz[1:, :] - vert[:, :-1]
    counts = np.rint(winding / (2 * math.pi)).astype(int)
    if counts.min() < 0:
        raise ZeroCountError("negative winding number: G is entire, so evaluation is unreliable")
    total = int(counts.sum())
    if total != G.d:
        raise ZeroCountError(f"argument principle counted {total} zeros, expected {G.d}")

    step = side / n
    found = []
    for j, i in np.argwhere(counts > 0):
        found.extend(_isolate(G, nodes[j, i], step, step, int(counts[j, i]), cfg))
    return found


def _near_window_edge(z, origin, side):
    w = z - origin
    return min(abs(w.real), abs(w.real - side), abs(w.imag), abs(w.imag - side)) < BOUNDARY_MARGIN


def _assemble(found, cell, cfg, G=None):
    """Merge close roots into clusters, reduce into the cell and sort.

    With G given, roots merged from separate boxes are polished again as one
    root of the combined multiplicity.
    """
    merged = []
    for z, k in found:
        for entry in merged:
            if float(cell.lattice_distance(entry[0], z)) < cfg.min_separation:
                entry[1] += k
                entry[2] = True
                break
        else:
            merged.append([z, k, False])
    if G is not None:
        for entry in merged:
            if entry[2]:
                z, ok = _newton_multiple(G, entry[0], entry[1], cfg)
                if ok:
                    entry[0] = z
    merged = [(z, k) for z, k, _ in merged]
    if sum(k for _, k in merged) != cell.d:
        raise ZeroCountError(f"isolated {sum(k for _, k in merged)} zeros, expected {cell.d}")

    reduced = [(complex(cell.reduce(z)), k) for z, k in merged]
    reduced.sort(key=lambda item: (item[0].real, item[0].imag))
    zeros = [z for z, k in reduced for _ in range(k)]
    clusters = tuple((z, k) for z, k in reduced if k > 1)
    return ZeroSet(zeros, cell, clusters)


def find_zeros(state, cell=None, cfg=None):
    """The d zeros of G in `cell`, counted with multiplicity, sorted by (Re, Im)."""
    cfg = cfg or RootFindConfig()
    cell = cell or Cell(state.d)
    G = AnalyticFunction(state, cell)
    rng = np.random.default_rng(cfg.jitter_seed)
    offset = 0j
    last_error = None

    for attempt in range(1, cfg.max_retries + 2):
        origin = cell.origin + offset
        try:
            found = _locate(G, origin, cell.side, cfg)
            if any(_near_window_edge(z, origin, cell.side) for z, _ in found):
                raise _BoundaryZero("zero on the cell boundary")
            return _assemble(found, cell, cfg, G)
        except ZeroCountError as e:
            last_error = e
            logger.warning("Root finding attempt %d/%d failed: %s; shifting the window",
                           attempt, cfg.max_retries + 1, e)
            offset = complex(*rng.uniform(-1.0, 1.0, size=2)) * 1e-6 * cell.side

    raise ZeroCountError(f"could not isolate {cell.d} zeros: {last_error}")


# ── Inverse problem ───────────────────────────────────────────────────────

def complete_zeros(zeros_partial, cell):
    """Append (or recompute) the d-th zero from the lattice-modular sum constraint.

    Given d-1 zeros, the completed one is the representative inside the cell.
    Given d zeros, the last is replaced by the representative nearest to it.
    """
    zeros = np.asarray(zeros_partial, dtype=complex).reshape(-1)
    d = cell.d
    if zeros.size not in (d - 1, d):
        raise DomainError(f"expected {d - 1} or {d} zeros for d={d}, got {zeros.size}")
    free = zeros[:d - 1]
    last = cell.origin + constraint_constant(d) - complex(np.sum(free))
    if zeros.size == d:
        last = cell.nearest_representative(last, zeros[-1])
    else:
        last = cell.reduce(last)
    return np.append(free, complex(last))


def state_from_zeros(zeros, cell):
    """Coefficients g_m whose representation vanishes at the given zeros.

    The first d-1 zeros fix g up to scale through the null space of the
    (d-1) x d system sum_m g_m Theta_3[pi m/d - zeta_n sqrt(pi/(2d)); i/d] = 0;
    the result is normalized with the largest |g_m| made real positive.
    """
    zeros = np.asarray(zeros.zeros if isinstance(zeros, ZeroSet) else zeros, dtype=complex).reshape(-1)
    d = cell.d
    completed = complete_zeros(zeros, cell)
    if zeros.size == d:
        deviation = abs(completed[-1] - zeros[-1])
        if deviation > 1e-6:
            logger.warning("Zero %d deviates by %.3g from the sum constraint; using the completed value %.6g%+.6gi",
                           d - 1, deviation, completed[-1].real, completed[-1].imag)
    if d == 1:
        return QuantumState([1.0])

    rows = theta3(basis_arguments(d, completed[:d - 1]), params_for_dimension(d))
    scales = np.asarray(rows.log_scale, dtype=float)
    if scales.ndim:
        scales = scales - scales.max(axis=-1, keepdims=True)
    matrix = rows.value * np.exp(scales)
    matrix = matrix / np.linalg.norm(matrix, axis=1, keepdims=True)

    _, sing, vh = svd(matrix)
    if sing[-1] < SINGULAR_RATIO * sing[0]:
        raise InversionError(f"zeros determine no unique state (singular values {sing[0]:.3e} .. {sing[-1]:.3e})")
    g = vh[-1].conj()
    return _fix_phase(g)


def _fix_phase(g):
    g = np.asarray(g, dtype=complex)
    big = g[int(np.argmax(np.abs(g)))]
    g = g * (abs(big) / big)
    return QuantumState.from_coefficients(g)


# ── Matching on the covering plane ────────────────────────────────────────

@dataclass(frozen=True)
class Matching:
    lifted: np.ndarray
    order: np.ndarray
    cost: float
    ambiguous: bool


def match_on_cover(previous, current, cell):
    """Assign current zeros to the previous (lifted) ones by minimum total torus distance.

    Returns the current zeros reordered by previous label and lifted to the
    lattice representative nearest to each predecessor.
    """
    previous = np.asarray(previous, dtype=complex)
    current = np.asarray(current, dtype=complex)
    cost = cell.lattice_distance(previous[:, None], current[None, :])
    rows, cols = linear_sum_assignment(cost)
    order = cols[np.argsort(rows)]

    ambiguous = False
    n = len(order)
    for a in range(n):
        for b in range(a + 1, n):
            swapped = cost[a, order[b]] + cost[b, order[a]]
            if abs(swapped - (cost[a, order[a]] + cost[b, order[b]])) < MATCH_AMBIGUITY:
                ambiguous = True
    if ambiguous:
        logger.warning("Zero matching is ambiguous; keeping the lexicographic assignment")

    lifted = cell.nearest_representative(current[order], previous)
    total = float(cost[np.arange(n), order].sum())
    return Matching(np.asarray(lifted, dtype=complex).reshape(-1), order, total, ambiguous)


def lattice_offset(z, side):
    """Integer pair (a, b) of the lattice point nearest to z."""
    point = complex(round_to_lattice(z, side)) / side
    return int(round(point.real)), int(round(point.imag))
