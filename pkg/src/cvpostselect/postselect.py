"""Selection region, key-rate integral and modulation-width optimization.

The key rate per raw channel use is the integral of
``joint_density(E, x) * max(delta_info(E, x), 0)`` over ``E >= 0`` and ``x``.
Integrals use a tensor-product composite Simpson rule on a :class:`GridSpec`
box; the integrand is even in ``x``, so only ``x >= 0`` is evaluated.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from cvpostselect.coherent_info import (
    ChannelParams,
    bob_conditional_density,
    delta_info,
    error_prob,
    eve_error,
    eve_helstrom_success,
    eve_info,
)

logger = logging.getLogger(__name__)

_ROW_CHUNK = 64


@dataclass(frozen=True)
class GridSpec:
    """Integration box ``E in [0, e_max]``, ``x in [-x_max, x_max]`` and node counts."""

    e_max: float = 4.0
    x_max: float = 4.0
    n_e: int = 801
    n_x: int = 1601

    def __post_init__(self):
        if not (self.e_max > 0 and self.x_max > 0):
            raise ValueError("grid bounds must be positive")
        if self.n_e < 2 or self.n_x < 2:
            raise ValueError("grid needs at least two nodes per axis")

    def refined(self) -> "GridSpec":
        """Same box with the node spacing halved (nested nodes)."""
        return GridSpec(self.e_max, self.x_max, 2 * self.n_e - 1, 2 * self.n_x - 1)

    def e_axis(self) -> np.ndarray:
        return np.linspace(0.0, self.e_max, self.n_e)

    def x_axis(self) -> np.ndarray:
        """Symmetric x nodes; ``x[i] == -x[-1 - i]`` holds exactly."""
        xs = np.linspace(-self.x_max, self.x_max, self.n_x)
        return 0.5 * (xs - xs[::-1])

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class KeyRateResult:
    """Normalized key rate ``R_k / R_r`` with integration metadata.

    ``converged`` is None when the node-doubling check was skipped;
    ``relative_change`` is the relative rate change under that check.
    """

    rate: float
    selected_mass: float
    d_used: float
    eta_used: float
    grid: GridSpec
    converged: Optional[bool]
    relative_change: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "selected_mass": self.selected_mass,
            "d": self.d_used,
            "eta": self.eta_used,
            "grid": self.grid.to_dict(),
            "converged": self.converged,
            "relative_change": self.relative_change,
        }


@dataclass
class InfoMapGrid:
    """``delta_info`` tabulated on ``E x x`` nodes plus the per-row threshold x*(E).

    ``values[i, j]`` belongs to ``(E[i], x[j])``. ``boundary[i]`` is NaN where
    no finite threshold exists.
    """

    E: np.ndarray
    x: np.ndarray
    values: np.ndarray
    boundary: np.ndarray = field(repr=False)

    def rows(self):
        """Yield ``(E, x, delta_I)`` triples in row-major order."""
        for i, e in enumerate(self.E):
            for j, xv in enumerate(self.x):
                yield float(e), float(xv), float(self.values[i, j])


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` equally spaced nodes.

    An even node count closes the last interval with the trapezoid rule.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if n == 2:
        return np.array([0.5 * h, 0.5 * h])
    m = n if n % 2 == 1 else n - 1
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    if m == n:
        return w
    out = np.zeros(n)
    out[:m] = w
    out[m - 1] += 0.5 * h
    out[m] += 0.5 * h
    return out


def joint_density(params: ChannelParams, E, x):
    """Probability density that a channel use lands on ``(E, x)``, for ``E >= 0``.

    The Gaussian of effective amplitudes with width ``d`` is folded onto
    ``E >= 0`` (factor 2); ``x`` follows the equal mixture of Bob's two
    conditional densities.
    """
    E = np.asarray(E, dtype=float)
    d = params.d
    amp = 2.0 * np.sqrt(2.0 / (d * np.pi)) * np.exp(-2.0 * E * E / d)
    mix = 0.5 * (
        bob_conditional_density(params.eta, E, x, 0)
        + bob_conditional_density(params.eta, E, x, 1)
    )
    return (amp * mix)[()]


def is_selected(eta, E, x):
    """True where Alice and Bob out-inform Eve, ``delta_info > 0``."""
    return (np.asarray(delta_info(eta, E, x)) > 0.0)[()]


def boundary_x(eta: float, E: float, xtol: float = 1e-10) -> Optional[float]:
    """Threshold ``x* >= 0`` with ``delta_info(eta, E, x*) = 0``.

    Returns 0.0 when Eve has no information (every ``x != 0`` is selected) and
    None when no channel in the row is selected (``E = 0`` or ``I_AE`` rounds
    to one).
    """
    if E < 0:
        raise ValueError("effective amplitude E must be >= 0")
    if E == 0:
        return None
    if float(eve_info(eta, E)) == 0.0:
        return 0.0
    if float(eve_error(eta, E)) == 0.0:
        return None

    def g(x):
        return float(delta_info(eta, E, x))

    hi = 1.0
    while g(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e6:
            return None
    return optimize.bisect(g, 0.0, hi, xtol=xtol, maxiter=200)


def small_amplitude_threshold(eta: float) -> float:
    """Limit of :func:`boundary_x` as ``E -> 0+``, ``sqrt((1 - eta) / eta) / 2``.

    Both informations vanish like ``E**2`` near the origin; equating the
    leading terms gives this threshold.
    """
    return 0.5 * math.sqrt((1.0 - eta) / eta)


def _selection_mask(eta: float, e_col: np.ndarray, x_row: np.ndarray, delta: np.ndarray) -> np.ndarray:
    # delta vanishes identically on E = 0 (and on x = 0 when eta = 1); use the
    # one-sided limits there so nodes on those null lines get the right mask
    if eta == 1.0:
        return np.ones(np.broadcast_shapes(e_col.shape, x_row.shape), dtype=bool)
    mask = delta > 0.0
    edge = np.abs(x_row) > small_amplitude_threshold(eta)
    return np.where(e_col == 0.0, edge, mask)


def _half_x(grid: GridSpec):
    """x nodes and weights that integrate an even function over the full range."""
    if grid.n_x % 2 == 1:
        m = (grid.n_x + 1) // 2
        xs = np.linspace(0.0, grid.x_max, m)
        return xs, 2.0 * simpson_weights(m, grid.x_max / (m - 1))
    xs = grid.x_axis()
    return xs, simpson_weights(grid.n_x, xs[1] - xs[0])


def _integrate(
    integrand: Callable[[np.ndarray, np.ndarray], Sequence[np.ndarray]],
    grid: GridSpec,
    threads: int = 1,
) -> list[float]:
    """Integrate several even-in-x integrands sharing one evaluation.

    Rows are reduced independently and combined in a fixed order, so the
    result does not depend on ``threads``.
    """
    es = grid.e_axis()
    we = simpson_weights(grid.n_e, es[1] - es[0])
    xs, wx = _half_x(grid)
    x_row = xs[None, :]
    starts = range(0, grid.n_e, _ROW_CHUNK)

    def rows(start):
        e_col = es[start : start + _ROW_CHUNK, None]
        return np.stack([(v * wx).sum(axis=1) for v in integrand(e_col, x_row)])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(rows, starts))
    else:
        parts = [rows(s) for s in starts]
    row_integrals = np.concatenate(parts, axis=1)
    return [math.fsum(r * we) for r in row_integrals]


def density_mass(params: ChannelParams, grid: GridSpec = GridSpec(), threads: int = 1) -> float:
    """Integral of :func:`joint_density` over the grid box."""
    (mass,) = _integrate(lambda e, x: (joint_density(params, e, x),), grid, threads)
    return mass


def normalization_grid(params: ChannelParams, grid: GridSpec = GridSpec()) -> GridSpec:
    """Box wide enough that truncation is negligible; node counts are kept.

    E spans 12 standard deviations of the folded amplitude Gaussian and x
    reaches 12 outcome standard deviations beyond the largest Bob mean.
    """
    e_max = 6.0 * np.sqrt(params.d)
    x_max = np.sqrt(params.eta) * e_max + 6.0
    return GridSpec(float(e_max), float(x_max), grid.n_e, grid.n_x)


def _rate_terms(params: ChannelParams):
    def integrand(e, x):
        p = joint_density(params, e, x)
        delta = delta_info(params.eta, e, x)
        keep = _selection_mask(params.eta, e, x, delta)
        return p * np.where(delta > 0.0, delta, 0.0), p * keep

    return integrand


def key_rate(
    params: ChannelParams,
    grid: GridSpec = GridSpec(),
    *,
    check_convergence: bool = True,
    rtol: float = 5e-3,
    threads: int = 1,
) -> KeyRateResult:
    """Secure bits per raw channel use for postselection on ``delta_info > 0``.

    With ``check_convergence`` the integral is repeated with halved node
    spacing; ``converged`` is False when the rate moves by more than ``rtol``
    relative.
    """
    rate, mass = _integrate(_rate_terms(params), grid, threads)
    converged = None
    rel = None
    if check_convergence:
        fine, _ = _integrate(_rate_terms(params), grid.refined(), threads)
        rel = abs(fine - rate) / rate if rate > 0 else abs(fine - rate)
        converged = bool(rel <= rtol)
        if not converged:
            logger.warning("key rate not converged: relative change %.3g > %.3g", rel, rtol)
    return KeyRateResult(
        rate=max(rate, 0.0),
        selected_mass=min(max(mass, 0.0), 1.0),
        d_used=params.d,
        eta_used=params.eta,
        grid=grid,
        converged=converged,
        relative_change=rel,
    )


def key_rate_by_boundary(params: ChannelParams, grid: GridSpec = GridSpec()) -> float:
    """Key rate integrated over the explicit region ``|x| > x*(E)``.

    Independent of the clipped-integrand path in :func:`key_rate`: each E row
    is integrated adaptively from its threshold outward, rows are combined
    with Simpson weights.
    """
    es = grid.e_axis()
    we = simpson_weights(grid.n_e, es[1] - es[0])
    rows = np.zeros(grid.n_e)
    for i, e in enumerate(es):
        xstar = boundary_x(params.eta, float(e))
        if xstar is None or xstar >= grid.x_max:
            continue

        def f(x, e=e):
            return float(joint_density(params, e, x) * delta_info(params.eta, e, x))

        val, _ = integrate.quad(f, xstar, grid.x_max, epsabs=1e-13, epsrel=1e-10, limit=200)
        rows[i] = 2.0 * val
    return math.fsum(rows * we)


def selected_error(params: ChannelParams, grid: GridSpec = GridSpec(), threads: int = 1) -> float:
    """Bob's mean error rate conditioned on the channel being selected."""

    def integrand(e, x):
        keep = _selection_mask(params.eta, e, x, delta_info(params.eta, e, x))
        p = joint_density(params, e, x) * keep
        return p * error_prob(params.eta, e, x), p

    num, den = _integrate(integrand, grid, threads)
    return num / den if den > 0 else float("nan")


def selected_eve_success(params: ChannelParams, grid: GridSpec = GridSpec(), threads: int = 1) -> float:
    """Eve's optimal guessing probability conditioned on selection."""

    def integrand(e, x):
        keep = _selection_mask(params.eta, e, x, delta_info(params.eta, e, x))
        p = joint_density(params, e, x) * keep
        return p * eve_helstrom_success(params.eta, e), p

    num, den = _integrate(integrand, grid, threads)
    return num / den if den > 0 else float("nan")


def info_map(eta: float, grid: GridSpec = GridSpec(n_e=81, n_x=161)) -> InfoMapGrid:
    """Tabulate ``delta_info`` on the grid, with the selection threshold per E row."""
    es = grid.e_axis()
    xs = grid.x_axis()
    values = np.asarray(delta_info(eta, es[:, None], xs[None, :]), dtype=float)
    bounds = np.array([np.nan if (b := boundary_x(eta, float(e))) is None else b for e in es])
    return InfoMapGrid(E=es, x=xs, values=values, boundary=bounds)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-3):
    """Maximize a unimodal ``f`` on ``[a, b]`` until the bracket is below ``tol``.

    Returns ``(x_best, f_best)`` over all evaluated points.
    """
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    best = max((fc, c), (fd, d))
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
            best = max(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
            best = max(best, (fd, d))
    return best[1], best[0]


def optimize_d(
    eta: float,
    grid: GridSpec = GridSpec(),
    interval: tuple[float, float] = (0.1, 10.0),
    *,
    tol: float = 1e-3,
    n_scan: int = 13,
    threads: int = 1,
) -> tuple[float, KeyRateResult]:
    """Modulation width maximizing the key rate at transmission ``eta``.

    A coarse log-spaced scan checks that rate(d) is unimodal and brackets the
    peak; golden-section search then refines it to ``tol``.
    """
    lo, hi = interval
    if not 0 < lo < hi:
        raise ValueError("interval must satisfy 0 < lo < hi")

    def rate(d):
        return key_rate(ChannelParams(eta, d), grid, check_convergence=False, threads=threads).rate

    scan_d = np.geomspace(lo, hi, n_scan)
    scan_r = np.array([rate(d) for d in scan_d])
    turns = np.count_nonzero(np.diff(np.sign(np.diff(scan_r))) != 0)
    if turns > 1:
        logger.warning("rate(d) scan at eta=%g is not unimodal: %s", eta, scan_r)
    else:
        logger.info("rate(d) scan at eta=%g is unimodal", eta)
    k = int(np.argmax(scan_r))
    a = scan_d[max(k - 1, 0)]
    b = scan_d[min(k + 1, n_scan - 1)]
    d_best, _ = golden_section_max(rate, float(a), float(b), tol)
    if d_best - lo <= tol or hi - d_best <= tol:
        warnings.warn(
            f"optimal d={d_best:.4g} lies on the search interval boundary {interval}",
            RuntimeWarning,
            stacklevel=2,
        )
    return d_best, key_rate(ChannelParams(eta, d_best), grid, threads=threads)
