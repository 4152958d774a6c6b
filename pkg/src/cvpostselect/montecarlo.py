"""Event-level simulation of the postselection protocol.

Each event: Alice draws a complex amplitude with i.i.d. Gaussian quadrature
components of variance ``d/4``; Bob picks the X or Y quadrature by a fair coin
and measures it after the lossy line; Eve, holding the tapped fraction, guesses
Alice's bit with the optimal (Helstrom) success probability for her two
candidate states. Alice and Bob keep the event when ``delta_info > 0``.

Events are generated in fixed-size chunks, each driven by its own child of a
``numpy.random.SeedSequence``. Results depend on the seed only, never on the
number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import IO, Iterator, Optional

import numpy as np
from scipy import stats as sps

from cvpostselect.coherent_info import ChannelParams, delta_info, eve_helstrom_success
from cvpostselect.postselect import GridSpec, key_rate, selected_error

CHUNK_SIZE = 1 << 16
EVENT_LOG_HEADER = ("amp_q", "amp_p", "basis", "bit", "x_out", "eve_correct", "selected")
BASES = ("X", "Y")


@dataclass(frozen=True)
class SignalRecord:
    amp_q: float
    amp_p: float
    alpha: float
    theta: float
    basis: str
    bit: int
    x_out: float
    eve_correct: bool
    selected: bool


@dataclass
class SessionStats:
    """Aggregated counts and empirical rates of one simulated session.

    ``emp_rate`` is the sample mean of ``max(delta_info, 0)`` over all events
    and estimates ``R_k / R_r``; ``emp_rate_sigma`` is its standard error.
    Conditional rates are 0.0 when nothing was selected.
    """

    eta: float
    d: float
    seed: int
    n_total: int
    n_selected: int
    n_errors_selected: int
    n_eve_correct_selected: int
    emp_error_selected: float
    emp_eve_success_selected: float
    emp_rate: float
    emp_rate_sigma: float
    basis_counts: dict
    basis_selected: dict
    basis_errors_selected: dict

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConsistencyReport:
    """Empirical vs. analytic value with a ``n_sigma`` agreement flag."""

    quantity: str
    empirical: float
    analytic: float
    sigma: float
    z: float
    n_sigma: float
    agree: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


def _simulate_chunk(params: ChannelParams, seed: np.random.SeedSequence, n: int) -> dict:
    rng = np.random.default_rng(seed)
    amp = rng.normal(0.0, 0.5 * math.sqrt(params.d), size=(n, 2))
    basis = rng.integers(0, 2, size=n).astype(np.int8)
    comp = np.where(basis == 0, amp[:, 0], amp[:, 1])
    # sign(0) counts as positive, i.e. bit 0
    bit = (comp < 0).astype(np.int8)
    E = np.abs(comp)
    mean = (1 - 2 * bit) * math.sqrt(params.eta) * E
    x_out = mean + 0.5 * rng.standard_normal(n)
    eve_correct = rng.random(n) < eve_helstrom_success(params.eta, E)
    delta = np.asarray(delta_info(params.eta, E, x_out))
    selected = delta > 0.0
    bob_bit = (x_out < 0).astype(np.int8)
    return {
        "amp_q": amp[:, 0],
        "amp_p": amp[:, 1],
        "basis": basis,
        "bit": bit,
        "E": E,
        "x_out": x_out,
        "eve_correct": eve_correct,
        "selected": selected,
        "delta": delta,
        "bob_error": bob_bit != bit,
    }


def _chunks(params: ChannelParams, n: int, seed: int, threads: int = 1):
    if n < 1:
        raise ValueError("event count must be >= 1")
    sizes = _chunk_sizes(n)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(seeds, sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(lambda job: _simulate_chunk(params, *job), jobs)
    else:
        for s, k in jobs:
            yield _simulate_chunk(params, s, k)


def generate_events(params: ChannelParams, n: int, seed: int, threads: int = 1) -> dict:
    """All event columns as arrays (``E`` and ``delta`` included)."""
    parts = list(_chunks(params, n, seed, threads))
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _tally(chunk: dict) -> dict:
    sel = chunk["selected"]
    clipped = np.where(sel, chunk["delta"], 0.0)
    basis = chunk["basis"]
    return {
        "n": len(sel),
        "n_sel": int(sel.sum()),
        "n_err": int((sel & chunk["bob_error"]).sum()),
        "n_eve": int((sel & chunk["eve_correct"]).sum()),
        "sum": math.fsum(clipped),
        "sumsq": math.fsum(clipped * clipped),
        "basis": [int((basis == b).sum()) for b in (0, 1)],
        "basis_sel": [int((sel & (basis == b)).sum()) for b in (0, 1)],
        "basis_err": [int((sel & chunk["bob_error"] & (basis == b)).sum()) for b in (0, 1)],
    }


def run_session(params: ChannelParams, n: int, seed: int, threads: int = 1) -> SessionStats:
    """Simulate ``n`` protocol rounds and aggregate the statistics."""
    tallies = [_tally(c) for c in _chunks(params, n, seed, threads)]
    n_sel = sum(t["n_sel"] for t in tallies)
    n_err = sum(t["n_err"] for t in tallies)
    n_eve = sum(t["n_eve"] for t in tallies)
    mean = math.fsum(t["sum"] for t in tallies) / n
    meansq = math.fsum(t["sumsq"] for t in tallies) / n
    var = max(meansq - mean * mean, 0.0) * n / max(n - 1, 1)
    return SessionStats(
        eta=params.eta,
        d=params.d,
        seed=seed,
        n_total=n,
        n_selected=n_sel,
        n_errors_selected=n_err,
        n_eve_correct_selected=n_eve,
        emp_error_selected=n_err / n_sel if n_sel else 0.0,
        emp_eve_success_selected=n_eve / n_sel if n_sel else 0.0,
        emp_rate=mean,
        emp_rate_sigma=math.sqrt(var / n),
        basis_counts={b: sum(t["basis"][i] for t in tallies) for i, b in enumerate(BASES)},
        basis_selected={b: sum(t["basis_sel"][i] for t in tallies) for i, b in enumerate(BASES)},
        basis_errors_selected={
            b: sum(t["basis_err"][i] for t in tallies) for i, b in enumerate(BASES)
        },
    )


def iter_records(params: ChannelParams, n: int, seed: int) -> Iterator[SignalRecord]:
    """Stream per-event records; same random stream as :func:`run_session`."""
    for c in _chunks(params, n, seed):
        alpha = np.hypot(c["amp_q"], c["amp_p"])
        with np.errstate(invalid="ignore", divide="ignore"):
            theta = np.where(alpha > 0, np.arccos(np.clip(c["E"] / alpha, 0.0, 1.0)), 0.0)
        for i in range(len(alpha)):
            yield SignalRecord(
                amp_q=float(c["amp_q"][i]),
                amp_p=float(c["amp_p"][i]),
                alpha=float(alpha[i]),
                theta=float(theta[i]),
                basis=BASES[c["basis"][i]],
                bit=int(c["bit"][i]),
                x_out=float(c["x_out"][i]),
                eve_correct=bool(c["eve_correct"][i]),
                selected=bool(c["selected"][i]),
            )


def write_event_log(fh: IO[str], params: ChannelParams, n: int, seed: int) -> int:
    """Write one CSV row per event; returns the number of rows."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(EVENT_LOG_HEADER)
    rows = 0
    for r in iter_records(params, n, seed):
        writer.writerow(
            (repr(r.amp_q), repr(r.amp_p), r.basis, r.bit, repr(r.x_out),
             int(r.eve_correct), int(r.selected))
        )
        rows += 1
    return rows


def _report(quantity, empirical, analytic, sigma, n_sigma) -> ConsistencyReport:
    if sigma > 0:
        z = (empirical - analytic) / sigma
    else:
        z = 0.0 if empirical == analytic else math.inf
    return ConsistencyReport(quantity, empirical, analytic, sigma, z, n_sigma, bool(abs(z) <= n_sigma))


def error_consistency_check(
    stats: SessionStats,
    params: ChannelParams,
    grid: GridSpec = GridSpec(),
    n_sigma: float = 3.0,
) -> ConsistencyReport:
    """Compare Bob's empirical selected error rate with the quadrature value.

    The binomial standard error uses the analytic rate and the selected count,
    so the tolerance widens automatically for small sessions.
    """
    analytic = selected_error(params, grid)
    if stats.n_selected == 0:
        return ConsistencyReport("error_selected", math.nan, analytic, math.inf, 0.0, n_sigma, True)
    sigma = math.sqrt(analytic * (1.0 - analytic) / stats.n_selected)
    return _report("error_selected", stats.emp_error_selected, analytic, sigma, n_sigma)


def rate_consistency_check(
    stats: SessionStats,
    params: ChannelParams,
    grid: GridSpec = GridSpec(),
    n_sigma: float = 3.0,
    analytic: Optional[float] = None,
) -> ConsistencyReport:
    """Compare the empirical clipped-information mean with the key-rate integral."""
    if analytic is None:
        analytic = key_rate(params, grid, check_convergence=False).rate
    return _report("key_rate", stats.emp_rate, analytic, stats.emp_rate_sigma, n_sigma)


def basis_symmetry_check(stats: SessionStats, n_sigma: float = 3.0) -> ConsistencyReport:
    """Two-proportion z-test between X- and Y-basis selected error rates."""
    nx, ny = stats.basis_selected["X"], stats.basis_selected["Y"]
    ex, ey = stats.basis_errors_selected["X"], stats.basis_errors_selected["Y"]
    if nx == 0 or ny == 0:
        return ConsistencyReport("basis_symmetry", math.nan, 0.0, math.inf, 0.0, n_sigma, True)
    pooled = (ex + ey) / (nx + ny)
    sigma = math.sqrt(pooled * (1 - pooled) * (1 / nx + 1 / ny))
    return _report("basis_symmetry", ex / nx - ey / ny, 0.0, sigma, n_sigma)


def e_marginal_ks(events: dict, params: ChannelParams, basis: str = "X"):
    """KS test of the effective amplitudes in one basis against the folded Gaussian."""
    E = events["E"][events["basis"] == BASES.index(basis)]
    return sps.kstest(E, sps.halfnorm(scale=0.5 * math.sqrt(params.d)).cdf)
