"""Buyer arrivals: exponential gaps, a milestone-driven birth process, and fits.

Times are in days throughout.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import chi2

from efair.errors import ConfigurationError, FitError, StepSizeError
from efair.geo import parse_timestamp
from efair.pricing import PriceCurve


@dataclass(frozen=True)
class BirthProcess:
    """Pure-birth chain on ``0..cap``.

    States ``0..milestones[0]`` grow at ``rates[0]``; states
    ``milestones[l-1]+1 .. milestones[l]`` grow at ``rates[l]``; ``cap`` (the
    last milestone) is absorbing.
    """

    rates: tuple[float, ...]
    milestones: tuple[int, ...]

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        stones = tuple(int(m) for m in self.milestones)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "milestones", stones)
        if not rates or len(rates) != len(stones):
            raise ConfigurationError("need one rate per milestone")
        if not all(math.isfinite(r) and r > 0 for r in rates):
            raise ConfigurationError("rates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ConfigurationError("rates must be strictly increasing")
        if stones[0] < 1 or any(b <= a for a, b in zip(stones, stones[1:])):
            raise ConfigurationError("milestones must be strictly increasing and >= 1")

    @classmethod
    def from_curve(
        cls,
        curve: PriceCurve,
        lambda1: float,
        rates: Sequence[float] | None = None,
        cap: int | None = None,
    ) -> "BirthProcess":
        """Milestones at the curve breakpoints.

        Without explicit ``rates`` the heuristic ``lambda1 * f1 / f_l`` is used
        (cheaper segments attract buyers faster).  An unbounded last segment
        needs ``cap``.
        """
        stones = list(curve.breakpoints)
        last = curve.max_quantity if curve.max_quantity is not None else cap
        if last is None:
            raise ConfigurationError("unbounded curve: pass cap")
        stones.append(int(last))
        if rates is None:
            f1 = curve.slopes[0]
            rates = [lambda1 * f1 / f for f in curve.slopes]
        return cls(tuple(rates), tuple(stones))

    @property
    def cap(self) -> int:
        return self.milestones[-1]

    def rate_at(self, n: int) -> float:
        """Departure rate of state ``n`` (0 once the cap is reached)."""
        if n >= self.cap:
            return 0.0
        return self.rates[bisect.bisect_left(self.milestones, n)]

    def generator(self) -> np.ndarray:
        """Generator ``A`` with ``p' = A p`` (columns sum to zero)."""
        size = self.cap + 1
        A = np.zeros((size, size))
        for n in range(self.cap):
            r = self.rate_at(n)
            A[n, n] = -r
            A[n + 1, n] = r
        return A


def _rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_interarrivals(rate: float, count: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """``count`` i.i.d. exponential gaps with mean ``1/rate``."""
    if not rate > 0 or not math.isfinite(rate):
        raise ConfigurationError(f"rate must be positive, got {rate}")
    if count < 0:
        raise ConfigurationError("count must be >= 0")
    return _rng(seed).exponential(1.0 / rate, size=int(count))


def simulate_birth_process(
    process: BirthProcess,
    horizon: float,
    seed: int | np.random.Generator | None = None,
    hourly_mask: Sequence[float] | None = None,
) -> np.ndarray:
    """Arrival times in ``(0, horizon]``, stopping at the cap.

    ``hourly_mask`` (24 values in [0, 1]) thins arrivals by hour of day; time
    zero is midnight.
    """
    if hourly_mask is not None:
        mask = np.asarray(hourly_mask, dtype=float)
        if mask.shape != (24,) or mask.min() < 0 or mask.max() > 1:
            raise ConfigurationError("hourly_mask needs 24 values in [0, 1]")
    rng = _rng(seed)
    times: list[float] = []
    t = 0.0
    n = 0
    while n < process.cap:
        t += rng.exponential(1.0 / process.rate_at(n))
        if t > horizon:
            break
        if hourly_mask is not None and rng.random() >= mask[int((t % 1.0) * 24) % 24]:
            continue
        times.append(t)
        n += 1
    return np.array(times)


def milestone_times(process: BirthProcess, n: int, runs: int, seed: int | None = None) -> np.ndarray:
    """Times at which ``runs`` independent chains reach ``n`` buyers."""
    if not 1 <= n <= process.cap:
        raise ConfigurationError(f"milestone {n} outside 1..{process.cap}")
    rng = _rng(seed)
    scales = np.array([1.0 / process.rate_at(k) for k in range(n)])
    return (rng.exponential(1.0, size=(runs, n)) * scales).sum(axis=1)


# -- cascade ODE ------------------------------------------------------------------


def default_step(process: BirthProcess) -> float:
    return 1e-3 / process.rates[-1]


def _rk4_matrix(A: np.ndarray, h: float) -> np.ndarray:
    hA = h * A
    term = np.eye(len(A))
    M = term.copy()
    for k in range(1, 5):
        term = term @ hA / k
        M += term
    return M


def state_probability_path(
    process: BirthProcess, t_end: float, dt: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the cascade from ``p(0) = e_0`` with fixed-step RK4.

    Returns ``(times, P)`` where ``P[i]`` is the distribution at ``times[i]``.
    The step is shrunk slightly so that the grid ends exactly at ``t_end``.
    """
    if t_end < 0:
        raise ConfigurationError("t must be >= 0")
    dt = default_step(process) if dt is None else float(dt)
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    steps = max(1, math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = t_end / steps if steps else 0.0
    M = _rk4_matrix(process.generator(), h)
    P = np.empty((steps + 1, process.cap + 1))
    P[0] = 0.0
    P[0, 0] = 1.0
    for i in range(steps):
        P[i + 1] = M @ P[i]
    drift = np.abs(P.sum(axis=1) - 1.0).max()
    if drift > 1e-6 or P.min() < -1e-6 or P.max() > 1 + 1e-6:
        raise StepSizeError(f"integration unstable with dt={dt:g}; use a smaller step")
    return np.linspace(0.0, t_end, steps + 1), P


def state_probabilities(process: BirthProcess, t: float, dt: float | None = None) -> np.ndarray:
    """Distribution of the buyer count at time ``t``."""
    return state_probability_path(process, t, dt)[1][-1]


def poisson_probabilities(rate: float, t: float, n_max: int) -> np.ndarray:
    """``exp(-rate t) (rate t)^n / n!`` for ``n = 0..n_max``."""
    n = np.arange(n_max + 1)
    lam = rate * t
    if lam == 0:
        return (n == 0).astype(float)
    logp = -lam + n * math.log(lam) - np.array([math.lgamma(k + 1) for k in n])
    return np.exp(logp)


# -- goodness of fit --------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    chi_square: float
    p_value: float
    dof: int
    bins: int
    low_confidence: bool = False

    def accepts(self, alpha: float = 0.05) -> bool:
        return self.p_value >= alpha


def fit_exponential(samples: Iterable[float]) -> ExponentialFit:
    """Maximum-likelihood exponential rate with a chi-square goodness-of-fit test.

    Bins are equally probable under the fitted law; their count is
    ``max(5, n // 20)`` capped at 20.  The fit is flagged low-confidence when
    the data have fewer distinct values than bins.
    """
    x = np.asarray(list(samples), dtype=float)
    n = len(x)
    if n < 50:
        raise FitError(f"need at least 50 samples, got {n}")
    if not np.all(np.isfinite(x)) or x.min() < 0:
        raise FitError("samples must be finite and non-negative")
    if np.all(x == x[0]):
        raise FitError("all samples are equal")
    rate = 1.0 / x.mean()
    bins = min(20, max(5, n // 20))
    edges = -np.log1p(-np.arange(1, bins) / bins) / rate
    observed = np.bincount(np.searchsorted(edges, x, side="right"), minlength=bins)
    expected = n / bins
    stat = float(((observed - expected) ** 2 / expected).sum())
    dof = bins - 2
    return ExponentialFit(
        rate, stat, float(chi2.sf(stat, dof)), dof, bins, len(np.unique(x)) < bins
    )


# -- traces ---------------------------------------------------------------------

TRACE_HEADER = ["fair_id", "buyer_id", "timestamp_iso8601"]


def write_arrival_trace(
    path: str | Path,
    rows: Iterable[tuple[str, str, float]],
    start: datetime,
) -> None:
    """Write ``(fair_id, buyer_id, day_offset)`` rows as ISO-8601 timestamps."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for fair_id, buyer_id, days in rows:
            stamp = start + timedelta(days=float(days))
            w.writerow([fair_id, buyer_id, stamp.isoformat(timespec="seconds")])


def read_arrival_trace(path: str | Path) -> list[tuple[str, str, datetime]]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_HEADER:
            raise ConfigurationError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        return [(r["fair_id"], r["buyer_id"], parse_timestamp(r["timestamp_iso8601"])) for r in reader]
