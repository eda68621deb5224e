"""Ensemble moments ``E|X*(t)|^q``, log-log slope estimates of tau and comparison with theory.

Accumulation is order independent: paths are grouped in fixed chunks of
consecutive indices, each chunk is reduced in index order and chunks are merged
in chunk order with the pairwise (count, mean, M2) update.  The same table
therefore comes out whatever order paths arrive in and however they are split
across workers, as long as splits fall on chunk boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .theory import UPPER_BOUND, ScalingFunction

__all__ = [
    "InfiniteMomentError",
    "MomentTable",
    "ChunkStats",
    "MomentAccumulator",
    "chunk_stats",
    "accumulate_moments",
    "check_q_values",
    "TauEstimate",
    "TwoSegmentFit",
    "Breakpoint",
    "fit_tau",
    "two_segment_fit",
    "fit_breakpoint",
    "CompareRow",
    "Comparison",
    "compare",
    "lyapunov_violations",
    "convexity_violations",
    "write_moments",
    "read_moments",
    "write_batches",
    "read_batches",
    "write_tau",
    "format_report",
]

DEFAULT_CHUNK = 64
DEFAULT_BATCHING = 32


class InfiniteMomentError(ValueError):
    """A moment order at or beyond the tail index was requested."""


def check_q_values(q_values, moment_bound: float = math.inf, bound_frac: float = 0.95):
    """Validate a q grid against the moment bound ``gamma`` and return it as an array.

    ``q >= gamma`` is refused because ``E|X*(t)|^q`` is infinite for every
    ``t > 0``; orders above ``bound_frac * gamma`` are refused as well since the
    sample moments there do not settle at any practical ensemble size.
    """
    qv = np.asarray(q_values, dtype=float)
    if qv.ndim != 1 or qv.size == 0:
        raise ValueError("q_values must be a nonempty 1-d sequence")
    if np.any(qv <= 0):
        raise ValueError("q_values must be positive")
    if np.any(np.diff(qv) <= 0):
        raise ValueError("q_values must be strictly increasing")
    bad = qv[qv >= moment_bound]
    if bad.size:
        raise InfiniteMomentError(
            f"q={bad.tolist()} >= gamma={moment_bound}: E|X*(t)|^q is infinite "
            "for every t > 0 when q > gamma (and undefined at q = gamma)")
    near = qv[qv > bound_frac * moment_bound]
    if near.size:
        raise InfiniteMomentError(
            f"q={near.tolist()} exceeds {bound_frac} * gamma = {bound_frac * moment_bound}")
    return qv


@dataclass
class MomentTable:
    """``m[j, i]`` estimates ``E|X*(t_j)|^{q_i}``; ``se`` is its standard error.

    ``batch_means[b, j, i]`` holds the mean over paths with ``index % B == b``.
    """

    t: np.ndarray
    q_values: np.ndarray
    m: np.ndarray
    se: np.ndarray
    n_paths: int
    batch_means: np.ndarray | None = None
    batch_counts: np.ndarray | None = None

    @property
    def batch_medians(self) -> np.ndarray | None:
        if self.batch_means is None:
            return None
        return np.median(self.batch_means, axis=0)

    def values(self, estimator: str = "mean") -> np.ndarray:
        if estimator == "mean":
            return self.m
        if estimator == "median":
            if self.batch_means is None:
                raise ValueError("median-of-batches needs batch means")
            return self.batch_medians
        raise ValueError(f"unknown estimator {estimator!r}")


@dataclass
class ChunkStats:
    count: int
    mean: np.ndarray
    m2: np.ndarray
    batch_sum: np.ndarray
    batch_count: np.ndarray


def chunk_stats(indices, xs, q_values, batching: int) -> ChunkStats:
    """Reduce one chunk of paths (rows of ``xs``) in increasing path-index order."""
    indices = np.asarray(indices, dtype=np.int64)
    order = np.argsort(indices, kind="stable")
    indices = indices[order]
    vals = np.abs(np.asarray(xs, dtype=float)[order])[:, :, None] ** q_values
    n = len(indices)
    mean = vals.mean(axis=0)
    m2 = ((vals - mean) ** 2).sum(axis=0)
    bsum = np.zeros((batching,) + mean.shape)
    bcount = np.zeros(batching, dtype=np.int64)
    for idx, row in zip(indices, vals):
        bsum[idx % batching] += row
        bcount[idx % batching] += 1
    return ChunkStats(n, mean, m2, bsum, bcount)


class MomentAccumulator:
    """Streaming builder of a :class:`MomentTable`.

    Paths may be added in any order; complete chunks are folded in as soon as
    every earlier chunk is in.  Partial results from workers enter through
    :meth:`merge_chunk`.
    """

    def __init__(self, t, q_values, batching: int = DEFAULT_BATCHING,
                 chunk_size: int = DEFAULT_CHUNK, n_paths: int | None = None,
                 moment_bound: float = math.inf, bound_frac: float = 0.95):
        if batching < 1 or chunk_size < 1:
            raise ValueError("batching and chunk_size must be >= 1")
        self.t = np.asarray(t, dtype=float)
        self.q_values = check_q_values(q_values, moment_bound, bound_frac)
        self.batching = int(batching)
        self.chunk_size = int(chunk_size)
        self.n_paths = n_paths
        shape = (len(self.t), len(self.q_values))
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)
        self.batch_sum = np.zeros((self.batching,) + shape)
        self.batch_count = np.zeros(self.batching, dtype=np.int64)
        self._next = 0
        self._ready: dict[int, ChunkStats] = {}
        self._open: dict[int, list] = {}

    def _chunk_len(self, cid: int) -> int | None:
        if self.n_paths is None:
            return self.chunk_size
        return max(0, min(self.chunk_size, self.n_paths - cid * self.chunk_size))

    def add(self, path_index: int, xstar) -> None:
        cid = int(path_index) // self.chunk_size
        rows = self._open.setdefault(cid, [])
        rows.append((int(path_index), np.asarray(xstar, dtype=float)))
        if len(rows) == self._chunk_len(cid):
            self._close(cid)

    def add_sample(self, sample) -> None:
        self.add(sample.path_index, sample.xstar)

    def _close(self, cid: int) -> None:
        rows = self._open.pop(cid)
        stats = chunk_stats([r[0] for r in rows], np.stack([r[1] for r in rows]),
                            self.q_values, self.batching)
        self.merge_chunk(cid, stats)

    def merge_chunk(self, cid: int, stats: ChunkStats) -> None:
        self._ready[cid] = stats
        while self._next in self._ready:
            self._fold(self._ready.pop(self._next))
            self._next += 1

    def _fold(self, s: ChunkStats) -> None:
        if s.count == 0:
            return
        n = self.count + s.count
        delta = s.mean - self.mean
        self.mean = self.mean + delta * (s.count / n)
        self.m2 = self.m2 + s.m2 + delta * delta * (self.count * s.count / n)
        self.count = n
        self.batch_sum += s.batch_sum
        self.batch_count += s.batch_count

    def table(self) -> MomentTable:
        for cid in sorted(self._open):
            self._close(cid)
        for cid in sorted(self._ready):
            self._fold(self._ready.pop(cid))
        n = self.count
        if n == 0:
            raise ValueError("no paths accumulated")
        se = np.sqrt(self.m2 / (n - 1) / n) if n > 1 else np.zeros_like(self.mean)
        keep = self.batch_count > 0
        bmeans = self.batch_sum[keep] / self.batch_count[keep][:, None, None]
        return MomentTable(self.t.copy(), self.q_values.copy(), self.mean.copy(), se, n,
                           bmeans, self.batch_count[keep].copy())


def accumulate_moments(paths, q_values, batching: int = DEFAULT_BATCHING,
                       moment_bound: float = math.inf, bound_frac: float = 0.95,
                       chunk_size: int = DEFAULT_CHUNK) -> MomentTable:
    """Single pass over ``PathSample`` objects (any order) into a :class:`MomentTable`."""
    acc = None
    for ps in paths:
        if acc is None:
            acc = MomentAccumulator(ps.grid.values, q_values, batching, chunk_size,
                                    moment_bound=moment_bound, bound_frac=bound_frac)
        acc.add_sample(ps)
    if acc is None:
        check_q_values(q_values, moment_bound, bound_frac)
        raise ValueError("no paths accumulated")
    return acc.table()


@dataclass
class TwoSegmentFit:
    q_break: float
    slope_lo: float
    slope_hi: float
    intercept: float
    rss: float
    rss_linear: float

    @property
    def rss_ratio(self) -> float:
        if self.rss <= 0.0:
            return math.inf if self.rss_linear > 0 else 1.0
        return self.rss_linear / self.rss


@dataclass
class Breakpoint:
    q_break: float
    slope_lo: float
    slope_hi: float
    rss_ratio: float


@dataclass
class TauEstimate:
    q_values: np.ndarray
    tau_hat: np.ndarray
    stderr: np.ndarray
    fit_window: tuple[int, int]
    intercepts: np.ndarray
    estimator: str = "mean"
    breakpoint: Breakpoint | None = None


def _resolve_window(n_t: int, window, window_frac: float) -> tuple[int, int]:
    if window is None:
        if not 0.0 <= window_frac < 1.0:
            raise ValueError(f"window_frac must lie in [0, 1), got {window_frac}")
        window = (int(math.ceil(window_frac * n_t)), n_t - 1)
    lo, hi = int(window[0]), int(window[1])
    if lo < 0 or hi >= n_t or hi - lo + 1 < 4:
        raise ValueError(f"degenerate fit window {window}: need >= 4 grid points in "
                         f"[0, {n_t - 1}]")
    return lo, hi


def _ols_slopes(x, logm):
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = xc @ (logm - logm.mean(axis=0)) / sxx
    return slope, logm.mean(axis=0) - slope * x.mean(), xc / sxx


def fit_tau(table: MomentTable, window: tuple[int, int] | None = None,
            window_frac: float = 0.25, estimator: str = "mean", n_boot: int = 200,
            boot_seed: int = 0) -> TauEstimate:
    """OLS slope of ``log m(t_j, q)`` on ``log t_j`` over the window, per q.

    Standard errors come from resampling batches (fixed ``boot_seed``); with no
    batch data the per-cell standard errors are propagated instead.
    """
    lo, hi = _resolve_window(len(table.t), window, window_frac)
    vals = table.values(estimator)[lo:hi + 1]
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError("nonpositive or non-finite moment cell in fit window")
    x = np.log(table.t[lo:hi + 1])
    slope, intercept, weights = _ols_slopes(x, np.log(vals))
    bm = table.batch_means
    if bm is not None and len(bm) >= 2:
        rng = np.random.default_rng(boot_seed)
        nb = len(bm)
        picks = rng.integers(0, nb, size=(n_boot, nb))
        sub = bm[:, lo:hi + 1]
        if estimator == "median":
            boot = np.median(sub[picks], axis=1)
        else:
            w = table.batch_counts[picks].astype(float)
            boot = np.einsum("kb,kbji->kji", w, sub[picks]) / w.sum(axis=1)[:, None, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            lb = np.log(boot)
        slopes = np.einsum("j,kji->ki", weights, lb - lb.mean(axis=1, keepdims=True))
        stderr = np.nanstd(slopes, axis=0, ddof=1)
    else:
        rel = table.se[lo:hi + 1] / vals
        stderr = np.sqrt(weights**2 @ rel**2)
    return TauEstimate(table.q_values.copy(), slope, stderr, (lo, hi), intercept, estimator)


def two_segment_fit(q_values, y) -> TwoSegmentFit:
    """Best continuous two-piece line ``a + b q + c (q - q_b)_+`` with ``q_b`` on the interior grid."""
    q = np.asarray(q_values, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(q) < 4:
        raise ValueError("two-segment fit needs at least 4 points")
    lin = np.polyfit(q, y, 1)
    rss_lin = float(((np.polyval(lin, q) - y) ** 2).sum())
    best = None
    for k in range(1, len(q) - 1):
        design = np.column_stack([np.ones_like(q), q, np.maximum(q - q[k], 0.0)])
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
        rss = float(((design @ coef - y) ** 2).sum())
        if best is None or rss < best.rss - 1e-15 * max(1.0, best.rss):
            best = TwoSegmentFit(float(q[k]), float(coef[1]), float(coef[1] + coef[2]),
                                 float(coef[0]), rss, rss_lin)
    return best


def fit_breakpoint(est: TauEstimate, min_ratio: float = 2.0) -> Breakpoint | None:
    """Breakpoint of ``tau_hat`` when a kinked line beats a straight one by ``min_ratio`` in RSS."""
    if len(est.q_values) < 8:
        raise ValueError("breakpoint detection needs at least 8 q values")
    fit = two_segment_fit(est.q_values, est.tau_hat)
    y = np.asarray(est.tau_hat)
    # a straight line fitted to rounding error only is not evidence of a kink
    if fit.rss_linear <= 1e-20 * len(y) * max(1.0, float(np.max(y * y))):
        return None
    if fit.rss_ratio < min_ratio:
        return None
    return Breakpoint(fit.q_break, fit.slope_lo, fit.slope_hi, fit.rss_ratio)


@dataclass
class CompareRow:
    q: float
    tau_hat: float
    se: float
    tau_theory: float
    kind: str
    deviation: float
    passed: bool


@dataclass
class Comparison:
    rows: list[CompareRow] = field(default_factory=list)
    tolerance: float = 0.15

    @property
    def max_abs_deviation(self) -> float:
        return max((abs(r.deviation) for r in self.rows), default=0.0)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)


def compare(est: TauEstimate, theory: ScalingFunction, tolerance: float = 0.15) -> Comparison:
    """Per-q deviation from theory; upper-bound segments only fail when exceeded."""
    out = Comparison(tolerance=tolerance)
    for q, th, se in zip(est.q_values, est.tau_hat, est.stderr):
        if q >= theory.domain_hi:
            continue
        ref = float(theory(q))
        kind = theory.kind_at(q)
        dev = float(th) - ref
        ok = dev <= tolerance if kind == UPPER_BOUND else abs(dev) <= tolerance
        out.rows.append(CompareRow(float(q), float(th), float(se), ref, kind, dev, bool(ok)))
    return out


def lyapunov_violations(table: MomentTable, tol: float = 1e-9) -> list[tuple[int, int]]:
    """Cells ``(j, i)`` where ``log m / q`` decreases from ``q_i`` to ``q_{i+1}``."""
    norm = np.log(table.m) / table.q_values
    bad = np.argwhere(np.diff(norm, axis=1) < -tol * np.maximum(1.0, np.abs(norm[:, 1:])))
    return [tuple(map(int, b)) for b in bad]


def convexity_violations(table: MomentTable, tol: float = 1e-9) -> list[tuple[int, int]]:
    """Cells where the divided differences of ``log m`` in ``q`` decrease."""
    logm = np.log(table.m)
    slopes = np.diff(logm, axis=1) / np.diff(table.q_values)
    bad = np.argwhere(np.diff(slopes, axis=1) < -tol)
    return [tuple(map(int, b)) for b in bad]


def _num(x) -> str:
    return repr(float(x))


MOMENT_COLUMNS = ("t", "q", "m", "se", "n", "batch_median")
BATCH_COLUMNS = ("batch", "count", "t", "q", "mean")
TAU_COLUMNS = ("q", "tau_hat", "se", "tau_theory", "theory_kind", "pass")


def write_moments(table: MomentTable, path) -> None:
    med = table.batch_medians
    with open(path, "w") as fh:
        fh.write("\t".join(MOMENT_COLUMNS) + "\n")
        for j, t in enumerate(table.t):
            for i, q in enumerate(table.q_values):
                bm = "nan" if med is None else _num(med[j, i])
                fh.write("\t".join([_num(t), _num(q), _num(table.m[j, i]),
                                    _num(table.se[j, i]), str(table.n_paths), bm]) + "\n")


def _read_rows(path, columns):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != columns:
            raise ValueError(f"{path}: expected columns {columns}, got {tuple(header)}")
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    if not rows or any(len(r) != len(columns) for r in rows):
        raise ValueError(f"{path}: empty or ragged table")
    try:
        return np.array(rows, dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None


def _grid_axes(t_col, q_col):
    t = np.unique(t_col)
    q = np.unique(q_col)
    if len(t_col) != len(t) * len(q):
        raise ValueError("table is not a full (t, q) grid")
    return t, q


def read_moments(path, batches_path=None) -> MomentTable:
    data = _read_rows(path, MOMENT_COLUMNS)
    t, q = _grid_axes(data[:, 0], data[:, 1])
    jt = np.searchsorted(t, data[:, 0])
    iq = np.searchsorted(q, data[:, 1])
    m = np.empty((len(t), len(q)))
    se = np.empty_like(m)
    m[jt, iq] = data[:, 2]
    se[jt, iq] = data[:, 3]
    table = MomentTable(t, q, m, se, int(data[0, 4]))
    if batches_path is not None:
        table.batch_means, table.batch_counts = read_batches(batches_path, t, q)
    return table


def write_batches(table: MomentTable, path) -> None:
    if table.batch_means is None:
        raise ValueError("table carries no batch means")
    with open(path, "w") as fh:
        fh.write("\t".join(BATCH_COLUMNS) + "\n")
        for b, (cnt, bm) in enumerate(zip(table.batch_counts, table.batch_means)):
            for j, t in enumerate(table.t):
                for i, q in enumerate(table.q_values):
                    fh.write(f"{b}\t{int(cnt)}\t{_num(t)}\t{_num(q)}\t{_num(bm[j, i])}\n")


def read_batches(path, t, q):
    data = _read_rows(path, BATCH_COLUMNS)
    nb = int(data[:, 0].max()) + 1
    means = np.empty((nb, len(t), len(q)))
    counts = np.zeros(nb, dtype=np.int64)
    b = data[:, 0].astype(int)
    means[b, np.searchsorted(t, data[:, 2]), np.searchsorted(q, data[:, 3])] = data[:, 4]
    counts[b] = data[:, 1].astype(np.int64)
    return means, counts


def write_tau(est: TauEstimate, comparison: Comparison | None, path) -> None:
    rows = {r.q: r for r in comparison.rows} if comparison else {}
    with open(path, "w") as fh:
        fh.write("\t".join(TAU_COLUMNS) + "\n")
        for q, th, se in zip(est.q_values, est.tau_hat, est.stderr):
            r = rows.get(float(q))
            ref, kind, ok = ((_num(r.tau_theory), r.kind, str(int(r.passed))) if r
                             else ("nan", "none", "nan"))
            fh.write("\t".join([_num(q), _num(th), _num(se), ref, kind, ok]) + "\n")


def format_report(est: TauEstimate, comparison: Comparison, theory: ScalingFunction,
                  bp_error: str | None = None) -> str:
    lines = [f"case: {theory.label}",
             f"estimator: {est.estimator}, fit window grid indices {est.fit_window}",
             f"tolerance: {comparison.tolerance}",
             "",
             f"{'q':>8} {'tau_hat':>10} {'se':>8} {'theory':>10} {'kind':>12} {'dev':>9}  result"]
    for r in comparison.rows:
        lines.append(f"{r.q:8.4f} {r.tau_hat:10.4f} {r.se:8.4f} {r.tau_theory:10.4f} "
                     f"{r.kind:>12} {r.deviation:+9.4f}  {'pass' if r.passed else 'FAIL'}")
    lines.append("")
    lines.append(f"max |deviation|: {comparison.max_abs_deviation:.4f}")
    lines.append(f"theory breakpoints: {list(theory.breakpoints)}")
    if bp_error:
        lines.append(f"detected breakpoint: not evaluated ({bp_error})")
    elif est.breakpoint is None:
        lines.append("detected breakpoint: none")
    else:
        b = est.breakpoint
        lines.append(f"detected breakpoint: q={b.q_break:.4f} slopes {b.slope_lo:.4f} -> "
                     f"{b.slope_hi:.4f} (RSS ratio {b.rss_ratio:.2f})")
    lines.append(f"overall: {'pass' if comparison.all_passed else 'FAIL'}")
    return "\n".join(lines) + "\n"
