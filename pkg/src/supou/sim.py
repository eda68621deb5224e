"""Monte-Carlo paths of the integrated supOU process on a geometric time grid.

Every Poisson atom ``(xi, s, z)`` of the Levy basis contributes
``z * g_t(xi, s)`` to ``X*(t)``, where ``g_t`` is the time integral of the
kernel ``exp(-xi u + s) 1{s <= xi u}`` over ``[0, t]``.  Paths are therefore
exact per atom: there is no time step anywhere.  The only approximations are
the truncation of the basis at ``s = -burn_in``, the Gaussian stand-in for
jumps below ``eps_cutoff`` and the finite OU mixture for the Gaussian part.

Randomness is counter based: path ``j`` of seed ``S`` draws from Philox
streams keyed by ``(S, tag, j, k)``, so any path can be regenerated alone and
results do not depend on how paths are spread over workers.  Each random
quantity (gaps, rates, magnitudes, ...) has its own stream; drawing more atoms
(longer burn-in, smaller cutoff) only appends to the sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .model import CharacteristicQuadruple, ModelError, check
from .stable_dist import sample_pareto_jump

__all__ = [
    "JumpAtom",
    "AtomBatch",
    "TimeGrid",
    "PathSample",
    "SimOptions",
    "PathStreams",
    "kernel_antiderivative",
    "integrate_atoms",
    "gen_big_jump_field",
    "gen_small_jump_field",
    "ou_joint_step",
    "simulate_ou_mixture",
    "simulate_x1_star",
    "simulate_x2_star",
    "simulate_x3_star",
    "simulate_path",
    "simulate_ensemble",
    "default_burn_in",
    "write_path_dump",
]

# stream tags, one per random component
TAG_X1_PAST, TAG_X1_FUTURE = 1, 2
TAG_X2_PAST, TAG_X2_FUTURE, TAG_X2_GAUSS = 3, 4, 5
TAG_X3 = 6

_TINY_RATE = 1e-300
_ATOM_BLOCK = 16384


@dataclass(frozen=True)
class JumpAtom:
    rate: float
    pos: float
    size: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"atom rate must be positive, got {self.rate}")


@dataclass
class AtomBatch:
    """Arrays of atoms; iterating yields :class:`JumpAtom` objects."""

    rate: np.ndarray
    pos: np.ndarray
    size: np.ndarray

    def __len__(self) -> int:
        return len(self.rate)

    def __iter__(self) -> Iterator[JumpAtom]:
        for r, p, z in zip(self.rate, self.pos, self.size):
            yield JumpAtom(float(r), float(p), float(z))

    @classmethod
    def empty(cls) -> "AtomBatch":
        e = np.empty(0)
        return cls(e, e.copy(), e.copy())

    @classmethod
    def concat(cls, *parts: "AtomBatch") -> "AtomBatch":
        return cls(np.concatenate([p.rate for p in parts]),
                   np.concatenate([p.pos for p in parts]),
                   np.concatenate([p.size for p in parts]))


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 1.0
    ratio: float = 2.0
    count: int = 11

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError(f"grid t0 must be positive, got {self.t0}")
        if not self.ratio > 1:
            raise ValueError(f"grid ratio must exceed 1, got {self.ratio}")
        if int(self.count) != self.count or self.count < 4:
            raise ValueError(f"grid needs an integer count >= 4, got {self.count}")

    @property
    def values(self) -> np.ndarray:
        return self.t0 * self.ratio ** np.arange(self.count, dtype=float)

    @property
    def t_max(self) -> float:
        return float(self.values[-1])


@dataclass
class PathSample:
    grid: TimeGrid
    xstar: np.ndarray
    components: dict | None = None
    seed_coords: tuple[int, int] = (0, 0)

    @property
    def path_index(self) -> int:
        return self.seed_coords[1]


@dataclass(frozen=True)
class SimOptions:
    """Scheme parameters; ``burn_in=None`` resolves to :func:`default_burn_in`."""

    eps_cutoff: float = 1e-3
    n_ou: int = 64
    burn_in: float | None = None
    keep_components: bool = False

    def __post_init__(self):
        if not 0.0 < self.eps_cutoff <= 1.0:
            raise ValueError(f"eps_cutoff must lie in (0, 1], got {self.eps_cutoff}")
        if int(self.n_ou) != self.n_ou or self.n_ou < 1:
            raise ValueError(f"n_ou must be a positive integer, got {self.n_ou}")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")


def default_burn_in(n_paths: int) -> float:
    """``50 + ln(n_paths)``: the discarded mass scales like ``exp(-burn_in)`` per path."""
    return 50.0 + math.log(max(int(n_paths), 1))


class PathStreams:
    """Independent Philox generators for one path, addressed by ``(tag, k)``."""

    def __init__(self, seed: int, path_index: int):
        self.seed = int(seed)
        self.path_index = int(path_index)

    def generator(self, tag: int, k: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(tag, self.path_index, k))
        return np.random.Generator(np.random.Philox(ss))

    def generators(self, tag: int, n: int) -> list[np.random.Generator]:
        return [self.generator(tag, k) for k in range(n)]


def kernel_antiderivative(atom: JumpAtom, t: float) -> float:
    """``z * g_t(xi, s)``, the contribution of one atom to ``X*(t)``."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    xi, s, z = atom.rate, atom.pos, atom.size
    if s < 0:
        return z * math.exp(s) * -math.expm1(-xi * t) / xi
    if s < xi * t:
        return z * -math.expm1(-(xi * t - s)) / xi
    return 0.0


def integrate_atoms(atoms: AtomBatch, t) -> np.ndarray:
    """``sum_k z_k g_t(xi_k, s_k)`` at every time in ``t`` (vectorised, blockwise)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    n = len(atoms)
    for lo in range(0, n, _ATOM_BLOCK):
        rate = np.maximum(atoms.rate[lo:lo + _ATOM_BLOCK], _TINY_RATE)[:, None]
        pos = atoms.pos[lo:lo + _ATOM_BLOCK][:, None]
        size = atoms.size[lo:lo + _ATOM_BLOCK][:, None]
        xt = rate * t
        past = np.exp(np.minimum(pos, 0.0)) * -np.expm1(-xt) / rate
        alive = xt - pos
        future = np.where(alive > 0, -np.expm1(-np.maximum(alive, 0.0)) / rate, 0.0)
        g = np.where(pos < 0, past, future)
        out += (size * g).sum(axis=0)
    return out


def _arrivals(gen: np.random.Generator, intensity: float, limit: float) -> np.ndarray:
    """Arrival times below ``limit`` of a Poisson process with the given intensity.

    Gaps are drawn in blocks from one stream, so the arrivals below a smaller
    limit are always a prefix of those below a larger one.
    """
    if intensity <= 0 or limit <= 0:
        return np.empty(0)
    mean = intensity * limit
    block = int(mean + 6.0 * math.sqrt(mean) + 16)
    times = np.cumsum(gen.standard_exponential(block)) / intensity
    while times[-1] < limit:
        more = np.cumsum(gen.standard_exponential(block)) / intensity
        times = np.concatenate([times, times[-1] + more])
    return times[times < limit]


def gen_big_jump_field(q: CharacteristicQuadruple, horizon: float, burn_in: float,
                       streams: PathStreams) -> AtomBatch:
    """Atoms of the big-jump basis that can contribute to ``X1*(t)`` for ``t <= horizon``.

    Past atoms (``-burn_in < s < 0``) arrive at rate ``w_plus + w_minus`` per
    unit of ``s`` with ``xi ~ pi``.  Future atoms (``0 <= s < xi horizon``) have
    Poisson count with mean ``(w_plus + w_minus) E[xi] horizon``, size-biased
    rates and ``s`` uniform on ``(0, xi horizon)``.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    big = q.big_jumps
    if big is None or big.total == 0:
        return AtomBatch.empty()
    m = big.total
    g_gap, g_rate, g_size = streams.generators(TAG_X1_PAST, 3)
    pos_past = -_arrivals(g_gap, m, burn_in)
    n_past = len(pos_past)
    past = AtomBatch(q.pi.sample(g_rate, n_past), pos_past,
                     sample_pareto_jump(big.gamma_idx, big.w_plus, big.w_minus, g_size,
                                        n_past))
    g_count, g_rate, g_pos, g_size = streams.generators(TAG_X1_FUTURE, 4)
    n_fut = int(g_count.poisson(m * q.pi.mean * horizon))
    rate = q.pi.sample_size_biased(g_rate, n_fut)
    future = AtomBatch(rate, g_pos.random(n_fut) * rate * horizon,
                       sample_pareto_jump(big.gamma_idx, big.w_plus, big.w_minus, g_size,
                                          n_fut))
    return AtomBatch.concat(past, future)


def _small_magnitudes(r: np.ndarray, beta: float, total: float) -> np.ndarray:
    # inverse of the tail-mass map x -> mu2({x < |y| <= 1})
    if beta == 0.0:
        return 1.0 - r / total
    return (1.0 + r / total) ** (-1.0 / beta)


def gen_small_jump_field(q: CharacteristicQuadruple, horizon: float, burn_in: float,
                         eps_cutoff: float, streams: PathStreams) -> AtomBatch:
    """Atoms of the small-jump basis with ``eps_cutoff < |z| <= 1``.

    Within each region atoms are indexed by the tail mass ``r`` above their size
    (a Poisson process in ``r``), so lowering the cutoff only appends atoms.
    For ``beta = 0`` the measure is finite and all of it is drawn.
    """
    small = q.small_jumps
    if small is None or small.total == 0:
        return AtomBatch.empty()
    beta, total = small.beta_idx, small.total
    mass = total if beta == 0.0 else small.tail_mass(eps_cutoff)
    p_plus = small.c_plus / total
    parts = []
    for tag, region in ((TAG_X2_PAST, burn_in), (TAG_X2_FUTURE, q.pi.mean * horizon)):
        g_r, g_pos, g_rate, g_sign = streams.generators(tag, 4)
        r = _arrivals(g_r, region, mass)
        n = len(r)
        mag = _small_magnitudes(r, beta, total)
        size = np.where(g_sign.random(n) < p_plus, mag, -mag)
        if tag == TAG_X2_PAST:
            rate = q.pi.sample(g_rate, n)
            pos = -g_pos.random(n) * burn_in
        else:
            rate = q.pi.sample_size_biased(g_rate, n)
            pos = g_pos.random(n) * rate * horizon
        parts.append(AtomBatch(rate, pos, size))
    return AtomBatch.concat(*parts)


def ou_joint_step(u, xi, h, v, z1, z2):
    """Exact draw of ``(U(h), int_0^h U)`` given ``U(0) = u`` for a stationary OU process.

    ``U`` has decay rate ``xi`` and stationary variance ``v``; ``z1``, ``z2``
    are independent standard normals.  All arguments broadcast.
    """
    xi = np.maximum(np.asarray(xi, dtype=float), _TINY_RATE)
    x = np.maximum(xi * h, _TINY_RATE)
    one_minus = -np.expm1(-x)                         # 1 - e^{-x}
    var_u = v * -np.expm1(-2.0 * x)
    # phi(x) = x - 2(1 - e^{-x}) + (1 - e^{-2x})/2, with a series near 0
    phi_direct = x - 2.0 * one_minus - 0.5 * np.expm1(-2.0 * x)
    phi_series = x**3 / 3.0 - x**4 / 4.0 + 7.0 * x**5 / 60.0 - x**6 / 24.0
    phi = np.where(x < 1e-3, phi_series, phi_direct)
    var_i = 2.0 * v * h * h * phi / (x * x)
    cov = v * h * one_minus * one_minus / x
    mean_u = u * (1.0 - one_minus)
    mean_i = u * h * one_minus / x
    sd_u = np.sqrt(var_u)
    load = cov / sd_u
    resid = np.sqrt(np.maximum(var_i - load * load, 0.0))
    return mean_u + sd_u * z1, mean_i + load * z1 + resid * z2


def simulate_ou_mixture(rates, v: float, times, gen: np.random.Generator):
    """Stationary OU processes with the given rates, sampled exactly on ``times``.

    ``rates`` has shape ``(..., n)``; returns ``(values, integrals)`` of shape
    ``(..., n, len(times))`` where ``integrals[..., j] = int_0^{t_j} U``.
    Normals are drawn step by step, so the output is linear in ``sqrt(v)``.
    """
    rates = np.asarray(rates, dtype=float)
    times = np.asarray(times, dtype=float)
    sd = math.sqrt(v)
    u = sd * gen.standard_normal(rates.shape)
    vals = np.empty(rates.shape + times.shape)
    ints = np.empty(rates.shape + times.shape)
    prev, acc = 0.0, np.zeros(rates.shape)
    for j, t in enumerate(times):
        z = gen.standard_normal(rates.shape + (2,))
        u, inc = ou_joint_step(u, rates, t - prev, v, z[..., 0], z[..., 1])
        acc = acc + inc
        vals[..., j], ints[..., j] = u, acc
        prev = t
    return vals, ints


def _gaussian_supou(q, b: float, times, n_ou: int, streams: PathStreams, tag: int):
    g_rate, g_norm = streams.generators(tag, 2)
    rates = q.pi.sample(g_rate, n_ou)
    vals, ints = simulate_ou_mixture(rates, b / 2.0, times, g_norm)
    scale = 1.0 / math.sqrt(n_ou)
    return ints.sum(axis=0) * scale, vals.sum(axis=0) * scale


def simulate_x1_star(q: CharacteristicQuadruple, grid: TimeGrid, streams: PathStreams,
                     burn_in: float = 50.0) -> np.ndarray:
    """Big-jump component ``X1*(t_j)`` including the drift ``a t``."""
    check(q)
    if not q.has_x1:
        raise ModelError(["component absent: X1 needs big jumps"])
    t = grid.values
    atoms = gen_big_jump_field(q, grid.t_max, burn_in, streams)
    return integrate_atoms(atoms, t) + q.drift * t


def simulate_x2_star(q: CharacteristicQuadruple, grid: TimeGrid, eps_cutoff: float,
                     streams: PathStreams, burn_in: float = 50.0, n_ou: int = 64) -> np.ndarray:
    """Small-jump component ``X2*(t_j)``.

    Jumps above ``eps_cutoff`` are exact atoms, compensated by their mean
    ``t * int x mu2(dx)``; the band below the cutoff is replaced by a Gaussian
    supOU field with ``b = int_{|x| < eps} x^2 mu2(dx)`` (skipped for ``beta = 0``).
    """
    check(q)
    if not 0.0 < eps_cutoff <= 1.0:
        raise ValueError(f"eps_cutoff must lie in (0, 1], got {eps_cutoff}")
    if not q.has_x2:
        raise ModelError(["component absent: X2 needs small jumps"])
    small = q.small_jumps
    t = grid.values
    atoms = gen_small_jump_field(q, grid.t_max, burn_in, eps_cutoff, streams)
    exact_eps = 0.0 if small.beta_idx == 0.0 else eps_cutoff
    out = integrate_atoms(atoms, t) - t * small.band_mean(exact_eps)
    if small.beta_idx > 0.0:
        b_sub = small.truncated_variance(eps_cutoff)
        out = out + _gaussian_supou(q, b_sub, t, n_ou, streams, TAG_X2_GAUSS)[0]
    return out


def simulate_x3_star(q: CharacteristicQuadruple, grid: TimeGrid, n_ou: int,
                     streams: PathStreams, with_values: bool = False):
    """Gaussian component ``X3*(t_j)`` from ``n_ou`` exact OU processes with ``xi ~ pi``.

    With ``with_values`` also returns ``X3(t_j)`` itself.
    """
    check(q)
    if not q.has_x3:
        raise ModelError(["component absent: X3 needs b > 0"])
    xstar, x = _gaussian_supou(q, q.b, grid.values, n_ou, streams, TAG_X3)
    return (xstar, x) if with_values else xstar


def simulate_path(q: CharacteristicQuadruple, grid: TimeGrid, options: SimOptions,
                  seed: int, path_index: int, burn_in: float | None = None) -> PathSample:
    streams = PathStreams(seed, path_index)
    if burn_in is None:
        burn_in = options.burn_in if options.burn_in is not None else default_burn_in(1)
    comps = {}
    if q.has_x1:
        comps["x1"] = simulate_x1_star(q, grid, streams, burn_in)
    if q.has_x2:
        comps["x2"] = simulate_x2_star(q, grid, options.eps_cutoff, streams, burn_in,
                                       options.n_ou)
    if q.has_x3:
        comps["x3"] = simulate_x3_star(q, grid, options.n_ou, streams)
    xstar = np.zeros(grid.count)
    for key in ("x1", "x2", "x3"):
        if key in comps:
            xstar = xstar + comps[key]
    return PathSample(grid, xstar, comps if options.keep_components else None,
                      (int(seed), int(path_index)))


def simulate_ensemble(q: CharacteristicQuadruple, grid: TimeGrid, n_paths: int,
                      options: SimOptions, seed: int, start: int = 0,
                      stop: int | None = None) -> Iterator[PathSample]:
    """Paths ``start .. stop-1`` of an ensemble of ``n_paths`` (``stop`` defaults to ``n_paths``).

    ``n_paths`` fixes the default burn-in, so a sub-range yields exactly the
    paths a full run would.
    """
    check(q)
    if n_paths < 0:
        raise ValueError("n_paths must be >= 0")
    burn_in = options.burn_in if options.burn_in is not None else default_burn_in(n_paths)
    stop = n_paths if stop is None else min(stop, n_paths)
    for j in range(start, stop):
        yield simulate_path(q, grid, options, seed, j, burn_in)


DUMP_COLUMNS = ("path_index", "t", "xstar", "x1", "x2", "x3")


def write_path_dump(samples, fh) -> None:
    """Write one tab-separated row per ``(path, t_j)``; absent components are ``nan``."""
    fh.write("\t".join(DUMP_COLUMNS) + "\n")
    for ps in samples:
        comps = ps.components or {}
        nan = np.full(ps.grid.count, np.nan)
        cols = [comps.get(k, nan) for k in ("x1", "x2", "x3")]
        for j, t in enumerate(ps.grid.values):
            row = [repr(float(t)), repr(float(ps.xstar[j]))] + [repr(float(c[j])) for c in cols]
            fh.write(f"{ps.path_index}\t" + "\t".join(row) + "\n")
