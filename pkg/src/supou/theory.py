"""Exact scaling functions of the integrated process and of its three components.

A :class:`ScalingFunction` is a continuous, convex, piecewise-linear function of
``q`` on ``(0, domain_hi)``.  Segments that are only known as upper bounds carry
``kind = "upper_bound"``; evaluation past ``domain_hi`` returns
:data:`INFINITE_MOMENT`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import CharacteristicQuadruple, ModelError, check, classify
from .stable_dist import sigma_rho_from_tails

__all__ = [
    "EXACT",
    "UPPER_BOUND",
    "INFINITE_MOMENT",
    "Segment",
    "ScalingFunction",
    "LimitLawParams",
    "tau_total",
    "tau_component",
    "tau_max",
    "limit_params",
]

EXACT = "exact"
UPPER_BOUND = "upper_bound"
# returned for q >= domain_hi: E|X*(t)|^q is infinite there for every t
INFINITE_MOMENT = math.inf

_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    q_lo: float
    q_hi: float
    slope: float
    intercept: float
    kind: str = EXACT

    def __call__(self, q):
        return self.slope * q + self.intercept

    def same_line(self, other: "Segment") -> bool:
        return (abs(self.slope - other.slope) <= _TOL
                and abs(self.intercept - other.intercept) <= _TOL)


@dataclass(frozen=True)
class ScalingFunction:
    segments: tuple[Segment, ...]
    domain_hi: float
    label: str = ""

    @property
    def kind(self) -> str:
        return UPPER_BOUND if any(s.kind == UPPER_BOUND for s in self.segments) else EXACT

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(s.q_hi for s in self.segments[:-1])

    @property
    def slopes(self) -> tuple[float, ...]:
        return tuple(s.slope for s in self.segments)

    def segment_at(self, q: float) -> Segment:
        for seg in self.segments:
            if q <= seg.q_hi:
                return seg
        return self.segments[-1]

    def kind_at(self, q: float) -> str:
        return self.segment_at(q).kind

    def __call__(self, q):
        arr = np.asarray(q, dtype=float)
        if np.any(arr <= 0):
            raise ValueError("scaling function is defined for q > 0 only")
        out = np.full(arr.shape, INFINITE_MOMENT)
        finite = arr < self.domain_hi
        # segments are ordered; later ones overwrite from their q_lo on
        for seg in self.segments:
            mask = finite & (arr >= seg.q_lo)
            out = np.where(mask, seg.slope * arr + seg.intercept, out)
        return float(out) if out.ndim == 0 else out

    def to_record(self) -> dict:
        return {
            "case": self.label,
            "domain_hi": None if math.isinf(self.domain_hi) else self.domain_hi,
            "breakpoints": list(self.breakpoints),
            "slopes": list(self.slopes),
            "intercepts": [s.intercept for s in self.segments],
            "segment_kinds": [s.kind for s in self.segments],
            "kind": self.kind,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ScalingFunction":
        hi = math.inf if rec["domain_hi"] is None else float(rec["domain_hi"])
        edges = [0.0, *rec["breakpoints"], hi]
        kinds = rec.get("segment_kinds") or [rec["kind"]] * len(rec["slopes"])
        segs = tuple(Segment(edges[i], edges[i + 1], rec["slopes"][i], rec["intercepts"][i],
                             kinds[i]) for i in range(len(rec["slopes"])))
        return cls(segs, hi, rec.get("case", ""))


def _piecewise(domain_hi, label, *pieces) -> ScalingFunction:
    """Build from ``(q_end, slope, intercept, kind)`` pieces starting at 0, clipped to the domain."""
    segs, lo = [], 0.0
    for end, slope, intercept, kind in pieces:
        hi = min(end, domain_hi)
        if hi > lo:
            segs.append(Segment(lo, hi, slope, intercept, kind))
        lo = hi
        if lo >= domain_hi:
            break
    return ScalingFunction(tuple(segs), domain_hi, label)


def _linear(slope, domain_hi, label) -> ScalingFunction:
    return _piecewise(domain_hi, label, (domain_hi, slope, 0.0, EXACT))


def tau_component(q: CharacteristicQuadruple, which: str) -> ScalingFunction:
    """Scaling function of ``X1*``, ``X2*`` or ``X3*`` (``which`` in ``{"X1", "X2", "X3"}``)."""
    check(q)
    alpha = q.alpha
    inf = math.inf
    if which == "X1":
        if not q.has_x1:
            raise ModelError(["component absent: X1 needs big jumps"])
        g = q.gamma
        if g < 1.0 + alpha:
            return _linear(1.0 / g, g, "X1: gamma < 1+alpha")
        # above 1+alpha only the bound q - alpha is known
        return _piecewise(g, "X1: gamma > 1+alpha",
                          (1.0 + alpha, 1.0 / (1.0 + alpha), 0.0, EXACT),
                          (g, 1.0, -alpha, UPPER_BOUND))
    if which == "X2":
        if not q.has_x2:
            raise ModelError(["component absent: X2 needs small jumps"])
        beta = q.beta
        if alpha > 1.0:
            q_lo = 2.0 * math.floor(alpha)        # largest even integer <= 2 alpha
            q_hi = q_lo + 2.0                     # smallest even integer > 2 alpha
            chord = (q_hi - alpha - q_lo / 2.0) / (q_hi - q_lo)
            return _piecewise(inf, "X2 (a): alpha > 1",
                              (q_lo, 0.5, 0.0, EXACT),
                              (q_hi, chord, q_lo / 2.0 - chord * q_lo, UPPER_BOUND),
                              (inf, 1.0, -alpha, EXACT))
        if beta < 1.0 + alpha:
            return _piecewise(inf, "X2 (b): alpha < 1, beta < 1+alpha",
                              (1.0 + alpha, 1.0 / (1.0 + alpha), 0.0, EXACT),
                              (inf, 1.0, -alpha, EXACT))
        return _piecewise(inf, "X2 (c): alpha < 1, beta > 1+alpha",
                          (beta, 1.0 - alpha / beta, 0.0, EXACT),
                          (inf, 1.0, -alpha, EXACT))
    if which == "X3":
        if not q.has_x3:
            raise ModelError(["component absent: X3 needs b > 0"])
        if alpha > 1.0:
            return _linear(0.5, inf, "X3 (a): alpha > 1")
        return _linear(1.0 - alpha / 2.0, inf, "X3 (b): alpha < 1")
    raise ValueError(f"unknown component {which!r}")


def tau_total(q: CharacteristicQuadruple) -> ScalingFunction:
    """Scaling function of ``X*`` on ``(0, gamma)``.

    With both jump pieces present this is the closed form of the matching
    theorem case; otherwise the present components are combined with
    :func:`tau_max`.
    """
    label = classify(q)
    case = label.theorem_case
    if case is None:
        parts = [tau_component(q, c) for c in label.components]
        f = tau_max(parts)
        return ScalingFunction(f.segments, f.domain_hi, label.describe())
    g, alpha, beta = q.gamma, q.alpha, q.beta
    text = label.describe()
    if case == "A_b0" and alpha < 1.0 and beta > 1.0 + alpha:
        # for 1 < gamma < 1 + alpha < beta the small-jump line can be the steeper one
        return _linear(max(1.0 / g, 1.0 - alpha / beta), g, text)
    if case in ("A_b0", "A_bn0"):
        return _linear(1.0 / g, g, text)
    if case == "B_b0":
        return _piecewise(g, text, (1.0 + alpha, 1.0 / (1.0 + alpha), 0.0, EXACT),
                          (g, 1.0, -alpha, EXACT))
    if case == "C_b0":
        return _piecewise(g, text, (beta, 1.0 - alpha / beta, 0.0, EXACT),
                          (g, 1.0, -alpha, EXACT))
    if case == "D_b0":
        return _linear(1.0 - alpha / beta, g, text)
    return _linear(1.0 - alpha / 2.0, g, text)  # B_bn0


def _upper_envelope(lines, lo, hi):
    """Pieces ``(a, b, segment)`` of the max of ``lines`` on ``[lo, hi]``."""
    cuts = {lo, hi}
    for i, s in enumerate(lines):
        for t in lines[i + 1:]:
            ds = s.slope - t.slope
            if abs(ds) > _TOL:
                x = (t.intercept - s.intercept) / ds
                if lo < x < hi:
                    cuts.add(x)
    cuts = sorted(cuts)
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = a + 1.0 if math.isinf(b) else 0.5 * (a + b)
        vals = [s(mid) for s in lines]
        top = max(vals)
        tied = [s for s, v in zip(lines, vals) if v >= top - _TOL * max(1.0, abs(top))]
        # ties resolve to an exact segment when one is available
        best = next((s for s in tied if s.kind == EXACT), tied[0])
        out.append((a, b, best))
    return out


def tau_max(fs) -> ScalingFunction:
    """Pointwise maximum of scaling functions (scaling function of an independent sum)."""
    fs = list(fs)
    if not fs:
        raise ValueError("tau_max needs at least one scaling function")
    if len(fs) == 1:
        return fs[0]
    hi = min(f.domain_hi for f in fs)
    edges = sorted({0.0, hi, *(b for f in fs for b in f.breakpoints if b < hi)})
    pieces = []
    for lo, up in zip(edges[:-1], edges[1:]):
        probe = lo + 1.0 if math.isinf(up) else 0.5 * (lo + up)
        lines = [f.segment_at(probe) for f in fs]
        pieces.extend(_upper_envelope(lines, lo, up))
    merged = []
    for a, b, seg in pieces:
        if merged and merged[-1].same_line(seg) and merged[-1].kind == seg.kind:
            last = merged.pop()
            merged.append(Segment(last.q_lo, b, last.slope, last.intercept, last.kind))
        else:
            merged.append(Segment(a, b, seg.slope, seg.intercept, seg.kind))
    label = "max(" + ", ".join(f.label for f in fs) + ")"
    return ScalingFunction(tuple(merged), hi, label)


@dataclass(frozen=True)
class LimitLawParams:
    stability: float
    scale: float
    skew: float
    regime: str  # "short_memory_gamma" | "long_memory_one_plus_alpha"
    # one-sided Levy-measure constants of the (1+alpha)-stable limit
    c_plus: float | None = None
    c_minus: float | None = None


def limit_params(q: CharacteristicQuadruple) -> LimitLawParams:
    """Parameters of the stable Levy limit of the normalised big-jump component ``X1*``.

    ``gamma < 1+alpha``: ``gamma``-stable with scale
    ``sigma (gamma E[xi^(1-gamma)])^(1/gamma)`` and the marginal skewness.
    ``gamma > 1+alpha``: ``(1+alpha)``-stable with constants
    ``c1_pm = alpha/(1+alpha) int |y|^(1+alpha) mu1(dy)`` on each half-line.
    """
    check(q)
    if not q.has_x1:
        raise ModelError(["component absent: limit law concerns X1 (big jumps)"])
    big, pi = q.big_jumps, q.pi
    g, alpha = big.gamma_idx, q.alpha
    if g < 1.0 + alpha:
        base = sigma_rho_from_tails(g, big.tails())
        scale = base.sigma * (g * pi.moment(1.0 - g)) ** (1.0 / g)
        return LimitLawParams(g, scale, base.rho, "short_memory_gamma")
    factor = alpha / (1.0 + alpha) * g / (g - 1.0 - alpha)
    c_plus, c_minus = factor * big.w_plus, factor * big.w_minus
    a1 = 1.0 + alpha
    # cos(pi (1+alpha)/2) < 0 here; the factor 1/(1 - a1) = -1/alpha keeps the base positive
    sigma_pow = (math.gamma(1.0 - alpha) / -alpha * (c_minus + c_plus)
                 * math.cos(math.pi * a1 / 2.0))
    skew = (c_minus - c_plus) / (c_minus + c_plus)
    return LimitLawParams(a1, sigma_pow ** (1.0 / a1), skew, "long_memory_one_plus_alpha",
                          c_plus, c_minus)
