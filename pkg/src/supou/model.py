"""The characteristic quadruple ``(a, b, mu, pi)`` and its parametric families.

The Levy measure ``mu`` is split at ``|x| = 1``:

* big jumps, ``|x| > 1``: density ``gamma w_pm |x|^(-gamma-1)``, so that
  ``mu([x, inf)) = w_plus x^-gamma`` for ``x >= 1``;
* small jumps, ``0 < |x| <= 1``: density ``beta c_pm |x|^(-beta-1)``, so that
  ``mu([x, 1]) = c_plus (x^-beta - 1)``.  ``beta = 0`` is the finite measure with
  total mass ``c_plus + c_minus`` spread uniformly on ``[-1, 1] \\ {0}``.

``pi`` is Gamma(alpha, rate).  Any of the three pieces (big jumps, small jumps,
Gaussian part ``b``) may be absent; the full set of theorem labels applies only
when both jump pieces are present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .stable_dist import PiGamma, TailWeights

__all__ = [
    "BOUNDARY_TOL",
    "BigJumps",
    "SmallJumps",
    "CharacteristicQuadruple",
    "RegimeLabel",
    "ModelError",
    "validate",
    "centering_drift",
    "classify",
    "QUADRUPLE_FIELDS",
]

BOUNDARY_TOL = 1e-9

QUADRUPLE_FIELDS = ("a", "b", "gamma", "w_plus", "w_minus", "beta", "c_plus",
                    "c_minus", "pi_shape", "pi_rate")

# figure panel letter for each theorem case
PANELS = {"A_b0": "a", "B_b0": "b", "C_b0": "c", "D_b0": "d", "A_bn0": "e", "B_bn0": "f"}


class ModelError(ValueError):
    """Raised when a quadruple violates the model assumptions."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class BigJumps:
    gamma_idx: float
    w_plus: float = 1.0
    w_minus: float = 1.0

    @property
    def total(self) -> float:
        return self.w_plus + self.w_minus

    def tails(self) -> TailWeights:
        """Marginal tail weights: ``mu([x, inf)) ~ p gamma x^-gamma`` gives ``p = w_plus / gamma``."""
        return TailWeights(self.w_plus / self.gamma_idx, self.w_minus / self.gamma_idx)


@dataclass(frozen=True)
class SmallJumps:
    beta_idx: float
    c_plus: float = 0.5
    c_minus: float = 0.5

    @property
    def total(self) -> float:
        return self.c_plus + self.c_minus

    def tail_mass(self, eps: float) -> float:
        """``mu2({eps < |x| <= 1})``; for ``beta = 0`` the whole finite mass."""
        if self.beta_idx == 0.0:
            return self.total * (1.0 - eps)
        return self.total * (eps ** -self.beta_idx - 1.0)

    def truncated_variance(self, eps: float) -> float:
        """``int_{|x| < eps} x^2 mu2(dx)``."""
        if self.beta_idx == 0.0:
            return self.total * eps**3 / 3.0
        beta = self.beta_idx
        return self.total * beta * eps ** (2.0 - beta) / (2.0 - beta)

    def band_mean(self, eps: float) -> float:
        """``int_{eps < |x| <= 1} x mu2(dx)``, the drift of the uncompensated band."""
        beta = self.beta_idx
        diff = self.c_plus - self.c_minus
        if beta == 0.0:
            return diff * (1.0 - eps * eps) / 2.0
        if beta == 1.0:
            return diff * -math.log(eps)
        return diff * beta * (1.0 - eps ** (1.0 - beta)) / (1.0 - beta)


@dataclass(frozen=True)
class CharacteristicQuadruple:
    """Drift ``a``, Gaussian variance ``b``, the two jump pieces of ``mu`` and ``pi``.

    ``a = None`` means "centre automatically" (see :func:`centering_drift`).
    """

    pi: PiGamma
    b: float = 0.0
    big_jumps: BigJumps | None = None
    small_jumps: SmallJumps | None = None
    a: float | None = None

    @property
    def alpha(self) -> float:
        return self.pi.shape

    @property
    def gamma(self) -> float | None:
        return None if self.big_jumps is None else self.big_jumps.gamma_idx

    @property
    def beta(self) -> float | None:
        return None if self.small_jumps is None else self.small_jumps.beta_idx

    @property
    def has_x1(self) -> bool:
        return self.big_jumps is not None

    @property
    def has_x2(self) -> bool:
        return self.small_jumps is not None

    @property
    def has_x3(self) -> bool:
        return self.b > 0

    @property
    def moment_bound(self) -> float:
        """Supremum of finite absolute moment orders of ``X*(t)``."""
        return self.gamma if self.has_x1 else math.inf

    @property
    def drift(self) -> float:
        """Effective drift: the explicit ``a`` or the centring value."""
        return centering_drift(self) if self.a is None else self.a

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any]) -> "CharacteristicQuadruple":
        """Build from the flat key-value layout (see ``QUADRUPLE_FIELDS``).

        Big jumps are absent when ``w_plus + w_minus == 0`` (``gamma`` is then
        ignored), small jumps when ``c_plus + c_minus == 0``.
        """
        def num(key, default=None):
            val = doc.get(key, default)
            return None if val is None else float(val)

        violations = []
        w_plus, w_minus = num("w_plus", 0.0), num("w_minus", 0.0)
        c_plus, c_minus = num("c_plus", 0.0), num("c_minus", 0.0)
        big = small = None
        if w_plus + w_minus > 0:
            if doc.get("gamma") is None:
                violations.append("(i) big jumps given but 'gamma' is missing")
            else:
                big = BigJumps(num("gamma"), w_plus, w_minus)
        if c_plus + c_minus > 0:
            if doc.get("beta") is None:
                violations.append("(iii) small jumps given but 'beta' is missing")
            else:
                small = SmallJumps(num("beta"), c_plus, c_minus)
        if doc.get("pi_shape") is None:
            violations.append("(ii) 'pi_shape' (alpha) is required")
        try:
            pi = PiGamma(num("pi_shape", 1.0), num("pi_rate", 1.0))
        except ValueError as exc:
            violations.append(f"(ii) {exc}")
            pi = None
        if violations:
            raise ModelError(violations)
        return cls(pi=pi, b=num("b", 0.0), big_jumps=big, small_jumps=small, a=num("a"))

    def to_mapping(self) -> dict:
        doc = {"b": self.b, "pi_shape": self.pi.shape, "pi_rate": self.pi.rate}
        if self.a is not None:
            doc["a"] = self.a
        if self.big_jumps is not None:
            doc.update(gamma=self.big_jumps.gamma_idx, w_plus=self.big_jumps.w_plus,
                       w_minus=self.big_jumps.w_minus)
        if self.small_jumps is not None:
            doc.update(beta=self.small_jumps.beta_idx, c_plus=self.small_jumps.c_plus,
                       c_minus=self.small_jumps.c_minus)
        return doc


@dataclass(frozen=True)
class RegimeLabel:
    """Theorem case of a quadruple.

    ``theorem_case`` is one of ``A_b0 .. D_b0, A_bn0, B_bn0`` when both jump
    pieces are present, else ``None`` (the scaling function is then obtained by
    composing the component lemmas).
    """

    theorem_case: str | None
    b_zero: bool
    components: tuple[str, ...] = field(default=())

    @property
    def panel(self) -> str | None:
        return PANELS.get(self.theorem_case)

    def describe(self) -> str:
        if self.theorem_case is None:
            return "components " + "+".join(self.components) + " (no theorem case)"
        letter = self.theorem_case[0].lower()
        which = "b=0" if self.b_zero else "b!=0"
        text = f"Theorem({which}) case ({letter}), panel ({self.panel})"
        if self.theorem_case == "B_b0":
            text += ", breakpoint q=1+alpha"
        elif self.theorem_case == "C_b0":
            text += ", breakpoint q=beta"
        return text


def _near(x: float, y: float) -> bool:
    return abs(x - y) <= BOUNDARY_TOL


def validate(q: CharacteristicQuadruple) -> list[str]:
    """List every violated assumption; empty iff ``q`` is a usable interior point.

    Each message starts with the assumption item it concerns: ``(i)`` tails of
    the big jumps, ``(ii)`` the rate-mixing law, ``(iii)`` the small jumps.
    """
    out = []
    alpha = q.alpha
    if q.b < 0:
        out.append(f"b must be >= 0, got {q.b}")
    if not (q.has_x1 or q.has_x2 or q.has_x3):
        out.append("model is empty: need big jumps, small jumps or b > 0")
    if _near(alpha, 1.0):
        out.append("(ii) alpha = 1 excluded (boundary between memory regimes)")
    big = q.big_jumps
    if big is not None:
        g = big.gamma_idx
        if big.w_plus < 0 or big.w_minus < 0:
            out.append("(i) w_plus and w_minus must be >= 0")
        if not 0.0 < g < 2.0:
            out.append(f"(i) gamma must lie in (0, 2), got {g}")
        if _near(g, 1.0) and big.w_plus != big.w_minus:
            out.append("(i) gamma = 1 requires symmetric tails (w_plus = w_minus)")
        if _near(g, 1.0 + alpha):
            out.append("(i) gamma = 1+alpha excluded (boundary case)")
        if q.b > 0 and alpha < 1.0 and _near(g, 2.0 / (2.0 - alpha)):
            out.append("gamma = 2/(2-alpha) excluded when b != 0 (boundary case)")
        if q.a is not None and g > 1.0 and not _near(q.a, centering_drift(q)):
            out.append(f"(i) finite mean requires centring a = {centering_drift(q)!r}, got {q.a}")
    elif q.a is not None and q.a != 0.0:
        out.append("a must be 0 without big jumps (mean is finite and centred)")
    small = q.small_jumps
    if small is not None:
        beta = small.beta_idx
        if small.c_plus < 0 or small.c_minus < 0:
            out.append("(iii) c_plus and c_minus must be >= 0")
        if beta < 0.0:
            out.append(f"(iii) beta must be >= 0, got {beta}")
        if beta >= 2.0:
            out.append(f"(iii) beta must be < 2, got {beta}")
        if _near(beta, 1.0 + alpha):
            out.append("(iii) beta = 1+alpha excluded")
    return out


def check(q: CharacteristicQuadruple) -> CharacteristicQuadruple:
    """Return ``q`` unchanged or raise :class:`ModelError`."""
    violations = validate(q)
    if violations:
        raise ModelError(violations)
    return q


def centering_drift(q: CharacteristicQuadruple) -> float:
    """Drift making ``E L(1) = 0`` when the big jumps have a finite mean.

    For the Pareto family ``int_{|x|>1} x mu(dx) = gamma (w_plus - w_minus) / (gamma - 1)``
    and the drift is its negative.  With ``gamma <= 1`` the mean is infinite and
    no centring applies.
    """
    big = q.big_jumps
    if big is None:
        return 0.0
    g = big.gamma_idx
    if g == 1.0 and big.w_plus != big.w_minus:
        raise ModelError(["(i) gamma = 1 requires symmetric tails (w_plus = w_minus)"])
    if g <= 1.0:
        return 0.0
    return -g * (big.w_plus - big.w_minus) / (g - 1.0)


def classify(q: CharacteristicQuadruple) -> RegimeLabel:
    check(q)
    comps = tuple(name for name, present in
                  (("X1", q.has_x1), ("X2", q.has_x2), ("X3", q.has_x3)) if present)
    b_zero = not q.has_x3
    if not (q.has_x1 and q.has_x2):
        return RegimeLabel(None, b_zero, comps)
    g, alpha, beta = q.gamma, q.alpha, q.beta
    if b_zero:
        if g < 1.0 + alpha:
            case = "A_b0"
        elif beta < 1.0 + alpha:
            case = "B_b0"
        elif beta <= g:
            case = "C_b0"
        else:
            case = "D_b0"
    else:
        case = "A_bn0" if (alpha > 1.0 or g < 2.0 / (2.0 - alpha)) else "B_bn0"
    return RegimeLabel(case, b_zero, comps)
