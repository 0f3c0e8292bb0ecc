"""Quantile calculus for summability conditions on dependent random fields.

A :class:`QuantileProfile` stores the upper-tail quantile function ``Q`` of
``|X|``: the generalized inverse of ``x -> P(|X| > x)``, a nonnegative,
nonincreasing, right-continuous function on [0, 1].  Two representations are
supported: piecewise-constant (built from empirical samples) and
piecewise-linear (built from analytic knot lists).  Everything downstream is
evaluated in closed form on the stored pieces:

* ``cumulative`` - the running integral ``u -> int_0^u Q``,
* ``g_at`` - its inverse ``G`` (left-most preimage on flats, clamped to 1
  past the total mass ``cumulative(1) = E|X|``),
* ``integral_composite`` - ``int_0^c Q(G(u)) du``, computed exactly through
  the change of variables ``int_0^{G(c)} Q^2(s) ds``.

On top of the profile sit the two series conditions used to certify a
central limit theorem and tightness for quadrant partial sums of a
stationary field:

* :func:`clt_condition` sums ``F(min_i gamma_i(k_i))`` over the index box,
  where ``F(c) = int_0^c Q(G(u)) du`` and the ``gamma_i`` are per-axis
  dependence sequences, and
* :func:`tightness_condition` sums ``(k+1)^{d-1} F(theta(k))`` and
  cross-evaluates the same quantity through an integral form in the
  ``u``-variable (layer-cake weight on ``Q^2``), asserting agreement.

Series are classified FINITE / DIVERGENT / INCONCLUSIVE from their partial
sums at doubling cutoffs; see :func:`classify_partial_sums`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QuantileProfile",
    "ConditionReport",
    "empirical_quantile",
    "constant_profile",
    "linear_profile",
    "g_of",
    "clt_condition",
    "tightness_condition",
    "theta_inverse",
    "r_at",
    "classify_partial_sums",
]

FINITE = "FINITE"
DIVERGENT = "DIVERGENT"
INCONCLUSIVE = "INCONCLUSIVE"

# Growth test thresholds (see classify_partial_sums).
_GROWTH_PER_DOUBLING = 0.01
_TAIL_FRACTION = 1e-6
_FORM_AGREEMENT_RTOL = 1e-6


@dataclass(frozen=True)
class QuantileProfile:
    """Piecewise representation of a nonincreasing quantile function on [0,1].

    ``kind = "step"``: ``qs[i]`` is the constant value on ``[us[i], us[i+1])``
    and ``len(qs) == len(us) - 1``.  ``kind = "linear"``: ``qs[i]`` is the
    node value at ``us[i]`` with linear interpolation between nodes and
    ``len(qs) == len(us)``.
    """

    us: np.ndarray
    qs: np.ndarray
    kind: str
    cums: np.ndarray = field(init=False, repr=False, compare=False)
    sqcums: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        us = np.asarray(self.us, dtype=float)
        qs = np.asarray(self.qs, dtype=float)
        if self.kind not in ("step", "linear"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if us.ndim != 1 or us.size < 2:
            raise ValueError("need at least two breakpoints")
        if us[0] != 0.0 or us[-1] != 1.0:
            raise ValueError("breakpoints must span [0, 1]")
        if np.any(np.diff(us) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        expected = us.size - 1 if self.kind == "step" else us.size
        if qs.size != expected:
            raise ValueError("value array length does not match breakpoints")
        if np.any(qs < 0) or not np.all(np.isfinite(qs)):
            raise ValueError("quantile values must be finite and nonnegative")
        if np.any(np.diff(qs) > 1e-15 * max(1.0, float(qs.max(initial=0.0)))):
            raise ValueError("quantile values must be nonincreasing")
        us.setflags(write=False)
        qs.setflags(write=False)
        object.__setattr__(self, "us", us)
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "cums", self._running_integral(power=1))
        object.__setattr__(self, "sqcums", self._running_integral(power=2))

    def _running_integral(self, power: int) -> np.ndarray:
        widths = np.diff(self.us)
        if self.kind == "step":
            pieces = (self.qs**power) * widths
        else:
            a, b = self.qs[:-1], self.qs[1:]
            if power == 1:
                pieces = 0.5 * (a + b) * widths
            else:
                pieces = (a * a + a * b + b * b) / 3.0 * widths
        out = np.concatenate(([0.0], np.cumsum(pieces)))
        out.setflags(write=False)
        return out

    # -- pointwise evaluation -------------------------------------------------

    def q_at(self, u):
        """Q(u); right-continuous, with Q(1) the final stored value."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u > 1):
            raise ValueError("u must lie in [0, 1]")
        if self.kind == "step":
            idx = np.clip(np.searchsorted(self.us, u, side="right") - 1, 0, self.qs.size - 1)
            return self.qs[idx] if u.ndim else float(self.qs[idx])
        idx = np.clip(np.searchsorted(self.us, u, side="right") - 1, 0, self.us.size - 2)
        left = self.us[idx]
        width = self.us[idx + 1] - left
        frac = (u - left) / width
        val = self.qs[idx] * (1 - frac) + self.qs[idx + 1] * frac
        return val if u.ndim else float(val)

    def cumulative(self, u):
        """Exact running integral of Q up to u."""
        return self._partial_integral(u, self.cums, power=1)

    def integral_q_squared(self, u):
        """Exact running integral of Q**2 up to u."""
        return self._partial_integral(u, self.sqcums, power=2)

    def _partial_integral(self, u, table: np.ndarray, power: int):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u > 1):
            raise ValueError("u must lie in [0, 1]")
        idx = np.clip(np.searchsorted(self.us, u, side="right") - 1, 0, self.us.size - 2)
        left = self.us[idx]
        du = u - left
        if self.kind == "step":
            q = self.qs[idx]
            val = table[idx] + (q**power) * du
        else:
            a = self.qs[idx]
            slope = (self.qs[idx + 1] - a) / (self.us[idx + 1] - left)
            if power == 1:
                val = table[idx] + a * du + 0.5 * slope * du * du
            else:
                val = table[idx] + a * a * du + a * slope * du * du + slope * slope * du**3 / 3.0
        return val if u.ndim else float(val)

    @property
    def total(self) -> float:
        """cumulative(1) = E|X|."""
        return float(self.cums[-1])

    def g_at(self, y):
        """Inverse of the running integral: left-most preimage, clamped to 1.

        ``g_at(y)`` is the smallest ``u`` with ``cumulative(u) >= y``; for
        ``y > cumulative(1)`` it returns 1 (the inverse is never consulted
        past the total mass by the series conditions).
        """
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("y must be nonnegative")
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        out = np.empty_like(y)
        # First piece whose right-endpoint integral reaches y.
        idx = np.searchsorted(self.cums[1:], y, side="left")
        over = idx >= self.us.size - 1
        idx = np.clip(idx, 0, self.us.size - 2)
        dy = y - self.cums[idx]
        if self.kind == "step":
            q = self.qs[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                du = np.where(q > 0, dy / np.where(q > 0, q, 1.0), 0.0)
        else:
            a = self.qs[idx]
            widths = self.us[idx + 1] - self.us[idx]
            slope = (self.qs[idx + 1] - a) / widths
            # Solve a*du + slope*du^2/2 = dy, stable form of the positive root.
            rad = np.maximum(a * a + 2.0 * slope * dy, 0.0)
            denom = a + np.sqrt(rad)
            with np.errstate(divide="ignore", invalid="ignore"):
                du = np.where(denom > 0, 2.0 * dy / np.where(denom > 0, denom, 1.0), 0.0)
        width = self.us[idx + 1] - self.us[idx]
        out = np.where(over, 1.0, self.us[idx] + np.minimum(du, width))
        out = np.where(y <= 0, 0.0, out)
        return float(out[0]) if scalar else out

    def integral_composite(self, c):
        """``int_0^c Q(G(u)) du``, exact via ``int_0^{G(c)} Q^2``.

        Saturates at ``c = cumulative(1)``: past the total mass a true
        quantile function vanishes, so the composite contributes nothing.
        """
        c = np.asarray(c, dtype=float)
        ceff = np.clip(c, 0.0, self.total)
        return self.integral_q_squared(self.g_at(ceff))

    # -- serialization --------------------------------------------------------

    def to_json(self) -> str:
        if self.kind == "step":
            knots = [[float(self.us[i]), float(self.qs[i])] for i in range(self.qs.size)]
            knots.append([1.0, float(self.qs[-1])])
        else:
            knots = [[float(u), float(q)] for u, q in zip(self.us, self.qs)]
        return json.dumps({"kind": self.kind, "knots": knots})

    @classmethod
    def from_json(cls, text: str) -> "QuantileProfile":
        doc = json.loads(text)
        knots = doc["knots"]
        kind = doc.get("kind", "step")
        us = np.array([k[0] for k in knots], dtype=float)
        qs = np.array([k[1] for k in knots], dtype=float)
        if kind == "step":
            return cls(us=us, qs=qs[:-1], kind="step")
        return cls(us=us, qs=qs, kind="linear")


def empirical_quantile(samples: Sequence[float]) -> QuantileProfile:
    """Exact generalized inverse of the empirical tail of ``|samples|``.

    With the absolute values sorted decreasingly ``a_1 >= ... >= a_n``, the
    tail ``H(x) = #{i : a_i > x}/n`` has generalized inverse
    ``Q(u) = a_k`` on ``[(k-1)/n, k/n)``.
    """
    arr = np.abs(np.asarray(samples, dtype=float).ravel())
    if arr.size == 0:
        raise ValueError("samples must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    qs = np.sort(arr)[::-1]
    us = np.linspace(0.0, 1.0, arr.size + 1)
    return QuantileProfile(us=us, qs=qs, kind="step")


def constant_profile(level: float) -> QuantileProfile:
    return QuantileProfile(us=np.array([0.0, 1.0]), qs=np.array([float(level)]), kind="step")


def linear_profile(us: Sequence[float], qs: Sequence[float]) -> QuantileProfile:
    return QuantileProfile(us=np.asarray(us, float), qs=np.asarray(qs, float), kind="linear")


def g_of(profile: QuantileProfile, y) -> float:
    """G(y): inverse of the running integral of Q (see QuantileProfile.g_at)."""
    return profile.g_at(y)


@dataclass(frozen=True)
class ConditionReport:
    value: float
    verdict: str
    partial_sums: tuple[float, ...]
    cutoffs: tuple[int, ...]
    detail: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        ps = tuple(float(v) for v in self.partial_sums)
        if any(b < a - 1e-12 * max(1.0, abs(a)) for a, b in zip(ps, ps[1:])):
            raise ValueError("partial sums must be nondecreasing")
        object.__setattr__(self, "partial_sums", ps)
        object.__setattr__(self, "cutoffs", tuple(int(c) for c in self.cutoffs))

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "verdict": self.verdict,
                "partial_sums": list(self.partial_sums),
                "cutoffs": list(self.cutoffs),
                "detail": self.detail,
            }
        )


def classify_partial_sums(partials: Sequence[float]) -> str:
    """Tail-dominance verdict from partial sums at doubling cutoffs.

    DIVERGENT when the last decade (three doublings) each grew the sum by
    more than 1%; FINITE when the increments decay geometrically and the
    extrapolated tail is below 1e-6 of the total; INCONCLUSIVE otherwise.
    """
    v = [float(x) for x in partials]
    if not v:
        return INCONCLUSIVE
    total = v[-1]
    if total == 0.0:
        return FINITE
    if len(v) < 2:
        return INCONCLUSIVE
    increments = [b - a for a, b in zip(v, v[1:])]
    growth = [inc / max(prev, 1e-300) for inc, prev in zip(increments, v[:-1])]
    window = growth[-3:] if len(growth) >= 3 else growth
    if all(g > _GROWTH_PER_DOUBLING for g in window):
        return DIVERGENT
    d_last = increments[-1]
    if d_last <= 0.0:
        return FINITE
    d_prev = increments[-2] if len(increments) >= 2 else d_last
    if d_prev <= 0.0:
        return INCONCLUSIVE
    ratio = d_last / d_prev
    if ratio < 1.0 and d_last * ratio / (1.0 - ratio) < _TAIL_FRACTION * total:
        return FINITE
    return INCONCLUSIVE


def _doubling_cutoffs(cutoff: int) -> list[int]:
    cuts = []
    c = 1
    while c < cutoff:
        cuts.append(c)
        c *= 2
    cuts.append(cutoff)
    return cuts


def _box_min_sum(axis_values: list[np.ndarray], f_of_level: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sum over the index box of F(min_i v_i(k_i))`` via level counting.

    The number of boxes whose coordinate-wise minimum is at least ``t``
    factors as a product of per-axis counts, so the sum collapses to a sum
    over the distinct values taken by the sequences.
    """
    levels = np.unique(np.concatenate(axis_values))
    n_ge = np.ones_like(levels, dtype=float)
    n_gt = np.ones_like(levels, dtype=float)
    for av in axis_values:
        s = np.sort(av)
        n_ge *= av.size - np.searchsorted(s, levels, side="left")
        n_gt *= av.size - np.searchsorted(s, levels, side="right")
    weights = n_ge - n_gt
    mask = (weights > 0) & (levels > 0)
    if not np.any(mask):
        return 0.0
    return float(np.sum(f_of_level(levels[mask]) * weights[mask]))


def clt_condition(
    gammas: Sequence[Sequence[float]], profile: QuantileProfile, cutoff: int
) -> ConditionReport:
    """Box-sum condition ``sum_{k in [0,cutoff]^d} F(min_i gamma_i(k_i))``.

    ``F(c) = int_0^c Q(G(u)) du`` from the profile.  Each ``gamma_i`` must be
    nonincreasing and nonnegative; sequences shorter than the cutoff are
    extended by their tail treated as zero (exactly: absent entries
    contribute nothing beyond the recorded range).
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    axes = [np.asarray(g, dtype=float) for g in gammas]
    if not axes:
        raise ValueError("need at least one gamma sequence")
    for g in axes:
        if g.ndim != 1 or g.size == 0:
            raise ValueError("each gamma must be a nonempty sequence")
        if np.any(g < 0):
            raise ValueError("gamma values must be nonnegative")
        if np.any(np.diff(g) > 1e-12 * max(1.0, float(g.max()))):
            raise ValueError("gamma sequences must be nonincreasing")

    def f_of_level(levels: np.ndarray) -> np.ndarray:
        return profile.integral_composite(levels)

    def padded(g: np.ndarray, upto: int) -> np.ndarray:
        if g.size >= upto + 1:
            return g[: upto + 1]
        return np.concatenate([g, np.zeros(upto + 1 - g.size)])

    cutoffs = _doubling_cutoffs(cutoff)
    partials = [
        _box_min_sum([padded(g, c) for g in axes], f_of_level) for c in cutoffs
    ]
    verdict = classify_partial_sums(partials)
    return ConditionReport(
        value=partials[-1], verdict=verdict, partial_sums=partials, cutoffs=cutoffs
    )


def theta_inverse(theta: np.ndarray, y) -> np.ndarray:
    """Generalized inverse of a nonincreasing sequence: ``#{k : theta(k) > y}``.

    The sequence is read as a right-continuous step function on [0, inf);
    past its recorded range it is treated as zero.
    """
    y = np.asarray(y, dtype=float)
    rev = np.sort(theta)  # ascending
    return theta.size - np.searchsorted(rev, y, side="right")


def r_at(profile: QuantileProfile, theta: Sequence[float], d: int, u):
    """Display-form composite ``R(u) = Q(u) * (theta^{-1}(cumulative(u)))^d``.

    Diagnostic companion of :func:`tightness_condition`; the condition's own
    integral route uses the exact layer-cake weight instead (see module
    docstring and the tightness docstring).
    """
    th = np.asarray(theta, dtype=float)
    m = theta_inverse(th, profile.cumulative(u))
    return profile.q_at(u) * m.astype(float) ** d


def tightness_condition(
    theta: Sequence[float], profile: QuantileProfile, d: int, cutoff: int
) -> ConditionReport:
    """Weighted series ``sum_k (k+1)^{d-1} int_0^{theta(k)} Q(G(u)) du``.

    Evaluated twice from the same stored profile by independent routes:

    * term-by-term, each integral via the exact change of variables;
    * as a single integral in the ``u``-variable: by Fubini the series
      equals ``int_0^1 Q^2(s) w(s) ds`` where
      ``w(s) = sum_{k <= cutoff, theta(k) > cumulative(s)} (k+1)^{d-1}``,
      a step function with breakpoints ``G(theta(k))``; the integral is
      assembled segment-by-segment from the stored ``Q^2`` primitives.

    The two routes must agree to near machine precision; disagreement above
    a small tolerance raises, per the module contract.  The report's
    ``detail`` carries both numbers.
    """
    th = np.asarray(theta, dtype=float)
    if th.ndim != 1 or th.size == 0:
        raise ValueError("theta must be a nonempty sequence")
    if np.any(th < 0):
        raise ValueError("theta values must be nonnegative")
    if np.any(np.diff(th) > 1e-12 * max(1.0, float(th.max()))):
        raise ValueError("theta must be nonincreasing")
    if d < 1:
        raise ValueError("d must be >= 1")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")

    kmax = min(cutoff, th.size - 1)
    ks = np.arange(kmax + 1)
    weights = (ks + 1.0) ** (d - 1)
    terms = weights * profile.integral_composite(th[: kmax + 1])

    cutoffs = _doubling_cutoffs(cutoff)
    partials = [float(terms[: min(c, kmax) + 1].sum()) for c in cutoffs]
    series_value = partials[-1]

    integral_value = _tightness_integral_form(th[: kmax + 1], weights, profile)

    scale = max(series_value, integral_value, 1e-300)
    if abs(series_value - integral_value) > _FORM_AGREEMENT_RTOL * scale and scale > 1e-12:
        raise ArithmeticError(
            f"series ({series_value!r}) and integral ({integral_value!r}) "
            "routes disagree; profile arithmetic is inconsistent"
        )

    verdict = classify_partial_sums(partials)
    return ConditionReport(
        value=series_value,
        verdict=verdict,
        partial_sums=partials,
        cutoffs=cutoffs,
        detail={
            "series_form": series_value,
            "integral_form": integral_value,
            "agreement": abs(series_value - integral_value) / scale,
        },
    )


def _tightness_integral_form(
    th: np.ndarray, weights: np.ndarray, profile: QuantileProfile
) -> float:
    """Segment-decomposition route: ``int_0^1 Q^2(s) w(s) ds``."""
    breaks = profile.g_at(np.minimum(th, profile.total))
    order = np.argsort(breaks)
    sorted_breaks = breaks[order]
    sorted_weights = weights[order]
    # Weight on a segment ending at b is the total weight of indices whose
    # breakpoint is >= b; suffix sums give it for all segments at once.
    suffix = np.concatenate([np.cumsum(sorted_weights[::-1])[::-1], [0.0]])
    edges = np.concatenate([[0.0], sorted_breaks])
    primitives = profile.integral_q_squared(np.clip(edges, 0.0, 1.0))
    # seg[j] = int over (edges[j], edges[j+1]) of Q^2; on that open segment
    # the indices k with G(theta(k)) > s are exactly sorted positions >= j.
    seg = np.diff(primitives)
    return float(np.sum(seg * suffix[: seg.size]))
