"""Dependence coefficients of the field models: gamma, theta, tau.

All three coefficients are L1 norms of conditional expectations at given
lags.  For torus models the conditional expectation is available exactly
through the transfer operators, so gamma and theta have exact (or
quadrature-certified) routes.  For linear fields the coefficients are
estimated by the coupling construction: the innovations inside the
conditioning quadrant are shared while the rest are replaced by fresh
copies, and the inner average over fresh draws approximates the conditional
expectation.  The inner sample size is part of the estimand by convention;
standard errors come from outer replicates only.

The tau engine computes all lags (a, b) up to a corner in one pass per
replicate: with suffix sums ``W(a,b) = sum_{i>=a, j>=b} a_{ij} e_{ij}``
the coupled sum for every lag is ``W_shared(a,b) + total_fresh -
W_fresh(a,b)``, so one pair of cumulative-sum sweeps serves the whole grid.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import digest_of, replicate_rng
from .field_models import LinearFieldSpec, TorusFieldSpec
from .parallel import map_replicates
from .transfer import (
    FourierObservable,
    _matmul_int,
    _midpoint_grid,
    k_power_l1,
    perron_pointwise,
)

__all__ = [
    "DependenceProfile",
    "ThetaEstimate",
    "estimate_tau_linear",
    "tau_grid",
    "lambda_bound",
    "default_k_const",
    "estimate_theta",
    "gamma_profile",
    "theta_profile",
    "theta_product_sup",
]

GAMMA, THETA, TAU = "GAMMA", "THETA", "TAU"


# -- profiles -----------------------------------------------------------------


@dataclass(frozen=True)
class ProfileEntry:
    lag: tuple[int, ...]
    estimate: float
    stderr: float
    bound: float | None
    method: str


@dataclass(frozen=True)
class DependenceProfile:
    """Immutable table of dependence estimates plus a monotone envelope.

    The envelope is the smallest nonincreasing majorant of the level-wise
    maxima, where the level of a lag is its largest coordinate; it is the
    sequence fed to the series conditions, which require monotone input.
    """

    kind: str
    entries: tuple[ProfileEntry, ...]
    meta: dict

    def __post_init__(self) -> None:
        if self.kind not in (GAMMA, THETA, TAU):
            raise ValueError("kind must be GAMMA, THETA or TAU")
        for e in self.entries:
            if e.estimate < 0:
                raise ValueError("estimates must be nonnegative")
            if e.stderr < 0:
                raise ValueError("standard errors must be nonnegative")
        env = self.envelope()
        if any(b > a + 1e-15 for (_, a), (_, b) in zip(env, env[1:])):
            raise AssertionError("envelope failed to be nonincreasing")

    def envelope(self) -> tuple[tuple[int, float], ...]:
        levels = sorted({max(e.lag) for e in self.entries})
        out = []
        running = 0.0
        for lvl in reversed(levels):
            at = max(e.estimate for e in self.entries if max(e.lag) == lvl)
            running = max(running, at)
            out.append((lvl, running))
        return tuple(reversed(out))

    def envelope_values(self) -> list[float]:
        return [v for _, v in self.envelope()]

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "entries": [
                    {
                        "lag": list(e.lag),
                        "estimate": e.estimate,
                        "stderr": e.stderr,
                        "bound": e.bound,
                        "method": e.method,
                    }
                    for e in self.entries
                ],
                "envelope": [[l, v] for l, v in self.envelope()],
                "meta": self.meta,
            },
            sort_keys=True,
        )

    def to_csv(self) -> str:
        width = max(len(e.lag) for e in self.entries)
        buf = io.StringIO()
        cols = [f"lag{i+1}" for i in range(width)]
        buf.write(",".join(cols + ["estimate", "stderr", "bound", "method"]) + "\n")
        for e in self.entries:
            lag = list(e.lag) + [""] * (width - len(e.lag))
            bound = "" if e.bound is None else repr(e.bound)
            row = [str(v) for v in lag] + [
                repr(e.estimate),
                repr(e.stderr),
                bound,
                e.method,
            ]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


# -- tau for linear fields ------------------------------------------------------


def _suffix2(x: np.ndarray) -> np.ndarray:
    """Inclusive 2-D suffix sums padded with a zero row/column at the end.

    ``out[..., a, b] = sum_{i >= a, j >= b} x[..., i, j]`` for a, b up to the
    array size (where the sum is empty and the entry is 0).
    """
    s = np.flip(
        np.cumsum(np.cumsum(np.flip(x, (-2, -1)), axis=-2), axis=-1), (-2, -1)
    )
    pad = [(0, 0)] * (x.ndim - 2) + [(0, 1), (0, 1)]
    return np.pad(s, pad)


def _tau_one(
    spec: LinearFieldSpec,
    a_max: int,
    b_max: int,
    inner: int,
    seed: int,
    h_fn: Callable[[np.ndarray], np.ndarray] | None,
    rep: int,
) -> np.ndarray:
    tag = digest_of({"op": "tau", "spec": spec.seed_digest(), "inner": inner})
    rng = replicate_rng(seed, rep, tag)
    r = spec.radius()
    kernel = spec.kernel()
    h = h_fn if h_fn is not None else spec.h.fn
    shared = spec.innovation.sample(rng, (r + 1, r + 1))
    fresh = spec.innovation.sample(rng, (inner, r + 1, r + 1))
    ws = _suffix2(kernel * shared)
    wf = _suffix2(kernel[None, :, :] * fresh)
    total_fresh = wf[:, 0, 0]
    ai = np.minimum(np.arange(a_max + 1), r + 1)
    bi = np.minimum(np.arange(b_max + 1), r + 1)
    # coupled sum for every lag: shared quadrant + fresh complement
    y_prime = (
        ws[np.ix_(ai, bi)][None, :, :]
        + total_fresh[:, None, None]
        - wf[:, ai[:, None], bi[None, :]]
    )
    diff = h(y_prime) - h(total_fresh)[:, None, None]
    return np.abs(diff.mean(axis=0))


def tau_grid(
    spec: LinearFieldSpec,
    a_max: int,
    b_max: int,
    reps: int,
    seed: int,
    inner: int = 64,
    workers: int | None = None,
    h_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Coupling estimates of tau(a, b) for all 0 <= a <= a_max, 0 <= b <= b_max.

    Returns (estimates, stderrs), each of shape (a_max+1, b_max+1).
    """
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    if a_max < 0 or b_max < 0 or inner < 1:
        raise ValueError("lags must be >= 0 and inner draws >= 1")
    rows = map_replicates(
        _tau_one, reps, workers, (spec, a_max, b_max, inner, seed, h_fn)
    )
    stack = np.stack(rows, axis=0)
    est = stack.mean(axis=0)
    stderr = stack.std(axis=0, ddof=1) / math.sqrt(reps)
    return est, stderr


def estimate_tau_linear(
    spec: LinearFieldSpec,
    a: int,
    b: int,
    reps: int,
    seed: int,
    inner: int = 64,
) -> tuple[float, float]:
    """Coupling Monte Carlo for a single lag pair; see tau_grid."""
    if a < 0 or b < 0:
        raise ValueError("lags must be >= 0")
    est, stderr = tau_grid(spec, a, b, reps, seed, inner)
    return float(est[a, b]), float(stderr[a, b])


# -- lambda bound -----------------------------------------------------------------


def default_k_const(spec: LinearFieldSpec) -> float:
    """The explicit constant max(kappa/(1-sqrt(rho))^2, 2 sup|h| v 1)."""
    return max(
        spec.kappa / (1 - math.sqrt(spec.rho)) ** 2, max(2 * spec.h.bound, 1.0)
    )


def lambda_bound(
    k: int, spec: LinearFieldSpec, k_const: float | None = None
) -> float:
    """``K rho^{k/2} + K E((log|e-e*|)^2 1{log|e-e*| > k log c})`` with
    ``c = rho^{-1/2}``."""
    if k < 0:
        raise ValueError("lag must be >= 0")
    big_k = default_k_const(spec) if k_const is None else float(k_const)
    if big_k <= 0:
        raise ValueError("the constant must be positive")
    threshold = k * math.log(1 / math.sqrt(spec.rho))
    moment, _ = spec.innovation.truncated_log_sq_moment(threshold)
    return big_k * spec.rho ** (k / 2) + big_k * moment


# -- theta ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaEstimate:
    estimate: float
    stderr: float
    method: str


def _composite_matrix(spec: TorusFieldSpec, lag: Sequence[int]):
    m = spec.dim
    out = tuple(tuple(int(i == j) for j in range(m)) for i in range(m))
    for tm, e in zip(spec.maps, lag):
        if e:
            out = _matmul_int(out, tm.matrix_power(int(e)))
    return out


def _clipped_eval(f: FourierObservable, level: float) -> Callable:
    def g(x: np.ndarray) -> np.ndarray:
        return np.clip(f.evaluate_real(x), -level, level)

    return g


def _theta_torus_quadrature(
    spec: TorusFieldSpec, lag: tuple[int, ...], level: float, n_per_dim: int
) -> tuple[float, float]:
    g = _clipped_eval(spec.observable, level)
    composite = _composite_matrix(spec, lag)

    def norm_at(n: int) -> float:
        grid = _midpoint_grid(spec.dim, n)
        pts = grid[:, 0] if spec.dim == 1 else grid
        gx = g(pts)
        kg = perron_pointwise(composite, g, pts) if any(lag) else gx
        return float(np.mean(np.abs(kg - np.mean(gx))))

    value = norm_at(n_per_dim)
    gap = abs(value - norm_at(n_per_dim // 2))
    return value, gap


def estimate_theta(
    model,
    lag,
    level: float,
    reps: int = 0,
    seed: int = 0,
    inner: int = 64,
    n_per_dim: int = 4096,
) -> ThetaEstimate:
    """``theta(lag) = || E(phi_M(X_lag) | past) - E phi_M(X_lag) ||_1`` at
    truncation level M.

    Torus models use the exact operator route (Fourier when the truncation
    is inert because M >= sup|f|, certified quadrature otherwise; reps and
    seed are unused there).  Linear models use the coupling Monte Carlo with
    the truncated observable.
    """
    if level <= 0:
        raise ValueError("truncation level must be positive")
    if isinstance(model, TorusFieldSpec):
        lag = tuple(int(v) for v in (lag if isinstance(lag, (tuple, list)) else (lag,) * model.d))
        if len(lag) != model.d or any(v < 0 for v in lag):
            raise ValueError("lag must have one nonnegative entry per map")
        f = model.observable
        if level >= f.sup_bound() - 1e-12:
            value, gap = k_power_l1(model.maps, f.centered(), lag)
            return ThetaEstimate(value, gap, "torus-exact")
        value, gap = _theta_torus_quadrature(model, lag, level, n_per_dim)
        return ThetaEstimate(value, gap, "torus-quadrature")
    if isinstance(model, LinearFieldSpec):
        pair = tuple(int(v) for v in (lag if isinstance(lag, (tuple, list)) else (lag, lag)))
        if len(pair) != 2 or any(v < 0 for v in pair):
            raise ValueError("linear-field lag must be a nonnegative pair")
        if reps < 2:
            raise ValueError("need at least 2 replicates")
        base = model.h.fn

        def clipped(x: np.ndarray) -> np.ndarray:
            return np.clip(base(x), -level, level)

        est, stderr = tau_grid(
            model, pair[0], pair[1], reps, seed, inner, h_fn=clipped
        )
        return ThetaEstimate(float(est[pair]), float(stderr[pair]), "coupling-mc")
    raise TypeError("theta estimation supports torus and linear field specs")


# -- profile builders ------------------------------------------------------------------


def gamma_profile(
    model,
    axis: int,
    max_lag: int,
    reps: int = 0,
    seed: int = 0,
    inner: int = 64,
) -> DependenceProfile:
    """``gamma(k) = ||E(X_{k e_axis} | past)||_1`` for k = 0..max_lag."""
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    entries = []
    if isinstance(model, TorusFieldSpec):
        if not 0 <= axis < model.d:
            raise ValueError("axis out of range")
        f0 = model.observable.centered()
        for k in range(max_lag + 1):
            lag = tuple(k if i == axis else 0 for i in range(model.d))
            value, gap = k_power_l1(model.maps, f0, lag)
            entries.append(ProfileEntry(lag, value, gap, None, "torus-exact"))
        meta = {"model": model.digest(), "axis": axis}
    elif isinstance(model, LinearFieldSpec):
        if axis not in (0, 1):
            raise ValueError("axis out of range")
        if reps < 2:
            raise ValueError("need at least 2 replicates")
        a_max = max_lag if axis == 0 else 0
        b_max = max_lag if axis == 1 else 0
        est, stderr = tau_grid(model, a_max, b_max, reps, seed, inner)
        for k in range(max_lag + 1):
            pair = (k, 0) if axis == 0 else (0, k)
            entries.append(
                ProfileEntry(
                    pair,
                    float(est[pair]),
                    float(stderr[pair]),
                    lambda_bound(k, model),
                    "coupling-mc",
                )
            )
        meta = {"model": model.digest(), "axis": axis, "reps": reps, "inner": inner}
    else:
        raise TypeError("unsupported model type")
    return DependenceProfile(GAMMA, tuple(entries), meta)


def theta_profile(
    model,
    max_lag: int,
    level: float,
    reps: int = 0,
    seed: int = 0,
    inner: int = 64,
) -> DependenceProfile:
    """Diagonal theta sequence at truncation level M, lags (k, ..., k)."""
    entries = []
    for k in range(max_lag + 1):
        te = estimate_theta(model, k, level, reps, seed, inner)
        d = model.d if isinstance(model, TorusFieldSpec) else 2
        entries.append(
            ProfileEntry((k,) * d, te.estimate, te.stderr, None, te.method)
        )
    meta = {"model": model.digest(), "level": level}
    if not isinstance(model, TorusFieldSpec):
        meta.update({"reps": reps, "inner": inner})
    return DependenceProfile(THETA, tuple(entries), meta)


def theta_product_sup(
    spec: TorusFieldSpec,
    lag_i,
    lag_j,
    level_grid: Sequence[float],
    n_per_dim: int = 2048,
) -> dict:
    """Product-coefficient scan ``max_M M^{-1} ||E_past(phi_M X_i phi_M X_j) - E||_1``.

    The supremum over all M is not computable; the returned value is the max
    over the supplied grid and is flagged as a lower bound.
    """
    if not isinstance(spec, TorusFieldSpec):
        raise TypeError("product coefficient scan supports torus specs only")
    if not level_grid or any(m <= 0 for m in level_grid):
        raise ValueError("level grid must be positive")
    li = tuple(int(v) for v in (lag_i if isinstance(lag_i, (tuple, list)) else (lag_i,) * spec.d))
    lj = tuple(int(v) for v in (lag_j if isinstance(lag_j, (tuple, list)) else (lag_j,) * spec.d))
    meet = tuple(min(a, b) for a, b in zip(li, lj))
    rem_i = tuple(a - m for a, m in zip(li, meet))
    rem_j = tuple(b - m for b, m in zip(lj, meet))
    composite = _composite_matrix(spec, meet)
    mat_i = np.array(_composite_matrix(spec, rem_i), dtype=float)
    mat_j = np.array(_composite_matrix(spec, rem_j), dtype=float)
    f = spec.observable
    per_level = []
    grid = _midpoint_grid(spec.dim, n_per_dim)

    def product_eval(level: float) -> Callable:
        def g(x: np.ndarray) -> np.ndarray:
            pts = np.atleast_1d(np.asarray(x, dtype=float))
            cols = pts[..., None] if spec.dim == 1 else pts
            xi = np.mod(cols @ mat_i.T, 1.0)
            xj = np.mod(cols @ mat_j.T, 1.0)
            fi = np.clip(f.evaluate_real(xi[..., 0] if spec.dim == 1 else xi), -level, level)
            fj = np.clip(f.evaluate_real(xj[..., 0] if spec.dim == 1 else xj), -level, level)
            return fi * fj

        return g

    for level in level_grid:
        g = product_eval(level)
        pts = grid[:, 0] if spec.dim == 1 else grid
        gx = g(pts)
        kg = perron_pointwise(composite, g, pts) if any(meet) else gx
        val = float(np.mean(np.abs(kg - np.mean(gx)))) / level
        per_level.append({"level": float(level), "value": val})
    best = max(e["value"] for e in per_level)
    return {
        "value": best,
        "per_level": per_level,
        "lower_bound": True,
        "lags": [list(li), list(lj)],
    }
