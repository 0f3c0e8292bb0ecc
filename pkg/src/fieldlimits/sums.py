"""Box partial sums, their continuous interpolation, and variance estimators.

SumProcess wraps one sampled panel with an inclusive zero-padded prefix
table, so every anchored box sum, every rectangle sum, and the interpolated
process are O(2^d) table lookups.  The interpolation weights each 1-based
cell c by prod_i clip(n_i t_i - (c_i - 1), 0, 1): interior cells get weight
1, the top fractional layer gets the leftover mass, and at integer n_i t_i
the value matches the plain corner sum exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .field_models import (
    LinearFieldSpec,
    TorusFieldSpec,
    exact_sigma2_torus,
    sample_linear_batch,
    sample_torus_batch,
)

__all__ = [
    "SumProcess",
    "Sigma2Estimate",
    "sigma2",
    "COVSERIES",
    "VARSUMS",
    "EXACT",
]

COVSERIES, VARSUMS, EXACT = "COVSERIES", "VARSUMS", "EXACT"


class SumProcess:
    """Prefix-sum view of one real panel."""

    def __init__(self, values) -> None:
        arr = np.asarray(values, dtype=float)
        if arr.ndim < 1:
            raise ValueError("panel must have at least one axis")
        if arr.size == 0:
            raise ValueError("panel must be nonempty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("panel values must be finite")
        self.values = arr
        self.shape = arr.shape
        self.d = arr.ndim
        prefix = arr
        for axis in range(self.d):
            prefix = np.cumsum(prefix, axis=axis)
        pad = [(1, 0)] * self.d
        self.prefix = np.pad(prefix, pad)
        self.norm = math.sqrt(arr.size)

    def corner(self, k) -> float:
        """S_k: sum of the first k_i cells along each axis."""
        k = self._check_corner(k)
        return float(self.prefix[k])

    def _check_corner(self, k) -> tuple[int, ...]:
        k = tuple(int(v) for v in k)
        if len(k) != self.d:
            raise ValueError("corner needs one coordinate per axis")
        if any(v < 0 or v > n for v, n in zip(k, self.shape)):
            raise ValueError("corner out of range")
        return k

    def rect_sum(self, lo, hi) -> float:
        """Sum over cells with lo_i < c_i <= hi_i (1-based corners)."""
        lo = self._check_corner(lo)
        hi = self._check_corner(hi)
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("need lo <= hi")
        total = 0.0
        for pick in itertools.product(*[(0, 1)] * self.d):
            corner = tuple(h if p else l for p, l, h in zip(pick, lo, hi))
            sign = (-1) ** (self.d - sum(pick))
            total += sign * self.prefix[corner]
        return float(total)

    def w_at(self, t) -> float:
        """Interpolated normalized sum at t in [0,1]^d."""
        t = tuple(float(v) for v in t)
        if len(t) != self.d:
            raise ValueError("t needs one coordinate per axis")
        if any(v < 0 or v > 1 for v in t):
            raise ValueError("t must lie in the unit cube")
        ks, fracs = [], []
        for v, n in zip(t, self.shape):
            scaled = v * n
            k = min(int(math.floor(scaled)), n)
            frac = scaled - k
            if k == n:
                frac = 0.0
            ks.append(k)
            fracs.append(frac)
        total = 0.0
        for pick in itertools.product(*[(0, 1)] * self.d):
            weight = 1.0
            for p, fr in zip(pick, fracs):
                if p:
                    weight *= fr
            if weight == 0.0:
                continue
            # cells in the box with the picked axes pinned to layer k+1:
            # a mixed difference of the prefix table over those axes
            pinned = [i for i in range(self.d) if pick[i]]
            sub = 0.0
            for choose in itertools.product(*[(0, 1)] * len(pinned)):
                corner = list(ks)
                sign = 1
                for ax, up in zip(pinned, choose):
                    if up:
                        corner[ax] = ks[ax] + 1
                    else:
                        sign = -sign
                sub += sign * self.prefix[tuple(corner)]
            total += weight * sub
        return total / self.norm

    def max_rect(self, normalized: bool = True) -> float:
        """Largest |S_k| over all anchored corners k >= 1, one table scan."""
        interior = self.prefix[(slice(1, None),) * self.d]
        peak = float(np.max(np.abs(interior)))
        return peak / self.norm if normalized else peak


# -- variance of normalized sums ---------------------------------------------------


@dataclass(frozen=True)
class Sigma2Estimate:
    value: float
    stderr: float
    method: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if self.value < -3 * self.stderr:
            raise ValueError(
                "variance estimate below -3 stderr: the estimator is broken"
            )


def _sample_panels(model, n, reps, seed, workers):
    if isinstance(model, TorusFieldSpec):
        return sample_torus_batch(model, n, reps, seed, workers=workers)
    if isinstance(model, LinearFieldSpec):
        return sample_linear_batch(model, n, reps, seed, workers=workers)
    raise TypeError("unsupported model type")


def _halfplane_shell(level: int) -> list[tuple[int, int]]:
    """Lags with max(|a|,|b|) == level, one of each +-k pair."""
    if level == 0:
        return [(0, 0)]
    out = []
    for a in range(0, level + 1):
        for b in range(-level, level + 1):
            if max(a, abs(b)) != level:
                continue
            if a > 0 or b > 0:
                out.append((a, b))
    return out


def _lag_cov_rows(panels: np.ndarray, a: int, b: int) -> np.ndarray:
    """Per-replicate spatial mean of X_i X_{i+(a,b)}; a >= 0."""
    n1, n2 = panels.shape[1], panels.shape[2]
    if a >= n1 or abs(b) >= n2:
        raise ValueError("lag exceeds the panel")
    if b >= 0:
        left = panels[:, : n1 - a, : n2 - b]
        right = panels[:, a:, b:]
    else:
        left = panels[:, : n1 - a, -b:]
        right = panels[:, a:, : n2 + b]
    return (left * right).reshape(panels.shape[0], -1).mean(axis=1)


def sigma2(
    model,
    method: str = COVSERIES,
    n: tuple[int, int] = (64, 64),
    reps: int = 200,
    seed: int = 0,
    workers: int | None = None,
    max_range: int = 8,
    shell_tol: float = 0.01,
) -> Sigma2Estimate:
    """Limiting variance of S_n / sqrt|n| for a centered model.

    COVSERIES sums empirical covariances shell by shell and stops when the
    newest shell contributes less than shell_tol of the running total
    (reported, with the shell breakdown, in detail).  VARSUMS is the sample
    variance of the normalized box sum.  EXACT is the coefficient-matching
    route and exists for torus models only.
    """
    if method == EXACT:
        if not isinstance(model, TorusFieldSpec):
            raise ValueError("EXACT variance needs a torus model")
        return Sigma2Estimate(exact_sigma2_torus(model), 0.0, EXACT)
    if method not in (COVSERIES, VARSUMS):
        raise ValueError(f"unknown method: {method!r}")
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    panels = _sample_panels(model, n, reps, seed, workers)
    if method == VARSUMS:
        sums = panels.reshape(reps, -1).sum(axis=1) / math.sqrt(
            panels[0].size
        )
        value = float(np.var(sums, ddof=1))
        stderr = value * math.sqrt(2.0 / (reps - 1))
        return Sigma2Estimate(
            value, stderr, VARSUMS, {"n": list(n), "reps": reps}
        )
    if not 1 <= max_range < min(n):
        raise ValueError("max_range must be >= 1 and smaller than the panel")
    rows = _lag_cov_rows(panels, 0, 0)
    shells = [(0, float(rows.mean()))]
    per_rep = rows.copy()
    converged = False
    for level in range(1, max_range + 1):
        shell_rows = np.zeros(reps)
        for a, b in _halfplane_shell(level):
            shell_rows += 2.0 * _lag_cov_rows(panels, a, b)
        contribution = float(shell_rows.mean())
        shells.append((level, contribution))
        per_rep += shell_rows
        total = abs(float(per_rep.mean()))
        if abs(contribution) < shell_tol * max(total, 1e-300):
            converged = True
            break
    value = float(per_rep.mean())
    stderr = float(per_rep.std(ddof=1) / math.sqrt(reps))
    detail = {
        "shells": [[lvl, c] for lvl, c in shells],
        "converged": converged,
        "n": list(n),
        "reps": reps,
        "assumes_centered": True,
    }
    return Sigma2Estimate(value, stderr, COVSERIES, detail)
