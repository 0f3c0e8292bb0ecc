"""Statistical verification of the limit statements.

Four checks share a report format: the normal limit of normalized box sums,
the finite-dimensional Brownian-sheet covariances of the interpolated
process, the tail bound behind tightness, and the stability of the
Rosenthal-type moment ratio.

Monte Carlo gates use the Kolmogorov-Smirnov statistic against the target
normal law with the asymptotic 1.36/sqrt(reps) quantile inflated by 1.5 to
absorb the finite-n bias of the sampled sums; covariance and tail gates use
replicate standard errors.  The Rosenthal check is constant-free: the
unknown constant cancels when asking whether the left/right ratio grows
with the box, so only the sign of the fitted log-log slope is asserted.

The Rosenthal engine needs conditional expectations given the first-step
grid algebra.  For scalar expanding maps a_1, a_2 that operator averages g
over the q = a_1 a_2 shifts x + j/q, so node orbits are kept on the exact
lattice Z / (q 2^B): multiplication by a_i and the shift by j/q are both
integer operations mod q 2^B, and B budgets 53 float bits plus one bit per
application of each even map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import t as student_t

from ._rng import digest_of, random_int_below, replicate_rng
from .field_models import (
    LinearFieldSpec,
    TorusFieldSpec,
    exact_sigma2_torus,
    sample_linear,
    sample_torus,
)
from .parallel import map_replicates
from .sums import SumProcess

__all__ = [
    "VerificationReport",
    "normal_cdf",
    "ks_statistic",
    "ks_threshold",
    "normalized_sums",
    "fdd_values",
    "clt_check",
    "fclt_fdd_check",
    "tightness_tail",
    "rosenthal_ratio",
    "DEFAULT_T_GRID",
]

KS_SLACK = 1.5
DEFAULT_T_GRID = tuple(
    (a, b) for a in (0.25, 0.5, 0.75) for b in (0.25, 0.5, 0.75)
)


# -- report -----------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationReport:
    experiment: str
    model: str
    seed: int
    statistics: dict
    thresholds: dict
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model,
            "seed": self.seed,
            "statistics": self.statistics,
            "thresholds": self.thresholds,
            "passed": self.passed,
            "detail": self.detail,
        }


# -- distribution helpers -------------------------------------------------------------


def normal_cdf(x: float, variance: float) -> float:
    if variance <= 0:
        return 1.0 if x >= 0 else 0.0
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0 * variance)))


def ks_statistic(sample: np.ndarray, cdf) -> float:
    """sup |F_hat - F| for a callable target cdf."""
    xs = np.sort(np.asarray(sample, dtype=float))
    n = xs.size
    if n == 0:
        raise ValueError("empty sample")
    fx = np.array([cdf(v) for v in xs])
    upper = np.max(np.arange(1, n + 1) / n - fx)
    lower = np.max(fx - np.arange(0, n) / n)
    return float(max(upper, lower))


def ks_threshold(reps: int, slack: float = KS_SLACK) -> float:
    return slack * 1.36 / math.sqrt(reps)


# -- shared sampling ------------------------------------------------------------------


def _sample_one(model, n, seed, rep):
    if isinstance(model, TorusFieldSpec):
        return sample_torus(model, n, seed, rep)
    if isinstance(model, LinearFieldSpec):
        return sample_linear(model, n, seed, rep)
    raise TypeError("unsupported model type")


def _sum_one(model, n, seed, rep) -> float:
    grid = _sample_one(model, n, seed, rep)
    return float(grid.values.sum() / math.sqrt(grid.values.size))


def _fdd_one(model, n, ts, seed, rep) -> np.ndarray:
    grid = _sample_one(model, n, seed, rep)
    sp = SumProcess(grid.values)
    return np.array([sp.w_at(t) for t in ts])


def _max_one(model, n, seed, rep) -> float:
    grid = _sample_one(model, n, seed, rep)
    return SumProcess(grid.values).max_rect()


def normalized_sums(model, n, reps: int, seed: int, workers=None) -> np.ndarray:
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    return np.array(map_replicates(_sum_one, reps, workers, (model, n, seed)))


def fdd_values(
    model, n, ts: Sequence, reps: int, seed: int, workers=None
) -> np.ndarray:
    """Matrix (reps, len(ts)) of the interpolated process at the given t."""
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    ts = [tuple(t) for t in ts]
    rows = map_replicates(_fdd_one, reps, workers, (model, n, ts, seed))
    return np.stack(rows, axis=0)


def _model_sigma2(model) -> float:
    if isinstance(model, TorusFieldSpec):
        return exact_sigma2_torus(model)
    if isinstance(model, LinearFieldSpec) and model.kappa == 0:
        # constant field: the covariance series is identically zero
        return 0.0
    raise ValueError(
        "no exact variance for this model: pass sigma2_value explicitly"
    )


# -- normal limit ---------------------------------------------------------------------


def clt_check(
    model,
    n,
    reps: int,
    seed: int,
    sigma2_value: float | None = None,
    workers=None,
    sums: np.ndarray | None = None,
) -> VerificationReport:
    """KS gate for S_n / sqrt|n| against N(0, sigma2).

    A precomputed vector of normalized sums can be passed to share one
    sampling batch between checks.  Nonpositive sigma2 switches to the
    degeneracy gate: all mass must sit at 0.
    """
    if sums is None:
        sums = normalized_sums(model, n, reps, seed, workers)
    else:
        sums = np.asarray(sums, dtype=float)
        if sums.size != reps:
            raise ValueError("sums length must equal reps")
    var = _model_sigma2(model) if sigma2_value is None else float(sigma2_value)
    stats = {
        "mean": {"value": float(sums.mean()), "stderr": float(sums.std(ddof=1) / math.sqrt(reps)), "reps": reps},
        "variance": {"value": float(sums.var(ddof=1)), "stderr": float(sums.var(ddof=1) * math.sqrt(2.0 / (reps - 1))), "reps": reps},
    }
    if var <= 1e-12:
        peak = float(np.max(np.abs(sums)))
        stats["max_abs"] = {"value": peak, "stderr": 0.0, "reps": reps}
        passed = peak <= 1e-8
        return VerificationReport(
            "clt",
            _digest(model),
            seed,
            stats,
            {"max_abs": 1e-8},
            passed,
            {"sigma2": var, "degenerate": True, "n": list(n)},
        )
    ks = ks_statistic(sums, lambda x: normal_cdf(x, var))
    bound = ks_threshold(reps)
    stats["ks"] = {"value": ks, "stderr": 0.0, "reps": reps}
    return VerificationReport(
        "clt",
        _digest(model),
        seed,
        stats,
        {"ks": bound},
        ks <= bound,
        {"sigma2": var, "degenerate": False, "n": list(n)},
    )


def _digest(model) -> str:
    return model.digest()


# -- finite-dimensional laws of the interpolated process ------------------------------


def fclt_fdd_check(
    model,
    n,
    reps: int,
    seed: int,
    ts: Sequence = DEFAULT_T_GRID,
    sigma2_value: float | None = None,
    workers=None,
    values: np.ndarray | None = None,
) -> VerificationReport:
    """Covariances of W_n on a t-grid against sigma2 prod min(s_i, t_i).

    The pass gate is the covariance one: every pair must match its target
    within three standard errors.  Marginal laws are also gated against
    their normal targets, with a KS budget of ks_threshold(reps) for
    sampling noise plus 1.36/sqrt(m_t) for the distance of the sampled law
    to its limit, where m_t is the number of cells in the box n*t; a corner
    of the grid holds far fewer cells than the full box, so its law sits
    further from normal at the same n.
    """
    ts = [tuple(float(v) for v in t) for t in ts]
    if values is None:
        values = fdd_values(model, n, ts, reps, seed, workers)
    else:
        values = np.asarray(values, dtype=float)
        if values.shape != (reps, len(ts)):
            raise ValueError("values must have shape (reps, len(ts))")
    var = _model_sigma2(model) if sigma2_value is None else float(sigma2_value)
    rows = []
    worst = 0.0
    cov_ok = True
    for i, s in enumerate(ts):
        for j in range(i, len(ts)):
            t = ts[j]
            prods = values[:, i] * values[:, j]
            est = float(prods.mean())
            se = float(prods.std(ddof=1) / math.sqrt(reps))
            target = var * math.prod(min(a, b) for a, b in zip(s, t))
            gap = abs(est - target)
            if se > 0:
                worst = max(worst, gap / se)
            cov_ok = cov_ok and gap <= 3 * se
            rows.append(
                {
                    "s": list(s),
                    "t": list(t),
                    "empirical_cov": est,
                    "target_cov": target,
                    "stderr": se,
                }
            )
    noise = ks_threshold(reps)
    marg = {}
    budgets = {}
    ks_ok = True
    worst_ratio = 0.0
    for i, t in enumerate(ts):
        vt = var * math.prod(t)
        ks = ks_statistic(values[:, i], lambda x: normal_cdf(x, vt))
        cells = math.prod(max(1, math.floor(ni * ti)) for ni, ti in zip(n, t))
        budget = noise + 1.36 / math.sqrt(cells)
        key = str(tuple(t))
        marg[key] = ks
        budgets[key] = budget
        ks_ok = ks_ok and ks <= budget
        worst_ratio = max(worst_ratio, ks / budget)
    stats = {
        "worst_cov_gap_over_se": {"value": worst, "stderr": 0.0, "reps": reps},
        "worst_marginal_ks_over_budget": {
            "value": worst_ratio,
            "stderr": 0.0,
            "reps": reps,
        },
    }
    return VerificationReport(
        "fclt",
        _digest(model),
        seed,
        stats,
        {"cov_gap_over_se": 3.0, "marginal_ks_over_budget": 1.0},
        cov_ok and ks_ok,
        {
            "sigma2": var,
            "n": list(n),
            "pairs": rows,
            "marginal_ks": marg,
            "marginal_ks_budget": budgets,
        },
    )


# -- tail bound behind tightness --------------------------------------------------------


def tightness_tail(
    model,
    lambdas: Sequence[float],
    n_list: Sequence,
    reps: int,
    seed: int,
    workers=None,
) -> VerificationReport:
    """Empirical lambda^2 P(max |S_k| / sqrt|n| > lambda) curves.

    The second-moment bound makes the curve nonincreasing in lambda up to
    noise; the gate allows two binomial standard errors.  The same curve is
    tracked across box sizes and its largest lambda entry must not grow from
    the smallest box to the largest, again within two standard errors.
    """
    lambdas = [float(v) for v in lambdas]
    if len(lambdas) < 3 or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("need at least 3 strictly increasing lambdas")
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    curves: dict[str, list] = {}
    mono_ok = True
    for box_index, n in enumerate(n_list):
        maxima = np.array(
            map_replicates(_max_one, reps, workers, (model, tuple(n), seed + box_index))
        )
        curve = []
        for lam in lambdas:
            phat = float(np.mean(maxima > lam))
            se = math.sqrt(phat * (1 - phat) / reps)
            curve.append((lam, lam * lam * phat, lam * lam * se))
        curves[str(tuple(n))] = [list(row) for row in curve]
        for (l0, v0, e0), (l1, v1, e1) in zip(curve, curve[1:]):
            if v1 > v0 + 2 * (e0 + e1):
                mono_ok = False
    trend_ok = True
    keys = [str(tuple(n)) for n in n_list]
    if len(keys) > 1:
        first, last = curves[keys[0]][-1], curves[keys[-1]][-1]
        trend_ok = last[1] <= first[1] + 2 * (first[2] + last[2])
    stats = {
        "lambda2_tail_at_largest": {
            "value": curves[keys[-1]][-1][1],
            "stderr": curves[keys[-1]][-1][2],
            "reps": reps,
        }
    }
    return VerificationReport(
        "tightness",
        _digest(model),
        seed,
        stats,
        {"monotone_slack_se": 2.0, "trend_slack_se": 2.0},
        mono_ok and trend_ok,
        {"lambdas": lambdas, "curves": curves, "monotone_ok": mono_ok, "trend_ok": trend_ok},
    )


# -- Rosenthal ratio ------------------------------------------------------------------


def _scalar_pair(spec: TorusFieldSpec) -> tuple[int, int]:
    if spec.d != 2 or spec.dim != 1:
        raise ValueError("the ratio engine needs two scalar maps")
    a1 = spec.maps[0].matrix[0][0]
    a2 = spec.maps[1].matrix[0][0]
    if a1 < 2 or a2 < 2:
        raise ValueError("the ratio engine needs positive expanding maps")
    return a1, a2


def _two_adic_bits(a: int) -> int:
    bits = 0
    while a % 2 == 0:
        a //= 2
        bits += 1
    return bits


def _rosenthal_node(spec, n1, n2, p, seed, bits, rep):
    """One node: conditional squares, the corner max field, and |X|^p.

    Returns (cond^{p/2} over the k grid, running max of |S_k|, |f(x)|^p).
    """
    a1, a2 = _scalar_pair(spec)
    q = a1 * a2
    modulus = q << bits
    tag = digest_of({"op": "rosenthal", "model": spec.digest(), "bits": bits})
    rng = replicate_rng(seed, rep, tag)
    start = random_int_below(rng, modulus)
    f = spec.observable
    inv_mod = 1.0 / modulus
    acc_sq = None
    maxgrid = None
    x_abs_p = 0.0
    for j in range(q):
        num = (start + j * (modulus // q)) % modulus
        pos = np.empty((n1, n2))
        row = num
        for i1 in range(n1):
            t = row
            for i2 in range(n2):
                pos[i1, i2] = t * inv_mod
                t = t * a2 % modulus
            row = row * a1 % modulus
        vals = f.evaluate_real(pos)
        prefix = np.pad(np.cumsum(np.cumsum(vals, axis=0), axis=1), ((1, 0), (1, 0)))
        sq = prefix[1:, 1:] ** 2
        acc_sq = sq if acc_sq is None else acc_sq + sq
        if j == 0:
            interior = np.abs(prefix[1:, 1:])
            maxgrid = np.maximum.accumulate(
                np.maximum.accumulate(interior, axis=0), axis=1
            )
            x_abs_p = float(abs(vals[0, 0])) ** p
    cond = acc_sq / q
    return cond ** (p / 2.0), maxgrid, x_abs_p


def rosenthal_ratio(
    spec: TorusFieldSpec,
    p: float,
    n_list: Sequence,
    reps: int = 768,
    seed: int = 0,
    groups: int = 8,
    workers=None,
) -> VerificationReport:
    """Ratio of the two sides of the maximal moment inequality across boxes.

    lhs(n) = ||max_{k<=n} |S_k|||_p, rhs(n) = |n|^{1/p} (||X||_p +
    [sum_{k<=n} ||E_1(S_k^2)||_{p/2}^delta / prod k_i^{1+2 delta/p}]^{1/(2
    delta)}) with delta = min(1/2, 1/(p-2)).  Both sides share one set of
    exact-orbit nodes; standard errors come from node groups.  The gate is
    one-sided: the weighted log-log slope of the ratio across boxes must not
    be significantly positive at the 95% level.
    """
    if not 2.0 < p <= 4.0:
        raise ValueError("p must lie in (2, 4]")
    a1, a2 = _scalar_pair(spec)
    n_list = [tuple(int(v) for v in n) for n in n_list]
    if len(n_list) < 3:
        raise ValueError("need at least 3 box sizes for a slope")
    if any(v < 1 for n in n_list for v in n):
        raise ValueError("box sizes must be positive")
    if len({n[0] * n[1] for n in n_list}) != len(n_list):
        raise ValueError("box areas must be distinct")
    if reps < 2 * groups or groups < 3:
        raise ValueError("need at least 3 groups and 2 nodes per group")
    n1 = max(n[0] for n in n_list)
    n2 = max(n[1] for n in n_list)
    bits = 64 + n1 * _two_adic_bits(a1) + n2 * _two_adic_bits(a2)
    delta = min(0.5, 1.0 / (p - 2.0))
    rows = map_replicates(
        _rosenthal_node, reps, workers, (spec, n1, n2, p, seed, bits)
    )
    k1 = np.arange(1, n1 + 1, dtype=float)
    k2 = np.arange(1, n2 + 1, dtype=float)
    weight = np.outer(k1 ** -(1 + 2 * delta / p), k2 ** -(1 + 2 * delta / p))
    bounds = np.linspace(0, reps, groups + 1).astype(int)
    ratios = {n: [] for n in n_list}
    for g in range(groups):
        chunk = rows[bounds[g] : bounds[g + 1]]
        count = len(chunk)
        cond_pow = sum(r[0] for r in chunk) / count
        norm_k = cond_pow ** (2.0 / p)
        summand = norm_k**delta * weight
        table = np.pad(
            np.cumsum(np.cumsum(summand, axis=0), axis=1), ((1, 0), (1, 0))
        )
        x_norm = (sum(r[2] for r in chunk) / count) ** (1.0 / p)
        for n in n_list:
            lhs = (
                sum(float(r[1][n[0] - 1, n[1] - 1]) ** p for r in chunk) / count
            ) ** (1.0 / p)
            rhs = (n[0] * n[1]) ** (1.0 / p) * (
                x_norm + float(table[n[0], n[1]]) ** (1.0 / (2 * delta))
            )
            ratios[n].append(lhs / rhs)
    per_n = {}
    xs, ys, ws = [], [], []
    for n in n_list:
        vals = np.array(ratios[n])
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError("degenerate model: ratio is not positive")
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(groups))
        per_n[str(n)] = {"ratio": est, "stderr": se}
        xs.append(math.log(n[0] * n[1]))
        ys.append(math.log(est))
        ws.append(1.0 / max(se / est, 1e-12) ** 2)
    xs, ys, ws = np.array(xs), np.array(ys), np.array(ws)
    xbar = float(np.sum(ws * xs) / np.sum(ws))
    ybar = float(np.sum(ws * ys) / np.sum(ws))
    sxx = float(np.sum(ws * (xs - xbar) ** 2))
    slope = float(np.sum(ws * (xs - xbar) * (ys - ybar)) / sxx)
    se_slope = math.sqrt(1.0 / sxx)
    df = len(n_list) - 2
    tcrit = float(student_t.ppf(0.975, df))
    passed = slope <= tcrit * se_slope
    stats = {
        "log_slope": {"value": slope, "stderr": se_slope, "reps": reps},
    }
    return VerificationReport(
        "rosenthal",
        spec.digest(),
        seed,
        stats,
        {"slope_upper_t": tcrit},
        passed,
        {
            "p": p,
            "delta": delta,
            "bits": bits,
            "groups": groups,
            "ratios": per_n,
            "n_list": [list(n) for n in n_list],
        },
    )
