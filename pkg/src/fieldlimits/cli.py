"""Config-driven experiment runner.

One experiment is one JSON config and one output directory.  A run writes
the resolved config, a JSON report, one CSV per figure, and a MANIFEST
binding the results to the config hash, the master seed, and the library
versions.  Nothing in the outputs depends on wall-clock time or on the
worker count, so a rerun of the same config is byte-identical and the
exact-algebra experiments can be compared against checked-in goldens with
``--check``.

Config schema (version 1), JSON object with exactly these fields:

    schema_version  int, must be 1
    kind            simulate | coeffs | conditions | transfer-check |
                    decompose | clt | fclt | tightness | rosenthal
    model           {"family": "torus", "matrices": [[[2]], [[3]]],
                     "observable": "cos1", "completely_commuting": true}
                    or {"family": "linear", "kappa": 1.0, "rho": 0.5,
                        "coeff_rule": "geometric", "law": "uniform",
                        "law_params": [], "observable": "clip"}
    n               box [n1, n2] or list of boxes [[8,8], [16,16], ...]
    reps            positive int (Monte Carlo kinds)
    lambda_grid     increasing positive floats (tightness)
    t_grid          list of [t1, t2] in (0, 1] (fclt; omitted -> 3x3 grid)
    N               positive int: decomposition order, or max lag (coeffs),
                    or envelope length (conditions, default 8)
    p               moment exponent in (2, 4] (rosenthal)
    seed            nonnegative int, required
    out_dir         output directory (the --out flag overrides)
    workers         positive int (the --workers flag overrides)

Fields a kind does not use must be null or absent; unknown fields are
rejected.  Exit status: 0 when every gate passes, 2 when a statistical gate
fails or a golden comparison mismatches, 1 on config or runtime errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .coupling import (
    TAU,
    DependenceProfile,
    ProfileEntry,
    gamma_profile,
    lambda_bound,
    tau_grid,
)
from .field_models import (
    LinearFieldSpec,
    TorusFieldSpec,
    innovation_law,
    sample_linear,
    sample_torus,
)
from .limits import (
    DEFAULT_T_GRID,
    VerificationReport,
    clt_check,
    fclt_fdd_check,
    fdd_values,
    normalized_sums,
    rosenthal_ratio,
    tightness_tail,
)
from .ortho import build_reverse, verify_orthomartingale
from .parallel import map_replicates
from .quantile import constant_profile, tightness_condition
from .sums import SumProcess
from .transfer import check_identities, condmodcont_integral, l1_modulus

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "load_config",
    "run",
    "emit_plotdata",
    "main",
]

SCHEMA_VERSION = 1
KINDS = (
    "simulate",
    "coeffs",
    "conditions",
    "transfer-check",
    "decompose",
    "clt",
    "fclt",
    "tightness",
    "rosenthal",
)
# exact-algebra kinds: outputs are deterministic to the byte, goldens are
# compared literally; everything else is compared within a tolerance
EXACT_KINDS = ("transfer-check", "decompose")

_IDENTITY_TOL = 1e-10
_CHECK_RTOL = 1e-9
_MODULUS_DELTAS = (0.01, 0.05, 0.1)
_CONDITION_CURVES = (("sqrt", "FINITE"), ("inv_log", "DIVERGENT"))
_FORM_AGREEMENT = 0.01


class ConfigError(ValueError):
    """Schema violation with a pointer to the offending field."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"config.{field}: {message}" if field else message)
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: dict
    seed: int
    n: tuple | None = None
    reps: int | None = None
    lambda_grid: tuple | None = None
    t_grid: tuple | None = None
    order: int | None = None
    p: float | None = None
    out_dir: str | None = None
    workers: int | None = None

    def identity_obj(self) -> dict:
        """The experiment-defining fields with defaults resolved.

        out_dir and workers are execution details: they change where and
        how fast the run happens but not what it computes, so they are
        excluded here and never written into the artifacts.  That keeps
        outputs byte-identical across directories and worker counts.
        """
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "model": self.model,
            "n": _nested_list(self.n),
            "reps": self.reps,
            "lambda_grid": _nested_list(self.lambda_grid),
            "t_grid": _nested_list(self.t_grid),
            "N": self.order,
            "p": self.p,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        canon = json.dumps(
            self.identity_obj(), sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(canon.encode()).hexdigest()


def _nested_list(value):
    if value is None:
        return None
    if isinstance(value, tuple):
        return [_nested_list(v) for v in value]
    return value


# -- schema validation ---------------------------------------------------------------


def _require(obj: dict, field: str, path: str):
    if field not in obj or obj[field] is None:
        raise ConfigError(f"{path}{field}", "required field is missing")
    return obj[field]


def _check_int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, "must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return value


def _check_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "must be a number")
    return float(value)


def _parse_model(obj, path: str = "model") -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, "must be an object")
    family = _require(obj, "family", f"{path}.")
    if family == "torus":
        allowed = {"family", "matrices", "observable", "completely_commuting"}
        for key in obj:
            if key not in allowed:
                raise ConfigError(f"{path}.{key}", "unknown field")
        matrices = _require(obj, "matrices", f"{path}.")
        if not isinstance(matrices, list) or not matrices:
            raise ConfigError(f"{path}.matrices", "must be a nonempty list")
        for i, mat in enumerate(matrices):
            if not isinstance(mat, list) or any(
                not isinstance(row, list) for row in mat
            ):
                raise ConfigError(
                    f"{path}.matrices[{i}]", "must be a list of rows"
                )
            for row in mat:
                for v in row:
                    _check_int(v, f"{path}.matrices[{i}]")
        observable = _require(obj, "observable", f"{path}.")
        if not isinstance(observable, str):
            raise ConfigError(f"{path}.observable", "must be a string")
        cc = obj.get("completely_commuting", True)
        if not isinstance(cc, bool):
            raise ConfigError(
                f"{path}.completely_commuting", "must be a boolean"
            )
        return {
            "family": "torus",
            "matrices": matrices,
            "observable": observable,
            "completely_commuting": cc,
        }
    if family == "linear":
        allowed = {
            "family",
            "kappa",
            "rho",
            "coeff_rule",
            "law",
            "law_params",
            "observable",
        }
        for key in obj:
            if key not in allowed:
                raise ConfigError(f"{path}.{key}", "unknown field")
        out = {"family": "linear"}
        out["kappa"] = _check_number(obj.get("kappa", 1.0), f"{path}.kappa")
        out["rho"] = _check_number(obj.get("rho", 0.5), f"{path}.rho")
        out["coeff_rule"] = obj.get("coeff_rule", "geometric")
        out["law"] = obj.get("law", "uniform")
        params = obj.get("law_params", [])
        if not isinstance(params, list):
            raise ConfigError(f"{path}.law_params", "must be a list")
        out["law_params"] = [
            _check_number(v, f"{path}.law_params") for v in params
        ]
        out["observable"] = obj.get("observable", "clip")
        for key in ("coeff_rule", "law", "observable"):
            if not isinstance(out[key], str):
                raise ConfigError(f"{path}.{key}", "must be a string")
        return out
    raise ConfigError(f"{path}.family", f"unknown family {family!r}")


def _parse_box(value, path: str) -> tuple:
    """A box [n1, n2, ...] or a list of boxes [[...], [...]]."""
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "must be a nonempty list")
    if all(isinstance(v, list) for v in value):
        return tuple(_parse_box(v, f"{path}[{i}]") for i, v in enumerate(value))
    return tuple(_check_int(v, path, minimum=1) for v in value)


def parse_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("", "config must be a JSON object")
    allowed = {
        "schema_version",
        "kind",
        "model",
        "n",
        "reps",
        "lambda_grid",
        "t_grid",
        "N",
        "p",
        "seed",
        "out_dir",
        "workers",
    }
    for key in obj:
        if key not in allowed:
            raise ConfigError(key, "unknown field")
    version = _check_int(
        _require(obj, "schema_version", ""), "schema_version"
    )
    if version != SCHEMA_VERSION:
        raise ConfigError(
            "schema_version", f"unsupported version {version!r}; expected 1"
        )
    kind = _require(obj, "kind", "")
    if kind not in KINDS:
        raise ConfigError(
            "kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}"
        )
    model = _parse_model(_require(obj, "model", ""))
    seed = _check_int(_require(obj, "seed", ""), "seed", minimum=0)

    n = obj.get("n")
    if n is not None:
        n = _parse_box(n, "n")
    reps = obj.get("reps")
    if reps is not None:
        reps = _check_int(reps, "reps", minimum=2)
    lambda_grid = obj.get("lambda_grid")
    if lambda_grid is not None:
        if not isinstance(lambda_grid, list) or len(lambda_grid) < 3:
            raise ConfigError("lambda_grid", "must list at least 3 values")
        lambda_grid = tuple(
            _check_number(v, "lambda_grid") for v in lambda_grid
        )
    t_grid = obj.get("t_grid")
    if t_grid is not None:
        if not isinstance(t_grid, list) or not t_grid:
            raise ConfigError("t_grid", "must be a nonempty list of points")
        parsed = []
        for i, point in enumerate(t_grid):
            if not isinstance(point, list) or not point:
                raise ConfigError(f"t_grid[{i}]", "must be a list of numbers")
            coords = tuple(_check_number(v, f"t_grid[{i}]") for v in point)
            if any(not 0 < c <= 1 for c in coords):
                raise ConfigError(f"t_grid[{i}]", "entries must lie in (0, 1]")
            parsed.append(coords)
        t_grid = tuple(parsed)
    order = obj.get("N")
    if order is not None:
        order = _check_int(order, "N", minimum=1)
    p = obj.get("p")
    if p is not None:
        p = _check_number(p, "p")
    out_dir = obj.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir", "must be a string")
    workers = obj.get("workers")
    if workers is not None:
        workers = _check_int(workers, "workers", minimum=1)

    return ExperimentConfig(
        kind=kind,
        model=model,
        seed=seed,
        n=n,
        reps=reps,
        lambda_grid=lambda_grid,
        t_grid=t_grid,
        order=order,
        p=p,
        out_dir=out_dir,
        workers=workers,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return parse_config(obj)


def build_model(model: dict):
    if model["family"] == "torus":
        try:
            return TorusFieldSpec.named(
                model["matrices"],
                model["observable"],
                model["completely_commuting"],
            )
        except KeyError:
            raise ConfigError(
                "model.observable",
                f"unknown observable {model['observable']!r}",
            ) from None
        except (ValueError, TypeError) as exc:
            raise ConfigError("model", str(exc)) from None
    try:
        return LinearFieldSpec(
            kappa=model["kappa"],
            rho=model["rho"],
            coeff_rule=model["coeff_rule"],
            innovation=innovation_law(model["law"], *model["law_params"]),
            observable=model["observable"],
        )
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None


# -- per-kind runners -----------------------------------------------------------------


def _single_box(cfg: ExperimentConfig) -> tuple:
    n = cfg.n
    if n is None:
        raise ConfigError("n", f"required for kind {cfg.kind!r}")
    if n and isinstance(n[0], tuple):
        raise ConfigError("n", f"kind {cfg.kind!r} takes a single box")
    return n


def _box_list(cfg: ExperimentConfig) -> list:
    n = cfg.n
    if n is None:
        raise ConfigError("n", f"required for kind {cfg.kind!r}")
    if not n:
        raise ConfigError("n", "must not be empty")
    if not isinstance(n[0], tuple):
        return [n]
    return list(n)


def _need_reps(cfg: ExperimentConfig) -> int:
    if cfg.reps is None:
        raise ConfigError("reps", f"required for kind {cfg.kind!r}")
    return cfg.reps


def _simulate_one(model, n, seed, rep):
    if isinstance(model, TorusFieldSpec):
        grid = sample_torus(model, n, seed, rep)
    else:
        grid = sample_linear(model, n, seed, rep)
    sp = SumProcess(grid.values)
    total = float(grid.values.sum() / math.sqrt(grid.values.size))
    return total, sp.max_rect()


def _run_simulate(cfg, model, workers) -> VerificationReport:
    n = _single_box(cfg)
    reps = _need_reps(cfg)
    rows = map_replicates(_simulate_one, reps, workers, (model, n, cfg.seed))
    sums = np.array([r[0] for r in rows])
    stats = {
        "mean": {
            "value": float(sums.mean()),
            "stderr": float(sums.std(ddof=1) / math.sqrt(reps)),
            "reps": reps,
        },
        "variance": {
            "value": float(sums.var(ddof=1)),
            "stderr": float(sums.var(ddof=1) * math.sqrt(2.0 / (reps - 1))),
            "reps": reps,
        },
    }
    samples = [
        [rep, float(total), float(peak)]
        for rep, (total, peak) in enumerate(rows)
    ]
    return VerificationReport(
        "simulate",
        model.digest(),
        cfg.seed,
        stats,
        {},
        True,
        {"n": list(n), "samples": samples},
    )


def _profile_rows(profile: DependenceProfile) -> list:
    return [
        {
            "lag": list(e.lag),
            "estimate": e.estimate,
            "stderr": e.stderr,
            "bound": e.bound,
            "method": e.method,
        }
        for e in profile.entries
    ]


def _run_coeffs(cfg, model, workers) -> VerificationReport:
    max_lag = cfg.order if cfg.order is not None else 10
    profiles = {}
    if isinstance(model, TorusFieldSpec):
        for axis in range(model.d):
            prof = gamma_profile(model, axis, max_lag)
            profiles[f"gamma_axis{axis + 1}"] = prof
    else:
        reps = _need_reps(cfg)
        est, stderr = tau_grid(
            model, max_lag, max_lag, reps, cfg.seed, workers=workers
        )
        entries = []
        for a in range(max_lag + 1):
            for b in range(max_lag + 1):
                entries.append(
                    ProfileEntry(
                        (a, b),
                        float(est[a, b]),
                        float(stderr[a, b]),
                        lambda_bound(max(a, b), model),
                        "coupling-mc",
                    )
                )
        profiles["tau_grid"] = DependenceProfile(
            TAU,
            tuple(entries),
            {"model": model.digest(), "reps": reps, "max_lag": max_lag},
        )
    worst = 0.0
    passed = True
    for prof in profiles.values():
        for e in prof.entries:
            if e.bound is None:
                continue
            excess = e.estimate - (e.bound + 3 * e.stderr)
            worst = max(worst, excess)
            passed = passed and excess <= 0
    stats = {
        "worst_bound_excess": {"value": worst, "stderr": 0.0, "reps": cfg.reps or 0}
    }
    return VerificationReport(
        "coeffs",
        model.digest(),
        cfg.seed,
        stats,
        {"bound_excess": 0.0},
        passed,
        {
            "max_lag": max_lag,
            "profiles": {k: _profile_rows(v) for k, v in profiles.items()},
        },
    )


def _run_conditions(cfg, model, workers) -> VerificationReport:
    if not isinstance(model, TorusFieldSpec):
        raise ConfigError("model", "kind 'conditions' needs a torus model")
    max_lag = cfg.order if cfg.order is not None else 8
    f0 = model.observable.centered()
    rows = []
    for delta in _MODULUS_DELTAS:
        rows.append(["omega@" + repr(delta), l1_modulus(f0, delta), ""])
    passed = True
    for curve, expected in _CONDITION_CURVES:
        rep = condmodcont_integral(curve, model.d)
        rows.append([f"log_integral[{curve}]", rep.value, rep.verdict])
        passed = passed and rep.verdict == expected
    theta = gamma_profile(model, 0, max_lag).envelope_values()
    profile = constant_profile(model.observable.sup_bound())
    tight = tightness_condition(theta, profile, model.d, cutoff=64)
    agreement = tight.detail["agreement"]
    rows.append(["tightness_series_form", tight.detail["series_form"], ""])
    rows.append(["tightness_integral_form", tight.detail["integral_form"], ""])
    rows.append(["tightness_form_agreement", agreement, tight.verdict])
    passed = passed and agreement <= _FORM_AGREEMENT
    stats = {
        "form_agreement": {"value": agreement, "stderr": 0.0, "reps": 0}
    }
    return VerificationReport(
        "conditions",
        model.digest(),
        cfg.seed,
        stats,
        {"form_agreement": _FORM_AGREEMENT},
        passed,
        {
            "checks": [[name, float(value), verdict] for name, value, verdict in rows],
            "max_lag": max_lag,
        },
    )


def _run_transfer_check(cfg, model, workers) -> VerificationReport:
    if not isinstance(model, TorusFieldSpec) or model.d < 2:
        raise ConfigError(
            "model", "kind 'transfer-check' needs a torus model with two maps"
        )
    maps = model.maps
    report = check_identities(maps[0], maps[1], model.observable)
    rows = [
        [r.name, r.coeff_dev, r.point_dev] for r in report.results
    ]
    dev = report.max_deviation()
    return VerificationReport(
        "transfer-check",
        model.digest(),
        cfg.seed,
        {"max_deviation": {"value": dev, "stderr": 0.0, "reps": 0}},
        {"max_deviation": _IDENTITY_TOL},
        report.passed(_IDENTITY_TOL),
        {"identities": [[n, float(c), float(p)] for n, c, p in rows]},
    )


def _run_decompose(cfg, model, workers) -> VerificationReport:
    if cfg.order is None:
        raise ConfigError("N", "required for kind 'decompose'")
    try:
        dec = build_reverse(model, cfg.order)
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from None
    verify = verify_orthomartingale(dec, tol=_IDENTITY_TOL)
    pieces = []
    for name, piece in dec.pieces().items():
        pieces.append(
            [name, len(piece.terms), float(piece.l2_norm_sq())]
        )
    worst = max(
        max(verify.martingale_defects),
        verify.reassembly_error,
        verify.orthogonality_defect,
    )
    return VerificationReport(
        "decompose",
        model.digest(),
        cfg.seed,
        {"max_defect": {"value": float(worst), "stderr": 0.0, "reps": 0}},
        {"max_defect": _IDENTITY_TOL},
        verify.passed,
        {
            "order": cfg.order,
            "pieces": pieces,
            "verify": verify.to_json_obj(),
            "decomposition": dec.to_json_obj(),
        },
    )


def _run_clt(cfg, model, workers) -> VerificationReport:
    n = _single_box(cfg)
    reps = _need_reps(cfg)
    sums = normalized_sums(model, n, reps, cfg.seed, workers)
    report = clt_check(model, n, reps, cfg.seed, workers=workers, sums=sums)
    detail = dict(report.detail)
    detail["sums"] = [float(v) for v in sums]
    return replace(report, detail=detail)


def _run_fclt(cfg, model, workers) -> VerificationReport:
    n = _single_box(cfg)
    reps = _need_reps(cfg)
    ts = cfg.t_grid if cfg.t_grid is not None else DEFAULT_T_GRID
    values = fdd_values(model, n, ts, reps, cfg.seed, workers)
    return fclt_fdd_check(
        model, n, reps, cfg.seed, ts=ts, workers=workers, values=values
    )


def _run_tightness(cfg, model, workers) -> VerificationReport:
    boxes = _box_list(cfg)
    reps = _need_reps(cfg)
    if cfg.lambda_grid is None:
        raise ConfigError("lambda_grid", "required for kind 'tightness'")
    return tightness_tail(
        model, list(cfg.lambda_grid), boxes, reps, cfg.seed, workers
    )


def _run_rosenthal(cfg, model, workers) -> VerificationReport:
    boxes = _box_list(cfg)
    reps = _need_reps(cfg)
    if cfg.p is None:
        raise ConfigError("p", "required for kind 'rosenthal'")
    if not isinstance(model, TorusFieldSpec):
        raise ConfigError("model", "kind 'rosenthal' needs a torus model")
    return rosenthal_ratio(
        model, cfg.p, boxes, reps=reps, seed=cfg.seed, workers=workers
    )


_RUNNERS = {
    "simulate": _run_simulate,
    "coeffs": _run_coeffs,
    "conditions": _run_conditions,
    "transfer-check": _run_transfer_check,
    "decompose": _run_decompose,
    "clt": _run_clt,
    "fclt": _run_fclt,
    "tightness": _run_tightness,
    "rosenthal": _run_rosenthal,
}


# -- plot data -----------------------------------------------------------------------


def _csv(header: list, rows: list) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(repr(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit_plotdata(report: VerificationReport) -> dict:
    """Per-figure CSV texts keyed by file name.

    Every numeric cell is written with ``repr`` so equal floats give equal
    bytes; an empty statistic set yields a header-only CSV.
    """
    d = report.detail
    kind = report.experiment
    if kind == "simulate":
        return {
            "samples.csv": _csv(
                ["rep", "normalized_sum", "max_rect"],
                [[r[0], float(r[1]), float(r[2])] for r in d["samples"]],
            )
        }
    if kind == "coeffs":
        out = {}
        for name, rows in d["profiles"].items():
            width = max(len(r["lag"]) for r in rows) if rows else 2
            header = [f"lag{i + 1}" for i in range(width)] + [
                "estimate",
                "stderr",
                "bound",
                "method",
            ]
            body = []
            for r in rows:
                lag = list(r["lag"]) + [""] * (width - len(r["lag"]))
                bound = "" if r["bound"] is None else repr(float(r["bound"]))
                body.append(
                    lag
                    + [float(r["estimate"]), float(r["stderr"]), bound, r["method"]]
                )
            out[f"{name}.csv"] = _csv(header, body)
        return out
    if kind == "conditions":
        return {
            "conditions.csv": _csv(
                ["check", "value", "verdict"],
                [[name, float(v), verdict] for name, v, verdict in d["checks"]],
            )
        }
    if kind == "transfer-check":
        return {
            "identities.csv": _csv(
                ["name", "coeff_dev", "point_dev"],
                [[n, float(c), float(p)] for n, c, p in d["identities"]],
            )
        }
    if kind == "decompose":
        return {
            "pieces.csv": _csv(
                ["piece", "term_count", "l2_norm_sq"],
                [[n, int(c), float(v)] for n, c, v in d["pieces"]],
            )
        }
    if kind == "clt":
        return {
            "sums.csv": _csv(
                ["rep", "value"],
                [[i, float(v)] for i, v in enumerate(d.get("sums", []))],
            )
        }
    if kind == "fclt":
        rows = [
            [
                float(r["s"][0]),
                float(r["s"][1]),
                float(r["t"][0]),
                float(r["t"][1]),
                float(r["empirical_cov"]),
                float(r["target_cov"]),
                float(r["stderr"]),
            ]
            for r in d["pairs"]
        ]
        marg = [
            [k, float(v), float(d["marginal_ks_budget"][k])]
            for k, v in sorted(d["marginal_ks"].items())
        ]
        return {
            "covariances.csv": _csv(
                ["s1", "s2", "t1", "t2", "empirical_cov", "target_cov", "stderr"],
                rows,
            ),
            "marginals.csv": _csv(["t", "ks", "budget"], marg),
        }
    if kind == "tightness":
        out = {}
        for key, rows in d["curves"].items():
            label = key.strip("()").replace(", ", "x")
            out[f"tail_{label}.csv"] = _csv(
                ["lambda", "lambda2_phat", "stderr"],
                [[float(a), float(b), float(c)] for a, b, c in rows],
            )
        return out
    if kind == "rosenthal":
        rows = []
        for n, entry in zip(d["n_list"], d["ratios"].values()):
            rows.append(
                [
                    int(n[0]),
                    int(n[1]),
                    int(n[0] * n[1]),
                    float(entry["ratio"]),
                    float(entry["stderr"]),
                ]
            )
        return {
            "ratio.csv": _csv(["n1", "n2", "area", "ratio", "stderr"], rows)
        }
    raise ValueError(f"no plot data emitter for kind {kind!r}")


# -- run and compare -------------------------------------------------------------------


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def run(cfg: ExperimentConfig, out_dir: str | Path, workers: int) -> int:
    """Execute one experiment and write its artifacts; returns 0 or 2."""
    model = build_model(cfg.model)
    report = _RUNNERS[cfg.kind](cfg, model, workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(_json_text(cfg.identity_obj()))
    (out / "report.json").write_text(_json_text(report.to_json_obj()))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config_sha256": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": {
            "fieldlimits": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    (out / "MANIFEST.json").write_text(_json_text(manifest))
    for name, text in emit_plotdata(report).items():
        (out / name).write_text(text)
    return 0 if report.passed else 2


def _floats_close(a: float, b: float) -> bool:
    if math.isnan(a) and math.isnan(b):
        return True
    return abs(a - b) <= _CHECK_RTOL * max(abs(a), abs(b)) + 1e-12


def _json_close(a, b) -> bool:
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(
            _json_close(a[k], b[k]) for k in a
        )
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(
            _json_close(x, y) for x, y in zip(a, b)
        )
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return _floats_close(float(a), float(b))
    return a == b


def _csv_close(a: str, b: str) -> bool:
    la, lb = a.splitlines(), b.splitlines()
    if len(la) != len(lb):
        return False
    for ra, rb in zip(la, lb):
        ca, cb = ra.split(","), rb.split(",")
        if len(ca) != len(cb):
            return False
        for va, vb in zip(ca, cb):
            if va == vb:
                continue
            try:
                if not _floats_close(float(va), float(vb)):
                    return False
            except ValueError:
                return False
    return True


def check_against_golden(out_dir: Path, golden_dir: Path, kind: str) -> list:
    """File-by-file comparison; returns the list of mismatch descriptions."""
    problems = []
    if not golden_dir.is_dir():
        return [f"golden directory not found: {golden_dir}"]
    for golden in sorted(golden_dir.iterdir()):
        if golden.is_dir():
            continue
        produced = out_dir / golden.name
        if not produced.is_file():
            problems.append(f"missing output file: {golden.name}")
            continue
        got, want = produced.read_text(), golden.read_text()
        if golden.name == "MANIFEST.json":
            go, wo = json.loads(got), json.loads(want)
            go.pop("versions", None)
            wo.pop("versions", None)
            if go != wo:
                problems.append("MANIFEST.json: config hash or seed differs")
            continue
        if kind in EXACT_KINDS:
            if got != want:
                problems.append(f"{golden.name}: bytes differ")
            continue
        if golden.name.endswith(".json"):
            if not _json_close(json.loads(got), json.loads(want)):
                problems.append(f"{golden.name}: values differ beyond tolerance")
        elif not _csv_close(got, want):
            problems.append(f"{golden.name}: values differ beyond tolerance")
    return problems


# -- entry point -----------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fieldlimits",
        description="Run a configured experiment and write JSON/CSV artifacts.",
    )
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--workers", type=int, help="override the worker count")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument(
        "--check",
        metavar="GOLDEN_DIR",
        help="after the run, compare outputs against this golden directory",
    )
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", "must be >= 0")
            cfg = replace(cfg, seed=args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("workers", "must be >= 1")
            cfg = replace(cfg, workers=args.workers)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if cfg.out_dir is None:
            raise ConfigError("out_dir", "required (or pass --out)")
        workers = cfg.workers if cfg.workers is not None else 1
        status = run(cfg, cfg.out_dir, workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, not a statistical verdict
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.check is not None:
        problems = check_against_golden(
            Path(cfg.out_dir), Path(args.check), cfg.kind
        )
        for line in problems:
            print(f"golden mismatch: {line}", file=sys.stderr)
        if problems:
            return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
