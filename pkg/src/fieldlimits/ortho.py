"""Reverse martingale-coboundary decomposition for two commuting torus maps.

For a pair of commuting Koopman/transfer couples (U_i, K_i), i = 1, 2, with
K_i U_i = Id, each direction satisfies the exact operator identity

    Id = P_i + (U_i - Id) R_i + K_i^N,
    P_i = sum_{j<N} (K_i^j - U_i K_i^{j+1}),
    R_i = sum_{j<N} K_i^{j+1}.

Multiplying the two identities and grouping by coboundary factors gives the
five-piece decomposition

    f = m + (U_1 - Id) g_1 + (U_2 - Id) g_2 + (U_1 - Id)(U_2 - Id) g_3 + h,

with m = P_1 P_2 f, g_1 = R_1 P_2 f, g_2 = P_1 R_2 f, g_3 = R_1 R_2 f and
h = (K_1^N + K_2^N - K_1^N K_2^N) f.  Since K_i P_i = 0 exactly, m is a
martingale difference in both directions simultaneously.  Everything here
is computed on integer Fourier frequencies, so the identities hold exactly
up to float rounding of the coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._rng import digest_of
from .field_models import TorusFieldSpec, sample_torus_batch
from .transfer import FourierObservable, TorusMap, _matmul_int, expect_product

__all__ = [
    "Decomposition",
    "build_reverse",
    "verify_orthomartingale",
    "VerifyReport",
    "l2_gap",
    "adapted_diagnostic",
    "MAX_ORDER",
]

MAX_ORDER = 16


def _p_apply(tm: TorusMap, f: FourierObservable, order: int) -> FourierObservable:
    acc = FourierObservable(f.dim)
    k = f
    for _ in range(order):
        nxt = k.perron(tm)
        acc = acc + (k - nxt.koopman(tm))
        k = nxt
        if not k.terms:
            break
    return acc


def _r_apply(tm: TorusMap, f: FourierObservable, order: int) -> FourierObservable:
    acc = FourierObservable(f.dim)
    k = f
    for _ in range(order):
        k = k.perron(tm)
        if not k.terms:
            break
        acc = acc + k
    return acc


@dataclass(frozen=True)
class Decomposition:
    """The five pieces plus the model they decompose."""

    spec: TorusFieldSpec
    order: int
    m: FourierObservable
    g1: FourierObservable
    g2: FourierObservable
    g3: FourierObservable
    h: FourierObservable

    def reassemble(self) -> FourierObservable:
        a1, a2 = self.spec.maps
        cob1 = self.g1.koopman(a1) - self.g1
        cob2 = self.g2.koopman(a2) - self.g2
        mixed = self.g3.koopman(a1).koopman(a2) - self.g3.koopman(a1)
        mixed = mixed - (self.g3.koopman(a2) - self.g3)
        return self.m + cob1 + cob2 + mixed + self.h

    def pieces(self) -> dict[str, FourierObservable]:
        return {"m": self.m, "g1": self.g1, "g2": self.g2, "g3": self.g3, "h": self.h}

    def digest(self) -> str:
        return digest_of(self.to_json_obj())

    def to_json_obj(self) -> dict:
        return {
            "matrices": [list(map(list, tm.matrix)) for tm in self.spec.maps],
            "order": self.order,
            "pieces": {k: v.to_json_obj() for k, v in self.pieces().items()},
        }

    @classmethod
    def from_json_obj(cls, obj: dict, spec: TorusFieldSpec) -> "Decomposition":
        got = [list(map(list, tm.matrix)) for tm in spec.maps]
        if got != obj["matrices"]:
            raise ValueError("decomposition was built for different maps")
        p = {k: FourierObservable.from_json_obj(v) for k, v in obj["pieces"].items()}
        return cls(spec, int(obj["order"]), p["m"], p["g1"], p["g2"], p["g3"], p["h"])


def build_reverse(spec: TorusFieldSpec, order: int) -> Decomposition:
    """Compute the five pieces for a two-map completely commuting model."""
    if not isinstance(spec, TorusFieldSpec):
        raise TypeError("decomposition needs a torus field spec")
    if spec.d != 2:
        raise ValueError("decomposition is implemented for exactly two maps")
    if not spec.completely_commuting:
        raise ValueError("decomposition needs a completely commuting pair")
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must lie in 1..{MAX_ORDER}")
    f = spec.observable
    a1, a2 = spec.maps
    p2f = _p_apply(a2, f, order)
    r2f = _r_apply(a2, f, order)
    k1n = f.perron_power(a1, order)
    k2n = f.perron_power(a2, order)
    return Decomposition(
        spec=spec,
        order=order,
        m=_p_apply(a1, p2f, order),
        g1=_r_apply(a1, p2f, order),
        g2=_p_apply(a1, r2f, order),
        g3=_r_apply(a1, r2f, order),
        h=k1n + k2n - k2n.perron_power(a1, order),
    )


@dataclass(frozen=True)
class VerifyReport:
    martingale_defects: tuple[float, float]
    reassembly_error: float
    orthogonality_defect: float
    tolerance: float
    passed: bool

    def to_json_obj(self) -> dict:
        return {
            "martingale_defects": list(self.martingale_defects),
            "reassembly_error": self.reassembly_error,
            "orthogonality_defect": self.orthogonality_defect,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def verify_orthomartingale(
    dec: Decomposition, tol: float = 1e-10, max_shift: int = 2
) -> VerifyReport:
    """Certify the three defining identities of the decomposition.

    Checks sup bounds of U_i K_i m (the martingale property in each
    direction), the reassembly error against the original observable, and
    orthogonality of m to its shifts over a lag box.
    """
    a1, a2 = dec.spec.maps
    defects = (
        dec.m.perron(a1).koopman(a1).sup_bound(),
        dec.m.perron(a2).koopman(a2).sup_bound(),
    )
    res = (dec.reassemble() - dec.spec.observable).sup_bound()
    ortho = 0.0
    for i in range(max_shift + 1):
        for j in range(max_shift + 1):
            if i == 0 and j == 0:
                continue
            shifted = dec.m.koopman_power(a1, i).koopman_power(a2, j)
            ortho = max(ortho, abs(expect_product(dec.m, shifted)))
    passed = max(defects) < tol and res < tol and ortho < tol
    return VerifyReport(defects, res, ortho, tol, passed)


def l2_gap(
    dec: Decomposition,
    n: tuple[int, int],
    reps: int,
    seed: int,
    workers: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo L2 distance between normalized box sums of f and of m.

    Both fields are sampled on the same orbits (the sampling streams depend
    only on the maps), so the difference isolates the coboundary and tail
    pieces.  Returns (estimate, stderr) of sqrt(E(S_n(f - m)^2 / |n|)).
    """
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    diff = dec.spec.observable - dec.m
    diff_spec = replace(dec.spec, observable=diff)
    stack = sample_torus_batch(diff_spec, n, reps, seed, workers=workers)
    sums = stack.reshape(reps, -1).sum(axis=1)
    sq = sums**2 / (n[0] * n[1])
    mean_sq = float(sq.mean())
    se_sq = float(sq.std(ddof=1) / math.sqrt(reps))
    value = math.sqrt(max(mean_sq, 0.0))
    stderr = se_sq / (2 * value) if value > 0 else math.sqrt(max(se_sq, 0.0))
    return value, stderr


def adapted_diagnostic(
    spec: TorusFieldSpec,
    g: FourierObservable,
    lags: tuple[tuple[int, int], ...] = ((1, 0), (0, 1), (1, 1)),
    reps: int = 4096,
    seed: int = 0,
) -> dict:
    """Monte Carlo check that shifted products of g average to zero.

    A sampling-route diagnostic, independent of the coefficient algebra:
    draws uniform points, evaluates g(x) g(T^lag x) and reports per-lag
    estimates with standard errors plus a flag at three standard errors.
    """
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    rng = np.random.default_rng(seed)
    a1, a2 = spec.maps
    mats = {
        lag: np.array(
            _int_matmul_power(a1, lag[0], a2, lag[1]), dtype=float
        )
        for lag in lags
    }
    pts = rng.random((reps, spec.dim))
    out = {}
    flagged = False
    for lag, mat in mats.items():
        moved = np.mod(pts @ mat.T, 1.0)
        vals = g.evaluate_real(pts[:, 0] if spec.dim == 1 else pts) * g.evaluate_real(
            moved[:, 0] if spec.dim == 1 else moved
        )
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(reps))
        out[lag] = {"estimate": est, "stderr": se}
        if abs(est) > 3 * se + 1e-12:
            flagged = True
    return {"lags": {str(k): v for k, v in out.items()}, "flagged": flagged}


def _int_matmul_power(a1: TorusMap, e1: int, a2: TorusMap, e2: int):
    m = a1.dim
    out = tuple(tuple(int(i == j) for j in range(m)) for i in range(m))
    if e1:
        out = _matmul_int(out, a1.matrix_power(e1))
    if e2:
        out = _matmul_int(out, a2.matrix_power(e2))
    return out
