"""Stationary random-field generators on integer rectangles.

Two model families plus trivial baselines:

* Linear fields ``Y_{k,l} = sum_{i,j >= 0} a_{i,j} e_{k-i,l-j}`` with a
  geometric coefficient envelope ``|a_{i,j}| <= kappa rho^{i+j}``, an iid
  innovation panel, and a bounded Lipschitz observable applied cellwise.
* Torus fields ``X_k = f(A_1^{k_1} ... A_d^{k_d} x mod 1)`` driven by
  commuting expanding integer matrices and a trigonometric observable.

Torus orbits are computed exactly: points are dyadic rationals with a large
power-of-two denominator, and each map application is an integer
matrix-vector multiply modulo that denominator.  Floating point enters only
when the observable is evaluated, so semigroup laws and commutation hold
bit-for-bit.  The denominator depth is chosen from the grid horizon so that
the orbit never exhausts its dyadic depth (multiplying by an even
determinant consumes low bits).

Replicate seeding follows the package-wide contract: the generator for
replicate ``r`` is derived from (master seed, r, spec digest), so schedules
and worker counts cannot change any sampled value.
"""

from __future__ import annotations

import functools
import itertools
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from ._rng import digest_of, random_bigint, replicate_rng
from .parallel import map_replicates
from .transfer import (
    FourierObservable,
    OBSERVABLE_REGISTRY,
    TorusMap,
    expect_product,
)

__all__ = [
    "InnovationLaw",
    "innovation_law",
    "BoundedObservable",
    "H_REGISTRY",
    "LinearFieldSpec",
    "TorusFieldSpec",
    "SampleGrid",
    "sample_linear",
    "sample_linear_batch",
    "sample_torus",
    "sample_torus_batch",
    "torus_initial_state",
    "advance_state",
    "sample_torus_from_state",
    "TorusState",
    "estimate_centering",
    "exact_sigma2_torus",
    "COEFF_RULES",
]


# -- innovation laws -----------------------------------------------------------


@dataclass(frozen=True)
class InnovationLaw:
    """Named innovation distribution with the log-moment hooks used by the
    dependence bounds.

    ``truncated_log_sq_moment(t)`` returns ``E((log|e - e*|)^2 1{log|e-e*| > t})``
    for an independent pair, together with the evaluation error (0 for closed
    forms, quadrature or Monte Carlo error otherwise).
    """

    name: str
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.name not in _LAW_TABLE:
            raise ValueError(f"unknown innovation law: {self.name!r}")
        _LAW_TABLE[self.name]["validate"](self.params)

    @property
    def variance(self) -> float:
        return _LAW_TABLE[self.name]["variance"](self.params)

    @property
    def symmetric(self) -> bool:
        return True  # every registered law is symmetric about 0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return _LAW_TABLE[self.name]["sample"](self.params, rng, size)

    def truncated_log_sq_moment(self, threshold: float) -> tuple[float, float]:
        return _truncated_log_sq(self.name, self.params, float(threshold))

    def to_json_obj(self):
        return {"name": self.name, "params": list(self.params)}


def innovation_law(name: str, *params: float) -> InnovationLaw:
    return InnovationLaw(name, tuple(float(p) for p in params))


def _no_params(params) -> None:
    if params:
        raise ValueError("this law takes no parameters")


def _pareto_validate(params) -> None:
    if len(params) != 1 or params[0] <= 2:
        raise ValueError("pareto_log takes one tail index parameter > 2")


def _uniform_trunc_log_sq(threshold: float) -> tuple[float, float]:
    # |e - e*| for independent U(-1,1) has density (2-r)/2 on [0,2]; the
    # truncated moment integrates (log r)^2 against it from a = e^threshold.
    def antiderivative(r: float) -> float:
        if r <= 0:
            return 0.0
        lr = math.log(r)
        return r * (lr * lr - 2 * lr + 2) - r * r / 4 * (lr * lr - lr + 0.5)

    a = min(math.exp(threshold), 2.0)
    return antiderivative(2.0) - antiderivative(a), 0.0


@functools.lru_cache(maxsize=None)
def _gaussian_trunc_log_sq(threshold: float) -> tuple[float, float]:
    # e - e* ~ N(0,2); |difference| has density exp(-z^2/4)/sqrt(pi) on [0,inf)
    a = math.exp(threshold)

    def integrand(z: float) -> float:
        return math.log(z) ** 2 * math.exp(-z * z / 4) / math.sqrt(math.pi)

    val, err = quad(integrand, a, np.inf, epsabs=1e-13, limit=200)
    return val, err


def _two_point_trunc_log_sq(threshold: float) -> tuple[float, float]:
    # difference is 0 with prob 1/2 and +-2 with prob 1/4 each
    if math.log(2) > threshold:
        return 0.5 * math.log(2) ** 2, 0.0
    return 0.0, 0.0


@functools.lru_cache(maxsize=None)
def _pareto_trunc_log_sq(beta: float, threshold: float) -> tuple[float, float]:
    # no convenient closed form: one-time deterministic Monte Carlo, error recorded
    rng = np.random.default_rng(int(digest_of(["pareto_log_moment", beta]), 16) % 2**63)
    n = 1 << 21
    u = rng.random(n) ** (-1.0 / beta) * rng.choice([-1.0, 1.0], size=n)
    v = rng.random(n) ** (-1.0 / beta) * rng.choice([-1.0, 1.0], size=n)
    diff = np.abs(u - v)
    cut = math.exp(threshold)
    vals = np.where(diff > cut, np.log(np.maximum(diff, cut)) ** 2, 0.0)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n))
    return mean, 3 * stderr


def _truncated_log_sq(name: str, params, threshold: float) -> tuple[float, float]:
    if name == "uniform":
        return _uniform_trunc_log_sq(threshold)
    if name == "gaussian":
        return _gaussian_trunc_log_sq(threshold)
    if name == "two_point":
        return _two_point_trunc_log_sq(threshold)
    if name == "pareto_log":
        return _pareto_trunc_log_sq(params[0], threshold)
    raise ValueError(f"law {name!r} lacks a log-moment hook")


_LAW_TABLE: dict[str, dict] = {
    "uniform": {
        "validate": _no_params,
        "variance": lambda p: 1.0 / 3.0,
        "sample": lambda p, rng, size: rng.uniform(-1.0, 1.0, size),
    },
    "gaussian": {
        "validate": _no_params,
        "variance": lambda p: 1.0,
        "sample": lambda p, rng, size: rng.standard_normal(size),
    },
    "two_point": {
        "validate": _no_params,
        "variance": lambda p: 1.0,
        "sample": lambda p, rng, size: rng.choice([-1.0, 1.0], size=size),
    },
    "pareto_log": {
        "validate": _pareto_validate,
        "variance": lambda p: p[0] / (p[0] - 2.0),
        "sample": lambda p, rng, size: rng.random(size) ** (-1.0 / p[0])
        * rng.choice([-1.0, 1.0], size=size),
    },
}


# -- bounded observables for linear fields ---------------------------------------


@dataclass(frozen=True)
class BoundedObservable:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    bound: float
    lip: float
    odd: bool

    def spot_check(self, rng: np.random.Generator, npts: int = 256) -> None:
        x = rng.uniform(-50, 50, npts)
        y = rng.uniform(-50, 50, npts)
        fx, fy = self.fn(x), self.fn(y)
        if np.max(np.abs(fx)) > self.bound + 1e-12:
            raise AssertionError(f"{self.name}: bound violated")
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.abs(fx - fy) / np.abs(x - y)
        if np.nanmax(ratio) > self.lip + 1e-9:
            raise AssertionError(f"{self.name}: Lipschitz constant violated")


H_REGISTRY: dict[str, BoundedObservable] = {
    "clip": BoundedObservable("clip", lambda x: np.clip(x, -1.0, 1.0), 1.0, 1.0, True),
    "tanh": BoundedObservable("tanh", np.tanh, 1.0, 1.0, True),
    "atan": BoundedObservable(
        "atan", lambda x: (2.0 / math.pi) * np.arctan(x), 1.0, 2.0 / math.pi, True
    ),
}


# -- coefficient rules ------------------------------------------------------------


def _geometric_coeffs(i, j, kappa, rho):
    return kappa * rho ** (i + j)


def _alternating_coeffs(i, j, kappa, rho):
    return kappa * rho ** (i + j) * np.where((i + j) % 2 == 0, 1.0, -1.0)


def _delta_coeffs(i, j, kappa, rho):
    return np.where((i == 0) & (j == 0), kappa, 0.0)


COEFF_RULES: dict[str, Callable] = {
    "geometric": _geometric_coeffs,
    "alternating": _alternating_coeffs,
    "delta": _delta_coeffs,
}


# -- specs --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearFieldSpec:
    """Parameters of the two-index linear field with its observable."""

    kappa: float = 1.0
    rho: float = 0.5
    coeff_rule: str = "geometric"
    innovation: InnovationLaw = field(default_factory=lambda: innovation_law("uniform"))
    observable: str = "clip"
    truncation_radius: int | None = None
    centering: float = 0.0

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0,1)")
        if self.coeff_rule not in COEFF_RULES:
            raise ValueError(f"unknown coefficient rule: {self.coeff_rule!r}")
        if self.observable not in H_REGISTRY:
            raise ValueError(f"unknown observable: {self.observable!r}")
        if self.truncation_radius is not None and self.truncation_radius < 0:
            raise ValueError("truncation radius must be >= 0")
        self._check_envelope()

    def _check_envelope(self, upto: int = 8) -> None:
        i, j = np.indices((upto + 1, upto + 1))
        a = COEFF_RULES[self.coeff_rule](i, j, self.kappa, self.rho)
        env = self.kappa * self.rho ** (i + j)
        if np.any(np.abs(a) > env * (1 + 1e-12) + 1e-300):
            raise ValueError("coefficient rule violates the geometric envelope")

    @property
    def h(self) -> BoundedObservable:
        return H_REGISTRY[self.observable]

    def radius(self) -> int:
        """Truncation radius: neglected coefficient mass below 1e-12 of the
        working scale kappa/(1-rho)^2."""
        if self.truncation_radius is not None:
            return self.truncation_radius
        if self.kappa == 0 or self.coeff_rule == "delta":
            return 0
        # rectangular tail: sum outside [0,R]^2 is <= 2 kappa rho^(R+1)/(1-rho)^2;
        # smallest R with 2 rho^(R+1) < 1e-12
        return max(1, math.floor(math.log(5e-13) / math.log(self.rho)))

    def kernel(self) -> np.ndarray:
        r = self.radius()
        i, j = np.indices((r + 1, r + 1))
        return COEFF_RULES[self.coeff_rule](i, j, self.kappa, self.rho)

    def digest(self) -> str:
        return digest_of(
            {
                "kind": "linear",
                "kappa": self.kappa,
                "rho": self.rho,
                "coeff_rule": self.coeff_rule,
                "innovation": self.innovation.to_json_obj(),
                "observable": self.observable,
                "radius": self.radius(),
                "centering": self.centering,
            }
        )

    def seed_digest(self) -> str:
        """Digest of the fields that shape the random draws.

        Deterministic post-processing (kernel, observable, centering) is
        excluded so that exact comparisons across such variations share one
        innovation panel.
        """
        return digest_of(
            {
                "kind": "linear",
                "innovation": self.innovation.to_json_obj(),
                "radius": self.radius(),
            }
        )


@dataclass(frozen=True)
class TorusFieldSpec:
    """Commuting expanding integer matrices plus a trigonometric observable."""

    matrices: tuple[tuple[tuple[int, ...], ...], ...]
    observable: FourierObservable
    completely_commuting: bool = True

    def __post_init__(self) -> None:
        maps = tuple(TorusMap(mat) for mat in self.matrices)
        object.__setattr__(self, "matrices", tuple(tm.matrix for tm in maps))
        m = maps[0].dim
        if any(tm.dim != m for tm in maps):
            raise ValueError("all matrices must share one dimension")
        for a in range(len(maps)):
            for b in range(a + 1, len(maps)):
                if not maps[a].commutes_with(maps[b]):
                    raise ValueError("matrices must pairwise commute")
                if self.completely_commuting and math.gcd(
                    maps[a].det_abs, maps[b].det_abs
                ) != 1:
                    raise ValueError(
                        "completely commuting family needs coprime determinants"
                    )
        if not isinstance(self.observable, FourierObservable):
            raise TypeError("observable must be a finite Fourier combination")
        if self.observable.dim != m:
            raise ValueError("observable dimension must match the matrices")

    @classmethod
    def named(
        cls, matrices, observable_name: str, completely_commuting: bool = True
    ) -> "TorusFieldSpec":
        return cls(
            tuple(tuple(tuple(int(v) for v in row) for row in mat) for mat in matrices),
            OBSERVABLE_REGISTRY[observable_name],
            completely_commuting,
        )

    @property
    def maps(self) -> tuple[TorusMap, ...]:
        return tuple(TorusMap(mat) for mat in self.matrices)

    @property
    def dim(self) -> int:
        return len(self.matrices[0])

    @property
    def d(self) -> int:
        return len(self.matrices)

    @property
    def centering(self) -> float:
        return float(self.observable.mean.real)

    def digest(self) -> str:
        return digest_of(
            {
                "kind": "torus",
                "matrices": [[list(r) for r in mat] for mat in self.matrices],
                "observable": self.observable.to_json_obj(),
                "cc": self.completely_commuting,
            }
        )

    def seed_digest(self) -> str:
        """Digest of what shapes the draws: the start point depends on the
        torus dimension and the depth policy (matrix norms), not on the
        observable."""
        return digest_of(
            {
                "kind": "torus",
                "matrices": [[list(r) for r in mat] for mat in self.matrices],
            }
        )


# -- sample grids ------------------------------------------------------------------

_GRID_MAGIC = b"FLDGRID1"


@dataclass(frozen=True)
class SampleGrid:
    """One realization of the field on the rectangle [1, n].

    ``values[k-1]`` holds the cell at multi-index ``k`` (1-based in the
    mathematical indexing, 0-based in storage).
    """

    shape: tuple[int, ...]
    values: np.ndarray
    provenance: dict

    def __post_init__(self) -> None:
        if tuple(self.values.shape) != tuple(self.shape):
            raise ValueError("values shape disagrees with declared shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid contains non-finite entries")

    def dump(self, path) -> None:
        """Raw little-endian float64 dump with a 32-byte header."""
        d = len(self.shape)
        if d > 5:
            raise ValueError("raw format supports up to 5 axes")
        dims = list(self.shape) + [0] * (5 - d)
        header = _GRID_MAGIC + struct.pack("<I", d) + struct.pack("<5I", *dims)
        assert len(header) == 32
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SampleGrid":
        with open(path, "rb") as fh:
            header = fh.read(32)
            if len(header) != 32 or header[:8] != _GRID_MAGIC:
                raise ValueError("not a raw grid file")
            d = struct.unpack("<I", header[8:12])[0]
            dims = struct.unpack("<5I", header[12:32])[:d]
            values = np.frombuffer(fh.read(), dtype="<f8").reshape(dims).copy()
        return cls(tuple(dims), values, {"loaded_from": str(path)})

    def content_digest(self) -> str:
        return digest_of(
            {
                "shape": list(self.shape),
                "bytes": np.ascontiguousarray(self.values, dtype="<f8")
                .tobytes()
                .hex(),
            }
        )


# -- linear field sampling -----------------------------------------------------------


def _linear_panel_shape(n: Sequence[int], r: int) -> tuple[int, int]:
    return n[0] + r, n[1] + r


def _linear_one(spec: LinearFieldSpec, n, master_seed: int, rep: int) -> np.ndarray:
    rng = replicate_rng(master_seed, rep, spec.seed_digest())
    r = spec.radius()
    panel = spec.innovation.sample(rng, _linear_panel_shape(n, r))
    kernel = spec.kernel()
    if spec.kappa == 0:
        y = np.zeros(tuple(n))
    else:
        y = fftconvolve(panel, kernel, mode="valid")
    return spec.h.fn(y) - spec.centering


def sample_linear(spec: LinearFieldSpec, n, seed: int, rep: int = 0) -> SampleGrid:
    """One realization of the observed linear field on the rectangle [1, n]."""
    n = tuple(int(v) for v in n)
    if len(n) != 2:
        raise ValueError("linear fields are two-indexed; n must have length 2")
    if any(v < 1 for v in n):
        raise ValueError("shape entries must be >= 1")
    values = _linear_one(spec, n, seed, rep)
    return SampleGrid(
        n, values, {"spec": spec.digest(), "seed": seed, "replicate": rep}
    )


def sample_linear_batch(
    spec: LinearFieldSpec, n, reps: int, seed: int, workers: int | None = None
) -> np.ndarray:
    """Stacked replicates, shape (reps, n1, n2); worker count never changes values."""
    n = tuple(int(v) for v in n)
    if len(n) != 2:
        raise ValueError("linear fields are two-indexed; n must have length 2")
    out = map_replicates(_linear_one, reps, workers, (spec, n, seed))
    return np.stack(out, axis=0)


def estimate_centering(
    spec: LinearFieldSpec, reps: int = 64, seed: int = 0, block: int = 32
) -> tuple[float, float]:
    """Monte Carlo estimate of E h(Y) with replicate-level standard error."""
    if reps < 2:
        raise ValueError("need at least 2 replicates")
    base = replace(spec, centering=0.0)
    means = []
    for rep in range(reps):
        grid = _linear_one(base, (block, block), seed, rep)
        means.append(float(np.mean(grid)))
    arr = np.array(means)
    return float(np.mean(arr)), float(np.std(arr, ddof=1) / math.sqrt(reps))


def linear_truncation_gap(
    spec: LinearFieldSpec, n, seed: int, rep: int = 0
) -> float:
    """Largest cellwise change from doubling the truncation radius.

    Both truncations share one innovation panel with aligned absolute
    indexing, so the gap isolates the neglected coefficient tail.
    """
    n = tuple(int(v) for v in n)
    r1 = spec.radius()
    r2 = max(2 * r1, 1)
    rng = replicate_rng(seed, rep, spec.seed_digest())
    panel = spec.innovation.sample(rng, (n[0] + r2, n[1] + r2))
    i2, j2 = np.indices((r2 + 1, r2 + 1))
    kernel2 = COEFF_RULES[spec.coeff_rule](i2, j2, spec.kappa, spec.rho)
    y2 = fftconvolve(panel, kernel2, mode="valid")
    off = r2 - r1
    y1 = fftconvolve(panel[off:, off:], spec.kernel(), mode="valid")
    return float(np.max(np.abs(spec.h.fn(y1) - spec.h.fn(y2))))


# -- torus field sampling --------------------------------------------------------------


@dataclass(frozen=True)
class TorusState:
    """Exact dyadic torus point: numerators over the modulus 2^bits."""

    numerators: tuple[int, ...]
    bits: int

    def floats(self) -> tuple[float, ...]:
        shift = self.bits - 53
        return tuple(
            math.ldexp(float(num >> shift), -53) for num in self.numerators
        )


def _bits_policy(spec: TorusFieldSpec, horizon: Sequence[int]) -> int:
    total = 64
    for mat, steps in zip(spec.matrices, horizon):
        norm = max(sum(abs(v) for v in row) for row in mat)
        total += int(steps) * max(1, math.ceil(math.log2(max(2, norm))))
    return max(128, total)


def torus_initial_state(
    spec: TorusFieldSpec, horizon, seed: int, rep: int = 0
) -> TorusState:
    """Uniform dyadic start point deep enough for the given sampling horizon."""
    bits = _bits_policy(spec, horizon)
    rng = replicate_rng(seed, rep, spec.seed_digest())
    nums = tuple(random_bigint(rng, bits) for _ in range(spec.dim))
    return TorusState(nums, bits)


def _matvec_mod(rows, nums: tuple[int, ...], mask: int) -> tuple[int, ...]:
    return tuple(
        sum(row[j] * nums[j] for j in range(len(nums))) & mask for row in rows
    )


def advance_state(spec: TorusFieldSpec, state: TorusState, ell) -> TorusState:
    """Apply ``A_1^{l_1} ... A_d^{l_d}`` exactly to the dyadic point."""
    mask = (1 << state.bits) - 1
    nums = state.numerators
    for mat, steps in zip(spec.matrices, ell):
        for _ in range(int(steps)):
            nums = _matvec_mod(mat, nums, mask)
    return TorusState(nums, state.bits)


def _orbit_coords(spec: TorusFieldSpec, n, state: TorusState) -> np.ndarray:
    d, m = spec.d, spec.dim
    mask = (1 << state.bits) - 1
    shift = state.bits - 53
    coords = np.empty(tuple(n) + (m,), dtype=float)

    def fill(axis: int, nums: tuple[int, ...], idx: tuple[int, ...]) -> None:
        for k in range(n[axis]):
            nums = _matvec_mod(spec.matrices[axis], nums, mask)
            if axis == d - 1:
                pos = idx + (k,)
                for j in range(m):
                    coords[pos + (j,)] = math.ldexp(float(nums[j] >> shift), -53)
            else:
                fill(axis + 1, nums, idx + (k,))

    fill(0, state.numerators, ())
    return coords


def sample_torus_from_state(spec: TorusFieldSpec, n, state: TorusState) -> SampleGrid:
    """Grid X_k = f(A^k x) - mean(f) for k in [1, n], from an explicit start."""
    n = tuple(int(v) for v in n)
    if len(n) != spec.d:
        raise ValueError("shape length must match the number of maps")
    if any(v < 1 for v in n):
        raise ValueError("shape entries must be >= 1")
    coords = _orbit_coords(spec, n, state)
    f = spec.observable
    vals = f.evaluate_real(coords[..., 0] if spec.dim == 1 else coords)
    vals = vals - spec.centering
    return SampleGrid(n, vals, {"spec": spec.digest(), "bits": state.bits})


def _torus_one(spec: TorusFieldSpec, n, master_seed: int, rep: int) -> np.ndarray:
    state = torus_initial_state(spec, n, master_seed, rep)
    return sample_torus_from_state(spec, n, state).values


def sample_torus(spec: TorusFieldSpec, n, seed: int, rep: int = 0) -> SampleGrid:
    n = tuple(int(v) for v in n)
    values = _torus_one(spec, n, seed, rep)
    return SampleGrid(
        n, values, {"spec": spec.digest(), "seed": seed, "replicate": rep}
    )


def sample_torus_batch(
    spec: TorusFieldSpec, n, reps: int, seed: int, workers: int | None = None
) -> np.ndarray:
    """Stacked replicates, shape (reps,) + n; order fixed by replicate index."""
    n = tuple(int(v) for v in n)
    out = map_replicates(_torus_one, reps, workers, (spec, n, seed))
    return np.stack(out, axis=0)


# -- exact covariance series ------------------------------------------------------------


def _pushed(f: FourierObservable, matrix) -> FourierObservable:
    at = tuple(zip(*matrix))
    m = len(at)
    return FourierObservable(
        f.dim,
        [
            (tuple(sum(at[i][j] * k[j] for j in range(m)) for i in range(m)), v)
            for k, v in f.terms.items()
        ],
    )


def _matmul_int(a, b):
    m = len(a)
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(m)) for j in range(m))
        for i in range(m)
    )


def exact_sigma2_torus(spec: TorusFieldSpec, max_range: int = 40) -> float:
    """``sum_k Cov(X_{k+}, X_{k-})`` evaluated exactly on Fourier coefficients.

    Each term matches frequencies of the two pushed observables; a term is
    nonzero only when some pushed frequency pair cancels.  The lattice sum is
    enlarged until the three outermost shells vanish identically, which the
    expanding matrices guarantee for all larger shells in the families
    supported here.
    """
    if not isinstance(spec.observable, FourierObservable):
        raise TypeError("exact covariance needs a Fourier observable")
    f0 = spec.observable.centered()
    if not f0.terms:
        return 0.0
    d, m = spec.d, spec.dim
    identity = tuple(tuple(int(i == j) for j in range(m)) for i in range(m))
    rng_limit = max_range
    while rng_limit <= 160:
        # per-axis matrix powers A_i^0 .. A_i^limit, built once
        axis_powers = []
        for mat in spec.matrices:
            powers = [identity]
            for _ in range(rng_limit):
                powers.append(_matmul_int(powers[-1], mat))
            axis_powers.append(powers)

        def push_at(exponents) -> FourierObservable:
            mat = axis_powers[0][exponents[0]]
            for axis in range(1, d):
                mat = _matmul_int(mat, axis_powers[axis][exponents[axis]])
            return _pushed(f0, mat)

        shell_sums: dict[int, float] = {}
        total = 0.0
        for k in itertools.product(range(-rng_limit, rng_limit + 1), repeat=d):
            shell = max(abs(v) for v in k)
            a = tuple(max(v, 0) for v in k)
            b = tuple(max(-v, 0) for v in k)
            term = expect_product(push_at(a), push_at(b)).real
            total += term
            shell_sums[shell] = shell_sums.get(shell, 0.0) + abs(term)
        outer = [shell_sums.get(s, 0.0) for s in range(rng_limit - 2, rng_limit + 1)]
        if all(v == 0.0 for v in outer):
            return total
        rng_limit *= 2
    raise ArithmeticError("covariance series did not settle within the search range")
