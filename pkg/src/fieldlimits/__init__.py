"""Exact operator algebra and Monte Carlo verification for limit theorems
of stationary random fields.

Layout:

- ``quantile``: quantile-function profiles and the summability conditions.
- ``transfer``: integer torus endomorphisms, Fourier observables, the two
  transfer operators and their exact identities, the L1 modulus machinery.
- ``field_models``: samplers for the two-index linear field and for
  commuting-endomorphism orbit fields.
- ``coupling``: dependence coefficients (tau, theta, gamma) with explicit
  bounds for the linear field.
- ``ortho``: reverse martingale-plus-coboundary decomposition in two
  parameters with exact verification.
- ``sums``: partial-sum tables, the interpolated sheet process, variance
  estimators.
- ``limits``: statistical gates for the normal limit, the sheet
  covariances, tightness tails, and the maximal-moment ratio.
- ``cli``: config-driven experiment runner.
"""

from .coupling import (
    DependenceProfile,
    ProfileEntry,
    ThetaEstimate,
    default_k_const,
    estimate_tau_linear,
    estimate_theta,
    gamma_profile,
    lambda_bound,
    tau_grid,
    theta_profile,
    theta_product_sup,
)
from .field_models import (
    InnovationLaw,
    LinearFieldSpec,
    TorusFieldSpec,
    exact_sigma2_torus,
    innovation_law,
    sample_linear,
    sample_torus,
    sample_torus_batch,
)
from .limits import (
    DEFAULT_T_GRID,
    VerificationReport,
    clt_check,
    fclt_fdd_check,
    fdd_values,
    ks_statistic,
    ks_threshold,
    normal_cdf,
    normalized_sums,
    rosenthal_ratio,
    tightness_tail,
)
from .ortho import (
    Decomposition,
    VerifyReport,
    adapted_diagnostic,
    build_reverse,
    l2_gap,
    verify_orthomartingale,
)
from .parallel import map_replicates
from .quantile import (
    ConditionReport,
    QuantileProfile,
    classify_partial_sums,
    clt_condition,
    constant_profile,
    empirical_quantile,
    g_of,
    linear_profile,
    r_at,
    theta_inverse,
    tightness_condition,
)
from .sums import Sigma2Estimate, SumProcess, sigma2
from .transfer import (
    OBSERVABLE_REGISTRY,
    FourierObservable,
    IdentityReport,
    TorusMap,
    check_identities,
    condmodcont_integral,
    cosine,
    coset_representatives,
    expect_product,
    k_power_l1,
    l1_modulus,
    l1_norm,
    modulus_lemmas_check,
    sine,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConditionReport",
    "QuantileProfile",
    "classify_partial_sums",
    "clt_condition",
    "constant_profile",
    "empirical_quantile",
    "g_of",
    "linear_profile",
    "r_at",
    "theta_inverse",
    "tightness_condition",
    "OBSERVABLE_REGISTRY",
    "FourierObservable",
    "IdentityReport",
    "TorusMap",
    "check_identities",
    "condmodcont_integral",
    "cosine",
    "coset_representatives",
    "expect_product",
    "k_power_l1",
    "l1_modulus",
    "l1_norm",
    "modulus_lemmas_check",
    "sine",
    "InnovationLaw",
    "LinearFieldSpec",
    "TorusFieldSpec",
    "exact_sigma2_torus",
    "innovation_law",
    "sample_linear",
    "sample_torus",
    "sample_torus_batch",
    "DependenceProfile",
    "ProfileEntry",
    "ThetaEstimate",
    "default_k_const",
    "estimate_tau_linear",
    "estimate_theta",
    "gamma_profile",
    "lambda_bound",
    "tau_grid",
    "theta_profile",
    "theta_product_sup",
    "Decomposition",
    "VerifyReport",
    "adapted_diagnostic",
    "build_reverse",
    "l2_gap",
    "verify_orthomartingale",
    "Sigma2Estimate",
    "SumProcess",
    "sigma2",
    "DEFAULT_T_GRID",
    "VerificationReport",
    "clt_check",
    "fclt_fdd_check",
    "fdd_values",
    "ks_statistic",
    "ks_threshold",
    "normal_cdf",
    "normalized_sums",
    "rosenthal_ratio",
    "tightness_tail",
    "map_replicates",
]
