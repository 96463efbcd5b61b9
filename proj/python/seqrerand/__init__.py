"""Sequential rerandomization for covariate balance in group-sequential experiments."""

from ._core import (
    BudgetPlan,
    DomainError,
    Error,
    InfeasibleBudget,
    RankDeficient,
    TrialOutcome,
    UnderflowError,
    allocate,
    analytic_complete_mean,
    chi2_cdf,
    chi2_quantile,
    cp_constant,
    gen_covariates,
    nc_chi2_cdf,
    nc_chi2_quantile,
    nc_chi2_truncated_mean,
    recompute_m_sequence,
    run_complete,
    run_pairwise_qin,
    run_sequential,
    sample_ideal_chain,
    surrogate_ucec,
    tau_hat,
    threshold,
)

__all__ = [
    "BudgetPlan",
    "DomainError",
    "Error",
    "InfeasibleBudget",
    "RankDeficient",
    "TrialOutcome",
    "UnderflowError",
    "allocate",
    "analytic_complete_mean",
    "chi2_cdf",
    "chi2_quantile",
    "cp_constant",
    "gen_covariates",
    "nc_chi2_cdf",
    "nc_chi2_quantile",
    "nc_chi2_truncated_mean",
    "recompute_m_sequence",
    "run_complete",
    "run_pairwise_qin",
    "run_sequential",
    "sample_ideal_chain",
    "surrogate_ucec",
    "tau_hat",
    "threshold",
]
