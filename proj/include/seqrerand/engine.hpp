#pragma once

#include <vector>

#include "seqrerand/budget.hpp"
#include "seqrerand/linalg.hpp"
#include "seqrerand/rng.hpp"

namespace seqrerand {

// Iteration state while groups are being assigned one after another.
struct SequentialState {
    int completed = 0;
    AssignmentVector fixed_assignments;
    double m_prev = 0.0;
    Vector weighted_diff_sum;  // homogeneous: sum of u_j * D_j over fixed groups
    Vector z_accumulator;      // heterogeneous: sum of sqrt(u_j) * Z_j
};

struct TrialOutcome {
    AssignmentVector assignments;
    std::vector<double> m_sequence;
    std::vector<long> attempts;
    std::vector<std::uint8_t> fallback_flags;
    double final_m = 0.0;
};

// Additive-effect response surface fitted on top of a baseline outcome:
// y_i(w) = beta0 + beta . x_i + tau * w + noise_i.
struct OutcomeModel {
    double beta0 = 0.0;
    Vector beta;
    double tau = 0.0;
    Vector noise;
};

AssignmentVector random_balanced_assignment(long units, double omega, Rng& rng);

// Group-by-group rerandomization: redraw each group's assignment until the
// running balance statistic clears its acceptance threshold, give up after
// cap_multiplier * s_k attempts and keep the best draw seen.
TrialOutcome run_sequential(const CovariateDataset& dataset, const BudgetPlan& plan,
                            Rng& rng);

// Single-stage rerandomization of the whole dataset with budget s.
TrialOutcome run_complete(const CovariateDataset& dataset, long s, Rng& rng,
                          long cap_multiplier = 10);

// Biased-coin pairwise baseline: per pair of units, pick the assignment with
// the smaller running statistic with probability q (coin_bias), computed
// against a fixed, externally supplied covariance.
TrialOutcome run_pairwise_qin(const CovariateDataset& dataset, double coin_bias,
                              const SpdMatrix& cov_known, Rng& rng);

// Per-group balance statistics recomputed from scratch for a full assignment.
std::vector<double> recompute_m_sequence(const CovariateDataset& dataset,
                                         const AssignmentVector& assignments);

double tau_hat(const Vector& y, const AssignmentVector& w);

// Least-squares projection of a baseline outcome onto (1, X); residuals land
// in model.noise.
OutcomeModel fit_outcome_model(const Matrix& x, const Vector& y0, double tau);

// Baseline outcome with a prescribed in-sample signal share r2.
OutcomeModel synth_outcome_model(const Matrix& x, double r2, double tau, Rng& rng);

Vector simulate_outcomes(const OutcomeModel& model, const Matrix& x,
                         const AssignmentVector& w);

double variance_reduction(double nu, double r2);

}  // namespace seqrerand
