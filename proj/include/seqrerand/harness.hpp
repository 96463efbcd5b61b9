#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqrerand/budget.hpp"
#include "seqrerand/datagen.hpp"
#include "seqrerand/linalg.hpp"
#include "seqrerand/rng.hpp"

namespace seqrerand {

enum class ExperimentKind { IdealSweep, SimulatedCovariates, DatasetDesigns, MethodComparison };

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::IdealSweep;
    int p = 2;
    std::vector<long> group_sizes;           // units per group, enrollment order
    std::vector<std::vector<long>> designs;  // DatasetDesigns: candidate partitions
    std::vector<long> s_grid;                // total budgets, strictly increasing
    CovariateDistribution distribution = CovariateDistribution::StdNormal;
    std::vector<double> coin_biases;         // MethodComparison: q values in (1/2, 1]
    long replicates = 20000;
    std::uint64_t master_seed = 0;
    long floor = -1;  // -1: derive from the total budget
    long cap_multiplier = 10;
    int workers = 1;
    double omega = 0.5;

    void validate() const;
};

std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);

// FNV-1a over the canonical JSON form; any field change moves the hash
std::uint64_t config_hash(const ExperimentConfig& config);

struct ReportRow {
    std::string label;
    int p = 0;
    int k_groups = 0;
    long s_total = 0;
    double e_m = 0.0;          // single-stage reference: analytic or estimated
    double e_mk = 0.0;         // fallback-inclusive mean of the final statistic
    double se_mk = 0.0;        // sample SD / sqrt(replicates)
    double ratio = 0.0;        // e_m / e_mk
    double e_mk_strict = 0.0;  // mean over replicates where no group fell back
    double fallback_rate = 0.0;
    double attempts_mean = 0.0;  // mean total draws per replicate; NaN for ideal chains
};

struct Provenance {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    long replicates = 0;
};

struct MonteCarloReport {
    std::vector<ReportRow> rows;
    Provenance provenance;
};

// E(M) of accepted single-stage draws: p * s * F_{chi^2_{p+2}}(chi2_quantile(1/s, p))
double analytic_complete_mean(int p, long s);

// One row per budget in s_grid; statistics drawn from the ideal chain, the
// reference column filled with the analytic single-stage mean.
MonteCarloReport experiment_ideal_sweep(const ExperimentConfig& config);

// Covariates regenerated every replicate; runs the sequential procedure and a
// single-stage run with the same total budget on the same draw of X.
MonteCarloReport experiment_simulated(const ExperimentConfig& config);

// One row per candidate partition of the dataset; unit arrival order is
// resampled every replicate. A single-entry design is the single-stage method.
MonteCarloReport experiment_designs(const CovariateDataset& base,
                                    const ExperimentConfig& config);

// Pairwise biased-coin baseline at each q in coin((1/2,1]) on the dataset,
// arrival order resampled every replicate, covariance fixed at the full-sample
// estimate.
MonteCarloReport experiment_compare(const CovariateDataset& base,
                                    const ExperimentConfig& config);

enum class ReportFormat { Csv, Json };

std::string report_to_csv(const MonteCarloReport& report);
std::string report_to_json(const MonteCarloReport& report);
MonteCarloReport report_from_json(const std::string& text);

// x = S, one ratio series per (p, K); rows without a budget are skipped
std::string plot_data_csv(const MonteCarloReport& report);

// writes the report at `path` plus a plot-data companion at <stem>_plot.csv
void emit_report(const MonteCarloReport& report, ReportFormat format,
                 const std::string& path);

// compensated (Neumaier) sum; keeps aggregation independent of partitioning
double neumaier_total(const std::vector<double>& values);

}  // namespace seqrerand
