#pragma once

#include <map>
#include <string>
#include <vector>

#include "seqrerand/budget.hpp"
#include "seqrerand/linalg.hpp"
#include "seqrerand/rng.hpp"

namespace seqrerand {

enum class CovariateDistribution { StdNormal, Exponential, ChiSquared1, Weibull06, LogNormal };

CovariateDistribution distribution_from_name(const std::string& name);
std::string distribution_name(CovariateDistribution dist);

// Population excess kurtosis of each family (0, 6, 12, ~37.5, ~111).
double excess_kurtosis(CovariateDistribution dist);

// Draw the accepted balance statistics M_1..M_K directly from their
// conditional truncated noncentral chi-squared laws; no covariates involved.
std::vector<double> sample_ideal_chain(int p, const std::vector<long>& group_sizes,
                                       const BudgetPlan& plan, Rng& rng);

// p x units matrix of i.i.d. draws.
Matrix gen_covariates(long units, int p, CovariateDistribution dist, Rng& rng);

struct ColumnSpec {
    std::string name;
    bool categorical = false;
    std::map<std::string, int> levels;  // categorical: level -> {0,1}
    std::string missing_token;          // empty cells always count as missing
};

struct IngestionSchema {
    std::vector<ColumnSpec> columns;
};

// Schema document: {"columns": [{"name", "kind", "map"?, "missing_token"?}]}.
IngestionSchema parse_schema(const std::string& json_text);

// Read a headered CSV, map categoricals through the schema, and fill each
// missing cell with a uniform draw from that column's observed values.
CovariateDataset ingest_csv(const std::string& path, const IngestionSchema& schema,
                            Rng& rng);

// Synthetic stand-in for a 12-covariate clinical table: 548 units, one
// bell-shaped and three skewed continuous columns, eight binaries of which
// two are heavily imbalanced. Single group; callers regroup as needed.
CovariateDataset surrogate_ucec(Rng& rng);

}  // namespace seqrerand
