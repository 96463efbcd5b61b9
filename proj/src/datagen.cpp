#include "seqrerand/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "seqrerand/distributions.hpp"
#include "seqrerand/engine.hpp"
#include "seqrerand/errors.hpp"

namespace seqrerand {

CovariateDistribution distribution_from_name(const std::string& name) {
    if (name == "std-normal") return CovariateDistribution::StdNormal;
    if (name == "exponential") return CovariateDistribution::Exponential;
    if (name == "chi-squared-1") return CovariateDistribution::ChiSquared1;
    if (name == "weibull-0.6") return CovariateDistribution::Weibull06;
    if (name == "log-normal") return CovariateDistribution::LogNormal;
    throw DomainError("unknown covariate distribution: " + name);
}

std::string distribution_name(CovariateDistribution dist) {
    switch (dist) {
        case CovariateDistribution::StdNormal: return "std-normal";
        case CovariateDistribution::Exponential: return "exponential";
        case CovariateDistribution::ChiSquared1: return "chi-squared-1";
        case CovariateDistribution::Weibull06: return "weibull-0.6";
        case CovariateDistribution::LogNormal: return "log-normal";
    }
    throw DomainError("unknown covariate distribution");
}

double excess_kurtosis(CovariateDistribution dist) {
    switch (dist) {
        case CovariateDistribution::StdNormal: return 0.0;
        case CovariateDistribution::Exponential: return 6.0;
        case CovariateDistribution::ChiSquared1: return 12.0;
        case CovariateDistribution::Weibull06: {
            auto mom = [](double m) { return std::tgamma(1.0 + m / 0.6); };
            const double m1 = mom(1), m2 = mom(2), m3 = mom(3), m4 = mom(4);
            const double var = m2 - m1 * m1;
            return (m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1 * m1 * m1 * m1) /
                       (var * var) - 3.0;
        }
        case CovariateDistribution::LogNormal: {
            const double e = std::exp(1.0);
            return e * e * e * e + 2.0 * e * e * e + 3.0 * e * e - 6.0;
        }
    }
    throw DomainError("unknown covariate distribution");
}

std::vector<double> sample_ideal_chain(int p, const std::vector<long>& group_sizes,
                                       const BudgetPlan& plan, Rng& rng) {
    if (plan.per_group.size() != group_sizes.size()) {
        throw ShapeMismatch("sample_ideal_chain: plan does not match the group count");
    }
    const std::size_t groups = group_sizes.size();
    std::vector<double> ms(groups);
    double m_prev = 0.0;
    double u_prefix = 0.0;
    for (std::size_t k = 0; k < groups; ++k) {
        u_prefix += static_cast<double>(group_sizes[k]);
        const double q = u_prefix / static_cast<double>(group_sizes[k]);
        const double lam = (q - 1.0) * m_prev;
        const double a =
            threshold(p, group_sizes, static_cast<int>(k) + 1, m_prev, plan.per_group[k]);
        if (std::isinf(a)) {
            m_prev = sample_nc_chi2(p, lam, rng) / q;
        } else {
            m_prev = sample_truncated({{p, lam}, q * a}, rng) / q;
        }
        ms[k] = m_prev;
    }
    return ms;
}

Matrix gen_covariates(long units, int p, CovariateDistribution dist, Rng& rng) {
    if (p < 1 || units < p + 2) {
        throw DomainError("gen_covariates: need at least p + 2 units");
    }
    Matrix x(p, units);
    for (long j = 0; j < units; ++j) {
        for (int i = 0; i < p; ++i) {
            switch (dist) {
                case CovariateDistribution::StdNormal:
                    x(i, j) = draw_normal(rng);
                    break;
                case CovariateDistribution::Exponential:
                    x(i, j) = -std::log1p(-uniform01(rng));
                    break;
                case CovariateDistribution::ChiSquared1: {
                    const double z = draw_normal(rng);
                    x(i, j) = z * z;
                    break;
                }
                case CovariateDistribution::Weibull06:
                    x(i, j) = std::pow(-std::log1p(-uniform01(rng)), 1.0 / 0.6);
                    break;
                case CovariateDistribution::LogNormal:
                    x(i, j) = std::exp(draw_normal(rng));
                    break;
            }
        }
    }
    return x;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace

IngestionSchema parse_schema(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("schema: invalid JSON: ") + e.what());
    }
    if (!doc.contains("columns") || !doc["columns"].is_array() || doc["columns"].empty()) {
        throw SchemaError("schema: needs a nonempty 'columns' array");
    }
    IngestionSchema schema;
    for (const auto& col : doc["columns"]) {
        ColumnSpec spec;
        if (!col.contains("name") || !col["name"].is_string()) {
            throw SchemaError("schema: every column needs a string 'name'");
        }
        spec.name = col["name"].get<std::string>();
        const std::string kind = col.value("kind", std::string("continuous"));
        if (kind == "categorical") {
            spec.categorical = true;
            if (!col.contains("map") || !col["map"].is_object()) {
                throw SchemaError("schema: categorical column '" + spec.name +
                                  "' needs a 'map' object");
            }
            bool has0 = false, has1 = false;
            for (const auto& [level, value] : col["map"].items()) {
                if (!value.is_number_integer() ||
                    (value.get<int>() != 0 && value.get<int>() != 1)) {
                    throw SchemaError("schema: map values for '" + spec.name +
                                      "' must be 0 or 1");
                }
                spec.levels[level] = value.get<int>();
                (value.get<int>() == 0 ? has0 : has1) = true;
            }
            if (!has0 || !has1) {
                throw SchemaError("schema: map for '" + spec.name +
                                  "' must cover both 0 and 1");
            }
        } else if (kind != "continuous") {
            throw SchemaError("schema: unknown kind '" + kind + "' for column '" +
                              spec.name + "'");
        }
        spec.missing_token = col.value("missing_token", std::string());
        schema.columns.push_back(std::move(spec));
    }
    return schema;
}

CovariateDataset ingest_csv(const std::string& path, const IngestionSchema& schema,
                            Rng& rng) {
    if (schema.columns.empty()) throw SchemaError("schema: no columns");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file", 0, "");
    const std::vector<std::string> header = split_csv_line(line);

    const std::size_t p = schema.columns.size();
    std::vector<std::size_t> col_index(p);
    for (std::size_t i = 0; i < p; ++i) {
        auto it = std::find(header.begin(), header.end(), schema.columns[i].name);
        if (it == header.end()) {
            throw SchemaError("column '" + schema.columns[i].name + "' not in header");
        }
        col_index[i] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::vector<double>> values(p);   // NaN marks missing
    long row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const std::vector<std::string> cells = split_csv_line(line);
        for (std::size_t i = 0; i < p; ++i) {
            const ColumnSpec& spec = schema.columns[i];
            if (col_index[i] >= cells.size()) {
                throw ParseError("row too short", row, spec.name);
            }
            const std::string& cell = cells[col_index[i]];
            if (cell.empty() || (!spec.missing_token.empty() && cell == spec.missing_token)) {
                values[i].push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            if (spec.categorical) {
                auto it = spec.levels.find(cell);
                if (it == spec.levels.end()) {
                    throw ParseError("unmapped level '" + cell + "'", row, spec.name);
                }
                values[i].push_back(static_cast<double>(it->second));
            } else {
                char* end = nullptr;
                const double v = std::strtod(cell.c_str(), &end);
                if (end != cell.c_str() + cell.size()) {
                    throw ParseError("not a number: '" + cell + "'", row, spec.name);
                }
                values[i].push_back(v);
            }
        }
    }
    if (row < 2) throw ParseError("need at least two data rows", row, "");

    CovariateDataset ds;
    ds.data = Matrix(static_cast<long>(p), row);
    for (std::size_t i = 0; i < p; ++i) {
        std::vector<double> observed;
        observed.reserve(values[i].size());
        for (double v : values[i]) {
            if (!std::isnan(v)) observed.push_back(v);
        }
        if (observed.empty()) {
            throw AllMissingColumn("column '" + schema.columns[i].name +
                                   "' has no observed values");
        }
        for (long j = 0; j < row; ++j) {
            double v = values[i][static_cast<std::size_t>(j)];
            if (std::isnan(v)) {
                auto pick = static_cast<std::size_t>(uniform01(rng) *
                                                     static_cast<double>(observed.size()));
                if (pick >= observed.size()) pick = observed.size() - 1;
                v = observed[pick];
            }
            ds.data(static_cast<long>(i), j) = v;
        }
    }
    ds.group_units = {row};
    ds.omega = 0.5;
    ds.mode = CovarianceMode::Homogeneous;
    return ds;
}

CovariateDataset surrogate_ucec(Rng& rng) {
    const long units = 548;
    const int p = 12;
    CovariateDataset ds;
    ds.data = Matrix(p, units);

    for (long j = 0; j < units; ++j) {
        ds.data(0, j) = draw_normal(rng);                              // bell-shaped
        ds.data(1, j) = -std::log1p(-uniform01(rng));                  // skewed
        ds.data(2, j) = std::exp(draw_normal(rng));                    // skewed
        const double z = draw_normal(rng);
        ds.data(3, j) = z * z;                                         // skewed
    }

    const double minor_freq[8] = {0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.08, 0.05};
    for (int b = 0; b < 8; ++b) {
        const long ones = std::lround(minor_freq[b] * static_cast<double>(units));
        AssignmentVector col = random_balanced_assignment(
            units, static_cast<double>(ones) / static_cast<double>(units), rng);
        for (long j = 0; j < units; ++j) {
            ds.data(4 + b, j) = static_cast<double>(col[static_cast<std::size_t>(j)]);
        }
    }

    ds.group_units = {units};
    ds.omega = 0.5;
    ds.mode = CovarianceMode::Homogeneous;
    return ds;
}

}  // namespace seqrerand
