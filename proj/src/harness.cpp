#include "seqrerand/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "seqrerand/distributions.hpp"
#include "seqrerand/engine.hpp"
#include "seqrerand/errors.hpp"

namespace seqrerand {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string format_groups(const std::vector<long>& sizes) {
    const bool equal = sizes.size() > 1 &&
                       std::all_of(sizes.begin(), sizes.end(),
                                   [&](long u) { return u == sizes.front(); });
    if (equal) return std::to_string(sizes.size()) + "x" + std::to_string(sizes.front());
    std::string out;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(sizes[i]);
    }
    return out;
}

// fn(r) must touch only replicate r's slots; reduction happens afterwards in
// index order, so results do not depend on the worker count
template <typename Fn>
void for_each_replicate(long replicates, int workers, Fn&& fn) {
    if (workers <= 1 || replicates < 2) {
        for (long r = 0; r < replicates; ++r) fn(r);
        return;
    }
    std::atomic<long> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto drain = [&] {
        for (;;) {
            const long r = next.fetch_add(1);
            if (r >= replicates) return;
            try {
                fn(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const long n = std::min<long>(workers, replicates);
    pool.reserve(n);
    for (long t = 0; t < n; ++t) pool.emplace_back(drain);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

double neumaier_mean(const std::vector<double>& v) {
    return v.empty() ? kNan : neumaier_total(v) / static_cast<double>(v.size());
}

struct CellData {
    std::vector<double> mk;
    std::vector<double> attempts;  // empty when the notion does not apply
    std::vector<std::uint8_t> fell;
};

ReportRow summarize_cell(std::string label, int p, int k_groups, long s_total,
                         double e_m, const CellData& cell) {
    ReportRow row;
    row.label = std::move(label);
    row.p = p;
    row.k_groups = k_groups;
    row.s_total = s_total;
    row.e_m = e_m;

    const long n = static_cast<long>(cell.mk.size());
    row.e_mk = neumaier_mean(cell.mk);
    std::vector<double> sq(cell.mk.size());
    for (long r = 0; r < n; ++r) {
        const double d = cell.mk[r] - row.e_mk;
        sq[r] = d * d;
    }
    row.se_mk = n > 1 ? std::sqrt(neumaier_total(sq) / (n - 1) / n) : kNan;
    row.ratio = row.e_m / row.e_mk;

    std::vector<double> kept;
    long fell_count = 0;
    for (long r = 0; r < n; ++r) {
        if (cell.fell[r]) {
            ++fell_count;
        } else {
            kept.push_back(cell.mk[r]);
        }
    }
    row.e_mk_strict = neumaier_mean(kept);
    row.fallback_rate = static_cast<double>(fell_count) / n;
    row.attempts_mean = cell.attempts.empty() ? kNan : neumaier_mean(cell.attempts);
    return row;
}

std::string kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::IdealSweep: return "ideal-sweep";
        case ExperimentKind::SimulatedCovariates: return "simulated-covariates";
        case ExperimentKind::DatasetDesigns: return "dataset-designs";
        case ExperimentKind::MethodComparison: return "method-comparison";
    }
    throw DomainError("unknown experiment kind");
}

ExperimentKind kind_from_name(const std::string& name) {
    if (name == "ideal-sweep") return ExperimentKind::IdealSweep;
    if (name == "simulated-covariates") return ExperimentKind::SimulatedCovariates;
    if (name == "dataset-designs") return ExperimentKind::DatasetDesigns;
    if (name == "method-comparison") return ExperimentKind::MethodComparison;
    throw SchemaError("unknown experiment kind '" + name + "'");
}

Matrix permute_columns(const Matrix& x, Rng& rng) {
    const long n = x.cols();
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0L);
    for (long i = n - 1; i > 0; --i) {
        long j = static_cast<long>(uniform01(rng) * (i + 1));
        if (j > i) j = i;
        std::swap(order[i], order[j]);
    }
    Matrix out(x.rows(), n);
    for (long i = 0; i < n; ++i) out.col(i) = x.col(order[i]);
    return out;
}

double json_double(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? kNan : v.get<double>();
}

Provenance run_provenance(const ExperimentConfig& cfg) {
    return Provenance{config_hash(cfg), cfg.master_seed, cfg.replicates};
}

}  // namespace

double neumaier_total(const std::vector<double>& values) {
    double sum = 0.0, comp = 0.0;
    for (double x : values) {
        const double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

void ExperimentConfig::validate() const {
    if (p < 1) throw DomainError("config: p must be at least 1");
    if (replicates < 100) throw DomainError("config: need at least 100 replicates");
    if (workers < 1) throw DomainError("config: workers must be at least 1");
    if (cap_multiplier < 1) throw DomainError("config: cap multiplier must be at least 1");
    if (!(omega > 0.0 && omega < 1.0)) throw DomainError("config: omega must lie in (0,1)");
    if (floor != -1 && floor < 1) throw DomainError("config: floor must be positive (or -1)");
    for (std::size_t i = 0; i < s_grid.size(); ++i) {
        if (s_grid[i] < 1) throw DomainError("config: budgets must be positive");
        if (i > 0 && s_grid[i] <= s_grid[i - 1])
            throw DomainError("config: budget grid must be strictly increasing");
    }

    auto check_sizes = [](const std::vector<long>& sizes, const char* what) {
        if (sizes.empty()) throw DomainError(std::string("config: ") + what + " is empty");
        for (long u : sizes) {
            if (u < 1) throw DomainError(std::string("config: ") + what + " has a non-positive entry");
        }
    };
    switch (kind) {
        case ExperimentKind::IdealSweep:
        case ExperimentKind::SimulatedCovariates:
            check_sizes(group_sizes, "group sizes");
            if (s_grid.empty()) throw DomainError("config: budget grid is empty");
            break;
        case ExperimentKind::DatasetDesigns:
            if (designs.empty()) throw DomainError("config: designs list is empty");
            for (const auto& d : designs) check_sizes(d, "a design");
            if (s_grid.size() != 1)
                throw DomainError("config: designs experiment takes exactly one budget");
            break;
        case ExperimentKind::MethodComparison:
            if (coin_biases.empty()) throw DomainError("config: coin bias list is empty");
            for (double q : coin_biases) {
                if (!(q > 0.5 && q <= 1.0))
                    throw DomainError("config: coin biases must lie in (1/2, 1]");
            }
            break;
    }
}

std::string config_to_json(const ExperimentConfig& config) {
    nlohmann::json j;
    j["kind"] = kind_name(config.kind);
    j["p"] = config.p;
    j["group_sizes"] = config.group_sizes;
    j["designs"] = config.designs;
    j["s_grid"] = config.s_grid;
    j["distribution"] = distribution_name(config.distribution);
    j["coin_biases"] = config.coin_biases;
    j["replicates"] = config.replicates;
    j["master_seed"] = config.master_seed;
    j["floor"] = config.floor;
    j["cap_multiplier"] = config.cap_multiplier;
    j["workers"] = config.workers;
    j["omega"] = config.omega;
    return j.dump();
}

ExperimentConfig config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError("config is not a JSON object");
    if (!j.contains("kind")) throw SchemaError("config is missing 'kind'");
    ExperimentConfig cfg;
    try {
        cfg.kind = kind_from_name(j.at("kind").get<std::string>());
        cfg.p = j.value("p", cfg.p);
        cfg.group_sizes = j.value("group_sizes", cfg.group_sizes);
        cfg.designs = j.value("designs", cfg.designs);
        cfg.s_grid = j.value("s_grid", cfg.s_grid);
        if (j.contains("distribution"))
            cfg.distribution = distribution_from_name(j.at("distribution").get<std::string>());
        cfg.coin_biases = j.value("coin_biases", cfg.coin_biases);
        cfg.replicates = j.value("replicates", cfg.replicates);
        cfg.master_seed = j.value("master_seed", cfg.master_seed);
        cfg.floor = j.value("floor", cfg.floor);
        cfg.cap_multiplier = j.value("cap_multiplier", cfg.cap_multiplier);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.omega = j.value("omega", cfg.omega);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed config field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    // worker count is an execution detail: results are reduce-order independent,
    // so it must not move the hash embedded in the output files
    ExperimentConfig canon = config;
    canon.workers = 1;
    return fnv1a64(config_to_json(canon));
}

double analytic_complete_mean(int p, long s) {
    if (p < 1) throw DomainError("analytic mean: p must be at least 1");
    if (s < 1) throw DomainError("analytic mean: budget must be positive");
    if (s == 1) return static_cast<double>(p);
    const double a = chi2_quantile(1.0 / static_cast<double>(s), p);
    return static_cast<double>(p) * static_cast<double>(s) * chi2_cdf(a, p + 2);
}

MonteCarloReport experiment_ideal_sweep(const ExperimentConfig& config) {
    config.validate();
    if (config.kind != ExperimentKind::IdealSweep)
        throw DomainError("config kind does not match the ideal sweep");
    MonteCarloReport report;
    report.provenance = run_provenance(config);
    const int k_groups = static_cast<int>(config.group_sizes.size());
    for (std::size_t cell = 0; cell < config.s_grid.size(); ++cell) {
        const long s_total = config.s_grid[cell];
        const BudgetPlan plan = allocate(s_total, config.p, config.group_sizes, config.floor);
        CellData data;
        data.mk.resize(config.replicates);
        data.fell.assign(config.replicates, 0);
        const std::uint64_t base = static_cast<std::uint64_t>(cell) *
                                   static_cast<std::uint64_t>(config.replicates);
        for_each_replicate(config.replicates, config.workers, [&](long r) {
            Rng rng = replicate_rng(config.master_seed, base + static_cast<std::uint64_t>(r));
            data.mk[r] = sample_ideal_chain(config.p, config.group_sizes, plan, rng).back();
        });
        const std::string label = "ideal p=" + std::to_string(config.p) +
                                  " K=" + std::to_string(k_groups) +
                                  " S=" + std::to_string(s_total);
        report.rows.push_back(summarize_cell(label, config.p, k_groups, s_total,
                                             analytic_complete_mean(config.p, s_total), data));
    }
    return report;
}

MonteCarloReport experiment_simulated(const ExperimentConfig& config) {
    config.validate();
    if (config.kind != ExperimentKind::SimulatedCovariates)
        throw DomainError("config kind does not match the simulated experiment");
    MonteCarloReport report;
    report.provenance = run_provenance(config);
    const int k_groups = static_cast<int>(config.group_sizes.size());
    const long total =
        std::accumulate(config.group_sizes.begin(), config.group_sizes.end(), 0L);
    for (std::size_t cell = 0; cell < config.s_grid.size(); ++cell) {
        const long s_total = config.s_grid[cell];
        BudgetPlan plan = allocate(s_total, config.p, config.group_sizes, config.floor);
        plan.cap_multiplier = config.cap_multiplier;
        CellData data;
        data.mk.resize(config.replicates);
        data.attempts.resize(config.replicates);
        data.fell.assign(config.replicates, 0);
        std::vector<double> reference(config.replicates);
        const std::uint64_t base = static_cast<std::uint64_t>(cell) *
                                   static_cast<std::uint64_t>(config.replicates);
        for_each_replicate(config.replicates, config.workers, [&](long r) {
            Rng rng = replicate_rng(config.master_seed, base + static_cast<std::uint64_t>(r));
            CovariateDataset ds;
            ds.data = gen_covariates(total, config.p, config.distribution, rng);
            ds.group_units = config.group_sizes;
            ds.omega = config.omega;
            const TrialOutcome seq = run_sequential(ds, plan, rng);
            const TrialOutcome single = run_complete(ds, s_total, rng, config.cap_multiplier);
            data.mk[r] = seq.final_m;
            data.attempts[r] = static_cast<double>(
                std::accumulate(seq.attempts.begin(), seq.attempts.end(), 0L));
            data.fell[r] = std::any_of(seq.fallback_flags.begin(), seq.fallback_flags.end(),
                                       [](std::uint8_t f) { return f != 0; });
            reference[r] = single.final_m;
        });
        const std::string label = distribution_name(config.distribution) +
                                  " groups=" + format_groups(config.group_sizes) +
                                  " S=" + std::to_string(s_total);
        report.rows.push_back(summarize_cell(label, config.p, k_groups, s_total,
                                             neumaier_mean(reference), data));
    }
    return report;
}

MonteCarloReport experiment_designs(const CovariateDataset& base,
                                    const ExperimentConfig& config) {
    config.validate();
    if (config.kind != ExperimentKind::DatasetDesigns)
        throw DomainError("config kind does not match the designs experiment");
    const long total = base.data.cols();
    if (base.data.rows() != config.p)
        throw ShapeMismatch("config p does not match the dataset");
    for (const auto& design : config.designs) {
        if (std::accumulate(design.begin(), design.end(), 0L) != total)
            throw DomainError("a design does not partition the dataset's units");
    }
    MonteCarloReport report;
    report.provenance = run_provenance(config);
    const long s_total = config.s_grid.front();
    const double e_m = analytic_complete_mean(config.p, s_total);
    for (std::size_t d = 0; d < config.designs.size(); ++d) {
        const std::vector<long>& design = config.designs[d];
        BudgetPlan plan = allocate(s_total, config.p, design, config.floor);
        plan.cap_multiplier = config.cap_multiplier;
        CellData data;
        data.mk.resize(config.replicates);
        data.attempts.resize(config.replicates);
        data.fell.assign(config.replicates, 0);
        const std::uint64_t stride = static_cast<std::uint64_t>(d) *
                                     static_cast<std::uint64_t>(config.replicates);
        for_each_replicate(config.replicates, config.workers, [&](long r) {
            Rng rng = replicate_rng(config.master_seed, stride + static_cast<std::uint64_t>(r));
            CovariateDataset ds;
            ds.data = permute_columns(base.data, rng);
            ds.group_units = design;
            ds.omega = base.omega;
            ds.mode = base.mode;
            const TrialOutcome seq = run_sequential(ds, plan, rng);
            data.mk[r] = seq.final_m;
            data.attempts[r] = static_cast<double>(
                std::accumulate(seq.attempts.begin(), seq.attempts.end(), 0L));
            data.fell[r] = std::any_of(seq.fallback_flags.begin(), seq.fallback_flags.end(),
                                       [](std::uint8_t f) { return f != 0; });
        });
        const std::string label =
            "design " + std::to_string(d + 1) + " groups=" + format_groups(design);
        report.rows.push_back(summarize_cell(label, config.p,
                                             static_cast<int>(design.size()), s_total, e_m,
                                             data));
    }
    return report;
}

MonteCarloReport experiment_compare(const CovariateDataset& base,
                                    const ExperimentConfig& config) {
    config.validate();
    if (config.kind != ExperimentKind::MethodComparison)
        throw DomainError("config kind does not match the comparison experiment");
    const long total = base.data.cols();
    if (base.data.rows() != config.p)
        throw ShapeMismatch("config p does not match the dataset");
    if (total % 2 != 0)
        throw DomainError("pairwise comparison needs an even number of units");
    const long pairs = total / 2;
    const SpdMatrix cov_known = sample_covariance(base.data);
    MonteCarloReport report;
    report.provenance = run_provenance(config);
    for (std::size_t c = 0; c < config.coin_biases.size(); ++c) {
        const double q = config.coin_biases[c];
        CellData data;
        data.mk.resize(config.replicates);
        data.attempts.assign(config.replicates, static_cast<double>(pairs));
        data.fell.assign(config.replicates, 0);
        const std::uint64_t stride = static_cast<std::uint64_t>(c) *
                                     static_cast<std::uint64_t>(config.replicates);
        for_each_replicate(config.replicates, config.workers, [&](long r) {
            Rng rng = replicate_rng(config.master_seed, stride + static_cast<std::uint64_t>(r));
            CovariateDataset ds;
            ds.data = permute_columns(base.data, rng);
            ds.group_units.assign(pairs, 2L);
            ds.omega = 0.5;
            data.mk[r] = run_pairwise_qin(ds, q, cov_known, rng).final_m;
        });
        char qbuf[32];
        std::snprintf(qbuf, sizeof qbuf, "%g", q);
        report.rows.push_back(summarize_cell(std::string("pairwise-coin q=") + qbuf,
                                             config.p, static_cast<int>(pairs), 0, kNan,
                                             data));
    }
    return report;
}

std::string report_to_csv(const MonteCarloReport& report) {
    std::string out =
        "label,p,K,S,e_m,e_mk,se_mk,ratio,e_mk_strict,fallback_rate,attempts_mean\n";
    for (const ReportRow& row : report.rows) {
        out += "\"" + row.label + "\"," + std::to_string(row.p) + "," +
               std::to_string(row.k_groups) + "," + std::to_string(row.s_total) + "," +
               fmt_double(row.e_m) + "," + fmt_double(row.e_mk) + "," +
               fmt_double(row.se_mk) + "," + fmt_double(row.ratio) + "," +
               fmt_double(row.e_mk_strict) + "," + fmt_double(row.fallback_rate) + "," +
               fmt_double(row.attempts_mean) + "\n";
    }
    return out;
}

std::string report_to_json(const MonteCarloReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const ReportRow& row : report.rows) {
        nlohmann::json j;
        j["label"] = row.label;
        j["p"] = row.p;
        j["K"] = row.k_groups;
        j["S"] = row.s_total;
        j["e_m"] = row.e_m;
        j["e_mk"] = row.e_mk;
        j["se_mk"] = row.se_mk;
        j["ratio"] = row.ratio;
        j["e_mk_strict"] = row.e_mk_strict;
        j["fallback_rate"] = row.fallback_rate;
        j["attempts_mean"] = row.attempts_mean;
        rows.push_back(std::move(j));
    }
    nlohmann::json j;
    j["rows"] = std::move(rows);
    j["provenance"] = {{"config_hash", report.provenance.config_hash},
                       {"seed", report.provenance.seed},
                       {"replicates", report.provenance.replicates}};
    return j.dump(2) + "\n";
}

MonteCarloReport report_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError("report is not a JSON object");
    MonteCarloReport report;
    try {
        const auto& prov = j.at("provenance");
        report.provenance.config_hash = prov.at("config_hash").get<std::uint64_t>();
        report.provenance.seed = prov.at("seed").get<std::uint64_t>();
        report.provenance.replicates = prov.at("replicates").get<long>();
        for (const auto& jr : j.at("rows")) {
            ReportRow row;
            row.label = jr.at("label").get<std::string>();
            row.p = jr.at("p").get<int>();
            row.k_groups = jr.at("K").get<int>();
            row.s_total = jr.at("S").get<long>();
            row.e_m = json_double(jr, "e_m");
            row.e_mk = json_double(jr, "e_mk");
            row.se_mk = json_double(jr, "se_mk");
            row.ratio = json_double(jr, "ratio");
            row.e_mk_strict = json_double(jr, "e_mk_strict");
            row.fallback_rate = json_double(jr, "fallback_rate");
            row.attempts_mean = json_double(jr, "attempts_mean");
            report.rows.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed report field: ") + e.what());
    }
    return report;
}

std::string plot_data_csv(const MonteCarloReport& report) {
    std::vector<std::string> series;       // column order = first appearance
    std::vector<long> budgets;             // row order = ascending S
    for (const ReportRow& row : report.rows) {
        if (row.s_total <= 0) continue;
        const std::string name =
            "p" + std::to_string(row.p) + "_K" + std::to_string(row.k_groups);
        if (std::find(series.begin(), series.end(), name) == series.end())
            series.push_back(name);
        if (std::find(budgets.begin(), budgets.end(), row.s_total) == budgets.end())
            budgets.push_back(row.s_total);
    }
    std::sort(budgets.begin(), budgets.end());

    std::string out = "S";
    for (const auto& name : series) out += "," + name;
    out += "\n";
    for (long s : budgets) {
        out += std::to_string(s);
        for (const auto& name : series) {
            out += ",";
            for (const ReportRow& row : report.rows) {
                if (row.s_total != s) continue;
                if ("p" + std::to_string(row.p) + "_K" + std::to_string(row.k_groups) != name)
                    continue;
                out += fmt_double(row.ratio);
                break;
            }
        }
        out += "\n";
    }
    return out;
}

void emit_report(const MonteCarloReport& report, ReportFormat format,
                 const std::string& path) {
    {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path);
        out << (format == ReportFormat::Csv ? report_to_csv(report) : report_to_json(report));
        if (!out) throw IoError("write failed for " + path);
    }
    const std::size_t slash = path.find_last_of('/');
    const std::size_t dot = path.find_last_of('.');
    const std::string stem =
        (dot != std::string::npos && (slash == std::string::npos || dot > slash))
            ? path.substr(0, dot)
            : path;
    const std::string plot_path = stem + "_plot.csv";
    std::ofstream plot(plot_path);
    if (!plot) throw IoError("cannot write " + plot_path);
    plot << plot_data_csv(report);
    if (!plot) throw IoError("write failed for " + plot_path);
}

}  // namespace seqrerand
