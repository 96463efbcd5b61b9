#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqrerand/budget.hpp"
#include "seqrerand/datagen.hpp"
#include "seqrerand/engine.hpp"
#include "seqrerand/errors.hpp"
#include "seqrerand/harness.hpp"

using namespace seqrerand;

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(text);
    while (std::getline(in, field, sep)) out.push_back(field);
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += " ";
        out += tokens[i];
    }
    return out;
}

std::string trimmed(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

long parse_positive(const std::string& s, const char* what) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || v < 1)
        throw DomainError(std::string(what) + ": '" + s + "' is not a positive integer");
    return v;
}

// "184,182,182" or the "K x equal" shorthand; without a unit total the
// shorthand falls back to K equal ratio groups
std::vector<long> parse_group_spec(const std::string& raw, long total_units) {
    const std::string spec = trimmed(raw);
    if (spec.empty()) throw DomainError("group spec is empty");

    const std::size_t x = spec.find_first_of("xX");
    if (x != std::string::npos) {
        std::string tail = trimmed(spec.substr(x + 1));
        for (auto& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (tail != "equal")
            throw DomainError("group spec '" + spec + "': expected '<K>x equal'");
        const long k = parse_positive(trimmed(spec.substr(0, x)), "group count");
        if (total_units < 0) return std::vector<long>(k, 1L);
        if (total_units < k)
            throw DomainError("cannot split " + std::to_string(total_units) + " units into " +
                              std::to_string(k) + " groups");
        std::vector<long> sizes(k, total_units / k);
        const long rem = total_units % k;
        for (long i = 0; i < rem; ++i) ++sizes[i];  // larger remainders go to earlier groups
        return sizes;
    }

    std::vector<long> sizes;
    for (const std::string& field : split(spec, ','))
        sizes.push_back(parse_positive(trimmed(field), "group size"));
    return sizes;
}

std::vector<long> parse_long_list(const std::string& text, const char* what) {
    std::vector<long> out;
    for (const std::string& field : split(text, ','))
        out.push_back(parse_positive(trimmed(field), what));
    if (out.empty()) throw DomainError(std::string(what) + " list is empty");
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    for (const std::string& field : split(text, ',')) {
        const std::string f = trimmed(field);
        char* end = nullptr;
        const double v = std::strtod(f.c_str(), &end);
        if (end == f.c_str() || *end != '\0')
            throw DomainError(std::string(what) + ": '" + f + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw DomainError(std::string(what) + " list is empty");
    return out;
}

struct OutputOpts {
    std::string out;
    std::string format = "csv";
    bool quiet = false;
};

void add_output_opts(CLI::App* sub, OutputOpts& o) {
    sub->add_option("--out", o.out, "write results here (plus a <stem>_plot.csv companion)");
    sub->add_option("--format", o.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    sub->add_flag("--quiet", o.quiet, "suppress the stdout copy of the results");
}

void deliver(const MonteCarloReport& report, const OutputOpts& o) {
    if (!o.out.empty())
        emit_report(report, o.format == "json" ? ReportFormat::Json : ReportFormat::Csv, o.out);
    if (!o.quiet)
        std::cout << (o.format == "json" ? report_to_json(report) : report_to_csv(report));
}

struct DataOpts {
    std::string data;
    std::string schema;
    bool surrogate = false;
};

void add_data_opts(CLI::App* sub, DataOpts& d) {
    auto* data = sub->add_option("--data", d.data, "covariate CSV, one row per unit");
    auto* schema = sub->add_option("--schema", d.schema, "column schema JSON for --data");
    auto* surr = sub->add_flag("--surrogate", d.surrogate,
                               "use the built-in 548-unit synthetic clinical table");
    schema->needs(data);
    data->needs(schema);
    data->excludes(surr);
    sub->callback([&d, data, surr] {
        if (data->count() == 0 && surr->count() == 0)
            throw CLI::RequiredError("--data/--schema or --surrogate");
    });
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// the surrogate table is drawn from a dedicated stream so experiment
// replicate streams stay untouched
CovariateDataset load_dataset(const DataOpts& d, std::uint64_t seed, IngestionSchema& schema,
                              bool& have_schema) {
    if (d.surrogate) {
        Rng rng = replicate_rng(~seed, 0);
        have_schema = false;
        return surrogate_ucec(rng);
    }
    schema = parse_schema(slurp(d.schema));
    have_schema = true;
    Rng rng = replicate_rng(~seed, 1);
    return ingest_csv(d.data, schema, rng);
}

// balance failures are far easier to act on when tied to an input column name
void rethrow_named(const RankDeficient& e, const IngestionSchema& schema, bool have_schema) {
    std::string name = have_schema && e.pivot_index >= 0 &&
                               e.pivot_index < static_cast<int>(schema.columns.size())
                           ? schema.columns[e.pivot_index].name
                           : "covariate " + std::to_string(e.pivot_index);
    throw RankDeficient(std::string(e.what()) + " -- column '" + name + "'", e.pivot_index);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sequential rerandomization: budget allocation, trial runs, and "
                 "Monte Carlo experiments"};
    app.require_subcommand(1);

    // ---- allocate ----------------------------------------------------------
    struct {
        long s = 0;
        int p = 0;
        std::vector<std::string> groups;
        long floor = -1;
        OutputOpts out;
    } al;
    auto* alloc = app.add_subcommand(
        "allocate", "split a total rerandomization budget across enrollment groups");
    alloc->add_option("--S", al.s, "total budget (candidate assignment draws)")->required();
    alloc->add_option("--p", al.p, "number of covariates")->required();
    alloc->add_option("--groups", al.groups,
                      "group units: '184,182,182' or '<K>x equal' (sizes only matter "
                      "through their ratios here)")
        ->required()
        ->expected(-1);
    alloc->add_option("--floor", al.floor,
                      "minimum draws per group (default -1: derived from the budget)");
    add_output_opts(alloc, al.out);

    // ---- run-trial ---------------------------------------------------------
    struct {
        DataOpts data;
        std::vector<std::string> groups;
        long s = 0;
        std::uint64_t seed = 0;
        double omega = 0.5;
        long floor = -1;
        long cap = 10;
        std::string mode = "homogeneous";
        OutputOpts out;
    } tr;
    auto* trial = app.add_subcommand(
        "run-trial", "assign one dataset group by group, printing each accepted assignment");
    add_data_opts(trial, tr.data);
    trial->add_option("--groups", tr.groups, "group units: '184,182,182' or '<K>x equal'")
        ->required()
        ->expected(-1);
    trial->add_option("--S", tr.s, "total budget")->required();
    trial->add_option("--seed", tr.seed, "RNG seed (required: runs must be reproducible)")
        ->required();
    trial->add_option("--omega", tr.omega, "treated fraction")->capture_default_str();
    trial->add_option("--floor", tr.floor, "minimum draws per group (default -1: derived)");
    trial->add_option("--cap", tr.cap, "attempt cap = cap * per-group budget")
        ->capture_default_str();
    trial->add_option("--mode", tr.mode, "balance covariance: pooled prefix or per group")
        ->check(CLI::IsMember({"homogeneous", "heterogeneous"}))
        ->capture_default_str();
    add_output_opts(trial, tr.out);

    // ---- simulate-ideal ----------------------------------------------------
    struct {
        int p = 0;
        int k = 0;
        std::vector<std::string> groups;
        std::string s_grid;
        long replicates = 100000;
        std::uint64_t seed = 0;
        long floor = -1;
        int workers = 1;
        OutputOpts out;
    } si;
    auto* ideal = app.add_subcommand(
        "simulate-ideal", "draw accepted balance statistics straight from their limiting law");
    ideal->add_option("--p", si.p, "number of covariates")->required();
    auto* ideal_k = ideal->add_option("--K", si.k, "number of equal groups");
    auto* ideal_groups =
        ideal->add_option("--groups", si.groups, "group size ratios: '2,1,1' or '<K>x equal'")
            ->expected(-1);
    ideal_k->excludes(ideal_groups);
    ideal->add_option("--S", si.s_grid, "total budget, or an increasing grid '100,1000,10000'")
        ->required();
    ideal->add_option("--replicates", si.replicates, "Monte Carlo replicates")
        ->capture_default_str();
    ideal->add_option("--seed", si.seed, "RNG seed (required: runs must be reproducible)")
        ->required();
    ideal->add_option("--floor", si.floor, "minimum draws per group (default -1: derived)");
    ideal->add_option("--workers", si.workers, "worker threads")
        ->envname("SEQRERAND_WORKERS")
        ->capture_default_str();
    add_output_opts(ideal, si.out);

    // ---- simulate-covariates -----------------------------------------------
    struct {
        int p = 0;
        std::vector<std::string> groups;
        long units = -1;
        std::string dist = "std-normal";
        std::string s_grid;
        double omega = 0.5;
        long replicates = 20000;
        std::uint64_t seed = 0;
        long floor = -1;
        long cap = 10;
        int workers = 1;
        OutputOpts out;
    } sc;
    auto* simc = app.add_subcommand(
        "simulate-covariates",
        "regenerate covariates every replicate; run the sequential and single-stage methods");
    simc->add_option("--p", sc.p, "number of covariates")->required();
    simc->add_option("--groups", sc.groups,
                     "group units: '100,100,100' or '<K>x equal' with --units")
        ->required()
        ->expected(-1);
    simc->add_option("--units", sc.units, "total units 2N (with the '<K>x equal' shorthand)");
    simc->add_option("--dist", sc.dist, "covariate family")
        ->check(CLI::IsMember({"std-normal", "exponential", "chi-squared-1", "weibull-0.6",
                               "log-normal"}))
        ->capture_default_str();
    simc->add_option("--S", sc.s_grid, "total budget, or an increasing grid")->required();
    simc->add_option("--omega", sc.omega, "treated fraction")->capture_default_str();
    simc->add_option("--replicates", sc.replicates, "Monte Carlo replicates")
        ->capture_default_str();
    simc->add_option("--seed", sc.seed, "RNG seed (required: runs must be reproducible)")
        ->required();
    simc->add_option("--floor", sc.floor, "minimum draws per group (default -1: derived)");
    simc->add_option("--cap", sc.cap, "attempt cap = cap * per-group budget")
        ->capture_default_str();
    simc->add_option("--workers", sc.workers, "worker threads")
        ->envname("SEQRERAND_WORKERS")
        ->capture_default_str();
    add_output_opts(simc, sc.out);

    // ---- run-designs -------------------------------------------------------
    struct {
        DataOpts data;
        std::vector<std::string> designs;
        long s = 0;
        double omega = 0.5;
        long replicates = 20000;
        std::uint64_t seed = 0;
        long floor = -1;
        long cap = 10;
        int workers = 1;
        OutputOpts out;
    } rd;
    auto* designs = app.add_subcommand(
        "run-designs", "compare enrollment partitions of one dataset, resampling arrival order");
    add_data_opts(designs, rd.data);
    designs->add_option("--designs", rd.designs,
                        "semicolon-separated partitions: '1x equal; 184,182,182; 3x equal'")
        ->required()
        ->expected(-1);
    designs->add_option("--S", rd.s, "total budget per design")->required();
    designs->add_option("--omega", rd.omega, "treated fraction")->capture_default_str();
    designs->add_option("--replicates", rd.replicates, "Monte Carlo replicates")
        ->capture_default_str();
    designs->add_option("--seed", rd.seed, "RNG seed (required: runs must be reproducible)")
        ->required();
    designs->add_option("--floor", rd.floor, "minimum draws per group (default -1: derived)");
    designs->add_option("--cap", rd.cap, "attempt cap = cap * per-group budget")
        ->capture_default_str();
    designs->add_option("--workers", rd.workers, "worker threads")
        ->envname("SEQRERAND_WORKERS")
        ->capture_default_str();
    add_output_opts(designs, rd.out);

    // ---- compare -----------------------------------------------------------
    struct {
        DataOpts data;
        std::string biases = "1,0.75,0.500001";
        long replicates = 20000;
        std::uint64_t seed = 0;
        int workers = 1;
        OutputOpts out;
    } cm;
    auto* compare = app.add_subcommand(
        "compare", "pairwise biased-coin baseline at several coin biases on one dataset");
    add_data_opts(compare, cm.data);
    compare->add_option("--q", cm.biases, "coin biases in (1/2, 1], comma separated")
        ->capture_default_str();
    compare->add_option("--replicates", cm.replicates, "Monte Carlo replicates")
        ->capture_default_str();
    compare->add_option("--seed", cm.seed, "RNG seed (required: runs must be reproducible)")
        ->required();
    compare->add_option("--workers", cm.workers, "worker threads")
        ->envname("SEQRERAND_WORKERS")
        ->capture_default_str();
    add_output_opts(compare, cm.out);

    try {
        app.parse(argc, argv);

        if (alloc->parsed()) {
            const std::vector<long> sizes = parse_group_spec(join_tokens(al.groups), -1);
            const BudgetPlan plan = allocate(al.s, al.p, sizes, al.floor);
            std::string csv;
            for (std::size_t k = 0; k < plan.per_group.size(); ++k) {
                if (k) csv += ",";
                csv += std::to_string(plan.per_group[k]);
            }
            std::vector<double> zero_prior;
            for (std::size_t k = 0; k < plan.per_group.size(); ++k)
                zero_prior.push_back(
                    threshold(al.p, sizes, static_cast<int>(k) + 1, 0.0, plan.per_group[k]));
            std::ostringstream body;
            if (al.out.format == "json") {
                body << "{\n  \"allocation\": [" ;
                for (std::size_t k = 0; k < plan.per_group.size(); ++k)
                    body << (k ? ", " : "") << plan.per_group[k];
                body << "],\n  \"thresholds_zero_imbalance\": [";
                for (std::size_t k = 0; k < zero_prior.size(); ++k)
                    body << (k ? ", " : "") << fmt(zero_prior[k]);
                body << "]\n}\n";
            } else {
                body << csv << "\n";
                body << "thresholds at zero running imbalance:\n";
                for (std::size_t k = 0; k < zero_prior.size(); ++k)
                    body << "  group " << k + 1 << ": " << fmt(zero_prior[k]) << "\n";
            }
            if (!al.out.out.empty()) {
                std::ofstream f(al.out.out);
                if (!f) throw IoError("cannot write " + al.out.out);
                f << body.str();
            }
            if (!al.out.quiet) std::cout << body.str();
            return 0;
        }

        if (trial->parsed()) {
            IngestionSchema schema;
            bool have_schema = false;
            CovariateDataset ds = load_dataset(tr.data, tr.seed, schema, have_schema);
            ds.group_units = parse_group_spec(join_tokens(tr.groups), ds.total_units());
            ds.omega = tr.omega;
            ds.mode = tr.mode == "heterogeneous" ? CovarianceMode::Heterogeneous
                                                 : CovarianceMode::Homogeneous;
            BudgetPlan plan = allocate(tr.s, static_cast<int>(ds.data.rows()), ds.group_units,
                                       tr.floor);
            plan.cap_multiplier = tr.cap;
            Rng rng = replicate_rng(tr.seed, 0);
            TrialOutcome outcome;
            try {
                outcome = run_sequential(ds, plan, rng);
            } catch (const RankDeficient& e) {
                rethrow_named(e, schema, have_schema);
            }

            std::ostringstream body;
            long offset = 0;
            for (std::size_t k = 0; k < ds.group_units.size(); ++k) {
                const long uk = ds.group_units[k];
                body << "group " << k + 1 << " units " << offset + 1 << "-" << offset + uk
                     << ": draws=" << outcome.attempts[k]
                     << " M=" << fmt(outcome.m_sequence[k])
                     << (outcome.fallback_flags[k] ? " cap-hit-kept-best" : " accepted")
                     << "\n";
                body << "assignment: ";
                for (long i = 0; i < uk; ++i)
                    body << (i ? "," : "") << int(outcome.assignments[offset + i]);
                body << "\n";
                offset += uk;
            }
            body << "final M: " << fmt(outcome.final_m) << "\n";
            if (!tr.out.out.empty()) {
                std::ofstream f(tr.out.out);
                if (!f) throw IoError("cannot write " + tr.out.out);
                if (tr.out.format == "json") {
                    f << "{\n  \"assignments\": [";
                    for (std::size_t i = 0; i < outcome.assignments.size(); ++i)
                        f << (i ? "," : "") << int(outcome.assignments[i]);
                    f << "],\n  \"m_sequence\": [";
                    for (std::size_t k = 0; k < outcome.m_sequence.size(); ++k)
                        f << (k ? ", " : "") << fmt(outcome.m_sequence[k]);
                    f << "],\n  \"attempts\": [";
                    for (std::size_t k = 0; k < outcome.attempts.size(); ++k)
                        f << (k ? ", " : "") << outcome.attempts[k];
                    f << "],\n  \"fallbacks\": [";
                    for (std::size_t k = 0; k < outcome.fallback_flags.size(); ++k)
                        f << (k ? ", " : "") << (outcome.fallback_flags[k] ? "true" : "false");
                    f << "],\n  \"final_m\": " << fmt(outcome.final_m) << "\n}\n";
                } else {
                    f << "unit,group,assignment\n";
                    long off = 0;
                    for (std::size_t k = 0; k < ds.group_units.size(); ++k) {
                        for (long i = 0; i < ds.group_units[k]; ++i, ++off)
                            f << off + 1 << "," << k + 1 << ","
                              << int(outcome.assignments[off]) << "\n";
                    }
                }
            }
            if (!tr.out.quiet) std::cout << body.str();
            return 0;
        }

        if (ideal->parsed()) {
            ExperimentConfig cfg;
            cfg.kind = ExperimentKind::IdealSweep;
            cfg.p = si.p;
            if (ideal_k->count()) {
                if (si.k < 1) throw DomainError("--K must be at least 1");
                cfg.group_sizes.assign(si.k, 1L);
            } else if (!si.groups.empty()) {
                cfg.group_sizes = parse_group_spec(join_tokens(si.groups), -1);
            } else {
                throw DomainError("simulate-ideal needs --K or --groups");
            }
            cfg.s_grid = parse_long_list(si.s_grid, "budget");
            cfg.replicates = si.replicates;
            cfg.master_seed = si.seed;
            cfg.floor = si.floor;
            cfg.workers = si.workers;
            deliver(experiment_ideal_sweep(cfg), si.out);
            return 0;
        }

        if (simc->parsed()) {
            ExperimentConfig cfg;
            cfg.kind = ExperimentKind::SimulatedCovariates;
            cfg.p = sc.p;
            cfg.group_sizes = parse_group_spec(join_tokens(sc.groups), sc.units);
            cfg.distribution = distribution_from_name(sc.dist);
            cfg.s_grid = parse_long_list(sc.s_grid, "budget");
            cfg.omega = sc.omega;
            cfg.replicates = sc.replicates;
            cfg.master_seed = sc.seed;
            cfg.floor = sc.floor;
            cfg.cap_multiplier = sc.cap;
            cfg.workers = sc.workers;
            deliver(experiment_simulated(cfg), sc.out);
            return 0;
        }

        if (designs->parsed()) {
            IngestionSchema schema;
            bool have_schema = false;
            CovariateDataset ds = load_dataset(rd.data, rd.seed, schema, have_schema);
            ds.omega = rd.omega;
            ExperimentConfig cfg;
            cfg.kind = ExperimentKind::DatasetDesigns;
            cfg.p = static_cast<int>(ds.data.rows());
            for (const std::string& d : split(join_tokens(rd.designs), ';'))
                cfg.designs.push_back(parse_group_spec(d, ds.total_units()));
            cfg.s_grid = {rd.s};
            cfg.omega = rd.omega;
            cfg.replicates = rd.replicates;
            cfg.master_seed = rd.seed;
            cfg.floor = rd.floor;
            cfg.cap_multiplier = rd.cap;
            cfg.workers = rd.workers;
            try {
                deliver(experiment_designs(ds, cfg), rd.out);
            } catch (const RankDeficient& e) {
                rethrow_named(e, schema, have_schema);
            }
            return 0;
        }

        if (compare->parsed()) {
            IngestionSchema schema;
            bool have_schema = false;
            CovariateDataset ds = load_dataset(cm.data, cm.seed, schema, have_schema);
            ExperimentConfig cfg;
            cfg.kind = ExperimentKind::MethodComparison;
            cfg.p = static_cast<int>(ds.data.rows());
            cfg.coin_biases = parse_double_list(cm.biases, "coin bias");
            cfg.replicates = cm.replicates;
            cfg.master_seed = cm.seed;
            cfg.workers = cm.workers;
            try {
                deliver(experiment_compare(ds, cfg), cm.out);
            } catch (const RankDeficient& e) {
                rethrow_named(e, schema, have_schema);
            }
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UnderflowError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
