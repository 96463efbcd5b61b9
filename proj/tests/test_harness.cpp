#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "seqrerand/datagen.hpp"
#include "seqrerand/errors.hpp"
#include "seqrerand/harness.hpp"

using namespace seqrerand;

namespace {

bool same_double(double a, double b) {
    return (std::isnan(a) && std::isnan(b)) || a == b;
}

bool same_rows(const ReportRow& a, const ReportRow& b) {
    return a.label == b.label && a.p == b.p && a.k_groups == b.k_groups &&
           a.s_total == b.s_total && same_double(a.e_m, b.e_m) &&
           same_double(a.e_mk, b.e_mk) && same_double(a.se_mk, b.se_mk) &&
           same_double(a.ratio, b.ratio) && same_double(a.e_mk_strict, b.e_mk_strict) &&
           same_double(a.fallback_rate, b.fallback_rate) &&
           same_double(a.attempts_mean, b.attempts_mean);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

ExperimentConfig sweep_config() {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::IdealSweep;
    cfg.p = 2;
    cfg.group_sizes = {1, 1, 1};
    cfg.s_grid = {100, 1000};
    cfg.replicates = 2000;
    cfg.master_seed = 11;
    return cfg;
}

ExperimentConfig simulated_config(int workers) {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::SimulatedCovariates;
    cfg.p = 2;
    cfg.group_sizes = {20, 20};
    cfg.s_grid = {200};
    cfg.replicates = 300;
    cfg.master_seed = 5;
    cfg.workers = workers;
    return cfg;
}

}  // namespace

TEST_CASE("compensated summation survives cancellation") {
    CHECK(neumaier_total({1e16, 1.0, -1e16}) == 1.0);
    CHECK(neumaier_total({}) == 0.0);
    std::vector<double> v;
    for (int i = 0; i < 1000; ++i) v.push_back(0.1);
    CHECK(neumaier_total(v) == doctest::Approx(100.0).epsilon(1e-14));
}

TEST_CASE("config validation") {
    ExperimentConfig cfg = sweep_config();
    CHECK_NOTHROW(cfg.validate());

    cfg.replicates = 99;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = sweep_config();
    cfg.s_grid = {100, 100};
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = sweep_config();
    cfg.s_grid.clear();
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = sweep_config();
    cfg.group_sizes.clear();
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = sweep_config();
    cfg.omega = 1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = sweep_config();
    cfg.workers = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    ExperimentConfig cmp;
    cmp.kind = ExperimentKind::MethodComparison;
    cmp.coin_biases = {0.5};
    CHECK_THROWS_AS(cmp.validate(), DomainError);
    cmp.coin_biases = {0.75};
    CHECK_NOTHROW(cmp.validate());

    ExperimentConfig des;
    des.kind = ExperimentKind::DatasetDesigns;
    des.designs = {{30, 30}};
    des.s_grid = {100, 200};
    CHECK_THROWS_AS(des.validate(), DomainError);
    des.s_grid = {100};
    CHECK_NOTHROW(des.validate());
}

TEST_CASE("config JSON round trip and hash sensitivity") {
    ExperimentConfig cfg = sweep_config();
    const std::string text = config_to_json(cfg);
    ExperimentConfig back = config_from_json(text);
    CHECK(config_to_json(back) == text);
    CHECK(config_hash(back) == config_hash(cfg));

    const std::uint64_t base = config_hash(cfg);
    auto changed = [&](auto mutate) {
        ExperimentConfig c = sweep_config();
        mutate(c);
        return config_hash(c) != base;
    };
    CHECK(changed([](ExperimentConfig& c) { c.p = 3; }));
    CHECK(changed([](ExperimentConfig& c) { c.replicates = 2001; }));
    CHECK(changed([](ExperimentConfig& c) { c.master_seed = 12; }));
    CHECK(changed([](ExperimentConfig& c) { c.s_grid = {100, 1001}; }));
    CHECK(changed([](ExperimentConfig& c) { c.group_sizes = {1, 1, 2}; }));
    CHECK(changed([](ExperimentConfig& c) { c.floor = 5; }));
    CHECK(changed([](ExperimentConfig& c) { c.cap_multiplier = 7; }));
    CHECK(changed([](ExperimentConfig& c) { c.omega = 0.4; }));
    CHECK(changed([](ExperimentConfig& c) {
        c.distribution = CovariateDistribution::LogNormal;
    }));
    CHECK(changed([](ExperimentConfig& c) { c.kind = ExperimentKind::SimulatedCovariates; }));
    // execution detail: output files embed the hash, so the worker count must not move it
    ExperimentConfig w = sweep_config();
    w.workers = 3;
    CHECK(config_hash(w) == base);

    CHECK_THROWS_AS(config_from_json("{"), SchemaError);
    CHECK_THROWS_AS(config_from_json(R"({"p": 2})"), SchemaError);
    CHECK_THROWS_AS(config_from_json(R"({"kind": "nope"})"), SchemaError);
    CHECK_THROWS_AS(config_from_json(R"({"kind": "ideal-sweep", "p": "two"})"), SchemaError);
}

TEST_CASE("single-stage analytic mean") {
    CHECK(analytic_complete_mean(12, 2000) ==
          doctest::Approx(1.6270910664684626).epsilon(1e-12));
    CHECK(analytic_complete_mean(5, 2000) ==
          doctest::Approx(0.11238482356818105).epsilon(1e-12));
    CHECK(analytic_complete_mean(2, 100) ==
          doctest::Approx(0.010033501006714636).epsilon(1e-12));
    CHECK(analytic_complete_mean(7, 1) == 7.0);
    CHECK_THROWS_AS(analytic_complete_mean(0, 10), DomainError);
    CHECK_THROWS_AS(analytic_complete_mean(3, 0), DomainError);
}

TEST_CASE("ideal sweep report") {
    ExperimentConfig cfg = sweep_config();
    MonteCarloReport report = experiment_ideal_sweep(cfg);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.provenance.config_hash == config_hash(cfg));
    CHECK(report.provenance.seed == 11);
    CHECK(report.provenance.replicates == 2000);

    CHECK(report.rows[0].label == "ideal p=2 K=3 S=100");
    CHECK(report.rows[0].s_total == 100);
    CHECK(report.rows[1].s_total == 1000);
    for (const ReportRow& row : report.rows) {
        CHECK(row.e_m == analytic_complete_mean(2, row.s_total));
        CHECK(row.ratio == row.e_m / row.e_mk);
        CHECK(row.se_mk / row.e_mk < 0.05);
        CHECK(row.fallback_rate == 0.0);
        CHECK(row.e_mk_strict == row.e_mk);
        CHECK(std::isnan(row.attempts_mean));
    }
    // stagewise refinement pays off more at the larger budget
    CHECK(report.rows[1].ratio > report.rows[0].ratio);

    const std::string plot = plot_data_csv(report);
    std::istringstream lines(plot);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "S,p2_K3");
    std::getline(lines, line);
    CHECK(line.substr(0, 4) == "100,");
    std::getline(lines, line);
    CHECK(line.substr(0, 5) == "1000,");
}

TEST_CASE("simulated experiment is worker-count independent") {
    MonteCarloReport one = experiment_simulated(simulated_config(1));
    MonteCarloReport one_again = experiment_simulated(simulated_config(1));
    MonteCarloReport three = experiment_simulated(simulated_config(3));

    CHECK(report_to_csv(one) == report_to_csv(one_again));
    CHECK(report_to_csv(one) == report_to_csv(three));
    CHECK(report_to_json(one) == report_to_json(three));

    REQUIRE(one.rows.size() == 1);
    const ReportRow& row = one.rows[0];
    CHECK(row.label == "std-normal groups=2x20 S=200");
    CHECK(row.k_groups == 2);
    CHECK(row.ratio > 1.2);
    CHECK(row.e_m > row.e_mk);
    CHECK(row.attempts_mean >= 2.0);
    CHECK(row.fallback_rate >= 0.0);
    CHECK(row.fallback_rate <= 1.0);
    CHECK(std::isfinite(row.e_mk_strict));
}

TEST_CASE("report emission and round trip") {
    MonteCarloReport report = experiment_ideal_sweep(sweep_config());

    const std::string json_path = "/tmp/seqrerand_test_report.json";
    emit_report(report, ReportFormat::Json, json_path);
    MonteCarloReport back = report_from_json(slurp(json_path));
    REQUIRE(back.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        CHECK(same_rows(report.rows[i], back.rows[i]));
    }
    CHECK(back.provenance.config_hash == report.provenance.config_hash);
    CHECK(back.provenance.seed == report.provenance.seed);
    CHECK(back.provenance.replicates == report.provenance.replicates);
    CHECK(slurp("/tmp/seqrerand_test_report_plot.csv") == plot_data_csv(report));

    const std::string csv_path = "/tmp/seqrerand_test_report.csv";
    emit_report(report, ReportFormat::Csv, csv_path);
    const std::string csv = slurp(csv_path);
    CHECK(csv == report_to_csv(report));
    CHECK(csv.substr(0, 5) == "label");
    CHECK(csv.find("nan") != std::string::npos);  // ideal rows have no attempt counts
    emit_report(report, ReportFormat::Csv, csv_path);
    CHECK(slurp(csv_path) == csv);

    CHECK_THROWS_AS(emit_report(report, ReportFormat::Csv, "/nonexistent/dir/r.csv"),
                    IoError);

    std::remove(json_path.c_str());
    std::remove(csv_path.c_str());
    std::remove("/tmp/seqrerand_test_report_plot.csv");
    std::remove("/tmp/seqrerand_test_report.csv");
}

TEST_CASE("dataset designs experiment") {
    Rng rng = replicate_rng(21, 0);
    CovariateDataset base;
    base.data = gen_covariates(60, 2, CovariateDistribution::StdNormal, rng);
    base.group_units = {60};

    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::DatasetDesigns;
    cfg.p = 2;
    cfg.designs = {{60}, {30, 30}};
    cfg.s_grid = {100};
    cfg.replicates = 400;
    cfg.master_seed = 21;

    MonteCarloReport report = experiment_designs(base, cfg);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].label == "design 1 groups=60");
    CHECK(report.rows[1].label == "design 2 groups=2x30");
    CHECK(report.rows[0].k_groups == 1);
    CHECK(report.rows[1].k_groups == 2);
    for (const ReportRow& row : report.rows) {
        CHECK(row.e_m == analytic_complete_mean(2, 100));
        CHECK(row.ratio == row.e_m / row.e_mk);
    }
    // splitting the same units into two stages tightens the final balance
    CHECK(report.rows[1].e_mk < report.rows[0].e_mk);

    ExperimentConfig bad = cfg;
    bad.designs = {{59}};
    CHECK_THROWS_AS(experiment_designs(base, bad), DomainError);
    ExperimentConfig wrong_p = cfg;
    wrong_p.p = 3;
    CHECK_THROWS_AS(experiment_designs(base, wrong_p), ShapeMismatch);
}

TEST_CASE("pairwise-coin comparison experiment") {
    Rng rng = replicate_rng(31, 0);
    CovariateDataset base;
    base.data = gen_covariates(20, 2, CovariateDistribution::StdNormal, rng);
    base.group_units = {20};

    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::MethodComparison;
    cfg.p = 2;
    cfg.coin_biases = {1.0, 0.6};
    cfg.replicates = 400;
    cfg.master_seed = 31;

    MonteCarloReport report = experiment_compare(base, cfg);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].label == "pairwise-coin q=1");
    CHECK(report.rows[1].label == "pairwise-coin q=0.6");
    for (const ReportRow& row : report.rows) {
        CHECK(row.k_groups == 10);
        CHECK(row.s_total == 0);
        CHECK(std::isnan(row.e_m));
        CHECK(std::isnan(row.ratio));
        CHECK(row.attempts_mean == 10.0);
        CHECK(row.fallback_rate == 0.0);
    }
    // the more decisive coin keeps the running distance smaller
    CHECK(report.rows[0].e_mk < report.rows[1].e_mk);

    // no budgeted rows -> plot data is just the header
    CHECK(plot_data_csv(report) == "S\n");

    CovariateDataset odd;
    odd.data = gen_covariates(21, 2, CovariateDistribution::StdNormal, rng);
    odd.group_units = {21};
    CHECK_THROWS_AS(experiment_compare(odd, cfg), DomainError);
}

TEST_CASE("ideal-chain means for uneven enrollment plans") {
    // twelve covariates, total budget 2000, group sizes from four staged
    // enrollment patterns; expected means computed independently
    struct Cell {
        std::vector<long> sizes;
        double expect;
    };
    const std::vector<Cell> cells = {
        {{184, 182, 182}, 0.723},
        {{220, 220, 108}, 0.536},
        {{110, 110, 110, 110, 108}, 0.453},
        {{56, 56, 56, 56, 54, 54, 54, 54, 54, 54}, 0.232},
    };
    for (std::size_t c = 0; c < cells.size(); ++c) {
        ExperimentConfig cfg;
        cfg.kind = ExperimentKind::IdealSweep;
        cfg.p = 12;
        cfg.group_sizes = cells[c].sizes;
        cfg.s_grid = {2000};
        cfg.replicates = 20000;
        cfg.master_seed = 4100 + c;
        const ReportRow row = experiment_ideal_sweep(cfg).rows.at(0);
        CAPTURE(c);
        CHECK(row.e_mk == doctest::Approx(cells[c].expect).epsilon(0.02));
    }
}
