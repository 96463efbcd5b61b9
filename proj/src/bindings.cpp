#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <numeric>

#include "seqrerand/budget.hpp"
#include "seqrerand/datagen.hpp"
#include "seqrerand/distributions.hpp"
#include "seqrerand/engine.hpp"
#include "seqrerand/errors.hpp"
#include "seqrerand/harness.hpp"
#include "seqrerand/linalg.hpp"

namespace py = pybind11;
using namespace seqrerand;

namespace {

CovariateDataset make_dataset(Matrix data, std::vector<long> group_units, double omega,
                              const std::string& mode) {
    CovariateDataset ds;
    ds.data = std::move(data);
    ds.group_units = std::move(group_units);
    ds.omega = omega;
    if (mode == "heterogeneous") {
        ds.mode = CovarianceMode::Heterogeneous;
    } else if (mode == "homogeneous") {
        ds.mode = CovarianceMode::Homogeneous;
    } else {
        throw DomainError("mode must be 'homogeneous' or 'heterogeneous'");
    }
    return ds;
}

BudgetPlan make_plan(std::vector<long> per_group, long cap_multiplier) {
    BudgetPlan plan;
    plan.total = std::accumulate(per_group.begin(), per_group.end(), 0L);
    plan.per_group = std::move(per_group);
    plan.cap_multiplier = cap_multiplier;
    return plan;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "sequential rerandomization for covariate balance";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<InfeasibleBudget>(m, "InfeasibleBudget", base.ptr());
    py::register_exception<RankDeficient>(m, "RankDeficient", base.ptr());
    py::register_exception<UnderflowError>(m, "UnderflowError", base.ptr());

    py::class_<BudgetPlan>(m, "BudgetPlan")
        .def_readonly("total", &BudgetPlan::total)
        .def_readonly("per_group", &BudgetPlan::per_group)
        .def_readonly("floor", &BudgetPlan::floor)
        .def_readonly("cap_multiplier", &BudgetPlan::cap_multiplier)
        .def("__repr__", [](const BudgetPlan& p) {
            std::string s = "BudgetPlan([";
            for (std::size_t i = 0; i < p.per_group.size(); ++i)
                s += (i ? "," : "") + std::to_string(p.per_group[i]);
            return s + "])";
        });

    py::class_<TrialOutcome>(m, "TrialOutcome")
        .def_readonly("assignments", &TrialOutcome::assignments)
        .def_readonly("m_sequence", &TrialOutcome::m_sequence)
        .def_readonly("attempts", &TrialOutcome::attempts)
        .def_readonly("fallback_flags", &TrialOutcome::fallback_flags)
        .def_readonly("final_m", &TrialOutcome::final_m);

    m.def("cp_constant", &cp_constant, py::arg("p"),
          "leading constant of the optimal budget recursion");
    m.def(
        "allocate",
        [](long total, int p, std::vector<long> group_sizes, long floor) {
            return allocate(total, p, group_sizes, floor);
        },
        py::arg("total"), py::arg("p"), py::arg("group_sizes"), py::arg("floor") = -1,
        "split a total rerandomization budget across enrollment groups");
    m.def("threshold", &threshold, py::arg("p"), py::arg("group_sizes"), py::arg("k"),
          py::arg("m_prev"), py::arg("s_k"),
          "acceptance threshold for group k given the running statistic");
    m.def("analytic_complete_mean", &analytic_complete_mean, py::arg("p"), py::arg("s"),
          "mean accepted balance statistic of single-stage rerandomization");

    m.def("chi2_cdf", &chi2_cdf, py::arg("x"), py::arg("p"));
    m.def("chi2_quantile", &chi2_quantile, py::arg("u"), py::arg("p"));
    m.def("nc_chi2_cdf", &nc_chi2_cdf, py::arg("x"), py::arg("p"), py::arg("lambda_"));
    m.def("nc_chi2_quantile", &nc_chi2_quantile, py::arg("u"), py::arg("p"),
          py::arg("lambda_"));
    m.def("nc_chi2_truncated_mean", &nc_chi2_truncated_mean, py::arg("p"), py::arg("lambda_"),
          py::arg("a"), "E(Y | Y < a) for a noncentral chi-squared Y");

    m.def(
        "run_sequential",
        [](Matrix data, std::vector<long> group_units, std::vector<long> per_group,
           double omega, const std::string& mode, std::uint64_t seed, long cap_multiplier,
           std::uint64_t replicate) {
            CovariateDataset ds = make_dataset(std::move(data), std::move(group_units), omega, mode);
            BudgetPlan plan = make_plan(std::move(per_group), cap_multiplier);
            Rng rng = replicate_rng(seed, replicate);
            return run_sequential(ds, plan, rng);
        },
        py::arg("data"), py::arg("group_units"), py::arg("per_group"), py::arg("omega") = 0.5,
        py::arg("mode") = "homogeneous", py::arg("seed") = 0, py::arg("cap_multiplier") = 10,
        py::arg("replicate") = 0,
        "rerandomize group by group against per-group acceptance thresholds");
    m.def(
        "run_complete",
        [](Matrix data, long s, double omega, std::uint64_t seed, long cap_multiplier,
           std::uint64_t replicate) {
            CovariateDataset ds =
                make_dataset(std::move(data), {}, omega, "homogeneous");
            ds.group_units = {ds.data.cols()};
            Rng rng = replicate_rng(seed, replicate);
            return run_complete(ds, s, rng, cap_multiplier);
        },
        py::arg("data"), py::arg("s"), py::arg("omega") = 0.5, py::arg("seed") = 0,
        py::arg("cap_multiplier") = 10, py::arg("replicate") = 0,
        "single-stage rerandomization of the whole dataset");
    m.def(
        "run_pairwise_qin",
        [](Matrix data, double coin_bias, std::uint64_t seed, std::uint64_t replicate) {
            CovariateDataset ds = make_dataset(std::move(data), {}, 0.5, "homogeneous");
            ds.group_units.assign(ds.data.cols() / 2, 2L);
            if (ds.data.cols() % 2 != 0)
                throw DomainError("pairwise baseline needs an even number of units");
            const SpdMatrix cov = sample_covariance(ds.data);
            Rng rng = replicate_rng(seed, replicate);
            return run_pairwise_qin(ds, coin_bias, cov, rng);
        },
        py::arg("data"), py::arg("coin_bias"), py::arg("seed") = 0, py::arg("replicate") = 0,
        "biased-coin pairwise baseline against the full-sample covariance");
    m.def(
        "sample_ideal_chain",
        [](int p, std::vector<long> group_sizes, std::vector<long> per_group,
           std::uint64_t seed, std::uint64_t replicate) {
            BudgetPlan plan = make_plan(std::move(per_group), 10);
            Rng rng = replicate_rng(seed, replicate);
            return sample_ideal_chain(p, group_sizes, plan, rng);
        },
        py::arg("p"), py::arg("group_sizes"), py::arg("per_group"), py::arg("seed") = 0,
        py::arg("replicate") = 0,
        "accepted balance statistics drawn straight from their limiting law");
    m.def(
        "gen_covariates",
        [](long units, int p, const std::string& dist, std::uint64_t seed,
           std::uint64_t replicate) {
            Rng rng = replicate_rng(seed, replicate);
            return gen_covariates(units, p, distribution_from_name(dist), rng);
        },
        py::arg("units"), py::arg("p"), py::arg("dist") = "std-normal", py::arg("seed") = 0,
        py::arg("replicate") = 0, "p x units matrix of i.i.d. draws");
    m.def(
        "surrogate_ucec",
        [](std::uint64_t seed) {
            Rng rng = replicate_rng(seed, 0);
            return surrogate_ucec(rng).data;
        },
        py::arg("seed") = 0, "synthetic 12 x 548 clinical covariate table");
    m.def(
        "tau_hat",
        [](const Vector& y, const std::vector<std::uint8_t>& w) { return tau_hat(y, w); },
        py::arg("y"), py::arg("assignments"), "difference-in-means effect estimate");
    m.def(
        "recompute_m_sequence",
        [](Matrix data, std::vector<long> group_units, std::vector<std::uint8_t> w,
           double omega, const std::string& mode) {
            CovariateDataset ds = make_dataset(std::move(data), std::move(group_units), omega, mode);
            return recompute_m_sequence(ds, w);
        },
        py::arg("data"), py::arg("group_units"), py::arg("assignments"),
        py::arg("omega") = 0.5, py::arg("mode") = "homogeneous",
        "per-group balance statistics recomputed from scratch");
}
