#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "seqrerand/budget.hpp"
#include "seqrerand/distributions.hpp"
#include "seqrerand/errors.hpp"
#include "seqrerand/rng.hpp"

using namespace seqrerand;

namespace {

double chain_target(int p, double n_prev, double n_next, long s_next) {
    return std::pow(
        cp_constant(p) * n_prev * static_cast<double>(s_next) / (p * n_next),
        static_cast<double>(p) / (p + 2.0));
}

long total_of(const BudgetPlan& plan) {
    return std::accumulate(plan.per_group.begin(), plan.per_group.end(), 0L);
}

// One draw of the final statistic from the idealized sequential chain: each
// group's scaled statistic follows a noncentral chi-squared law given the
// previous accepted value, with the usual cap-and-fallback semantics.
double ideal_chain_draw(int p, const std::vector<long>& s, Rng& rng) {
    const std::size_t groups = s.size();
    const std::vector<long> sizes(groups, 1);
    double m = 0.0;
    for (std::size_t k = 0; k < groups; ++k) {
        const double q = static_cast<double>(k + 1);
        const double lam = (q - 1.0) * m;
        const double a = threshold(p, sizes, static_cast<int>(k) + 1, m, s[k]);
        if (std::isinf(a)) {
            m = sample_nc_chi2(p, lam, rng) / q;
            continue;
        }
        const double upper = q * a;
        const long cap = 10 * s[k];
        const double p_accept =
            1.0 - std::pow(1.0 - 1.0 / static_cast<double>(s[k]), static_cast<double>(cap));
        if (uniform01(rng) < p_accept) {
            m = sample_truncated({{p, lam}, upper}, rng) / q;
        } else {
            double best = std::numeric_limits<double>::infinity();
            for (long t = 0; t < cap; ++t) {
                double d;
                do {
                    d = sample_nc_chi2(p, lam, rng);
                } while (d < upper);
                best = std::min(best, d);
            }
            m = best / q;
        }
    }
    return m;
}

}  // namespace

TEST_CASE("budget constant") {
    CHECK(cp_constant(2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cp_constant(1) == doctest::Approx(0.52359877559829887).epsilon(1e-14));
    CHECK(cp_constant(5) == doctest::Approx(2.3095769861308058).epsilon(1e-14));
    CHECK(cp_constant(10) == doctest::Approx(4.3419518078289201).epsilon(1e-14));
    CHECK(cp_constant(12) == doctest::Approx(5.1322202837552720).epsilon(1e-14));
    for (int p = 1; p <= 50; ++p) {
        double c = cp_constant(p);
        CHECK(c > 0.0);
        CHECK(c < static_cast<double>(p));
    }
    CHECK_THROWS_AS(cp_constant(0), DomainError);
}

TEST_CASE("allocate reproduces the benchmark splits") {
    CHECK(allocate(2000, 5, {1, 1, 1, 1, 1}, 10).per_group ==
          std::vector<long>{10, 12, 22, 120, 1836});
    CHECK(allocate(2000, 5, {100, 100, 100, 100, 100}, 10).per_group ==
          std::vector<long>{10, 12, 22, 120, 1836});
    CHECK(allocate(2000, 12, {92, 91, 91}, 10).per_group ==
          std::vector<long>{62, 284, 1654});
    CHECK(allocate(2000, 12, {184, 182, 182}, 10).per_group ==
          std::vector<long>{62, 284, 1654});
    CHECK(allocate(2000, 12, {220, 220, 108}, 10).per_group ==
          std::vector<long>{94, 472, 1434});
    CHECK(allocate(2000, 12, {110, 110, 110, 110, 108}, 10).per_group ==
          std::vector<long>{10, 19, 56, 272, 1643});
    CHECK(allocate(2000, 12, {56, 56, 56, 56, 54, 54, 54, 54, 54, 54}, 10).per_group ==
          std::vector<long>{10, 10, 10, 10, 10, 12, 19, 55, 264, 1600});
    // default floor at this budget is 10, so the explicit argument is redundant
    CHECK(allocate(2000, 5, {1, 1, 1, 1, 1}).per_group ==
          std::vector<long>{10, 12, 22, 120, 1836});
}

TEST_CASE("allocate recursion references") {
    CHECK(allocate(2000, 5, {1, 1, 1}, 10).per_group == std::vector<long>{18, 125, 1857});
    CHECK(allocate(10000, 2, {1, 1, 1, 1, 1}, 10).per_group ==
          std::vector<long>{10, 10, 10, 70, 9900});
    CHECK(allocate(2000, 10, {1, 1, 1, 1, 1}, 10).per_group ==
          std::vector<long>{10, 13, 49, 244, 1684});
    CHECK(allocate(200, 5, {1, 1, 1, 1, 1}, 5).per_group ==
          std::vector<long>{5, 5, 5, 22, 163});
}

TEST_CASE("allocate invariants over a parameter grid") {
    const std::vector<std::vector<long>> size_sets = {
        {1, 1}, {1, 1, 1}, {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1},
        {3, 2, 1}, {10, 1}, {1, 10}, {7, 5, 3, 1}};
    for (long total : {37L, 200L, 2000L, 10000L}) {
        for (int p : {1, 2, 5, 12}) {
            for (const auto& sizes : size_sets) {
                const long k = static_cast<long>(sizes.size());
                const long f = default_floor(total, sizes.size());
                if (total < k * f) continue;
                BudgetPlan plan = allocate(total, p, sizes);
                CAPTURE(total);
                CAPTURE(p);
                CAPTURE(k);
                CHECK(total_of(plan) == total);
                CHECK(plan.floor == f);
                CHECK(plan.cap_multiplier == 10);
                CHECK(*std::min_element(plan.per_group.begin(), plan.per_group.end()) >= f);
                bool equal_sizes =
                    std::all_of(sizes.begin(), sizes.end(), [&](long n) { return n == sizes[0]; });
                if (equal_sizes) {
                    CHECK(std::is_sorted(plan.per_group.begin(), plan.per_group.end()));
                }
                CHECK(allocate(total, p, sizes, f).per_group == plan.per_group);
            }
        }
    }
}

TEST_CASE("allocate tracks the recursion off the benchmark table") {
    // mild size ratios only: for strongly lopsided ratios no integer vector
    // can satisfy the recursion within +-1 and the exact total at once
    const std::vector<std::vector<long>> size_sets = {
        {1, 1}, {1, 1, 1}, {1, 1, 1, 1, 1}, {3, 2, 2}, {3, 2, 1}, {2, 2, 2, 1}};
    for (long total : {200L, 1000L, 5000L, 10000L}) {
        for (int p : {1, 2, 5, 12}) {
            for (const auto& sizes : size_sets) {
                BudgetPlan plan = allocate(total, p, sizes);
                const auto& s = plan.per_group;
                for (std::size_t j = 0; j + 1 < s.size(); ++j) {
                    if (s[j] <= plan.floor || s[j + 1] <= plan.floor) continue;
                    double target = chain_target(p, static_cast<double>(sizes[j]),
                                                 static_cast<double>(sizes[j + 1]), s[j + 1]);
                    CAPTURE(total);
                    CAPTURE(p);
                    CAPTURE(j);
                    CHECK(std::llabs(s[j] - static_cast<long>(std::floor(target + 0.5))) <= 1);
                }
            }
        }
    }
}

TEST_CASE("last group dominates large budgets") {
    for (int p : {1, 2, 5}) {
        for (std::size_t k : {2u, 3u, 5u, 10u}) {
            BudgetPlan plan = allocate(10000, p, std::vector<long>(k, 1));
            CHECK(static_cast<double>(plan.per_group.back()) / 10000.0 >= 0.85);
        }
    }
}

TEST_CASE("allocate argument validation") {
    CHECK_THROWS_AS(allocate(25, 2, {1, 1, 1}, 10), InfeasibleBudget);
    CHECK(allocate(30, 2, {1, 1, 1}, 10).per_group == std::vector<long>{10, 10, 10});
    CHECK_THROWS_AS(allocate(0, 2, {1, 1}), DomainError);
    CHECK_THROWS_AS(allocate(100, 0, {1, 1}), DomainError);
    CHECK_THROWS_AS(allocate(100, 2, {}), DomainError);
    CHECK_THROWS_AS(allocate(100, 2, {3, 0}), DomainError);
    CHECK(allocate(137, 3, {5}).per_group == std::vector<long>{137});
}

TEST_CASE("default floor rule") {
    CHECK(default_floor(2000, 5) == 10);
    CHECK(default_floor(5000, 3) == 10);
    CHECK(default_floor(1999, 5) == 10);
    CHECK(default_floor(100, 3) == 10);
    CHECK(default_floor(40, 4) == 5);
    CHECK(default_floor(10, 3) == 1);
    CHECK(default_floor(3, 2) == 1);
}

TEST_CASE("first-group threshold is the single-stage quantile") {
    CHECK(threshold(5, {3, 2}, 1, 0.0, 2000) ==
          doctest::Approx(chi2_quantile(1.0 / 2000.0, 5)).epsilon(1e-9));
    CHECK(threshold(2, {1}, 1, 0.0, 100) ==
          doctest::Approx(chi2_quantile(0.01, 2)).epsilon(1e-9));
}

TEST_CASE("threshold grows with the carried statistic") {
    double prev = 0.0;
    for (double m : {0.0, 0.5, 1.0, 2.0, 5.0}) {
        double a = threshold(5, {1, 1}, 2, m, 100);
        CHECK(a > prev);
        prev = a;
    }
}

TEST_CASE("threshold chain along the benchmark split") {
    const std::vector<long> sizes{1, 1, 1, 1, 1};
    const std::vector<long> s{10, 12, 22, 120, 1836};
    const double want_a[5] = {1.6103079869623227, 0.90781809352962417,
                              0.4647353871631677, 0.15497565953109205,
                              0.035733059082890352};
    const double want_f[5] = {1.0878343295272483, 0.61732184546177593,
                              0.32033021574187664, 0.10889846404649062,
                              0.025390601809893488};
    double f = 0.0;
    for (int k = 1; k <= 5; ++k) {
        const double q = static_cast<double>(k);
        const double lam = (q - 1.0) * f;
        const double a = threshold(5, sizes, k, f, s[k - 1]);
        CHECK(a == doctest::Approx(want_a[k - 1]).epsilon(1e-10));
        f = nc_chi2_truncated_mean(5, lam, q * a) / q;
        CHECK(f == doctest::Approx(want_f[k - 1]).epsilon(1e-10));
    }
}

TEST_CASE("threshold chain with unequal group sizes") {
    const std::vector<long> sizes{55, 55, 55, 55, 54};
    const std::vector<long> s{10, 19, 56, 272, 1643};
    double f = 0.0, u_prefix = 0.0;
    for (int k = 1; k <= 5; ++k) {
        u_prefix += static_cast<double>(sizes[k - 1]);
        const double q = u_prefix / static_cast<double>(sizes[k - 1]);
        const double lam = (q - 1.0) * f;
        const double a = threshold(12, sizes, k, f, s[k - 1]);
        f = nc_chi2_truncated_mean(12, lam, q * a) / q;
    }
    // quantile-inversion tolerances compound across the five stages
    CHECK(f == doctest::Approx(0.45206669313033371).epsilon(1e-8));
}

TEST_CASE("threshold matches an empirical quantile") {
    const double a = threshold(1, {1, 1}, 2, 0.01, 100);
    const long n = 1000000;
    Rng rng = replicate_rng(404, 0);
    long below = 0;
    for (long i = 0; i < n; ++i) {
        if (0.5 * sample_nc_chi2(1, 0.01, rng) < a) ++below;
    }
    const double phat = static_cast<double>(below) / static_cast<double>(n);
    const double se = std::sqrt(0.01 * 0.99 / static_cast<double>(n));
    CHECK(std::fabs(phat - 0.01) < 3.0 * se);
}

TEST_CASE("threshold argument validation") {
    CHECK(std::isinf(threshold(5, {1, 1}, 2, 0.3, 1)));
    CHECK_THROWS_AS(threshold(5, {1, 1}, 0, 0.0, 10), DomainError);
    CHECK_THROWS_AS(threshold(5, {1, 1}, 3, 0.0, 10), DomainError);
    CHECK_THROWS_AS(threshold(5, {1, 1}, 2, -0.1, 10), DomainError);
    CHECK_THROWS_AS(threshold(5, {1, 1}, 1, 0.5, 10), DomainError);
    CHECK_THROWS_AS(threshold(5, {1, 1}, 2, 0.5, 0), DomainError);
}

TEST_CASE("allocated split beats nearby perturbations") {
    const long reps = 4000;
    for (int p : {2, 5}) {
        BudgetPlan plan = allocate(2000, p, {1, 1});
        std::vector<double> base(reps);
        for (long r = 0; r < reps; ++r) {
            Rng g = replicate_rng(909, static_cast<std::uint64_t>(r));
            base[r] = ideal_chain_draw(p, plan.per_group, g);
        }
        double bsum = 0.0, bsq = 0.0;
        for (double v : base) {
            bsum += v;
            bsq += v * v;
        }
        const double bmean = bsum / static_cast<double>(reps);
        const double bvar =
            (bsq - bsum * bsum / static_cast<double>(reps)) / static_cast<double>(reps - 1);

        std::uint64_t stream = 1;
        for (long delta : {5L, 20L, 100L}) {
            for (int sign : {1, -1}) {
                ++stream;
                const std::vector<long> pert{plan.per_group[0] + sign * delta,
                                             plan.per_group[1] - sign * delta};
                if (pert[0] < 1 || pert[1] < 1) continue;
                double psum = 0.0, psq = 0.0;
                for (long r = 0; r < reps; ++r) {
                    Rng g = replicate_rng(909 + stream * 7919, static_cast<std::uint64_t>(r));
                    const double v = ideal_chain_draw(p, pert, g);
                    psum += v;
                    psq += v * v;
                }
                const double pmean = psum / static_cast<double>(reps);
                const double pvar =
                    (psq - psum * psum / static_cast<double>(reps)) /
                    static_cast<double>(reps - 1);
                const double se = std::sqrt((bvar + pvar) / static_cast<double>(reps));
                CAPTURE(p);
                CAPTURE(delta);
                CAPTURE(sign);
                CHECK(bmean <= pmean + 2.0 * se);
            }
        }
    }
}
