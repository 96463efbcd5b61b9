#include "seqrerand/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "seqrerand/errors.hpp"

namespace seqrerand {

AssignmentVector random_balanced_assignment(long units, double omega, Rng& rng) {
    if (units < 2) throw DomainError("assignment: need at least two units");
    const double t = omega * static_cast<double>(units);
    const long treated = std::llround(t);
    if (std::fabs(t - static_cast<double>(treated)) > 1e-9 || treated < 1 ||
        treated >= units) {
        throw DomainError("assignment: omega * units must be an integer in [1, units-1]");
    }
    AssignmentVector w(static_cast<std::size_t>(units), 0);
    std::fill(w.begin(), w.begin() + treated, std::uint8_t{1});
    for (long i = units - 1; i > 0; --i) {
        // index drawn through the unit interval keeps the stream portable
        long j = static_cast<long>(uniform01(rng) * static_cast<double>(i + 1));
        if (j > i) j = i;
        std::swap(w[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(j)]);
    }
    return w;
}

TrialOutcome run_sequential(const CovariateDataset& ds, const BudgetPlan& plan,
                            Rng& rng) {
    ds.validate();
    const std::size_t groups = ds.group_units.size();
    if (plan.per_group.size() != groups) {
        throw ShapeMismatch("run_sequential: plan does not match the group count");
    }
    for (long s : plan.per_group) {
        if (s < 1) throw DomainError("run_sequential: budget entries must be >= 1");
    }
    if (plan.cap_multiplier < 1) {
        throw DomainError("run_sequential: cap multiplier must be >= 1");
    }

    const int p = static_cast<int>(ds.data.rows());
    const double omega = ds.omega;
    const bool homogeneous = ds.mode == CovarianceMode::Homogeneous;

    TrialOutcome out;
    out.assignments.reserve(static_cast<std::size_t>(ds.total_units()));
    out.m_sequence.resize(groups);
    out.attempts.resize(groups);
    out.fallback_flags.assign(groups, 0);

    SequentialState st;
    st.weighted_diff_sum = Vector::Zero(p);
    st.z_accumulator = Vector::Zero(p);

    long offset = 0;
    double u_prefix = 0.0;
    for (std::size_t k = 0; k < groups; ++k) {
        const long uk = ds.group_units[k];
        const double ukd = static_cast<double>(uk);
        u_prefix += ukd;
        const double a = threshold(p, ds.group_units, static_cast<int>(k) + 1,
                                   st.m_prev, plan.per_group[k]);
        const long cap = plan.cap_multiplier * plan.per_group[k];

        const Matrix x_group = ds.data.middleCols(offset, uk);
        const SpdMatrix factor = homogeneous
                                     ? sample_covariance(ds.data.leftCols(offset + uk))
                                     : sample_covariance(x_group);

        AssignmentVector best_w;
        Vector best_carrier;
        double best_m = std::numeric_limits<double>::infinity();
        long tries = 0;
        bool accepted = false;
        while (tries < cap) {
            ++tries;
            AssignmentVector w = random_balanced_assignment(uk, omega, rng);
            double m;
            Vector carrier;
            if (homogeneous) {
                carrier = mean_difference(x_group, w, omega);
                Vector pooled = (st.weighted_diff_sum + ukd * carrier) / u_prefix;
                m = u_prefix * omega * (1.0 - omega) * quadratic_form(factor, pooled);
            } else {
                carrier = standardized_diff(x_group, w, omega, factor);
                m = (st.z_accumulator + std::sqrt(ukd) * carrier).squaredNorm() / u_prefix;
            }
            if (m < best_m) {
                best_m = m;
                best_w = std::move(w);
                best_carrier = std::move(carrier);
            }
            if (best_m < a) {
                accepted = true;
                break;
            }
        }

        out.attempts[k] = tries;
        out.fallback_flags[k] = accepted ? 0 : 1;
        out.m_sequence[k] = best_m;
        out.assignments.insert(out.assignments.end(), best_w.begin(), best_w.end());
        st.m_prev = best_m;
        if (homogeneous) {
            st.weighted_diff_sum += ukd * best_carrier;
        } else {
            st.z_accumulator += std::sqrt(ukd) * best_carrier;
        }
        st.fixed_assignments = out.assignments;
        st.completed = static_cast<int>(k) + 1;
        offset += uk;
    }

    out.final_m = out.m_sequence.back();
    return out;
}

TrialOutcome run_complete(const CovariateDataset& ds, long s, Rng& rng, long cap_multiplier) {
    if (s < 1) throw DomainError("run_complete: budget must be positive");
    CovariateDataset pooled = ds;
    pooled.group_units = {ds.total_units()};
    BudgetPlan plan;
    plan.total = s;
    plan.per_group = {s};
    plan.floor = 1;
    plan.cap_multiplier = cap_multiplier;
    return run_sequential(pooled, plan, rng);
}

TrialOutcome run_pairwise_qin(const CovariateDataset& ds, double coin_bias,
                              const SpdMatrix& cov_known, Rng& rng) {
    ds.validate();
    for (long u : ds.group_units) {
        if (u != 2) throw DomainError("pairwise baseline: groups must hold exactly two units");
    }
    if (ds.omega != 0.5) throw DomainError("pairwise baseline: omega must be 1/2");
    if (!(coin_bias > 0.5 && coin_bias <= 1.0)) {
        throw DomainError("pairwise baseline: coin bias must lie in (1/2, 1]");
    }
    if (cov_known.m.rows() != ds.data.rows()) {
        throw ShapeMismatch("pairwise baseline: covariance dimension mismatch");
    }

    const std::size_t pairs = ds.group_units.size();
    const int p = static_cast<int>(ds.data.rows());

    TrialOutcome out;
    out.assignments.resize(2 * pairs);
    out.m_sequence.resize(pairs);
    out.attempts.assign(pairs, 1);
    out.fallback_flags.assign(pairs, 0);

    Vector y = Vector::Zero(p);  // whitened running signed sum
    for (std::size_t j = 0; j < pairs; ++j) {
        const Vector d = ds.data.col(2 * j) - ds.data.col(2 * j + 1);
        const Vector yd = cov_known.chol.triangularView<Eigen::Lower>().solve(d);
        const double denom = 2.0 * static_cast<double>(j + 1);
        const double m_plus = (y + yd).squaredNorm() / denom;
        const double m_minus = (y - yd).squaredNorm() / denom;
        const bool plus_smaller = m_plus <= m_minus;
        const bool take_smaller = uniform01(rng) < coin_bias;
        const bool take_plus = take_smaller ? plus_smaller : !plus_smaller;
        if (take_plus) {
            y += yd;
            out.assignments[2 * j] = 1;
            out.assignments[2 * j + 1] = 0;
            out.m_sequence[j] = m_plus;
        } else {
            y -= yd;
            out.assignments[2 * j] = 0;
            out.assignments[2 * j + 1] = 1;
            out.m_sequence[j] = m_minus;
        }
    }
    out.final_m = out.m_sequence.back();
    return out;
}

std::vector<double> recompute_m_sequence(const CovariateDataset& ds,
                                         const AssignmentVector& w) {
    ds.validate();
    if (static_cast<long>(w.size()) != ds.total_units()) {
        throw ShapeMismatch("recompute: assignment length != unit count");
    }
    const std::size_t groups = ds.group_units.size();
    const int p = static_cast<int>(ds.data.rows());
    std::vector<double> ms(groups);
    long offset = 0;
    double u_prefix = 0.0;
    Vector z_acc = Vector::Zero(p);
    for (std::size_t k = 0; k < groups; ++k) {
        const long uk = ds.group_units[k];
        u_prefix += static_cast<double>(uk);
        if (ds.mode == CovarianceMode::Homogeneous) {
            const Matrix x_prefix = ds.data.leftCols(offset + uk);
            const AssignmentVector w_prefix(w.begin(), w.begin() + offset + uk);
            ms[k] = mahalanobis_homogeneous(x_prefix, w_prefix, ds.omega,
                                            sample_covariance(x_prefix));
        } else {
            const Matrix x_group = ds.data.middleCols(offset, uk);
            const AssignmentVector w_group(w.begin() + offset, w.begin() + offset + uk);
            z_acc += std::sqrt(static_cast<double>(uk)) *
                     standardized_diff(x_group, w_group, ds.omega);
            ms[k] = z_acc.squaredNorm() / u_prefix;
        }
        offset += uk;
    }
    return ms;
}

double tau_hat(const Vector& y, const AssignmentVector& w) {
    if (y.size() != static_cast<long>(w.size())) {
        throw ShapeMismatch("tau_hat: outcome length != assignment length");
    }
    long treated = 0;
    double acc = 0.0;
    for (long i = 0; i < y.size(); ++i) {
        if (w[static_cast<std::size_t>(i)]) {
            acc += y[i];
            ++treated;
        } else {
            acc -= y[i];
        }
    }
    if (2 * treated != y.size()) {
        throw DomainError("tau_hat: assignment must split the units evenly");
    }
    return acc / (0.5 * static_cast<double>(y.size()));
}

OutcomeModel fit_outcome_model(const Matrix& x, const Vector& y0, double tau) {
    const long m = x.cols();
    if (y0.size() != m) throw ShapeMismatch("fit_outcome_model: outcome length != unit count");
    if (m < x.rows() + 2) throw DomainError("fit_outcome_model: too few units");
    Matrix a(m, x.rows() + 1);
    a.col(0).setOnes();
    a.rightCols(x.rows()) = x.transpose();
    const Vector coef = a.colPivHouseholderQr().solve(y0);
    OutcomeModel model;
    model.beta0 = coef[0];
    model.beta = coef.tail(x.rows());
    model.tau = tau;
    model.noise = y0 - a * coef;
    return model;
}

OutcomeModel synth_outcome_model(const Matrix& x, double r2, double tau, Rng& rng) {
    if (!(r2 > 0.0 && r2 < 1.0)) {
        throw DomainError("synth_outcome_model: signal share must lie in (0,1)");
    }
    const long m = x.cols();
    const Vector signal = x.transpose() * Vector::Ones(x.rows());
    const double mean = signal.mean();
    const double var = (signal.array() - mean).square().sum() / static_cast<double>(m - 1);
    if (!(var > 0.0)) throw DomainError("synth_outcome_model: covariates carry no signal");
    const double sigma = std::sqrt(var * (1.0 - r2) / r2);
    Vector y0(m);
    for (long i = 0; i < m; ++i) y0[i] = signal[i] + sigma * draw_normal(rng);
    return fit_outcome_model(x, y0, tau);
}

Vector simulate_outcomes(const OutcomeModel& model, const Matrix& x,
                         const AssignmentVector& w) {
    if (model.beta.size() != x.rows() || model.noise.size() != x.cols() ||
        static_cast<long>(w.size()) != x.cols()) {
        throw ShapeMismatch("simulate_outcomes: dimension mismatch");
    }
    Vector y = ((x.transpose() * model.beta).array() + model.beta0).matrix() + model.noise;
    for (long i = 0; i < y.size(); ++i) {
        if (w[static_cast<std::size_t>(i)]) y[i] += model.tau;
    }
    return y;
}

double variance_reduction(double nu, double r2) { return (1.0 - nu) * r2; }

}  // namespace seqrerand
