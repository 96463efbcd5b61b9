#include "seqrerand/linalg.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "seqrerand/errors.hpp"

namespace seqrerand {

namespace {

// lower Cholesky with an explicit pivot floor so the offending row is known
Matrix chol_lower(const Matrix& a) {
    const int p = static_cast<int>(a.rows());
    const double tol = 1e-10 * a.diagonal().maxCoeff();
    Matrix l = Matrix::Zero(p, p);
    for (int j = 0; j < p; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!(d > tol)) {
            throw RankDeficient(
                "covariance is rank deficient at pivot " + std::to_string(j), j);
        }
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < p; ++i) {
            l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
        }
    }
    return l;
}

}  // namespace

long CovariateDataset::total_units() const {
    return std::accumulate(group_units.begin(), group_units.end(), 0L);
}

void CovariateDataset::validate() const {
    if (group_units.empty()) throw DomainError("dataset: no groups");
    for (long u : group_units) {
        if (u <= 0) throw DomainError("dataset: group unit counts must be positive");
    }
    if (total_units() != data.cols()) {
        throw ShapeMismatch("dataset: group sizes do not partition the columns");
    }
    if (!(omega > 0.0 && omega < 1.0)) throw DomainError("dataset: omega outside (0,1)");
    for (long u : group_units) {
        double t = omega * static_cast<double>(u);
        if (std::fabs(t - std::round(t)) > 1e-9 || std::round(t) < 1.0) {
            throw DomainError("dataset: omega * units must be a positive integer per group");
        }
    }
}

SpdMatrix sample_covariance(const Matrix& x) {
    const long m = x.cols();
    if (m < 2) throw DomainError("sample_covariance: need at least two units");
    Vector mu = x.rowwise().mean();
    Matrix centered = x.colwise() - mu;
    Matrix c = (centered * centered.transpose()) / static_cast<double>(m - 1);
    SpdMatrix out;
    out.m = std::move(c);
    out.chol = chol_lower(out.m);
    return out;
}

Vector mean_difference(const Matrix& xk, const AssignmentVector& w, double omega) {
    const long m = xk.cols();
    if (m != static_cast<long>(w.size())) {
        throw ShapeMismatch("mean_difference: assignment length != column count");
    }
    long nt = 0;
    Vector st = Vector::Zero(xk.rows());
    Vector sc = Vector::Zero(xk.rows());
    for (long i = 0; i < m; ++i) {
        if (w[i]) {
            st += xk.col(i);
            ++nt;
        } else {
            sc += xk.col(i);
        }
    }
    const long nc = m - nt;
    if (nt == 0 || nc == 0) throw DomainError("mean_difference: one-sided assignment");
    double expected = omega * static_cast<double>(m);
    if (std::fabs(expected - static_cast<double>(nt)) > 1e-9) {
        throw DomainError("mean_difference: assignment not balanced for omega");
    }
    return st / static_cast<double>(nt) - sc / static_cast<double>(nc);
}

double quadratic_form(const SpdMatrix& cov, const Vector& d) {
    if (d.size() != cov.chol.rows()) {
        throw ShapeMismatch("quadratic_form: vector length != factor dimension");
    }
    Vector y = cov.chol.triangularView<Eigen::Lower>().solve(d);
    return y.squaredNorm();
}

double mahalanobis_homogeneous(const Matrix& x_prefix, const AssignmentVector& w_prefix,
                               double omega, const SpdMatrix& cov) {
    if (x_prefix.rows() != cov.m.rows()) {
        throw ShapeMismatch("mahalanobis_homogeneous: covariate dimension mismatch");
    }
    Vector d = mean_difference(x_prefix, w_prefix, omega);
    double units = static_cast<double>(x_prefix.cols());
    return units * omega * (1.0 - omega) * quadratic_form(cov, d);
}

Vector standardized_diff(const Matrix& xk, const AssignmentVector& w, double omega,
                         const SpdMatrix& cov) {
    Vector d = mean_difference(xk, w, omega);
    double scale = std::sqrt(static_cast<double>(xk.cols()) * omega * (1.0 - omega));
    return scale * cov.chol.triangularView<Eigen::Lower>().solve(d);
}

Vector standardized_diff(const Matrix& xk, const AssignmentVector& w, double omega) {
    return standardized_diff(xk, w, omega, sample_covariance(xk));
}

double mahalanobis_heterogeneous(const std::vector<Vector>& zs,
                                 const std::vector<long>& group_units) {
    if (zs.empty() || zs.size() > group_units.size()) {
        throw ShapeMismatch("mahalanobis_heterogeneous: group count mismatch");
    }
    const auto p = zs.front().size();
    Vector acc = Vector::Zero(p);
    double total = 0.0;
    for (size_t j = 0; j < zs.size(); ++j) {
        if (zs[j].size() != p) {
            throw ShapeMismatch("mahalanobis_heterogeneous: inconsistent vector lengths");
        }
        acc += std::sqrt(static_cast<double>(group_units[j])) * zs[j];
        total += static_cast<double>(group_units[j]);
    }
    return acc.squaredNorm() / total;
}

}  // namespace seqrerand
