#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace seqrerand {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// 1 = treatment, 0 = control
using AssignmentVector = std::vector<std::uint8_t>;

enum class CovarianceMode { Homogeneous, Heterogeneous };

// covariance with its cached lower Cholesky factor; quadratic forms go
// through triangular solves, never an explicit inverse
struct SpdMatrix {
    Matrix m;
    Matrix chol;
};

// covariates (p rows) by units (2N columns); columns are ordered by group:
// group k holds columns [cum_{k-1}, cum_k)
struct CovariateDataset {
    Matrix data;
    std::vector<long> group_units;  // units per group, sum = 2N
    double omega = 0.5;
    CovarianceMode mode = CovarianceMode::Homogeneous;

    long total_units() const;
    // throws on bad partition, omega outside (0,1), or fractional omega*units
    void validate() const;
};

// divisor m-1; factorization pivots below 1e-10 x (largest diagonal) throw
// RankDeficient carrying the pivot index
SpdMatrix sample_covariance(const Matrix& X);

// treatment mean minus control mean per covariate row
Vector mean_difference(const Matrix& Xk, const AssignmentVector& w, double omega);

// D^T C^{-1} D via two triangular solves on the cached factor
double quadratic_form(const SpdMatrix& cov, const Vector& d);

// units * omega * (1-omega) * D^T cov^{-1} D over the pooled prefix
double mahalanobis_homogeneous(const Matrix& X_prefix, const AssignmentVector& w_prefix,
                               double omega, const SpdMatrix& cov);

// Z_k = sqrt(units_k * omega * (1-omega)) * L^{-1} D_k; |Z_k|^2 is the
// within-group balance distance
Vector standardized_diff(const Matrix& Xk, const AssignmentVector& w, double omega);
Vector standardized_diff(const Matrix& Xk, const AssignmentVector& w, double omega,
                         const SpdMatrix& cov);

// |sum_j sqrt(units_j) Z_j|^2 / sum_j units_j, candidate in the last slot
double mahalanobis_heterogeneous(const std::vector<Vector>& zs,
                                 const std::vector<long>& group_units);

}  // namespace seqrerand
