#pragma once

#include "seqrerand/rng.hpp"

namespace seqrerand {

struct NoncentralChi2 {
    int dof;        // p >= 1
    double lambda;  // non-centrality >= 0
};

// support restricted to (0, upper)
struct TruncatedNoncentralChi2 {
    NoncentralChi2 base;
    double upper;
};

double normal_cdf(double x);
double normal_quantile(double u);

// F_{chi^2_p}(x); absolute accuracy ~1e-13 on [0, 200]
double chi2_cdf(double x, int p);

// inverse of chi2_cdf; |F(result) - u| <= 1e-10
double chi2_quantile(double u, int p);

// Poisson-mixture series over central CDFs, expanded from the modal weight
// outward until the remaining Poisson mass is < 1e-14
double nc_chi2_cdf(double x, int p, double lambda);

double nc_chi2_quantile(double u, int p, double lambda);

// E(Y | Y < a) for Y ~ chi^2_p(lambda); throws UnderflowError when the
// acceptance mass F(a) is below 1e-300
double nc_chi2_truncated_mean(int p, double lambda, double a);

// leading small-a behaviour of the CDF: a^{p/2} e^{-lambda/2} / (2^{p/2} Gamma(p/2+1))
double small_a_cdf_asymptote(int p, double lambda, double a);

// one draw from chi^2_p(lambda): (Z + sqrt(lambda))^2 + central chi^2_{p-1}
double sample_nc_chi2(int p, double lambda, Rng& rng);

// inverse-CDF draw conditioned below dist.upper; cost independent of the
// acceptance probability (rejection would scale with its reciprocal)
double sample_truncated(const TruncatedNoncentralChi2& dist, Rng& rng);

// E(Y1^2 | (a1 Y1 + a2 Y2)^2 < c) for independent standard normals Y1, Y2:
//   1 - 2 beta gamma phi(gamma) / (Phi(gamma) - Phi(-gamma)),
//   beta = a1^2/(a1^2+a2^2), gamma = sqrt(c/(a1^2+a2^2))
double conditional_normal_second_moment(double a1, double a2, double c);

}  // namespace seqrerand
