#include "seqrerand/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqrerand/errors.hpp"

namespace seqrerand {

namespace {

constexpr double kTailEps = 1e-14;    // stop the Poisson mixture at 1 - this
constexpr double kQuantileTol = 1e-10;  // tolerance in probability
constexpr double kUnderflow = 1e-300;

// regularized lower incomplete gamma P(a, x)
double gammap(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) {
        // series representation
        double ap = a;
        double del = 1.0 / a;
        double sum = del;
        for (int i = 0; i < 2000; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-17) break;
        }
        double lg = -x + a * std::log(x) - std::lgamma(a);
        return lg < -745.0 ? 0.0 : sum * std::exp(lg);
    }
    // continued fraction for Q(a, x), modified Lentz
    const double fpmin = 1e-308;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 2000; ++i) {
        double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-17) break;
    }
    double lg = -x + a * std::log(x) - std::lgamma(a);
    double q = lg < -745.0 ? 0.0 : h * std::exp(lg);
    return 1.0 - q;
}

double chi2_pdf(double x, int p) {
    if (x <= 0.0) return 0.0;
    double lg = (0.5 * p - 1.0) * std::log(x) - 0.5 * x - std::lgamma(0.5 * p) -
                0.5 * p * 0.6931471805599453094;
    return lg < -745.0 ? 0.0 : std::exp(lg);
}

// generic monotone-CDF inversion: secant with a maintained bracket
template <typename F>
double invert_cdf(F&& cdf, double u, double lo, double hi, double tol) {
    double flo = cdf(lo) - u;
    double fhi = cdf(hi) - u;
    if (flo > 0.0) return lo;
    if (fhi < 0.0) return hi;
    double x0 = lo, f0 = flo, x1 = hi, f1 = fhi;
    for (int i = 0; i < 300; ++i) {
        double x2;
        if (std::fabs(f1 - f0) > 0.0) {
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
            if (!(x2 > lo && x2 < hi)) x2 = 0.5 * (lo + hi);
        } else {
            x2 = 0.5 * (lo + hi);
        }
        double f2 = cdf(x2) - u;
        if (std::fabs(f2) <= tol || hi - lo < 1e-15 * (1.0 + hi)) return x2;
        if (f2 < 0.0) lo = x2; else hi = x2;
        x0 = x1; f0 = f1;
        x1 = x2; f1 = f2;
        // fall back to bisection when the secant stalls against one end
        if (i % 8 == 7) {
            x1 = 0.5 * (lo + hi);
            f1 = cdf(x1) - u;
            if (std::fabs(f1) <= tol) return x1;
            if (f1 < 0.0) lo = x1; else hi = x1;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("normal_quantile: u outside (0,1)");
    // Acklam's rational approximation, then one Newton step
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (u < plow) {
        double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - plow) {
        double q = u - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - u;
    double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    if (pdf > 0.0) x -= e / pdf;
    return x;
}

double chi2_cdf(double x, int p) {
    if (p < 1) throw DomainError("chi2_cdf: dof must be >= 1");
    if (x <= 0.0) return 0.0;
    return std::min(1.0, gammap(0.5 * p, 0.5 * x));
}

double chi2_quantile(double u, int p) {
    if (p < 1) throw DomainError("chi2_quantile: dof must be >= 1");
    if (!(u > 0.0 && u < 1.0)) throw DomainError("chi2_quantile: u outside (0,1)");
    // Wilson–Hilferty start; power-law start when u is deep in the left tail
    double t = 2.0 / (9.0 * p);
    double z = normal_quantile(u);
    double w = 1.0 - t + z * std::sqrt(t);
    double x0 = p * w * w * w;
    if (x0 <= 0.0 || u < 1e-3) {
        x0 = 2.0 * std::exp((std::log(u) + std::lgamma(0.5 * p + 1.0)) / (0.5 * p));
    }
    // Newton with a safety bracket
    double lo = 0.0, hi = std::max(x0 * 2.0, 1.0);
    while (chi2_cdf(hi, p) < u) {
        hi *= 2.0;
        if (hi > 1e12) break;
    }
    double x = std::clamp(x0, 1e-300, hi);
    for (int i = 0; i < 100; ++i) {
        double f = chi2_cdf(x, p) - u;
        if (std::fabs(f) <= kQuantileTol * 1e-2) return x;
        if (f < 0.0) lo = x; else hi = x;
        double dens = chi2_pdf(x, p);
        double step = dens > 0.0 ? f / dens : 0.0;
        double xn = x - step;
        if (!(xn > lo && xn < hi) || step == 0.0) xn = 0.5 * (lo + hi);
        x = xn;
    }
    return x;
}

double nc_chi2_cdf(double x, int p, double lambda) {
    if (p < 1) throw DomainError("nc_chi2_cdf: dof must be >= 1");
    if (lambda < 0.0) throw DomainError("nc_chi2_cdf: lambda must be >= 0");
    if (lambda == 0.0) return chi2_cdf(x, p);
    if (x <= 0.0) return 0.0;

    const double half = 0.5 * lambda;
    const double xh = 0.5 * x;
    const long m = static_cast<long>(half);  // modal Poisson index
    const double am = 0.5 * p + static_cast<double>(m);

    // modal term, then walk outward; F and the stepping term T are updated by
    // the recurrences P(a+1,x) = P(a,x) - T(a), T(a+1) = T(a) x/(a+1)
    auto term_t = [&](double aa) {
        double lg = aa * std::log(xh) - xh - std::lgamma(aa + 1.0);
        return lg < -745.0 ? 0.0 : std::exp(lg);
    };
    double wm = std::exp(-half + (m > 0 ? m * std::log(half) : 0.0) -
                         std::lgamma(static_cast<double>(m) + 1.0));
    double fm = gammap(am, xh);

    double sum = wm * fm;
    double wsum = wm;

    // upward side
    double wu = wm, fu = fm, tu = term_t(am);
    long ju = m;
    // downward side
    double wd = wm, fd = fm, td = tu;
    long jd = m;

    while (wsum < 1.0 - kTailEps) {
        bool moved = false;
        {  // step up
            wu *= half / static_cast<double>(ju + 1);
            fu -= tu;
            if (fu < 0.0) fu = 0.0;
            tu *= xh / (0.5 * p + static_cast<double>(ju) + 1.0);
            ++ju;
            sum += wu * fu;
            wsum += wu;
            moved = true;
        }
        if (jd > 0) {  // step down: T(a-1) = T(a) a/x, P(a-1,x) = P(a,x) + T(a-1)
            wd *= static_cast<double>(jd) / half;
            td *= (0.5 * p + static_cast<double>(jd)) / xh;
            fd += td;
            if (fd > 1.0) fd = 1.0;
            --jd;
            sum += wd * fd;
            wsum += wd;
            moved = true;
        }
        if (!moved || ju - m > 100000) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

double nc_chi2_quantile(double u, int p, double lambda) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("nc_chi2_quantile: u outside (0,1)");
    if (lambda < 0.0) throw DomainError("nc_chi2_quantile: lambda must be >= 0");
    if (lambda == 0.0) return chi2_quantile(u, p);

    // normal-moment start, swapped for the small-a power law in the left tail
    double mean = p + lambda;
    double sd = std::sqrt(2.0 * (p + 2.0 * lambda));
    double x0 = mean + normal_quantile(u) * sd;
    if (u < 0.1) {
        double xs = 2.0 * std::exp((std::log(u) + 0.5 * lambda + std::lgamma(0.5 * p + 1.0)) /
                                   (0.5 * p));
        x0 = x0 > 0.0 ? std::min(x0, xs) : xs;
    }
    x0 = std::max(x0, 1e-300);
    double hi = std::max(2.0 * x0, mean + 10.0 * sd);
    while (nc_chi2_cdf(hi, p, lambda) < u) {
        hi *= 2.0;
        if (hi > 1e13) break;
    }
    return invert_cdf([&](double x) { return nc_chi2_cdf(x, p, lambda); }, u, 0.0, hi,
                      kQuantileTol);
}

double nc_chi2_truncated_mean(int p, double lambda, double a) {
    if (a <= 0.0) throw DomainError("nc_chi2_truncated_mean: a must be > 0");
    double fa = nc_chi2_cdf(a, p, lambda);
    if (fa < kUnderflow)
        throw UnderflowError("nc_chi2_truncated_mean: acceptance mass below 1e-300");
    // E(Y 1{Y<a}) = p F_{p+2,l}(a) + lambda F_{p+4,l}(a)
    double num = p * nc_chi2_cdf(a, p + 2, lambda);
    if (lambda > 0.0) num += lambda * nc_chi2_cdf(a, p + 4, lambda);
    return num / fa;
}

double small_a_cdf_asymptote(int p, double lambda, double a) {
    if (a <= 0.0) throw DomainError("small_a_cdf_asymptote: a must be > 0");
    double lg = 0.5 * p * std::log(a) - 0.5 * lambda - 0.5 * p * 0.6931471805599453094 -
                std::lgamma(0.5 * p + 1.0);
    return lg < -745.0 ? 0.0 : std::exp(lg);
}

double sample_nc_chi2(int p, double lambda, Rng& rng) {
    if (p < 1) throw DomainError("sample_nc_chi2: dof must be >= 1");
    if (lambda < 0.0) throw DomainError("sample_nc_chi2: lambda must be >= 0");
    double total = 0.0;
    int m = p;
    if (lambda > 0.0) {
        double z = draw_normal(rng) + std::sqrt(lambda);
        total += z * z;
        m = p - 1;
    }
    double z1, z2;
    while (m >= 2) {
        draw_normal_pair(rng, z1, z2);
        total += z1 * z1 + z2 * z2;
        m -= 2;
    }
    if (m == 1) {
        double z = draw_normal(rng);
        total += z * z;
    }
    return total;
}

double sample_truncated(const TruncatedNoncentralChi2& dist, Rng& rng) {
    const int p = dist.base.dof;
    const double lambda = dist.base.lambda;
    const double a = dist.upper;
    if (a <= 0.0) throw DomainError("sample_truncated: upper must be > 0");
    double fa = nc_chi2_cdf(a, p, lambda);
    if (fa < kUnderflow) throw UnderflowError("sample_truncated: acceptance mass below 1e-300");
    double target = uniform01(rng) * fa;
    if (target <= 0.0) return 0.0;
    double x = invert_cdf([&](double y) { return nc_chi2_cdf(y, p, lambda); }, target, 0.0, a,
                          std::max(1e-13 * fa, 1e-300));
    return std::min(x, std::nexttoward(a, 0.0));
}

double conditional_normal_second_moment(double a1, double a2, double c) {
    if (!(a1 > 0.0) || !(a2 > 0.0) || !(c > 0.0))
        throw DomainError("conditional_normal_second_moment: arguments must be > 0");
    double s2 = a1 * a1 + a2 * a2;
    double beta = a1 * a1 / s2;
    double gamma = std::sqrt(c / s2);
    double ratio;
    if (gamma < 1e-5) {
        ratio = 1.0 - gamma * gamma / 3.0;  // series limit of 2 g phi(g) / erf(g/sqrt2)
    } else {
        double phi = std::exp(-0.5 * gamma * gamma) * 0.3989422804014326779;
        ratio = 2.0 * gamma * phi / std::erf(gamma * 0.7071067811865475244);
    }
    return 1.0 - beta * ratio;
}

}  // namespace seqrerand
