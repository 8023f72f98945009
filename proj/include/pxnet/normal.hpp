#pragma once

// Univariate and bivariate standard normal kernels used by the estimator:
// truncated moments under a probit observation, interval second moments, the
// bivariate orthant probability and the pairwise conditional cross-moment.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "errors.hpp"

namespace pxnet::normal {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Linear predictors beyond this magnitude are clamped before evaluating
// Mills ratios; Phi(-37.5) is the last value representable in double.
inline constexpr double kEtaGuard = 37.0;

inline double std_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double std_cdf(double x) {
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

/// Upper tail 1 - Phi(x), accurate in the upper tail.
inline double std_sf(double x) { return std_cdf(-x); }

inline double log_std_cdf(double x) {
    if (x > -30.0) return std::log(std_cdf(x));
    // Asymptotic series: Phi(x) ~ phi(x)/|x| (1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8)
    const double z2 = 1.0 / (x * x);
    const double series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
    return -0.5 * x * x - std::log(-x) - 0.5 * std::log(kTwoPi) + std::log(series);
}

/// phi(x) / Phi(x), evaluated in the log domain on the lower tail.
inline double mills_lower(double x) {
    if (x > -30.0) return std_pdf(x) / std_cdf(x);
    return std::exp(-0.5 * x * x - 0.5 * std::log(kTwoPi) - log_std_cdf(x));
}

/// E[eps | y] for eps ~ N(0,1) and y = 1[eps > -eta]:
/// phi(eta) (y - Phi(eta)) / (Phi(eta)(1 - Phi(eta))).
inline double trunc_mean(double eta, bool y) {
    return y ? mills_lower(eta) : -mills_lower(-eta);
}

/// Derivative of trunc_mean with respect to eta; equals -m (eta + m).
inline double trunc_mean_deriv(double eta, bool y) {
    const double m = trunc_mean(eta, y);
    return -m * (eta + m);
}

struct TruncMoments {
    double mean;
    double second;
    bool clamped;
};

inline TruncMoments trunc_moments(double eta, bool y) {
    if (!std::isfinite(eta)) throw DomainError("trunc_moments: non-finite linear predictor");
    bool clamped = false;
    if (std::abs(eta) > kEtaGuard) {
        eta = std::clamp(eta, -kEtaGuard, kEtaGuard);
        clamped = true;
    }
    const double m = trunc_mean(eta, y);
    return {m, 1.0 - eta * m, clamped};
}

namespace detail {

// Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n.
template <int N>
struct GaussLegendre {
    std::array<double, N> x{};
    std::array<double, N> w{};

    GaussLegendre() {
        for (int i = 0; i < (N + 1) / 2; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (N + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int k = 1; k <= N; ++k) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
                }
                dp = N * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x[i] = -z;
            x[N - 1 - i] = z;
            w[i] = w[N - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }
};

inline const GaussLegendre<32>& gl32() {
    static const GaussLegendre<32> rule;
    return rule;
}

// P(X > dh, Y > dk) for a standard bivariate normal with correlation r.
// Sheppard's single integral over the correlation for |r| < 0.925 and
// Genz's transformed integral near |r| = 1, both with a 32-point rule.
inline double bvn_upper(double dh, double dk, double r) {
    if (dh == std::numeric_limits<double>::infinity() || dk == std::numeric_limits<double>::infinity()) {
        return 0.0;
    }
    if (dh == -std::numeric_limits<double>::infinity()) {
        return dk == -std::numeric_limits<double>::infinity() ? 1.0 : std_cdf(-dk);
    }
    if (dk == -std::numeric_limits<double>::infinity()) return std_cdf(-dh);
    if (r == 0.0) return std_cdf(-dh) * std_cdf(-dk);

    const auto& gl = gl32();
    double h = dh, k = dk, hk = h * k;
    double bvn = 0.0;
    if (std::abs(r) < 0.925) {
        const double hs = 0.5 * (h * h + k * k);
        const double asr = std::asin(r);
        for (int i = 0; i < 32; ++i) {
            const double sn = std::sin(0.5 * asr * (1.0 + gl.x[i]));
            bvn += 0.5 * gl.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        return std::clamp(bvn * asr / kTwoPi + std_cdf(-h) * std_cdf(-k), 0.0, 1.0);
    }

    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const double as = 1.0 - r * r;
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 80.0;
        double asr = -0.5 * (bs / as + hk);
        if (asr > -100.0) {
            bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
        }
        if (hk > -100.0) {
            const double b = std::sqrt(bs);
            const double sp = std::sqrt(kTwoPi) * std_cdf(-b / a);
            bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a *= 0.5;
        double sum = 0.0;
        for (int i = 0; i < 32; ++i) {
            const double xi = a * (1.0 + gl.x[i]);
            const double xs = xi * xi;
            asr = -0.5 * (bs / xs + hk);
            if (asr <= -100.0) continue;
            const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
            const double rs = std::sqrt(1.0 - xs);
            const double ep = std::exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
            sum += 0.5 * gl.w[i] * std::exp(asr) * (sp - ep);
        }
        bvn = (2.0 * a * sum - bvn) / kTwoPi;
    }
    if (r > 0.0) {
        bvn += std_cdf(-std::max(h, k));
    } else if (h >= k) {
        bvn = -bvn;
    } else {
        const double L = h < 0.0 ? std_cdf(k) - std_cdf(h) : std_cdf(-h) - std_cdf(-k);
        bvn = L - bvn;
    }
    return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace detail

/// P(Z1 <= h, Z2 <= k) for a standard bivariate normal with correlation r.
inline double bivariate_cdf(double h, double k, double r) {
    if (!(std::abs(r) < 1.0)) throw DomainError("bivariate_cdf: need |r| < 1");
    return detail::bvn_upper(-h, -k, r);
}

/// E[eps^2 | a < eps < b] for eps ~ N(0,1); either end may be infinite.
inline double interval_trunc_second_moment(double a, double b) {
    if (!(a < b)) throw DomainError("interval_trunc_second_moment: need a < b");
    // Differences taken on the side of zero where the tails are accurate.
    const double mass = a >= 0.0 ? std_cdf(-a) - std_cdf(-b) : std_cdf(b) - std_cdf(a);
    if (!(mass >= 1e-300)) {
        throw NumericError("interval_trunc_second_moment: interval has negligible mass");
    }
    const double fa = std::isinf(a) ? 0.0 : a * std_pdf(a);
    const double fb = std::isinf(b) ? 0.0 : b * std_pdf(b);
    return 1.0 + (fa - fb) / mass;
}

/// A pair of binary relations with linear predictors and latent correlation.
struct PairObservation {
    double eta1;
    double eta2;
    bool y1;
    bool y2;
    double rho;
};

/// Piecewise approximation to E[eps1 eps2 | y1, y2] at rho = 1, where the two
/// latent errors coincide: one-sided second moments for matching outcomes, the
/// intersection interval when the admissible sets overlap, and the
/// probability-weighted one-sided pieces when they are disjoint.
inline double pair_expectation_rho1(const PairObservation& obs) {
    const double t1 = -obs.eta1, t2 = -obs.eta2;  // eps > t  <=>  y = 1
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (obs.y1 && obs.y2) return interval_trunc_second_moment(std::max(t1, t2), inf);
    if (!obs.y1 && !obs.y2) return interval_trunc_second_moment(-inf, std::min(t1, t2));
    // One upper set (t_up, inf) and one lower set (-inf, t_low).
    const double t_up = obs.y1 ? t1 : t2;
    const double t_low = obs.y1 ? t2 : t1;
    if (t_up < t_low) return interval_trunc_second_moment(t_up, t_low);
    // int_{t}^{inf} x^2 phi = Phi(-t) + t phi(t);  int_{-inf}^{t} x^2 phi = Phi(t) - t phi(t)
    const double upper = std_cdf(-t_up) + t_up * std_pdf(t_up);
    const double lower = std_cdf(t_low) - t_low * std_pdf(t_low);
    return upper + lower;
}

/// E[eps1 eps2 | y1, y2] for (eps1, eps2) standard bivariate normal with
/// correlation rho, each observed only through y = 1[eps > -eta].
inline double pair_expectation(const PairObservation& obs) {
    if (obs.rho == 1.0) return pair_expectation_rho1(obs);
    if (!(std::abs(obs.rho) < 1.0)) throw DomainError("pair_expectation: need |rho| < 1");
    const double s1 = obs.y1 ? 1.0 : -1.0;
    const double s2 = obs.y2 ? 1.0 : -1.0;
    if (obs.rho == 0.0) return trunc_mean(obs.eta1, obs.y1) * trunc_mean(obs.eta2, obs.y2);

    const double e1 = s1 * obs.eta1;
    const double e2 = s2 * obs.eta2;
    const double rb = s1 * s2 * obs.rho;
    const double L = bivariate_cdf(e1, e2, rb);
    if (!(L > 1e-300)) throw NumericError("pair_expectation: orthant probability underflow");
    const double q = std::sqrt(1.0 - obs.rho * obs.rho);
    const double t1 = e1 * std_pdf(obs.eta1) * std_cdf((e2 - rb * e1) / q);
    const double t2 = e2 * std_pdf(obs.eta2) * std_cdf((e1 - rb * e2) / q);
    const double quad = (obs.eta1 * obs.eta1 + obs.eta2 * obs.eta2 - 2.0 * obs.rho * obs.eta1 * obs.eta2) /
                        (1.0 - obs.rho * obs.rho);
    const double tail = q * kInvSqrt2Pi * std_pdf(std::sqrt(std::max(quad, 0.0)));
    // The cross moment of the sign-flipped pair carries the factor s1*s2.
    return obs.rho * (1.0 - (t1 + t2) / L) + s1 * s2 * tail / L;
}

/// cov[y1, y2] for probit outcomes with latent means mu1, mu2 and latent correlation rho.
inline double observed_covariance(double mu1, double mu2, double rho) {
    if (rho == 0.0) return 0.0;
    return bivariate_cdf(mu1, mu2, rho) - std_cdf(mu1) * std_cdf(mu2);
}

}  // namespace pxnet::normal
