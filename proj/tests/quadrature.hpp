#pragma once

// Numerical references built on GSL: a nested 2-D adaptive quadrature for the
// bivariate normal CDF and plain rejection sampling for pairwise moments.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <cmath>
#include <functional>
#include <memory>
#include <random>

namespace pxtest {

class Integrator {
public:
    Integrator() : ws_(gsl_integration_workspace_alloc(kLimit), gsl_integration_workspace_free) {
        gsl_set_error_handler_off();
    }

    // Integral over (-inf, b] or [a, b]; lower = -inf when a is -inf.
    double integrate(const std::function<double(double)>& f, double a, double b, double epsabs) {
        gsl_function F;
        F.function = [](double x, void* p) { return (*static_cast<const std::function<double(double)>*>(p))(x); };
        F.params = const_cast<std::function<double(double)>*>(&f);
        double result = 0.0, err = 0.0;
        if (std::isinf(a)) {
            gsl_integration_qagil(&F, b, epsabs, 1e-13, kLimit, ws_.get(), &result, &err);
        } else {
            gsl_integration_qag(&F, a, b, epsabs, 1e-13, kLimit, GSL_INTEG_GAUSS61, ws_.get(), &result, &err);
        }
        return result;
    }

private:
    static constexpr std::size_t kLimit = 2000;
    std::unique_ptr<gsl_integration_workspace, void (*)(gsl_integration_workspace*)> ws_;
};

// P(Z1 <= h, Z2 <= k; r) as a double integral of the joint density. The inner
// variable is truncated at -12 where the remaining mass is below 1e-32.
inline double bvn_quadrature(double h, double k, double r) {
    Integrator outer, inner;
    const double det = 1.0 - r * r;
    const double norm = 1.0 / (2.0 * M_PI * std::sqrt(det));
    const double lo = -12.0;
    return outer.integrate(
        [&](double x) {
            return inner.integrate(
                [&](double y) { return norm * std::exp(-(x * x - 2.0 * r * x * y + y * y) / (2.0 * det)); }, lo,
                std::min(k, 12.0), 1e-15);
        },
        lo, std::min(h, 12.0), 1e-14);
}

struct McMoment {
    double mean;
    double se;
};

// E[e1 e2 | y1, y2] by rejection from the bivariate normal, `accepted` kept draws.
template <class Rng>
McMoment rejection_pair_moment(double eta1, double eta2, bool y1, bool y2, double rho, long accepted, Rng& rng) {
    std::normal_distribution<double> z;
    const double q = std::sqrt(1.0 - rho * rho);
    double s = 0.0, s2 = 0.0;
    long kept = 0;
    while (kept < accepted) {
        const double a = z(rng);
        const double b = rho * a + q * z(rng);
        if (((a > -eta1) != y1) || ((b > -eta2) != y2)) continue;
        const double v = a * b;
        s += v;
        s2 += v * v;
        ++kept;
    }
    const double mean = s / static_cast<double>(kept);
    const double var = s2 / static_cast<double>(kept) - mean * mean;
    return {mean, std::sqrt(var / static_cast<double>(kept))};
}

}  // namespace pxtest
