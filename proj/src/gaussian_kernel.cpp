#include "corrdetect/gaussian_kernel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numbers>

#include "corrdetect/errors.hpp"

namespace corrdetect {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Continued fraction erfcx(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
// evaluated with the modified Lentz method. Converges quickly for x >= 5.
double erfcx_cf(double x)
{
    constexpr double tiny = 1e-300;
    double f = x;
    double c = x;
    double d = 0.0;
    for (int n = 1; n < 1000; ++n) {
        const double a = 0.5 * n;
        d = x + a * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = x + a / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return 1.0 / (std::sqrt(std::numbers::pi) * f);
}

}  // namespace

double normal_pdf(double x)
{
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double erfcx(double x)
{
    if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("erfcx: argument must be finite and >= 0");
    if (x < 5.0) {
        // Split x^2 into hi + lo so exp(x^2) carries no rounding from the square.
        const double hi = x * x;
        const double lo = std::fma(x, x, -hi);
        return std::exp(hi) * (1.0 + lo) * std::erfc(x);
    }
    return erfcx_cf(x);
}

double upper_tail(double t)
{
    if (!std::isfinite(t)) throw DomainError("upper_tail: t must be finite");
    if (t < 0.0) return 1.0 - upper_tail(-t);
    return 0.5 * std::erfc(t / std::numbers::sqrt2);
}

double alpha(double t)
{
    if (!std::isfinite(t) || t < 0.0) throw DomainError("alpha: t must be finite and >= 0");
    if (t == 0.0) return 1.0;
    // phi(t)/Q(t) = sqrt(2/pi) / erfcx(t/sqrt 2)
    const double inv_mills = std::sqrt(2.0 / std::numbers::pi) / erfcx(t / std::numbers::sqrt2);
    return 1.0 + t * inv_mills;
}

double laurent_massart_upper(std::span<const double> weights, double x)
{
    if (!(x > 0.0)) throw DomainError("laurent_massart_upper: x must be > 0");
    double sum = 0.0, sq = 0.0, mx = 0.0;
    for (double a : weights) {
        if (!(a >= 0.0)) throw DomainError("laurent_massart_upper: weights must be >= 0");
        sum += a;
        sq += a * a;
        mx = std::max(mx, a);
    }
    return sum + 2.0 * std::sqrt(x * sq) + 2.0 * x * mx;
}

double collier_typeI_threshold(std::size_t p, double t, double x)
{
    if (p < 1) throw DomainError("collier_typeI_threshold: p must be >= 1");
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("collier_typeI_threshold: t must be >= 0");
    if (!(x > 0.0)) throw DomainError("collier_typeI_threshold: x must be > 0");
    return 9.0 * (std::sqrt(static_cast<double>(p) * std::exp(-0.5 * t * t) * x) + x);
}

double TruncatedMomentTable::get(double t)
{
    const auto key = std::bit_cast<std::uint64_t>(t);
    {
        std::shared_lock lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    const double v = alpha(t);
    std::unique_lock lock(mu_);
    cache_.emplace(key, v);
    return v;
}

std::size_t TruncatedMomentTable::size() const
{
    std::shared_lock lock(mu_);
    return cache_.size();
}

}  // namespace corrdetect
