#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "corrdetect/errors.hpp"
#include "corrdetect/gaussian_kernel.hpp"
#include "corrdetect/random.hpp"
#include "corrdetect/test_statistics.hpp"

using namespace corrdetect;

namespace {

// Direct quadrature of the defining ratio on [t, inf), by symmetry.
double alpha_quadrature(double t)
{
    using boost::math::quadrature::gauss_kronrod;
    const double inf = std::numeric_limits<double>::infinity();
    const auto phi = [](double x) { return std::exp(-0.5 * x * x); };
    const double num = gauss_kronrod<double, 61>::integrate([&](double x) { return x * x * phi(x); }, t, inf, 20, 1e-14);
    const double den = gauss_kronrod<double, 61>::integrate(phi, t, inf, 20, 1e-14);
    return num / den;
}

}  // namespace

TEST(Alpha, ZeroIsOne) { EXPECT_EQ(alpha(0.0), 1.0); }

TEST(Alpha, MatchesQuadratureAtOne)
{
    const double want = alpha_quadrature(1.0);
    EXPECT_NEAR(alpha(1.0), want, 1e-10 * want);
}

TEST(Alpha, MillsSeriesAtThirty)
{
    const double t = 30.0, a = alpha(t);
    EXPECT_GT(a, 900.0);
    EXPECT_LT(a, 902.0);
    // t^2 + 2 - 2/t^2 + 10/t^4 - ...
    const double series = t * t + 2.0 - 2.0 / (t * t) + 10.0 / std::pow(t, 4);
    EXPECT_NEAR(a, series, 1e-6 * series);
}

TEST(Alpha, StrictlyIncreasingAndAboveMaxOneTSquared)
{
    double prev = alpha(0.0);
    for (int i = 1; i <= 4000; ++i) {
        const double t = i * 0.01;
        const double a = alpha(t);
        EXPECT_GT(a, prev) << t;
        EXPECT_GT(a, std::max(1.0, t * t)) << t;
        prev = a;
    }
}

TEST(Alpha, DomainErrors)
{
    EXPECT_THROW(alpha(-0.1), DomainError);
    EXPECT_THROW(alpha(std::numeric_limits<double>::quiet_NaN()), DomainError);
    EXPECT_THROW(alpha(std::numeric_limits<double>::infinity()), DomainError);
}

TEST(UpperTail, SmallAndLargeT)
{
    EXPECT_NEAR(upper_tail(0.0), 0.5, 1e-16);
    EXPECT_NEAR(upper_tail(1.0), 0.5 * std::erfc(1.0 / std::sqrt(2.0)), 1e-16);
    EXPECT_GT(upper_tail(37.0), 0.0);
}

TEST(LaurentMassart, Arithmetic)
{
    EXPECT_DOUBLE_EQ(laurent_massart_upper(std::vector<double>(4, 1.0), 1.0), 10.0);
    EXPECT_EQ(laurent_massart_upper(std::vector<double>(3, 0.0), 2.5), 0.0);
    EXPECT_THROW(laurent_massart_upper(std::vector<double>{1.0, -0.5}, 1.0), DomainError);
}

TEST(LaurentMassart, MonotoneInXAndWeights)
{
    Stream rng(7);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> w(5);
        for (auto& x : w) x = rng.uniform();
        const double x = 0.1 + 5 * rng.uniform();
        const double base = laurent_massart_upper(w, x);
        EXPECT_GE(laurent_massart_upper(w, x * 1.5), base);
        auto w2 = w;
        w2[rng.below(5)] += 0.3;
        EXPECT_GE(laurent_massart_upper(w2, x), base);
    }
}

TEST(LaurentMassart, ChiSquareTail)
{
    const std::size_t p = 50, n = 200000;
    const double thr = laurent_massart_upper(std::vector<double>(p, 1.0), 3.0), b = std::exp(-3.0);
    Stream rng(11);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            const double g = rng.normal();
            q += g * g;
        }
        hits += q >= thr;
    }
    EXPECT_LE(double(hits) / n, b + 3 * std::sqrt(b * (1 - b) / n));
}

TEST(CollierThreshold, Arithmetic)
{
    EXPECT_DOUBLE_EQ(collier_typeI_threshold(1, 0.0, 1.0), 18.0);
    const double t = std::sqrt(2 * std::log(101.0));
    EXPECT_NEAR(collier_typeI_threshold(100, t, 2.0), 9 * (std::sqrt(100.0 / 101.0 * 2.0) + 2.0), 1e-12);
    EXPECT_THROW(collier_typeI_threshold(0, 1.0, 1.0), DomainError);
    EXPECT_THROW(collier_typeI_threshold(3, 1.0, 0.0), DomainError);
}

TEST(CollierThreshold, NullExceedance)
{
    const std::size_t p = 200, n = 100000;
    const double t = 2.0, bound = collier_typeI_threshold(p, t, 4.0), a = alpha(t), b = std::exp(-4.0);
    Stream rng(13);
    std::vector<double> z(p);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : z) x = rng.normal();
        hits += collier_sum(z, t, a) > bound;
    }
    EXPECT_LE(double(hits) / n, b + 3 * std::sqrt(b * (1 - b) / n));
}

TEST(TruncatedMomentTable, AgreesWithDirectEvaluationUnderConcurrency)
{
    TruncatedMomentTable table;
    std::vector<std::thread> pool;
    for (int w = 0; w < 4; ++w)
        pool.emplace_back([&table, w] {
            for (int i = 0; i < 500; ++i) table.get(0.02 * ((i * 7 + w) % 500));
        });
    for (auto& th : pool) th.join();
    EXPECT_EQ(table.size(), 500u);
    for (int i = 0; i < 500; ++i) {
        const double t = 0.02 * i;
        EXPECT_NEAR(table.get(t), alpha(t), 1e-12 * alpha(t));
    }
}
