#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "corrdetect/errors.hpp"
#include "corrdetect/models.hpp"
#include "corrdetect/rates.hpp"
#include "corrdetect/risk_engine.hpp"

using namespace corrdetect;

TEST(Equicorrelated, Examples)
{
    const auto a = rate_equicorrelated(100, 5, 0.0);
    EXPECT_NEAR(a.value, 5 * std::log(5.0), 1e-12);
    EXPECT_EQ(a.regime, "sparse");
    EXPECT_EQ(rate_equicorrelated(100, 100, 1.0).value, 100.0);
    EXPECT_EQ(rate_equicorrelated(100, 99, 1.0).value, 0.0);
    EXPECT_NEAR(rate_equicorrelated(100, 50, 0.0).value, 11.0, 1e-12);
    EXPECT_THROW(rate_equicorrelated(100, 0, 0.0), ContractError);
    EXPECT_THROW(rate_equicorrelated(100, 101, 0.0), ContractError);
    EXPECT_THROW(rate_equicorrelated(100, 5, 1.2), ContractError);
}

TEST(Equicorrelated, GammaZeroIsCollierRate)
{
    for (std::size_t p : {50, 400, 2500})
        for (std::size_t s = 1; s * s < p; ++s)
            EXPECT_NEAR(rate_equicorrelated(p, s, 0.0).value, s * std::log(1.0 + double(p) / (s * s)), 1e-12 * p);
}

TEST(Equicorrelated, BranchFormulasReevaluated)
{
    for (std::size_t p : {16, 100, 1000})
        for (double g : {0.0, 0.3, 0.95})
            for (std::size_t s = 1; s <= p; ++s) {
                const auto r = rate_equicorrelated(p, s, g);
                const double pd = double(p), sd = double(s), ig = 1 - g;
                double want;
                if (sd < std::sqrt(pd)) {
                    want = ig * sd * std::log1p(pd / (sd * sd));
                    EXPECT_EQ(r.regime, "sparse");
                } else if ((pd - sd) * (pd - sd) >= pd) {
                    want = ig * std::sqrt(pd) + std::min(ig * std::pow(pd, 1.5) / (pd - sd), ig + g * pd);
                } else if (s < p) {
                    want = ig * std::sqrt(pd) + std::min(ig * pd * std::log1p(pd / ((pd - sd) * (pd - sd))), ig + g * pd);
                } else {
                    want = ig * std::sqrt(pd) + (ig + g * pd);
                }
                EXPECT_NEAR(r.value, want, 1e-12 * want) << p << " " << s << " " << g;
            }
}

TEST(Equicorrelated, MonotoneInGamma)
{
    for (std::size_t p : {100, 900})
        for (std::size_t s : {1, 5, 30, 300}) {
            if (s > p) continue;
            double prev_psi1 = INFINITY, prev_cap = -INFINITY;
            for (int i = 0; i < 100; ++i) {
                const double g = i / 100.0;
                const auto r = rate_equicorrelated(p, s, g);
                EXPECT_GE(r.value, 0.0);
                const double psi1 = psi1_sq(p, s, g);
                EXPECT_LE(psi1, prev_psi1);
                EXPECT_GE(r.cap, prev_cap);
                prev_psi1 = psi1;
                prev_cap = r.cap;
            }
        }
}

TEST(Grouped, OneGroupIsEquicorrelatedExactly)
{
    for (std::size_t p : {4, 25, 100, 144, 1000})
        for (double g : {0.0, 0.2, 0.7, 0.99, 1.0})
            for (std::size_t s = 1; s <= p; ++s) {
                const auto a = rate_grouped(p, s, g, 1), b = rate_equicorrelated(p, s, g);
                EXPECT_EQ(a.value, b.value) << p << " " << s << " " << g;
            }
}

TEST(Grouped, SingletonGroupsLoseGamma)
{
    for (std::size_t p : {64, 400})
        for (std::size_t s = 1; s <= p; ++s) {
            const double base = rate_grouped(p, s, 0.0, p).value;
            for (double g : {0.3, 0.9}) EXPECT_DOUBLE_EQ(rate_grouped(p, s, g, p).value, base) << p << " " << s;
            if (double(s) < std::sqrt(double(p))) {
                EXPECT_NEAR(base, s * std::log1p(double(p) / (s * s)), 1e-12 * p);
            }
        }
}

TEST(Grouped, PerfectCorrelationMiddleBranch)
{
    const auto r = rate_grouped(64, 16, 1.0, 4);
    EXPECT_NEAR(r.value, 16 * std::log(5.0), 1e-12);
}

TEST(Grouped, Errors) { EXPECT_THROW(rate_grouped(100, 5, 0.5, 3), ContractError); }

TEST(Grouped, RegimeLabelsFollowBoundaries)
{
    const std::size_t p = 1024, R = 16;  // p/(4R) = 16, p/R = 64, p/sqrt(R) = 256
    EXPECT_EQ(rate_grouped(p, 16, 0.5, R).regime, "group_sparse");
    const auto mid = rate_grouped(p, 17, 0.5, R).regime;
    EXPECT_TRUE(mid == "group_dense" || mid == "group_very_dense") << mid;
    EXPECT_EQ(rate_grouped(p, 64, 0.5, R).regime, "group_avg_sparse");
    EXPECT_EQ(rate_grouped(p, 255, 0.5, R).regime, "group_avg_sparse");
    EXPECT_EQ(rate_grouped(p, 256, 0.5, R).regime, "group_avg_dense");
}

TEST(RankOne, OnesMatchesPsi1)
{
    for (std::size_t p : {16, 100, 400}) {
        const auto v = make_direction("ones", p);
        for (std::size_t s = 1; s <= p / 4; ++s)
            for (double g : {0.0, 0.4}) {
                const auto r = rate_rank_one(p, s, g, v);
                EXPECT_EQ(r.value, psi1_sq(p, s, g)) << p << " " << s;
            }
    }
}

TEST(RankOne, UncharacterizedAboveOmega)
{
    const auto v = make_direction("ones", 100);
    const auto r = rate_rank_one(100, 26, 0.5, v);
    EXPECT_FALSE(r.characterized);
    EXPECT_EQ(r.regime, "uncharacterized");
    EXPECT_TRUE(std::isnan(r.value));
}

TEST(RankOne, PerfectCorrelation)
{
    const auto e1 = make_direction("e1", 49);
    EXPECT_EQ(rate_rank_one(49, 1, 1.0, e1).value, 49.0);
    const auto ones = make_direction("ones", 49);
    EXPECT_EQ(rate_rank_one(49, 48, 1.0, ones).value, 0.0);
}

TEST(RateFor, Dispatch)
{
    EXPECT_EQ(rate_for(CorrelationModel::grouped(64, 4, 0.3), 10).value, rate_grouped(64, 10, 0.3, 4).value);
    EXPECT_EQ(rate_for(CorrelationModel::equicorrelated(64, 0.3), 10).value, rate_equicorrelated(64, 10, 0.3).value);
}

TEST(Thresholds, Examples)
{
    const auto sparse = blessing_curse_thresholds(100, 9);
    EXPECT_EQ(sparse.one_minus_gamma_star, 1.0);
    EXPECT_FALSE(sparse.one_minus_gamma_lower.has_value());
    EXPECT_DOUBLE_EQ(*blessing_curse_thresholds(100, 50).one_minus_gamma_star, 0.5);
    EXPECT_NEAR(*blessing_curse_thresholds(100, 99).one_minus_gamma_star, 1.0 / (10 * std::log(101.0)), 1e-15);
    EXPECT_FALSE(blessing_curse_thresholds(100, 100).one_minus_gamma_star.has_value());
}

TEST(Continuity, OnlyDocumentedJumpsExceedFactorEight)
{
    for (std::size_t p : {64, 256, 1024, 4096})
        for (double g : {0.0, 0.5, 0.9, 0.999})
            for (std::size_t R : {0, 1, 4, 16, 64}) {
                if (R && p % R) continue;
                for (const auto& b : continuity_audit(p, g, R)) {
                    if (b.documented_jump) {
                        EXPECT_TRUE(b.boundary == "p" || b.boundary == "p/R") << b.boundary;
                    } else {
                        EXPECT_LE(b.ratio, 8.0) << p << " " << g << " " << R << " " << b.boundary;
                    }
                }
            }
}

TEST(Continuity, RemarkJumpIsVisible)
{
    // At gamma close to 1 the s = p cap dominates the branch below it.
    bool seen = false;
    for (const auto& b : continuity_audit(4096, 0.999))
        if (b.boundary == "p") {
            seen = true;
            EXPECT_TRUE(b.documented_jump);
            EXPECT_GT(b.ratio, 8.0);
        }
    EXPECT_TRUE(seen);
}
