#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrdetect/models.hpp"
#include "corrdetect/signal_geometry.hpp"

namespace corrdetect {

enum class PriorKind {
    point_mass,      // theta fixed
    uniform_sparse,  // a 1_S (or a sgn(v) 1_S), S uniform of size s
    group_within,    // K uniform group, S a uniform s-subset of B_K, magnitude a
    group_blocks,    // K a uniform m-subset of groups, a 1 on every block in K
    shifted,         // uniform_sparse analysed through the mean shift a 1_p
};

struct PriorSpec {
    PriorKind kind = PriorKind::point_mass;
    std::size_t p = 0;
    std::size_t s = 0;  // support size (uniform_sparse, group_within, shifted); groups for group_blocks
    double magnitude = 0.0;
    SignRule sign = SignRule::plus;
    std::size_t R = 1;
    std::vector<double> theta;  // point_mass
    std::vector<double> v;      // match_v signs

    static PriorSpec point_mass(std::vector<double> theta);
    static PriorSpec uniform_sparse(std::size_t p, std::size_t s, double a, SignRule sign = SignRule::plus,
                                    std::vector<double> v = {});
    static PriorSpec group_within(std::size_t p, std::size_t R, std::size_t s, double a);
    static PriorSpec group_blocks(std::size_t p, std::size_t R, std::size_t m, double a);
    static PriorSpec shifted(std::size_t p, std::size_t s, double a);

    std::string label() const;
    // |theta|^2 of every draw (all priors here have constant norm).
    double norm_sq() const;
};

std::string prior_kind_name(PriorKind k);

std::vector<double> draw(const PriorSpec& prior, Stream& rng);

enum class DivergenceMethod { closed_form, exact_enumeration, hypergeometric_sum, monte_carlo };
std::string method_name(DivergenceMethod m);
DivergenceMethod parse_method(const std::string& s);

struct DivergenceResult {
    double chi_sq = 0.0;
    DivergenceMethod method = DivergenceMethod::closed_form;
    // True when a nonpositive cross term was dropped, so chi_sq bounds the
    // Ingster-Suslina value from above.
    bool majorant = false;
    double tv_bound = 0.0;
    double risk_bound = 1.0;
    std::size_t n = 0;  // Monte Carlo pairs
    double std_error = 0.0;
    bool heavy_tail = false;
};

// E exp(<theta, Sigma^{-1} theta~>) - 1 over independent prior pairs.
DivergenceResult ingster_suslina_chisq(const PriorSpec& prior, const CorrelationModel& m, DivergenceMethod method,
                                       std::uint64_t seed = 0, std::size_t n_mc = 100000,
                                       std::size_t pair_budget = 1000000);

struct MgfResult {
    double exact;
    double bound;
};

// Y ~ |S ∩ S~| for independent uniform s-subsets of [p].
MgfResult hypergeometric_mgf_bound(std::size_t p, std::size_t s, double lambda_sq);

// sum_k P{Y = k} f(k) for Y hypergeometric (population N, K successes, n draws).
double hypergeometric_expectation(std::size_t N, std::size_t K, std::size_t n,
                                  const std::function<double(std::size_t)>& f);
// E[expm1(g(Y))] evaluated termwise so tiny exponents keep full precision.
double hypergeometric_expm1(std::size_t N, std::size_t K, std::size_t n,
                            const std::function<double(std::size_t)>& g);

// TV bound for N(m 1_p, Sigma) against N(0, Sigma): (1/2) sqrt(exp(p m^2/(1-gamma+gamma p)) - 1).
double mean_shift_tv(const CorrelationModel& m, double shift);

double risk_lower_bound(const PriorSpec& prior, const CorrelationModel& m, DivergenceMethod method,
                        std::uint64_t seed = 0);

// Prior matching the dominant rate component for a cell, with |theta| = eps.
PriorSpec least_favorable_prior(const CorrelationModel& m, std::size_t s, double eps);

nlohmann::json to_json(const PriorSpec& prior, const CorrelationModel& m, const DivergenceResult& r);

}  // namespace corrdetect
