#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corrdetect/models.hpp"

namespace corrdetect {

// Squared separation rates are exact branch values with no absolute-constant
// normalization; experiments scale them with a separate multiplier.
struct RateResult {
    Family family = Family::equicorrelated;
    std::size_t p = 0;
    std::size_t s = 0;
    double gamma = 0.0;
    std::size_t R = 1;
    bool characterized = true;
    double value = 0.0;
    std::string regime;
    double cap = 0.0;  // 1 - gamma + gamma * (block size)
    std::optional<double> psi1_sq;
    std::optional<double> psi2_sq;
    std::optional<double> upsilon_sq;
    std::optional<double> rho_sq;
    // For the p/(4R) < s < p/R regime: true when upsilon^2 takes its scan
    // term (ties go to the scan term), false when it takes the cap term.
    std::optional<bool> upsilon_scan_term;
};

// (1-gamma) s log(1 + p/s^2) if s < sqrt p, (1-gamma) sqrt p otherwise.
double psi1_sq(std::size_t p, std::size_t s, double gamma);

RateResult rate_equicorrelated(std::size_t p, std::size_t s, double gamma);
RateResult rate_grouped(std::size_t p, std::size_t s, double gamma, std::size_t R);
RateResult rate_rank_one(std::size_t p, std::size_t s, double gamma, std::span<const double> v);
RateResult rate_for(const CorrelationModel& m, std::size_t s);

struct CorrelationThresholds {
    // 1 - gamma^*: below this correlation helps. Undefined at s = p.
    std::optional<double> one_minus_gamma_star;
    // 1 - gamma_*: above this (with gamma >> p^{-1/2}) correlation hurts. None when s < sqrt p.
    std::optional<double> one_minus_gamma_lower;
};

CorrelationThresholds blessing_curse_thresholds(std::size_t p, std::size_t s);

struct BoundaryCheck {
    std::string boundary;  // "sqrt(p)", "p-sqrt(p)", "p", "p/(4R)", "p/R-split", "p/R", "p/sqrt(R)"
    std::size_t s_left;
    std::size_t s_right;
    double left;
    double right;
    double ratio;  // max(left,right)/min(left,right)
    bool documented_jump;
};

// Rates on both sides of every regime boundary that exists for (p, gamma, R).
// R = 0 selects the equicorrelated family.
std::vector<BoundaryCheck> continuity_audit(std::size_t p, double gamma, std::size_t R = 0);

// Integer forms of the regime inequalities.
bool below_sqrt(std::size_t s, std::size_t p);        // s < sqrt p
bool at_most_p_minus_sqrt(std::size_t s, std::size_t p);  // s <= p - sqrt p

}  // namespace corrdetect
