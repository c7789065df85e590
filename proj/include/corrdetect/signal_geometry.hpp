#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corrdetect/random.hpp"

namespace corrdetect {

struct SignalSpec {
    std::vector<double> theta;
    std::size_t s = 0;
    std::vector<std::size_t> support;  // sorted

    // Builds the spec from theta alone; support = nonzero coordinates.
    static SignalSpec from_theta(std::vector<double> theta, std::size_t s);
    void validate() const;
    double norm_sq() const;
};

enum class SpaceTag { Theta, Theta_I, Theta_II, Upsilon_I, Upsilon_II, M_supp, Theta_dagger };

std::string space_name(SpaceTag t);
SpaceTag parse_space(const std::string& s);

struct SpaceParams {
    std::size_t p = 0;
    std::size_t s = 0;
    double eps = 0.0;
    // Group map for the Upsilon and Theta_dagger spaces; empty means contiguous
    // blocks of size p/R.
    std::size_t R = 1;
    std::vector<std::size_t> labels;
};

// Witness: |theta| for Theta, |theta - mean 1| for Theta_I, |mean 1| for
// Theta_II, max_{|S|<=s} |theta_S| for M_supp (all compared to eps); the
// squared group sums for Upsilon_I / Upsilon_II (compared to eps^2/8); the
// within-group residual energy for Theta_dagger (compared to 0).
struct SpaceMembership {
    SpaceTag tag;
    SpaceParams params;
    bool member;
    double witness;
};

SpaceMembership membership(const SignalSpec& theta, SpaceTag tag, const SpaceParams& params);

struct ProjectionBounds {
    double orthogonal;          // |theta - <v,theta> v / p|^2
    double support_restricted;  // |theta - <v,theta> v_supp / p|^2
    double bound_orthogonal;    // |theta|^2 (p - M) / p
    double bound_support;       // |theta|^2 (p - 2M) / p
    double M;                   // max_{|S| <= s} |v_S|^2
};

ProjectionBounds projection_lower_bounds(const SignalSpec& theta, std::span<const double> v);
ProjectionBounds projection_lower_bounds(const SignalSpec& theta);  // v = 1_p

// max_{|S| <= s} |v_S|^2 via descending sort of squares.
double top_energy(std::span<const double> v, std::size_t s);

// Largest s whose s largest squared coordinates sum to at most p/4.
std::size_t omega(std::span<const double> v);

enum class SupportRule { first_s, uniform_random, explicit_set };
enum class SignRule { plus, match_v };

struct SignalRecipe {
    std::size_t p = 0;
    std::size_t s = 0;
    double magnitude = 0.0;
    SupportRule support = SupportRule::first_s;
    SignRule sign = SignRule::plus;
    std::vector<std::size_t> explicit_support;
    std::vector<double> v;  // for match_v
};

// Uniform size-s subset of [0, p), sorted (Floyd's algorithm).
std::vector<std::size_t> uniform_subset(std::size_t p, std::size_t s, Stream& rng);

SignalSpec make_sparse_signal(const SignalRecipe& r, Stream* rng = nullptr);

}  // namespace corrdetect
