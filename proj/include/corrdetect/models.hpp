#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "corrdetect/random.hpp"

namespace corrdetect {

enum class Family { equicorrelated, grouped, rank_one };

std::string family_name(Family f);
Family parse_family(const std::string& s);

struct Equicorrelated {
    std::size_t p;
    double gamma;
};

struct Grouped {
    std::size_t p;
    std::size_t R;
    double gamma;
    std::vector<std::size_t> labels;  // coordinate -> group in [0, R)
    std::vector<std::size_t> order;   // coordinates sorted group-major; block k is order[k*m, (k+1)*m)
};

struct RankOne {
    std::size_t p;
    double gamma;
    std::vector<double> v;
};

class CorrelationModel {
public:
    static CorrelationModel equicorrelated(std::size_t p, double gamma);
    // Contiguous blocks: coordinate i belongs to group i / (p/R).
    static CorrelationModel grouped(std::size_t p, std::size_t R, double gamma);
    static CorrelationModel grouped(std::vector<std::size_t> labels, std::size_t R, double gamma);
    // Requires |v|^2 = p to 1e-9 relative error.
    static CorrelationModel rank_one(std::vector<double> v, double gamma);
    // Rescales v so that |v|^2 = p.
    static CorrelationModel rank_one_normalized(std::vector<double> v, double gamma);

    Family family() const;
    std::size_t dim() const;
    double gamma() const;
    // Number of random effects blocks; 1 for the equicorrelated model, 0 for rank-one.
    std::size_t groups() const;
    std::size_t block_size() const;
    // Null variance of <u, X> for the unit direction along a block (or along v/sqrt p):
    // 1 - gamma + gamma * block size.
    double block_variance() const;

    const Grouped& as_grouped() const;
    const RankOne& as_rank_one() const;
    const std::vector<double>& direction() const { return as_rank_one().v; }

    // Coordinates of block k (grouped) or all coordinates (equicorrelated).
    std::span<const std::size_t> block(std::size_t k) const;

    bool operator==(const CorrelationModel& o) const;

private:
    explicit CorrelationModel(std::variant<Equicorrelated, Grouped, RankOne> v);
    std::variant<Equicorrelated, Grouped, RankOne> rep_;
    std::vector<std::size_t> identity_;  // block(0) for equicorrelated
};

// Summary of the generating model carried by each observation.
struct ModelTag {
    Family family;
    std::size_t p;
    double gamma;
};

struct Observation {
    std::vector<double> x;
    ModelTag model;
    std::uint64_t seed;  // seed of the stream that produced the draw
};

// Additive random effects representation; draws W (or W_1..W_R) first, then Z_1..Z_p.
Observation sample(const CorrelationModel& m, std::span<const double> theta, Stream& rng);
// Same draw order, into a caller buffer. An empty theta means the null.
void sample_into(const CorrelationModel& m, std::span<const double> theta, Stream& rng,
                 std::vector<double>& out);

// X tilde: projection off the correlation direction(s), rescaled, with fresh xi
// re-injected along the removed direction(s). Requires gamma < 1.
std::vector<double> decorrelate(const CorrelationModel& m, const Observation& x, Stream& rng);
void decorrelate_into(const CorrelationModel& m, std::span<const double> x, Stream& rng,
                      std::vector<double>& out);

// Mean of X tilde under theta.
std::vector<double> decorrelated_mean(const CorrelationModel& m, std::span<const double> theta);

// Sigma u and Sigma^{-1} u in O(p).
std::vector<double> covariance_apply(const CorrelationModel& m, std::span<const double> u);
std::vector<double> precision_apply(const CorrelationModel& m, std::span<const double> u);

}  // namespace corrdetect
