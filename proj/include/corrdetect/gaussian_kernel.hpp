#pragma once

#include <cstdint>
#include <shared_mutex>
#include <span>
#include <unordered_map>

namespace corrdetect {

double normal_pdf(double x);

// e^{x^2} erfc(x) for x >= 0, without forming either factor when they would
// overflow or underflow.
double erfcx(double x);

// Upper tail P{g >= t}.
double upper_tail(double t);

// alpha_t = E[g^2 1{|g|>=t}] / P{|g|>=t} = 1 + t phi(t)/Q(t).
double alpha(double t);

// Sum a_j + 2 sqrt(x sum a_j^2) + 2 x max a_j. Weighted chi-square sums exceed
// this with probability at most e^{-x}.
double laurent_massart_upper(std::span<const double> weights, double x);

// 9 (sqrt(p e^{-t^2/2} x) + x): deviation bound for the centred thresholded
// sum of squares under the null.
double collier_typeI_threshold(std::size_t p, double t, double x);

// Memo for alpha keyed by the bit pattern of t. Safe for concurrent use.
class TruncatedMomentTable {
public:
    double get(double t);
    std::size_t size() const;

private:
    mutable std::shared_mutex mu_;
    std::unordered_map<std::uint64_t, double> cache_;
};

}  // namespace corrdetect
