#include "corrdetect/test_statistics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "corrdetect/errors.hpp"
#include "corrdetect/gaussian_kernel.hpp"

namespace corrdetect {

namespace {

struct Neumaier {
    double sum = 0.0;
    double c = 0.0;
    void add(double v)
    {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            c += (sum - t) + v;
        else
            c += (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + c; }
};

void fill_scan(StatisticValue& out)
{
    const auto it = std::max_element(out.per_group.begin(), out.per_group.end());
    out.argmax = static_cast<std::size_t>(it - out.per_group.begin());
    out.value = *it;
}

}  // namespace

double collier_sum(std::span<const double> z, double t, double alpha_t)
{
    Neumaier acc;
    for (double zi : z)
        if (std::abs(zi) >= t) acc.add(zi * zi - alpha_t);
    return acc.value();
}

StatisticValue collier_stat(std::span<const double> z, double t)
{
    if (!(t >= 0.0)) throw ContractError("collier threshold t must be >= 0");
    StatisticValue s;
    s.name = "collier";
    s.value = collier_sum(z, t, alpha(t));
    return s;
}

StatisticValue chisq_stat(std::span<const double> z)
{
    StatisticValue s;
    s.name = "chisq";
    double acc = 0.0;
    for (double zi : z) acc += zi * zi;
    s.value = acc;
    return s;
}

StatisticValue linear_stat(const CorrelationModel& m, std::span<const double> x)
{
    const std::size_t p = m.dim();
    if (x.size() != p) throw ContractError("observation length does not match model dimension");
    double dot = 0.0;
    if (m.family() == Family::rank_one) {
        const auto& v = m.direction();
        for (std::size_t i = 0; i < p; ++i) dot += v[i] * x[i];
    } else {
        for (double xi : x) dot += xi;
    }
    StatisticValue s;
    s.name = "linear";
    s.value = dot * dot / static_cast<double>(p);
    s.null_variance = 1.0 - m.gamma() + m.gamma() * static_cast<double>(p);
    return s;
}

StatisticValue linear_stat_group(const CorrelationModel& m, std::span<const double> x, std::size_t k)
{
    if (x.size() != m.dim()) throw ContractError("observation length does not match model dimension");
    if (m.family() == Family::rank_one) throw ContractError("group directions need a block model");
    if (k >= m.groups()) throw ContractError("group index out of range");
    double dot = 0.0;
    for (auto i : m.block(k)) dot += x[i];
    StatisticValue s;
    s.name = "linear_group";
    s.value = dot * dot / static_cast<double>(m.block_size());
    s.null_variance = m.block_variance();
    return s;
}

StatisticValue scan_stats(const std::vector<std::vector<double>>& blocks, ScanKind kind, double t)
{
    if (blocks.empty()) throw ContractError("scan needs at least one block");
    const std::size_t m = blocks.front().size();
    for (const auto& b : blocks)
        if (b.size() != m) throw ContractError("scan blocks must have equal length");
    StatisticValue s;
    s.per_group.resize(blocks.size());
    const double a = kind == ScanKind::collier_scan ? alpha(t) : 0.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = blocks[k];
        double v = 0.0;
        switch (kind) {
        case ScanKind::chisq_scan:
            for (double z : b) v += z * z;
            break;
        case ScanKind::collier_scan: v = collier_sum(b, t, a); break;
        case ScanKind::linear_scan: {
            double d = 0.0;
            for (double z : b) d += z;
            v = d * d / static_cast<double>(m);
            break;
        }
        }
        s.per_group[k] = v;
    }
    s.name = kind == ScanKind::chisq_scan ? "chisq_scan" : kind == ScanKind::collier_scan ? "collier_scan" : "linear_scan";
    fill_scan(s);
    return s;
}

StatisticValue scan_stats(const CorrelationModel& m, std::span<const double> z, ScanKind kind, double t)
{
    if (m.family() == Family::rank_one) throw ContractError("scan statistics need a block model");
    if (z.size() != m.dim()) throw ContractError("observation length does not match model dimension");
    const std::size_t R = m.groups();
    std::vector<std::vector<double>> blocks(R);
    for (std::size_t k = 0; k < R; ++k) {
        auto idx = m.block(k);
        blocks[k].reserve(idx.size());
        for (auto i : idx) blocks[k].push_back(z[i]);
    }
    auto s = scan_stats(blocks, kind, t);
    if (kind == ScanKind::linear_scan) s.null_variance = m.block_variance();
    return s;
}

std::vector<double> standardized_group_means(const CorrelationModel& m, std::span<const double> x)
{
    if (m.family() == Family::rank_one) throw ContractError("group means need a block model");
    if (x.size() != m.dim()) throw ContractError("observation length does not match model dimension");
    const std::size_t R = m.groups();
    const double msz = static_cast<double>(m.block_size());
    const double scale = 1.0 / std::sqrt(msz * m.block_variance());
    std::vector<double> out(R);
    for (std::size_t k = 0; k < R; ++k) {
        double sum = 0.0;
        for (auto i : m.block(k)) sum += x[i];
        // sqrt(m) * (sum / m) / sqrt(cap) = sum / sqrt(m cap)
        out[k] = sum * scale;
    }
    return out;
}

StatisticValue averaged_group_stats(const CorrelationModel& m, std::span<const double> x, AverageKind kind, double t)
{
    StatisticValue s;
    if (kind == AverageKind::collier_avg) {
        const auto y = standardized_group_means(m, x);
        s = collier_stat(y, t);
        s.name = "collier_avg";
        return s;
    }
    if (m.family() == Family::rank_one) throw ContractError("group means need a block model");
    if (x.size() != m.dim()) throw ContractError("observation length does not match model dimension");
    const double msz = static_cast<double>(m.block_size());
    double acc = 0.0;
    for (std::size_t k = 0; k < m.groups(); ++k) {
        double sum = 0.0;
        for (auto i : m.block(k)) sum += x[i];
        acc += sum * sum / msz;  // |xbar 1_B|^2 = m xbar^2
    }
    s.name = "chisq_avg";
    s.value = acc;
    s.null_variance = m.block_variance();
    return s;
}

StatisticValue noiseless_residual(const CorrelationModel& m, std::span<const double> x)
{
    if (m.gamma() != 1.0) throw ContractError("noiseless residual is only defined at gamma = 1");
    if (x.size() != m.dim()) throw ContractError("observation length does not match model dimension");
    StatisticValue s;
    s.name = "noiseless";
    if (m.family() == Family::rank_one) {
        const auto& v = m.direction();
        const std::size_t p = m.dim();
        double c = 0.0;
        for (std::size_t i = 0; i < p; ++i) c += v[i] * x[i];
        c /= static_cast<double>(p);
        double acc = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            const double r = x[i] - c * v[i];
            acc += r * r;
        }
        s.value = acc;
        return s;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < m.groups(); ++k) {
        auto idx = m.block(k);
        const double x0 = x[idx[0]];
        double mean = 0.0;
        for (auto i : idx) mean += x[i] - x0;
        mean /= static_cast<double>(idx.size());
        for (auto i : idx) {
            const double r = (x[i] - x0) - mean;
            acc += r * r;
        }
    }
    s.value = acc;
    return s;
}

void collier_profile(std::span<const double> z, std::span<const double> t, std::span<const double> alpha_t,
                     std::vector<double>& sorted_sq, std::vector<double>& out)
{
    if (t.size() != alpha_t.size()) throw ContractError("threshold and alpha lists differ in length");
    sorted_sq.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) sorted_sq[i] = z[i] * z[i];
    std::sort(sorted_sq.begin(), sorted_sq.end(), std::greater<>());
    // Visit thresholds from largest to smallest, extending one running sum.
    std::vector<std::size_t> order(t.size());
    for (std::size_t j = 0; j < t.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] > t[b]; });
    out.assign(t.size(), 0.0);
    Neumaier acc;
    std::size_t n = 0;
    for (auto j : order) {
        // |z| >= t  <=>  z^2 >= t^2 up to rounding of t^2; compare on |z| to match collier_sum.
        while (n < sorted_sq.size() && std::sqrt(sorted_sq[n]) >= t[j]) acc.add(sorted_sq[n++]);
        out[j] = acc.value() - alpha_t[j] * static_cast<double>(n);
    }
}

}  // namespace corrdetect
