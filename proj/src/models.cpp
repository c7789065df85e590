#include "corrdetect/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "corrdetect/errors.hpp"

namespace corrdetect {

namespace {

void check_gamma(double gamma)
{
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in [0, 1]");
}

void check_theta(std::span<const double> theta, std::size_t p)
{
    if (theta.size() != p)
        throw ContractError("theta has length " + std::to_string(theta.size()) + ", model dimension is " +
                            std::to_string(p));
}

}  // namespace

std::string family_name(Family f)
{
    switch (f) {
    case Family::equicorrelated: return "eq";
    case Family::grouped: return "grouped";
    case Family::rank_one: return "rankone";
    }
    return "?";
}

Family parse_family(const std::string& s)
{
    if (s == "eq" || s == "equicorrelated") return Family::equicorrelated;
    if (s == "grouped") return Family::grouped;
    if (s == "rankone" || s == "rank_one") return Family::rank_one;
    throw ContractError("unknown model family '" + s + "'");
}

CorrelationModel::CorrelationModel(std::variant<Equicorrelated, Grouped, RankOne> v) : rep_(std::move(v)) {}

CorrelationModel CorrelationModel::equicorrelated(std::size_t p, double gamma)
{
    if (p < 1) throw ContractError("p must be >= 1");
    check_gamma(gamma);
    CorrelationModel m(Equicorrelated{p, gamma});
    m.identity_.resize(p);
    std::iota(m.identity_.begin(), m.identity_.end(), std::size_t{0});
    return m;
}

CorrelationModel CorrelationModel::grouped(std::size_t p, std::size_t R, double gamma)
{
    if (p < 1) throw ContractError("p must be >= 1");
    if (R < 1 || p % R != 0) throw ContractError("R must divide p");
    std::vector<std::size_t> labels(p);
    const std::size_t m = p / R;
    for (std::size_t i = 0; i < p; ++i) labels[i] = i / m;
    return grouped(std::move(labels), R, gamma);
}

CorrelationModel CorrelationModel::grouped(std::vector<std::size_t> labels, std::size_t R, double gamma)
{
    const std::size_t p = labels.size();
    if (p < 1) throw ContractError("p must be >= 1");
    if (R < 1 || p % R != 0) throw ContractError("R must divide p");
    check_gamma(gamma);
    std::vector<std::size_t> count(R, 0);
    for (auto l : labels) {
        if (l >= R) throw ContractError("group label out of range [0, R)");
        ++count[l];
    }
    for (auto c : count)
        if (c != p / R) throw ContractError("every group must have exactly p/R members");
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
    return CorrelationModel(Grouped{p, R, gamma, std::move(labels), std::move(order)});
}

CorrelationModel CorrelationModel::rank_one(std::vector<double> v, double gamma)
{
    const std::size_t p = v.size();
    if (p < 1) throw ContractError("p must be >= 1");
    check_gamma(gamma);
    double nrm = 0.0;
    for (double a : v) nrm += a * a;
    if (!(std::fabs(nrm - static_cast<double>(p)) <= 1e-9 * static_cast<double>(p)))
        throw ContractError("rank-one direction must satisfy |v|^2 = p");
    return CorrelationModel(RankOne{p, gamma, std::move(v)});
}

CorrelationModel CorrelationModel::rank_one_normalized(std::vector<double> v, double gamma)
{
    double nrm = 0.0;
    for (double a : v) nrm += a * a;
    if (!(nrm > 0.0)) throw ContractError("rank-one direction must be nonzero");
    const double scale = std::sqrt(static_cast<double>(v.size()) / nrm);
    for (double& a : v) a *= scale;
    return rank_one(std::move(v), gamma);
}

Family CorrelationModel::family() const
{
    return static_cast<Family>(rep_.index());
}

std::size_t CorrelationModel::dim() const
{
    return std::visit([](const auto& r) { return r.p; }, rep_);
}

double CorrelationModel::gamma() const
{
    return std::visit([](const auto& r) { return r.gamma; }, rep_);
}

std::size_t CorrelationModel::groups() const
{
    switch (family()) {
    case Family::equicorrelated: return 1;
    case Family::grouped: return std::get<Grouped>(rep_).R;
    case Family::rank_one: return 0;
    }
    return 0;
}

std::size_t CorrelationModel::block_size() const
{
    switch (family()) {
    case Family::grouped: return std::get<Grouped>(rep_).p / std::get<Grouped>(rep_).R;
    default: return dim();
    }
}

double CorrelationModel::block_variance() const
{
    const double g = gamma();
    return 1.0 - g + g * static_cast<double>(block_size());
}

const Grouped& CorrelationModel::as_grouped() const
{
    if (family() != Family::grouped) throw ContractError("model is not grouped");
    return std::get<Grouped>(rep_);
}

const RankOne& CorrelationModel::as_rank_one() const
{
    if (family() != Family::rank_one) throw ContractError("model is not rank-one");
    return std::get<RankOne>(rep_);
}

std::span<const std::size_t> CorrelationModel::block(std::size_t k) const
{
    switch (family()) {
    case Family::equicorrelated:
        if (k != 0) throw ContractError("equicorrelated model has a single block");
        return identity_;
    case Family::grouped: {
        const auto& g = std::get<Grouped>(rep_);
        if (k >= g.R) throw ContractError("block index out of range");
        const std::size_t m = g.p / g.R;
        return std::span<const std::size_t>(g.order).subspan(k * m, m);
    }
    case Family::rank_one: break;
    }
    throw ContractError("rank-one model has no blocks");
}

bool CorrelationModel::operator==(const CorrelationModel& o) const
{
    if (family() != o.family() || dim() != o.dim() || gamma() != o.gamma()) return false;
    switch (family()) {
    case Family::equicorrelated: return true;
    case Family::grouped: return as_grouped().labels == o.as_grouped().labels;
    case Family::rank_one: return as_rank_one().v == o.as_rank_one().v;
    }
    return false;
}

void sample_into(const CorrelationModel& m, std::span<const double> theta, Stream& rng, std::vector<double>& out)
{
    const std::size_t p = m.dim();
    if (!theta.empty()) check_theta(theta, p);
    out.resize(p);
    const double g = m.gamma();
    const double a = std::sqrt(g);
    const double b = std::sqrt(1.0 - g);
    switch (m.family()) {
    case Family::equicorrelated: {
        const double w = a * rng.normal();
        for (std::size_t i = 0; i < p; ++i) out[i] = w + b * rng.normal();
        break;
    }
    case Family::grouped: {
        const auto& gr = m.as_grouped();
        std::vector<double> w(gr.R);
        for (auto& wk : w) wk = a * rng.normal();
        for (std::size_t i = 0; i < p; ++i) out[i] = w[gr.labels[i]] + b * rng.normal();
        break;
    }
    case Family::rank_one: {
        const auto& v = m.as_rank_one().v;
        const double w = a * rng.normal();
        for (std::size_t i = 0; i < p; ++i) out[i] = w * v[i] + b * rng.normal();
        break;
    }
    }
    if (!theta.empty())
        for (std::size_t i = 0; i < p; ++i) out[i] += theta[i];
}

Observation sample(const CorrelationModel& m, std::span<const double> theta, Stream& rng)
{
    check_theta(theta, m.dim());
    Observation o{{}, ModelTag{m.family(), m.dim(), m.gamma()}, rng.seed()};
    sample_into(m, theta, rng, o.x);
    return o;
}

void decorrelate_into(const CorrelationModel& m, std::span<const double> x, Stream& rng, std::vector<double>& out)
{
    const std::size_t p = m.dim();
    if (x.size() != p) throw ContractError("observation length does not match model dimension");
    const double g = m.gamma();
    if (!(g < 1.0)) throw UnsupportedRegime("decorrelate requires gamma < 1; use the noiseless test path");
    const double inv = 1.0 / std::sqrt(1.0 - g);
    out.resize(p);
    switch (m.family()) {
    case Family::equicorrelated: {
        double mean = 0.0;
        for (double xi : x) mean += xi;
        mean /= static_cast<double>(p);
        const double shift = rng.normal() / std::sqrt(static_cast<double>(p));
        for (std::size_t i = 0; i < p; ++i) out[i] = (x[i] - mean) * inv + shift;
        break;
    }
    case Family::grouped: {
        const auto& gr = m.as_grouped();
        const double msz = static_cast<double>(p / gr.R);
        std::vector<double> mean(gr.R, 0.0), shift(gr.R);
        for (std::size_t i = 0; i < p; ++i) mean[gr.labels[i]] += x[i];
        for (std::size_t k = 0; k < gr.R; ++k) {
            mean[k] /= msz;
            shift[k] = rng.normal() / std::sqrt(msz);
        }
        for (std::size_t i = 0; i < p; ++i) {
            const auto k = gr.labels[i];
            out[i] = (x[i] - mean[k]) * inv + shift[k];
        }
        break;
    }
    case Family::rank_one: {
        const auto& v = m.as_rank_one().v;
        double c = 0.0;
        for (std::size_t i = 0; i < p; ++i) c += v[i] * x[i];
        c /= static_cast<double>(p);
        const double xi = rng.normal() / std::sqrt(static_cast<double>(p));
        for (std::size_t i = 0; i < p; ++i) out[i] = (x[i] - c * v[i]) * inv + xi * v[i];
        break;
    }
    }
}

std::vector<double> decorrelate(const CorrelationModel& m, const Observation& x, Stream& rng)
{
    if (x.model.family != m.family() || x.model.p != m.dim() || x.model.gamma != m.gamma())
        throw ContractError("observation was not generated by this model");
    std::vector<double> out;
    decorrelate_into(m, x.x, rng, out);
    return out;
}

std::vector<double> decorrelated_mean(const CorrelationModel& m, std::span<const double> theta)
{
    const std::size_t p = m.dim();
    check_theta(theta, p);
    const double g = m.gamma();
    if (!(g < 1.0)) throw UnsupportedRegime("decorrelated mean requires gamma < 1");
    const double inv = 1.0 / std::sqrt(1.0 - g);
    std::vector<double> out(theta.begin(), theta.end());
    if (m.family() == Family::rank_one) {
        const auto& v = m.as_rank_one().v;
        double c = 0.0;
        for (std::size_t i = 0; i < p; ++i) c += v[i] * theta[i];
        c /= static_cast<double>(p);
        for (std::size_t i = 0; i < p; ++i) out[i] = (theta[i] - c * v[i]) * inv;
        return out;
    }
    for (std::size_t k = 0; k < m.groups(); ++k) {
        auto blk = m.block(k);
        double mean = 0.0;
        for (auto i : blk) mean += theta[i];
        mean /= static_cast<double>(blk.size());
        for (auto i : blk) out[i] = (theta[i] - mean) * inv;
    }
    return out;
}

std::vector<double> covariance_apply(const CorrelationModel& m, std::span<const double> u)
{
    const std::size_t p = m.dim();
    check_theta(u, p);
    const double g = m.gamma();
    std::vector<double> out(p);
    for (std::size_t i = 0; i < p; ++i) out[i] = (1.0 - g) * u[i];
    if (m.family() == Family::rank_one) {
        const auto& v = m.as_rank_one().v;
        double c = 0.0;
        for (std::size_t i = 0; i < p; ++i) c += v[i] * u[i];
        for (std::size_t i = 0; i < p; ++i) out[i] += g * c * v[i];
        return out;
    }
    for (std::size_t k = 0; k < m.groups(); ++k) {
        auto blk = m.block(k);
        double s = 0.0;
        for (auto i : blk) s += u[i];
        for (auto i : blk) out[i] += g * s;
    }
    return out;
}

std::vector<double> precision_apply(const CorrelationModel& m, std::span<const double> u)
{
    const std::size_t p = m.dim();
    check_theta(u, p);
    const double g = m.gamma();
    if (!(g < 1.0)) throw SingularCovariance("covariance is singular at gamma = 1");
    const double inv = 1.0 / (1.0 - g);
    std::vector<double> out(p);
    if (m.family() == Family::rank_one) {
        // (1/(1-g)) (I - vv'/p) u + (1/(1-g+g p)) vv'u/p
        const auto& v = m.as_rank_one().v;
        const double pd = static_cast<double>(p);
        double c = 0.0;
        for (std::size_t i = 0; i < p; ++i) c += v[i] * u[i];
        c /= pd;
        const double along = c / (1.0 - g + g * pd);
        for (std::size_t i = 0; i < p; ++i) out[i] = (u[i] - c * v[i]) * inv + along * v[i];
        return out;
    }
    for (std::size_t k = 0; k < m.groups(); ++k) {
        auto blk = m.block(k);
        const double msz = static_cast<double>(blk.size());
        double c = 0.0;
        for (auto i : blk) c += u[i];
        c /= msz;
        const double along = c / (1.0 - g + g * msz);
        for (auto i : blk) out[i] = (u[i] - c) * inv + along;
    }
    return out;
}

}  // namespace corrdetect
