#include "corrdetect/signal_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_set>

#include "corrdetect/errors.hpp"

namespace corrdetect {

namespace {

std::vector<std::size_t> group_labels(const SpaceParams& prm)
{
    if (!prm.labels.empty()) {
        if (prm.labels.size() != prm.p) throw ContractError("group labels must have length p");
        return prm.labels;
    }
    if (prm.R < 1 || prm.p % prm.R != 0) throw ContractError("R must divide p");
    std::vector<std::size_t> labels(prm.p);
    const std::size_t m = prm.p / prm.R;
    for (std::size_t i = 0; i < prm.p; ++i) labels[i] = i / m;
    return labels;
}

double sq_norm(std::span<const double> x)
{
    double s = 0.0;
    for (double a : x) s += a * a;
    return s;
}

}  // namespace

SignalSpec SignalSpec::from_theta(std::vector<double> theta, std::size_t s)
{
    SignalSpec out;
    for (std::size_t i = 0; i < theta.size(); ++i)
        if (theta[i] != 0.0) out.support.push_back(i);
    out.theta = std::move(theta);
    out.s = s;
    out.validate();
    return out;
}

void SignalSpec::validate() const
{
    if (support.size() > s) throw ContractError("support larger than declared sparsity");
    std::vector<bool> on(theta.size(), false);
    for (auto i : support) {
        if (i >= theta.size()) throw ContractError("support index out of range");
        on[i] = true;
    }
    for (std::size_t i = 0; i < theta.size(); ++i)
        if (!on[i] && theta[i] != 0.0) throw ContractError("theta is nonzero off its declared support");
}

double SignalSpec::norm_sq() const
{
    return sq_norm(theta);
}

std::string space_name(SpaceTag t)
{
    switch (t) {
    case SpaceTag::Theta: return "Theta";
    case SpaceTag::Theta_I: return "Theta_I";
    case SpaceTag::Theta_II: return "Theta_II";
    case SpaceTag::Upsilon_I: return "Upsilon_I";
    case SpaceTag::Upsilon_II: return "Upsilon_II";
    case SpaceTag::M_supp: return "M_supp";
    case SpaceTag::Theta_dagger: return "Theta_dagger";
    }
    throw ContractError("unknown space tag");
}

SpaceTag parse_space(const std::string& s)
{
    for (auto t : {SpaceTag::Theta, SpaceTag::Theta_I, SpaceTag::Theta_II, SpaceTag::Upsilon_I,
                   SpaceTag::Upsilon_II, SpaceTag::M_supp, SpaceTag::Theta_dagger})
        if (space_name(t) == s) return t;
    throw ContractError("unknown space tag '" + s + "'");
}

SpaceMembership membership(const SignalSpec& spec, SpaceTag tag, const SpaceParams& prm)
{
    const auto& th = spec.theta;
    const std::size_t p = th.size();
    if (prm.p != p) throw ContractError("space dimension does not match theta");
    std::size_t l0 = 0;
    for (double a : th) l0 += (a != 0.0);
    const bool sparse_ok = l0 <= prm.s;

    SpaceMembership out{tag, prm, false, 0.0};
    const double mean = p ? std::accumulate(th.begin(), th.end(), 0.0) / static_cast<double>(p) : 0.0;
    switch (tag) {
    case SpaceTag::Theta:
        out.witness = std::sqrt(sq_norm(th));
        out.member = sparse_ok && out.witness >= prm.eps;
        break;
    case SpaceTag::Theta_I: {
        double r = 0.0;
        for (double a : th) r += (a - mean) * (a - mean);
        out.witness = std::sqrt(r);
        out.member = sparse_ok && out.witness >= prm.eps;
        break;
    }
    case SpaceTag::Theta_II:
        out.witness = std::sqrt(static_cast<double>(p)) * std::fabs(mean);
        out.member = sparse_ok && out.witness >= prm.eps;
        break;
    case SpaceTag::M_supp:
        out.witness = std::sqrt(top_energy(th, prm.s));
        out.member = out.witness >= prm.eps;
        break;
    case SpaceTag::Upsilon_I:
    case SpaceTag::Upsilon_II:
    case SpaceTag::Theta_dagger: {
        const auto labels = group_labels(prm);
        const std::size_t R = prm.labels.empty() ? prm.R : (*std::max_element(labels.begin(), labels.end()) + 1);
        std::vector<double> gsum(R, 0.0);
        std::vector<std::size_t> gsize(R, 0), ghit(R, 0);
        for (std::size_t i = 0; i < p; ++i) {
            gsum[labels[i]] += th[i];
            ++gsize[labels[i]];
            ghit[labels[i]] += (th[i] != 0.0);
        }
        std::vector<double> gmean(R);
        for (std::size_t k = 0; k < R; ++k) gmean[k] = gsize[k] ? gsum[k] / static_cast<double>(gsize[k]) : 0.0;
        double w = 0.0;
        if (tag == SpaceTag::Upsilon_I) {
            // Centring only touches the support: theta_{B_k} - mean_k 1_{B_k cap supp}
            for (std::size_t i = 0; i < p; ++i)
                if (th[i] != 0.0) w += (th[i] - gmean[labels[i]]) * (th[i] - gmean[labels[i]]);
            out.member = sparse_ok && w >= prm.eps * prm.eps / 8.0;
        } else if (tag == SpaceTag::Upsilon_II) {
            for (std::size_t k = 0; k < R; ++k)
                if (4 * R * ghit[k] > p)  // |B_k cap supp| > p/(4R), strict
                    w += static_cast<double>(gsize[k]) * gmean[k] * gmean[k];
            out.member = sparse_ok && w >= prm.eps * prm.eps / 8.0;
        } else {
            for (std::size_t i = 0; i < p; ++i) w += (th[i] - gmean[labels[i]]) * (th[i] - gmean[labels[i]]);
            out.member = sparse_ok && l0 > 0 && w > 0.0;
        }
        out.witness = w;
        break;
    }
    default: throw ContractError("unknown space tag");
    }
    return out;
}

double top_energy(std::span<const double> v, std::size_t s)
{
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    const std::size_t k = std::min(s, sq.size());
    std::partial_sort(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(k), sq.end(), std::greater<>());
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += sq[i];
    return acc;
}

ProjectionBounds projection_lower_bounds(const SignalSpec& spec, std::span<const double> v)
{
    const auto& th = spec.theta;
    const std::size_t p = th.size();
    if (v.size() != p) throw ContractError("v must have length p");
    const double pd = static_cast<double>(p);
    const double vn = sq_norm(v);
    if (!(std::fabs(vn - pd) <= 1e-9 * pd)) throw ContractError("v must satisfy |v|^2 = p");
    double ip = 0.0;
    for (std::size_t i = 0; i < p; ++i) ip += v[i] * th[i];
    const double c = ip / pd;
    ProjectionBounds b{};
    for (std::size_t i = 0; i < p; ++i) {
        const double o = th[i] - c * v[i];
        b.orthogonal += o * o;
        const double r = th[i] != 0.0 ? o : th[i];
        b.support_restricted += r * r;
    }
    const double n2 = sq_norm(th);
    b.M = top_energy(v, spec.s);
    b.bound_orthogonal = n2 * (pd - b.M) / pd;
    b.bound_support = n2 * (pd - 2.0 * b.M) / pd;
    return b;
}

ProjectionBounds projection_lower_bounds(const SignalSpec& spec)
{
    std::vector<double> ones(spec.theta.size(), 1.0);
    return projection_lower_bounds(spec, ones);
}

std::size_t omega(std::span<const double> v)
{
    const double pd = static_cast<double>(v.size());
    if (!(std::fabs(sq_norm(v) - pd) <= 1e-9 * pd)) throw ContractError("omega: v must satisfy |v|^2 = p");
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    std::sort(sq.begin(), sq.end(), std::greater<>());
    double acc = 0.0;
    std::size_t s = 0;
    for (double q : sq) {
        acc += q;
        if (acc > pd / 4.0) break;
        ++s;
    }
    return s;
}

std::vector<std::size_t> uniform_subset(std::size_t p, std::size_t s, Stream& rng)
{
    if (s > p) throw ContractError("subset size exceeds p");
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(2 * s);
    std::vector<std::size_t> out;
    out.reserve(s);
    for (std::size_t j = p - s; j < p; ++j) {
        const std::size_t t = rng.below(j + 1);
        if (chosen.insert(t).second) {
            out.push_back(t);
        } else {
            chosen.insert(j);
            out.push_back(j);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

SignalSpec make_sparse_signal(const SignalRecipe& r, Stream* rng)
{
    if (r.s > r.p) throw ContractError("s must not exceed p");
    if (!(r.magnitude >= 0.0)) throw ContractError("magnitude must be >= 0");
    std::vector<std::size_t> supp;
    switch (r.support) {
    case SupportRule::first_s:
        supp.resize(r.s);
        std::iota(supp.begin(), supp.end(), std::size_t{0});
        break;
    case SupportRule::uniform_random:
        if (!rng) throw ContractError("uniform_random support needs a stream");
        supp = uniform_subset(r.p, r.s, *rng);
        break;
    case SupportRule::explicit_set:
        if (r.explicit_support.size() > r.s) throw ContractError("explicit support larger than s");
        supp = r.explicit_support;
        std::sort(supp.begin(), supp.end());
        if (std::adjacent_find(supp.begin(), supp.end()) != supp.end())
            throw ContractError("explicit support has duplicates");
        if (!supp.empty() && supp.back() >= r.p) throw ContractError("explicit support index out of range");
        break;
    }
    if (r.sign == SignRule::match_v && r.v.size() != r.p) throw ContractError("match_v needs v of length p");
    SignalSpec out;
    out.theta.assign(r.p, 0.0);
    out.s = r.s;
    for (auto i : supp) {
        // sgn(0) is taken as +1 so the support stays exactly as drawn.
        const double sg = (r.sign == SignRule::match_v && r.v[i] < 0.0) ? -1.0 : 1.0;
        out.theta[i] = sg * r.magnitude;
    }
    if (r.magnitude > 0.0) {
        out.support = supp;
    }
    return out;
}

}  // namespace corrdetect
