#include "corrdetect/lower_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "corrdetect/errors.hpp"
#include "corrdetect/rates.hpp"

namespace corrdetect {

namespace {

double log_choose(std::size_t n, std::size_t k)
{
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double choose_d(std::size_t n, std::size_t k) { return std::exp(log_choose(n, k)); }

// Next k-combination of [0, n) in lexicographic order.
bool next_combination(std::vector<std::size_t>& c, std::size_t n)
{
    const std::size_t k = c.size();
    for (std::size_t i = k; i-- > 0;) {
        if (c[i] < n - k + i) {
            ++c[i];
            for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
            return true;
        }
    }
    return false;
}

double sign_of(const PriorSpec& pr, std::size_t i)
{
    if (pr.sign == SignRule::match_v) return pr.v[i] < 0.0 ? -1.0 : 1.0;
    return 1.0;
}

std::vector<double> sparse_vector(const PriorSpec& pr, const std::vector<std::size_t>& S)
{
    std::vector<double> th(pr.p, 0.0);
    for (auto i : S) th[i] = pr.magnitude * sign_of(pr, i);
    return th;
}

// Every atom of the prior (all priors here are uniform over finitely many atoms).
void for_each_atom(const PriorSpec& pr, const std::function<void(const std::vector<double>&)>& fn)
{
    switch (pr.kind) {
    case PriorKind::point_mass: fn(pr.theta); return;
    case PriorKind::uniform_sparse:
    case PriorKind::shifted: {
        std::vector<std::size_t> c(pr.s);
        std::iota(c.begin(), c.end(), std::size_t{0});
        do fn(sparse_vector(pr, c));
        while (next_combination(c, pr.p));
        return;
    }
    case PriorKind::group_within: {
        const std::size_t m = pr.p / pr.R;
        for (std::size_t k = 0; k < pr.R; ++k) {
            std::vector<std::size_t> c(pr.s);
            std::iota(c.begin(), c.end(), std::size_t{0});
            do {
                std::vector<std::size_t> S(pr.s);
                for (std::size_t j = 0; j < pr.s; ++j) S[j] = k * m + c[j];
                fn(sparse_vector(pr, S));
            } while (next_combination(c, m));
        }
        return;
    }
    case PriorKind::group_blocks: {
        const std::size_t m = pr.p / pr.R;
        std::vector<std::size_t> c(pr.s);
        std::iota(c.begin(), c.end(), std::size_t{0});
        do {
            std::vector<double> th(pr.p, 0.0);
            for (auto k : c)
                for (std::size_t i = k * m; i < (k + 1) * m; ++i) th[i] = pr.magnitude;
            fn(th);
        } while (next_combination(c, pr.R));
        return;
    }
    }
}

double atom_count(const PriorSpec& pr)
{
    switch (pr.kind) {
    case PriorKind::point_mass: return 1.0;
    case PriorKind::uniform_sparse:
    case PriorKind::shifted: return choose_d(pr.p, pr.s);
    case PriorKind::group_within: return static_cast<double>(pr.R) * choose_d(pr.p / pr.R, pr.s);
    case PriorKind::group_blocks: return choose_d(pr.R, pr.s);
    }
    return 0.0;
}

void check_compatible(const PriorSpec& pr, const CorrelationModel& m)
{
    if (pr.p != m.dim()) throw ContractError("prior dimension does not match the model");
    if (pr.kind == PriorKind::group_within || pr.kind == PriorKind::group_blocks) {
        if (m.family() == Family::rank_one) throw ContractError("group priors need a block model");
        if (pr.R != m.groups()) throw ContractError("prior group count does not match the model");
        if (m.family() == Family::grouped) {
            // The enumeration assumes contiguous blocks.
            const auto& g = m.as_grouped();
            const std::size_t msz = pr.p / pr.R;
            for (std::size_t i = 0; i < pr.p; ++i)
                if (g.labels[i] != i / msz) throw ContractError("group priors assume contiguous groups");
        }
    }
}

void finish(DivergenceResult& r)
{
    const double c = std::max(0.0, r.chi_sq);
    r.tv_bound = 0.5 * std::sqrt(c);
    r.risk_bound = std::clamp(1.0 - r.tv_bound, 0.0, 1.0);
}

bool equal_magnitudes(const std::vector<double>& v)
{
    for (double x : v)
        if (std::abs(x) != std::abs(v[0])) return false;
    return true;
}

DivergenceResult by_overlap(const PriorSpec& pr, const CorrelationModel& m)
{
    DivergenceResult r;
    r.method = DivergenceMethod::hypergeometric_sum;
    const double g = m.gamma();
    const double a2 = pr.magnitude * pr.magnitude;
    const std::size_t p = pr.p;
    switch (pr.kind) {
    case PriorKind::point_mass: throw ContractError("point masses use the closed form");
    case PriorKind::uniform_sparse:
    case PriorKind::shifted: {
        const std::size_t s = pr.s;
        const double sd = static_cast<double>(s);
        if (m.family() == Family::grouped && m.groups() > 1 && m.block_size() == 1) {
            // Singleton groups: Sigma = I.
            r.chi_sq = hypergeometric_expm1(p, s, s, [&](std::size_t k) { return a2 * static_cast<double>(k); });
            break;
        }
        double neg = 0.0;  // constant subtracted from the overlap
        bool exact = true;
        switch (m.family()) {
        case Family::equicorrelated: neg = g * sd * sd / m.block_variance(); break;
        case Family::grouped:
            if (m.groups() == 1)
                neg = g * sd * sd / m.block_variance();
            else
                exact = false;
            break;
        case Family::rank_one:
            if (equal_magnitudes(m.direction()) && pr.sign == SignRule::match_v) {
                const double v0 = std::abs(m.direction()[0]);
                neg = g * sd * sd * v0 * v0 / m.block_variance();
            } else if (pr.sign == SignRule::match_v) {
                exact = false;
            } else {
                throw ContractError("rank-one overlap sums need sign rule match_v");
            }
            break;
        }
        r.majorant = !exact;
        r.chi_sq = hypergeometric_expm1(
            p, s, s, [&](std::size_t k) { return a2 * (static_cast<double>(k) - neg) / (1.0 - g); });
        break;
    }
    case PriorKind::group_within: {
        const std::size_t msz = p / pr.R;
        const double sd = static_cast<double>(pr.s);
        const double neg = g * sd * sd / m.block_variance();
        const double same =
            hypergeometric_expm1(msz, pr.s, pr.s, [&](std::size_t k) { return a2 * (static_cast<double>(k) - neg) / (1.0 - g); });
        // Different groups contribute exp(0) - 1 = 0.
        r.chi_sq = same / static_cast<double>(pr.R);
        break;
    }
    case PriorKind::group_blocks: {
        const double msz = static_cast<double>(p / pr.R);
        const double cap = m.block_variance();
        r.chi_sq = hypergeometric_expm1(pr.R, pr.s, pr.s,
                                        [&](std::size_t k) { return a2 * msz * static_cast<double>(k) / cap; });
        break;
    }
    }
    return r;
}

}  // namespace

PriorSpec PriorSpec::point_mass(std::vector<double> theta)
{
    PriorSpec pr;
    pr.kind = PriorKind::point_mass;
    pr.p = theta.size();
    for (double x : theta) pr.s += x != 0.0;
    pr.theta = std::move(theta);
    return pr;
}

PriorSpec PriorSpec::uniform_sparse(std::size_t p, std::size_t s, double a, SignRule sign, std::vector<double> v)
{
    if (s < 1 || s > p) throw ContractError("uniform_sparse needs 1 <= s <= p");
    if (sign == SignRule::match_v && v.size() != p) throw ContractError("sign rule match_v needs v of length p");
    PriorSpec pr;
    pr.kind = PriorKind::uniform_sparse;
    pr.p = p;
    pr.s = s;
    pr.magnitude = a;
    pr.sign = sign;
    pr.v = std::move(v);
    return pr;
}

PriorSpec PriorSpec::group_within(std::size_t p, std::size_t R, std::size_t s, double a)
{
    if (R < 1 || p % R != 0) throw ContractError("R must divide p");
    if (s < 1 || s > p / R) throw ContractError("group_within needs 1 <= s <= p/R");
    PriorSpec pr;
    pr.kind = PriorKind::group_within;
    pr.p = p;
    pr.R = R;
    pr.s = s;
    pr.magnitude = a;
    return pr;
}

PriorSpec PriorSpec::group_blocks(std::size_t p, std::size_t R, std::size_t m, double a)
{
    if (R < 1 || p % R != 0) throw ContractError("R must divide p");
    if (m < 1 || m > R) throw ContractError("group_blocks needs 1 <= m <= R");
    PriorSpec pr;
    pr.kind = PriorKind::group_blocks;
    pr.p = p;
    pr.R = R;
    pr.s = m;
    pr.magnitude = a;
    return pr;
}

PriorSpec PriorSpec::shifted(std::size_t p, std::size_t s, double a)
{
    PriorSpec pr = uniform_sparse(p, s, a);
    pr.kind = PriorKind::shifted;
    return pr;
}

std::string prior_kind_name(PriorKind k)
{
    switch (k) {
    case PriorKind::point_mass: return "point_mass";
    case PriorKind::uniform_sparse: return "uniform_sparse";
    case PriorKind::group_within: return "group_within";
    case PriorKind::group_blocks: return "group_blocks";
    case PriorKind::shifted: return "shifted";
    }
    return "?";
}

std::string PriorSpec::label() const
{
    std::string l = prior_kind_name(kind);
    if (kind == PriorKind::point_mass) return l;
    l += "(s=" + std::to_string(s);
    if (kind == PriorKind::group_within || kind == PriorKind::group_blocks) l += ",R=" + std::to_string(R);
    if (sign == SignRule::match_v) l += ",match_v";
    return l + ")";
}

double PriorSpec::norm_sq() const
{
    const double a2 = magnitude * magnitude;
    switch (kind) {
    case PriorKind::point_mass: return dot(theta, theta);
    case PriorKind::uniform_sparse:
    case PriorKind::shifted:
    case PriorKind::group_within: return a2 * static_cast<double>(s);
    case PriorKind::group_blocks: return a2 * static_cast<double>(s * (p / R));
    }
    return 0.0;
}

std::vector<double> draw(const PriorSpec& pr, Stream& rng)
{
    switch (pr.kind) {
    case PriorKind::point_mass: return pr.theta;
    case PriorKind::uniform_sparse:
    case PriorKind::shifted: return sparse_vector(pr, uniform_subset(pr.p, pr.s, rng));
    case PriorKind::group_within: {
        const std::size_t m = pr.p / pr.R;
        const auto k = static_cast<std::size_t>(rng.below(pr.R));
        auto S = uniform_subset(m, pr.s, rng);
        for (auto& i : S) i += k * m;
        return sparse_vector(pr, S);
    }
    case PriorKind::group_blocks: {
        const std::size_t m = pr.p / pr.R;
        std::vector<double> th(pr.p, 0.0);
        for (auto k : uniform_subset(pr.R, pr.s, rng))
            for (std::size_t i = k * m; i < (k + 1) * m; ++i) th[i] = pr.magnitude;
        return th;
    }
    }
    return {};
}

std::string method_name(DivergenceMethod m)
{
    switch (m) {
    case DivergenceMethod::closed_form: return "closed_form";
    case DivergenceMethod::exact_enumeration: return "exact_enumeration";
    case DivergenceMethod::hypergeometric_sum: return "hypergeometric_sum";
    case DivergenceMethod::monte_carlo: return "monte_carlo";
    }
    return "?";
}

DivergenceMethod parse_method(const std::string& s)
{
    if (s == "closed_form") return DivergenceMethod::closed_form;
    if (s == "exact_enumeration") return DivergenceMethod::exact_enumeration;
    if (s == "hypergeometric_sum") return DivergenceMethod::hypergeometric_sum;
    if (s == "monte_carlo") return DivergenceMethod::monte_carlo;
    throw ContractError("unknown divergence method '" + s + "'");
}

double hypergeometric_expectation(std::size_t N, std::size_t K, std::size_t n,
                                  const std::function<double(std::size_t)>& f)
{
    if (K > N || n > N) throw ContractError("hypergeometric parameters out of range");
    const std::size_t lo = n + K > N ? n + K - N : 0, hi = std::min(K, n);
    const double lden = log_choose(N, n);
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k)
        acc += std::exp(log_choose(K, k) + log_choose(N - K, n - k) - lden) * f(k);
    return acc;
}

double hypergeometric_expm1(std::size_t N, std::size_t K, std::size_t n, const std::function<double(std::size_t)>& g)
{
    if (K > N || n > N) throw ContractError("hypergeometric parameters out of range");
    const std::size_t lo = n + K > N ? n + K - N : 0, hi = std::min(K, n);
    const double lden = log_choose(N, n);
    double acc = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        const double lp = log_choose(K, k) + log_choose(N - K, n - k) - lden;
        const double x = g(k);
        // pmf * (e^x - 1), kept in log space when e^x would dominate.
        acc += x > 1.0 ? std::exp(lp + x) - std::exp(lp) : std::exp(lp) * std::expm1(x);
    }
    return acc;
}

MgfResult hypergeometric_mgf_bound(std::size_t p, std::size_t s, double lambda_sq)
{
    if (s > p) throw ContractError("hypergeometric_mgf_bound needs s <= p");
    if (!(lambda_sq >= 0.0)) throw ContractError("lambda^2 must be nonnegative");
    MgfResult r;
    r.exact = 1.0 + hypergeometric_expm1(p, s, s, [&](std::size_t k) { return lambda_sq * static_cast<double>(k); });
    const double q = static_cast<double>(s) / static_cast<double>(p);
    r.bound = std::pow(1.0 + q * std::expm1(lambda_sq), static_cast<double>(s));
    return r;
}

// gamma = 1: X = theta + (shared factors) lies in theta + span of the factor
// directions. A shift inside that span moves each N(0, 1) factor; any other
// shift makes the laws mutually singular.
static double degenerate_chisq(std::span<const double> th, const CorrelationModel& m)
{
    const double scale = std::max(1.0, std::sqrt(dot(th, th)));
    double q = 0.0;
    if (m.family() == Family::rank_one) {
        const auto& v = m.direction();
        const double c = dot(th, v) / dot(v, v);
        for (std::size_t i = 0; i < th.size(); ++i)
            if (std::abs(th[i] - c * v[i]) > 1e-12 * scale) return INFINITY;
        q = c * c;
    } else {
        for (std::size_t k = 0; k < m.groups(); ++k) {
            const auto b = m.block(k);
            double c = 0.0;
            for (auto i : b) c += th[i];
            c /= static_cast<double>(b.size());
            for (auto i : b)
                if (std::abs(th[i] - c) > 1e-12 * scale) return INFINITY;
            q += c * c;
        }
    }
    return std::expm1(q);
}

// theta' Sigma^{-1} theta split into the residual off the factor direction(s),
// scaled by 1/(1-gamma), plus the factor component. Going through
// precision_apply loses about log10(gamma p/(1-gamma)) digits.
static double precision_form(std::span<const double> th, const CorrelationModel& m)
{
    using ld = long double;
    const ld g = m.gamma(), ig = 1.0L - g;
    if (m.family() == Family::rank_one) {
        const auto& v = m.direction();
        ld vv = 0.0L, tv = 0.0L;
        for (std::size_t i = 0; i < th.size(); ++i) {
            vv += ld(v[i]) * v[i];
            tv += ld(th[i]) * v[i];
        }
        const ld a = tv / vv;
        ld res = 0.0L;
        for (std::size_t i = 0; i < th.size(); ++i) res += (th[i] - a * v[i]) * (th[i] - a * v[i]);
        return static_cast<double>(res / ig + vv * a * a / (ig + g * vv));
    }
    ld q = 0.0L;
    for (std::size_t k = 0; k < m.groups(); ++k) {
        const auto b = m.block(k);
        const ld n = static_cast<ld>(b.size());
        ld c = 0.0L, res = 0.0L;
        for (auto i : b) c += th[i];
        c /= n;
        for (auto i : b) res += (th[i] - c) * (th[i] - c);
        q += res / ig + n * c * c / (ig + g * n);
    }
    return static_cast<double>(q);
}

DivergenceResult ingster_suslina_chisq(const PriorSpec& pr, const CorrelationModel& m, DivergenceMethod method,
                                       std::uint64_t seed, std::size_t n_mc, std::size_t pair_budget)
{
    const bool fixed = pr.kind == PriorKind::point_mass ||
                       ((pr.kind == PriorKind::uniform_sparse || pr.kind == PriorKind::shifted) && pr.s == pr.p);
    if (!(m.gamma() < 1.0) && !(method == DivergenceMethod::closed_form && fixed))
        throw SingularCovariance("the Ingster-Suslina route needs an invertible covariance (gamma < 1)");
    check_compatible(pr, m);
    DivergenceResult r;
    r.method = method;
    switch (method) {
    case DivergenceMethod::closed_form: {
        if (!fixed) throw ContractError("closed form is available only for point-mass priors");
        Stream rng(seed);
        const auto th = draw(pr, rng);
        r.chi_sq = m.gamma() < 1.0 ? std::expm1(precision_form(th, m)) : degenerate_chisq(th, m);
        break;
    }
    case DivergenceMethod::hypergeometric_sum: r = by_overlap(pr, m); break;
    case DivergenceMethod::exact_enumeration: {
        const double atoms = atom_count(pr);
        if (atoms * atoms > static_cast<double>(pair_budget))
            throw BudgetError("exact enumeration needs " + std::to_string(atoms * atoms) + " support pairs; budget is " +
                              std::to_string(pair_budget));
        std::vector<std::vector<double>> th, prec;
        for_each_atom(pr, [&](const std::vector<double>& t) {
            th.push_back(t);
            prec.push_back(precision_apply(m, t));
        });
        double acc = 0.0;
        for (std::size_t i = 0; i < th.size(); ++i)
            for (std::size_t j = 0; j < th.size(); ++j) acc += std::expm1(dot(th[i], prec[j]));
        r.chi_sq = acc / (static_cast<double>(th.size()) * static_cast<double>(th.size()));
        break;
    }
    case DivergenceMethod::monte_carlo: {
        if (n_mc < 2) throw ContractError("Monte Carlo needs at least two pairs");
        std::vector<double> terms(n_mc);
        for (std::size_t i = 0; i < n_mc; ++i) {
            Stream rng(split(seed, hash_label("is_pair"), i));
            const auto a = draw(pr, rng);
            const auto b = draw(pr, rng);
            terms[i] = std::expm1(dot(a, precision_apply(m, b)));
        }
        double mean = 0.0;
        for (double t : terms) mean += t;
        mean /= static_cast<double>(n_mc);
        double var = 0.0;
        for (double t : terms) var += (t - mean) * (t - mean);
        var /= static_cast<double>(n_mc - 1);
        r.chi_sq = mean;
        r.n = n_mc;
        r.std_error = std::sqrt(var / static_cast<double>(n_mc));
        // Heavy tail: the top 0.1% of terms (shifted to be nonnegative) carry most of the mass.
        std::vector<double> w(terms);
        for (auto& x : w) x += 1.0;
        std::sort(w.begin(), w.end(), std::greater<>());
        const std::size_t top = std::max<std::size_t>(1, n_mc / 1000);
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        const double head = std::accumulate(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(top), 0.0);
        r.heavy_tail = total > 0.0 && head > 0.5 * total;
        break;
    }
    }
    r.method = method;
    finish(r);
    return r;
}

double mean_shift_tv(const CorrelationModel& m, double shift)
{
    if (!(m.gamma() < 1.0)) throw SingularCovariance("mean_shift_tv needs gamma < 1");
    if (m.family() == Family::rank_one || m.groups() != 1)
        throw ContractError("mean_shift_tv is defined for the equicorrelated model");
    const double p = static_cast<double>(m.dim());
    return 0.5 * std::sqrt(std::expm1(p * shift * shift / m.block_variance()));
}

double risk_lower_bound(const PriorSpec& pr, const CorrelationModel& m, DivergenceMethod method, std::uint64_t seed)
{
    const double plain = ingster_suslina_chisq(pr, m, method, seed).risk_bound;
    if (pr.kind != PriorKind::shifted) return plain;
    // theta - nu* = -a 1_T with |T| = p - s; the sign is irrelevant for chi^2.
    const double tv_shift = mean_shift_tv(m, pr.magnitude);
    double tv_rest = 0.0;
    if (pr.s < pr.p) {
        const auto rest = PriorSpec::uniform_sparse(pr.p, pr.p - pr.s, pr.magnitude);
        tv_rest = ingster_suslina_chisq(rest, m, method, seed).tv_bound;
    }
    const double shifted = std::clamp(1.0 - tv_shift - tv_rest, 0.0, 1.0);
    return std::max(plain, shifted);
}

PriorSpec least_favorable_prior(const CorrelationModel& m, std::size_t s, double eps)
{
    const std::size_t p = m.dim();
    if (s < 1 || s > p) throw ContractError("s must satisfy 1 <= s <= p");
    if (!(eps >= 0.0)) throw ContractError("eps must be nonnegative");
    const double sd = static_cast<double>(s);
    // Problem I priors use support size floor(sqrt p) once s exceeds it.
    auto sparse_size = [&](bool inclusive) {
        const bool small = inclusive ? s * s <= p : below_sqrt(s, p);
        if (small) return s;
        auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(p)));
        while (r * r > p) --r;
        while ((r + 1) * (r + 1) <= p) ++r;
        return std::max<std::size_t>(1, std::min(r, s));
    };
    auto sparse = [&](std::size_t k) { return PriorSpec::uniform_sparse(p, k, eps / std::sqrt(static_cast<double>(k))); };

    if (m.family() == Family::rank_one) {
        const std::size_t k = m.gamma() < 1.0 ? sparse_size(true) : s;
        return PriorSpec::uniform_sparse(p, k, eps / std::sqrt(static_cast<double>(k)), SignRule::match_v, m.direction());
    }
    const std::size_t R = m.groups();
    if (m.gamma() == 1.0) {
        if (R > 1 && R * s >= p) {
            const std::size_t mg = R * s / p;
            return PriorSpec::group_blocks(p, R, mg, eps / std::sqrt(static_cast<double>(mg * (p / R))));
        }
        return sparse(s);
    }
    if (m.family() == Family::equicorrelated || R == 1) {
        const auto r = rate_equicorrelated(p, s, m.gamma());
        if (r.psi2_sq && *r.psi2_sq > *r.psi1_sq) return PriorSpec::shifted(p, s, eps / std::sqrt(sd));
        return sparse(sparse_size(false));
    }
    const auto r = rate_grouped(p, s, m.gamma(), R);
    if (R == p) return PriorSpec::group_blocks(p, R, s, eps / std::sqrt(sd));
    const double psi1 = r.psi1_sq.value_or(0.0);
    if (r.upsilon_sq && *r.upsilon_sq > psi1) return PriorSpec::group_within(p, R, s, eps / std::sqrt(sd));
    if (r.rho_sq && *r.rho_sq > psi1) {
        const std::size_t mg = std::max<std::size_t>(1, R * s / p);
        return PriorSpec::group_blocks(p, R, mg, eps / std::sqrt(static_cast<double>(mg * (p / R))));
    }
    return sparse(sparse_size(false));
}

nlohmann::json to_json(const PriorSpec& pr, const CorrelationModel& m, const DivergenceResult& r)
{
    auto num = [](double x) -> nlohmann::json {
        if (std::isfinite(x)) return x;
        return x > 0 ? "inf" : (x < 0 ? "-inf" : "nan");
    };
    nlohmann::json j;
    j["prior"] = pr.label();
    j["kind"] = prior_kind_name(pr.kind);
    j["p"] = pr.p;
    j["s"] = pr.s;
    if (pr.kind == PriorKind::point_mass)
        j["norm"] = std::sqrt(dot(pr.theta, pr.theta));
    else
        j["magnitude"] = pr.magnitude;
    if (pr.kind == PriorKind::group_within || pr.kind == PriorKind::group_blocks) j["R"] = pr.R;
    j["model"] = {{"family", family_name(m.family())}, {"p", m.dim()}, {"gamma", m.gamma()}};
    if (m.family() == Family::grouped) j["model"]["R"] = m.groups();
    j["method"] = method_name(r.method);
    j["chi_sq"] = num(r.chi_sq);
    j["majorant"] = r.majorant;
    j["tv_bound"] = num(r.tv_bound);
    j["risk_bound"] = r.risk_bound;
    if (r.method == DivergenceMethod::monte_carlo) {
        j["n"] = r.n;
        j["std_error"] = r.std_error;
        j["heavy_tail"] = r.heavy_tail;
    }
    return j;
}

}  // namespace corrdetect
