#include "corrdetect/rates.hpp"

#include <algorithm>
#include <cmath>

#include "corrdetect/errors.hpp"
#include "corrdetect/signal_geometry.hpp"

namespace corrdetect {

namespace {

using u128 = unsigned __int128;

void check_common(std::size_t p, std::size_t s, double gamma)
{
    if (p < 1) throw ContractError("p must be >= 1");
    if (s < 1 || s > p) throw ContractError("s must satisfy 1 <= s <= p");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in [0, 1]");
}

// s < p / sqrt(R)  <=>  R s^2 < p^2
bool below_p_over_sqrtR(std::size_t s, std::size_t p, std::size_t R)
{
    return static_cast<u128>(R) * s * s < static_cast<u128>(p) * p;
}

}  // namespace

bool below_sqrt(std::size_t s, std::size_t p)
{
    return static_cast<u128>(s) * s < p;
}

bool at_most_p_minus_sqrt(std::size_t s, std::size_t p)
{
    if (s > p) return false;
    const std::size_t d = p - s;
    return static_cast<u128>(d) * d >= p;
}

double psi1_sq(std::size_t p, std::size_t s, double gamma)
{
    const double pd = static_cast<double>(p), sd = static_cast<double>(s);
    if (below_sqrt(s, p)) return (1.0 - gamma) * sd * std::log1p(pd / (sd * sd));
    return (1.0 - gamma) * std::sqrt(pd);
}

RateResult rate_equicorrelated(std::size_t p, std::size_t s, double gamma)
{
    check_common(p, s, gamma);
    RateResult r;
    r.family = Family::equicorrelated;
    r.p = p;
    r.s = s;
    r.gamma = gamma;
    const double pd = static_cast<double>(p), sd = static_cast<double>(s);
    r.cap = 1.0 - gamma + gamma * pd;
    if (gamma == 1.0) {
        r.regime = s < p ? "perfect_sparse" : "perfect_dense";
        r.value = s < p ? 0.0 : pd;
        return r;
    }
    const double psi1 = psi1_sq(p, s, gamma);
    r.psi1_sq = psi1;
    if (below_sqrt(s, p)) {
        r.regime = "sparse";
        r.value = psi1;
        return r;
    }
    double psi2;
    if (at_most_p_minus_sqrt(s, p)) {
        r.regime = "dense";
        psi2 = std::min((1.0 - gamma) * std::pow(pd, 1.5) / (pd - sd), r.cap);
    } else {
        r.regime = "very_dense";
        if (s == p) {
            psi2 = r.cap;  // the log term is infinite
        } else {
            const double d = pd - sd;
            psi2 = std::min((1.0 - gamma) * pd * std::log1p(pd / (d * d)), r.cap);
        }
    }
    r.psi2_sq = psi2;
    r.value = psi1 + psi2;
    return r;
}

RateResult rate_grouped(std::size_t p, std::size_t s, double gamma, std::size_t R)
{
    check_common(p, s, gamma);
    if (R < 1 || p % R != 0) throw ContractError("R must divide p");
    if (R == 1) {
        // A single random effect is the equicorrelated model.
        RateResult r = rate_equicorrelated(p, s, gamma);
        r.family = Family::grouped;
        return r;
    }
    RateResult r;
    r.family = Family::grouped;
    r.p = p;
    r.s = s;
    r.gamma = gamma;
    r.R = R;
    const double pd = static_cast<double>(p), sd = static_cast<double>(s), Rd = static_cast<double>(R);
    const std::size_t m = p / R;
    const double md = static_cast<double>(m);
    r.cap = 1.0 - gamma + gamma * md;

    if (gamma == 1.0) {
        if (R * s < p) {
            r.regime = "perfect_degenerate";
            r.value = 0.0;
        } else if (below_p_over_sqrtR(s, p, R)) {
            r.regime = "perfect_avg_sparse";
            r.value = sd * std::log1p(pd * pd / (Rd * sd * sd));
        } else {
            r.regime = "perfect_avg_dense";
            r.value = pd / std::sqrt(Rd);
        }
        return r;
    }

    // Singleton groups: the within-group component is identically zero, so only
    // the group-mean term remains (the model is then N(theta, I) for every gamma).
    const double psi1 = m == 1 ? 0.0 : psi1_sq(p, s, gamma);
    r.psi1_sq = psi1;

    if (4 * R * s <= p) {
        r.regime = "group_sparse";
        r.value = psi1;
        return r;
    }
    if (R * s < p) {
        const double logeR = 1.0 + std::log(Rd);
        const double d = md - sd;  // p/R - s >= 1
        const double lead = (1.0 - gamma) * pd / (pd - Rd * sd);
        const double capterm = r.cap * logeR;
        double scan;
        if (d * d >= md * logeR) {
            r.regime = "group_dense";
            scan = lead * (std::sqrt(md * logeR) + std::log(Rd));
        } else {
            r.regime = "group_very_dense";
            const double q = pd - Rd * sd;
            scan = lead * (d * std::log1p(Rd * pd * logeR / (q * q)) + std::log(Rd));
        }
        r.upsilon_scan_term = scan <= capterm;
        r.upsilon_sq = std::min(scan, capterm);
        r.value = psi1 + *r.upsilon_sq;
        return r;
    }
    if (below_p_over_sqrtR(s, p, R)) {
        r.regime = "group_avg_sparse";
        r.rho_sq = r.cap * (Rd * sd / pd) * std::log1p(pd * pd / (Rd * sd * sd));
    } else {
        r.regime = "group_avg_dense";
        r.rho_sq = r.cap * std::sqrt(Rd);
    }
    if (m == 1) {
        r.value = *r.rho_sq;
    } else {
        // psi1 here is (1-gamma) sqrt p once s >= sqrt p, which the theorem writes out explicitly.
        r.value = psi1 + *r.rho_sq;
    }
    return r;
}

RateResult rate_rank_one(std::size_t p, std::size_t s, double gamma, std::span<const double> v)
{
    check_common(p, s, gamma);
    if (v.size() != p) throw ContractError("v must have length p");
    RateResult r;
    r.family = Family::rank_one;
    r.p = p;
    r.s = s;
    r.gamma = gamma;
    r.R = 0;
    const double pd = static_cast<double>(p), sd = static_cast<double>(s);
    r.cap = 1.0 - gamma + gamma * pd;
    if (gamma == 1.0) {
        std::size_t l0 = 0;
        for (double a : v) l0 += (a != 0.0);
        r.regime = s < l0 ? "perfect_sparse" : "perfect_dense";
        r.value = s < l0 ? 0.0 : pd;
        return r;
    }
    const std::size_t w = omega(v);
    if (s > w) {
        r.characterized = false;
        r.regime = "uncharacterized";
        r.value = std::nan("");
        return r;
    }
    // Same boundary convention as the equicorrelated psi_1 (s = sqrt p is dense), so
    // v = 1_p reproduces it exactly. At s = sqrt p the two branch values differ by log 2.
    if (below_sqrt(s, p)) {
        r.regime = "sparse";
        r.value = (1.0 - gamma) * sd * std::log1p(pd / (sd * sd));
    } else {
        r.regime = "dense";
        r.value = (1.0 - gamma) * std::sqrt(pd);
    }
    r.psi1_sq = r.value;
    return r;
}

RateResult rate_for(const CorrelationModel& m, std::size_t s)
{
    switch (m.family()) {
    case Family::equicorrelated: return rate_equicorrelated(m.dim(), s, m.gamma());
    case Family::grouped: return rate_grouped(m.dim(), s, m.gamma(), m.groups());
    case Family::rank_one: return rate_rank_one(m.dim(), s, m.gamma(), m.direction());
    }
    throw ContractError("unknown family");
}

CorrelationThresholds blessing_curse_thresholds(std::size_t p, std::size_t s)
{
    check_common(p, s, 0.0);
    const double pd = static_cast<double>(p), sd = static_cast<double>(s);
    CorrelationThresholds t;
    if (below_sqrt(s, p)) {
        t.one_minus_gamma_star = 1.0;
        return t;
    }
    if (s == p) {
        t.one_minus_gamma_lower = 0.0;
        return t;
    }
    double v;
    if (at_most_p_minus_sqrt(s, p)) {
        v = (pd - sd) / pd;
    } else {
        const double d = pd - sd;
        v = 1.0 / (std::sqrt(pd) * std::log1p(pd / (d * d)));
    }
    t.one_minus_gamma_star = v;
    t.one_minus_gamma_lower = v;
    return t;
}

std::vector<BoundaryCheck> continuity_audit(std::size_t p, double gamma, std::size_t R)
{
    std::vector<BoundaryCheck> out;
    const bool eq = R == 0;
    auto value = [&](std::size_t s) { return eq ? rate_equicorrelated(p, s, gamma).value : rate_grouped(p, s, gamma, R).value; };
    auto regime = [&](std::size_t s) { return eq ? rate_equicorrelated(p, s, gamma).regime : rate_grouped(p, s, gamma, R).regime; };
    auto add = [&](const std::string& name, std::size_t left, bool jump) {
        if (left < 1 || left + 1 > p) return;
        // The s = p jump sits inside the very_dense label, so documented jumps are always reported.
        if (!jump && regime(left) == regime(left + 1)) return;
        BoundaryCheck b{name, left, left + 1, value(left), value(left + 1), 0.0, jump};
        const double lo = std::min(b.left, b.right), hi = std::max(b.left, b.right);
        b.ratio = lo > 0.0 ? hi / lo : (hi > 0.0 ? INFINITY : 1.0);
        out.push_back(b);
    };
    auto last_true = [&](auto pred) {
        std::size_t best = 0;
        for (std::size_t s = 1; s <= p; ++s)
            if (pred(s)) best = s;
        return best;
    };
    if (eq || R == 1) {
        add("sqrt(p)", last_true([&](std::size_t s) { return below_sqrt(s, p); }), false);
        add("p-sqrt(p)", last_true([&](std::size_t s) { return at_most_p_minus_sqrt(s, p); }), false);
        add("p", p - 1, true);
        return out;
    }
    const std::size_t m = p / R;
    add("p/(4R)", last_true([&](std::size_t s) { return 4 * R * s <= p; }), false);
    const double logeR = 1.0 + std::log(static_cast<double>(R));
    add("p/R-split", last_true([&](std::size_t s) {
            const double d = static_cast<double>(m) - static_cast<double>(s);
            return s < m && d * d >= static_cast<double>(m) * logeR;
        }), false);
    add("p/R", m - 1, true);
    add("p/sqrt(R)", last_true([&](std::size_t s) { return below_p_over_sqrtR(s, p, R); }), false);
    return out;
}

}  // namespace corrdetect
