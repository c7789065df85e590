#include "corrdetect/test_procedures.hpp"

#include <algorithm>
#include <cmath>

#include "corrdetect/errors.hpp"
#include "corrdetect/gaussian_kernel.hpp"
#include "corrdetect/parallel.hpp"
#include "corrdetect/rates.hpp"
#include "corrdetect/signal_geometry.hpp"
#include "corrdetect/test_statistics.hpp"

namespace corrdetect {

std::string stat_kind_name(StatKind k)
{
    switch (k) {
    case StatKind::collier: return "collier";
    case StatKind::chisq: return "chisq";
    case StatKind::linear: return "linear";
    case StatKind::chisq_scan: return "chisq_scan";
    case StatKind::collier_scan: return "collier_scan";
    case StatKind::linear_scan: return "linear_scan";
    case StatKind::collier_avg: return "collier_avg";
    case StatKind::chisq_avg: return "chisq_avg";
    case StatKind::noiseless: return "noiseless";
    case StatKind::raw_chisq: return "raw_chisq";
    case StatKind::collier_family: return "collier_family";
    }
    return "?";
}

namespace {

double tstar(double ratio) { return std::sqrt(2.0 * std::log1p(ratio)); }

// s log(1 + p/s^2)
double r0(double p, double s) { return s * std::log1p(p / (s * s)); }

Constituent make(std::string role, StatKind kind, double paper)
{
    Constituent c;
    c.role = std::move(role);
    c.kind = kind;
    c.paper_threshold = paper;
    c.threshold = paper;
    return c;
}

Constituent make_collier(std::string role, StatKind kind, double t, double paper)
{
    Constituent c = make(std::move(role), kind, paper);
    c.t = t;
    c.alpha_t = alpha(t);
    return c;
}

// Collier thresholds t(s) and scales r0(s) for 1 <= s, s^2 < p.
Constituent make_family(std::string role, std::size_t p, double paper)
{
    Constituent c = make(std::move(role), StatKind::collier_family, paper);
    const double pd = static_cast<double>(p);
    for (std::size_t s = 1; below_sqrt(s, p); ++s) {
        const double sd = static_cast<double>(s);
        const double t = tstar(pd / (sd * sd));
        c.family_t.push_back(t);
        c.family_alpha.push_back(alpha(t));
        c.family_scale.push_back(r0(pd, sd));
    }
    return c;
}

bool same_statistic(const Constituent& a, const Constituent& b)
{
    return a.kind == b.kind && a.t == b.t && a.family_t == b.family_t && a.family_scale == b.family_scale;
}

// Identical statistics are merged; the OR of two cutoffs on one statistic is the smaller cutoff.
void push_unique(std::vector<Constituent>& out, Constituent c)
{
    for (auto& e : out) {
        if (same_statistic(e, c)) {
            e.role += "+" + c.role;
            e.paper_threshold = std::min(e.paper_threshold, c.paper_threshold);
            e.threshold = e.paper_threshold;
            return;
        }
    }
    out.push_back(std::move(c));
}

void build_equicorrelated(TestProcedure& T, std::size_t p, std::size_t s, double gamma, const TestOptions& opt)
{
    const double pd = static_cast<double>(p), sd = static_cast<double>(s);
    const double C2 = opt.C * opt.C;
    const double cap = 1.0 - gamma + gamma * pd;
    auto& out = T.constituents;
    if (gamma == 1.0) {
        if (s < p) {
            push_unique(out, make("phi_dagger", StatKind::noiseless, 0.0));
        } else {
            push_unique(out, make("phi_dense", StatKind::raw_chisq, pd + C2 / 2.0 * pd));
        }
        T.regime = s < p ? "perfect_sparse" : "perfect_dense";
        return;
    }
    const double chisq_cut = pd + C2 / 2.0 * std::sqrt(pd);
    const double linear_cut = cap * (1.0 + C2 / 2.0);
    if (opt.adaptive) {
        push_unique(out, make_family("sparse_scan", p, C2 / 32.0));
        push_unique(out, make("chisq", StatKind::chisq, chisq_cut));
        push_unique(out, make_family("very_dense_scan", p, C2 / 8.0));
        push_unique(out, make("linear", StatKind::linear, linear_cut));
        T.regime = "adaptive";
        return;
    }
    T.regime = rate_equicorrelated(p, s, gamma).regime;
    if (opt.composition != Composition::problem_II) {
        if (below_sqrt(s, p))
            push_unique(out, make_collier("phi_I", StatKind::collier, tstar(pd / (sd * sd)), C2 / 32.0 * r0(pd, sd)));
        else
            push_unique(out, make("phi_I", StatKind::chisq, chisq_cut));
    }
    if (opt.composition != Composition::problem_I && 2 * s >= p) {
        if (s == p) {
            push_unique(out, make("phi_II", StatKind::linear, linear_cut));
        } else if (at_most_p_minus_sqrt(s, p)) {
            push_unique(out, make("phi_II", StatKind::chisq, chisq_cut));
            push_unique(out, make("phi_II", StatKind::linear, linear_cut));
        } else {
            const double d = pd - sd;
            push_unique(out, make_collier("phi_II", StatKind::collier, tstar(pd / (d * d)), C2 / 8.0 * r0(pd, d)));
            push_unique(out, make("phi_II", StatKind::linear, linear_cut));
        }
    }
    if (opt.composition == Composition::problem_II && 2 * s < p)
        throw ContractError("Problem II tests are defined for s >= p/2");
}

void build_grouped(TestProcedure& T, std::size_t p, std::size_t s, double gamma, std::size_t R, const TestOptions& opt)
{
    const double pd = static_cast<double>(p), sd = static_cast<double>(s), Rd = static_cast<double>(R);
    const std::size_t m = p / R;
    const double md = static_cast<double>(m);
    const double C2 = opt.C * opt.C;
    const double cap = 1.0 - gamma + gamma * md;
    const double logeR = 1.0 + std::log(Rd);
    auto& out = T.constituents;
    const RateResult rate = rate_grouped(p, s, gamma, R);
    T.regime = rate.regime;

    auto phi2_average = [&] {
        if (rate.regime == "group_avg_sparse" || rate.regime == "perfect_avg_sparse") {
            const double tb = tstar(pd * pd / (Rd * sd * sd));
            const double rb = C2 / 64.0 * (4.0 * Rd * sd / pd) * std::log1p(pd * pd / (16.0 * Rd * sd * sd));
            push_unique(out, make_collier("phi_2", StatKind::collier_avg, tb, rb));
        } else {
            push_unique(out, make("phi_2", StatKind::chisq_avg, cap * (Rd + C2 / 16.0 * std::sqrt(Rd))));
        }
    };

    if (gamma == 1.0) {
        push_unique(out, make("phi_dagger", StatKind::noiseless, 0.0));
        if (R * s >= p) phi2_average();
        return;
    }
    // Singleton groups carry no within-group signal, so phi_1 would only see injected noise.
    if (m > 1) {
        if (below_sqrt(s, p))
            push_unique(out, make_collier("phi_1", StatKind::collier, tstar(pd / (sd * sd)), C2 / 64.0 * r0(pd, sd)));
        else
            push_unique(out, make("phi_1", StatKind::chisq, pd + C2 / 16.0 * std::sqrt(pd)));
    }
    if (rate.regime == "group_sparse") return;
    if (rate.regime == "group_dense" || rate.regime == "group_very_dense") {
        if (!*rate.upsilon_scan_term) {
            push_unique(out, make("phi_2", StatKind::linear_scan, cap * (1.0 + C2 / 64.0 * logeR)));
        } else if (rate.regime == "group_dense") {
            const double r = C2 / 128.0 * logeR;
            push_unique(out, make("phi_2", StatKind::chisq_scan, md + 2.0 * std::sqrt(md * r) + 2.0 * r));
        } else {
            const double q = pd - Rd * sd;
            const double lg = std::log1p(Rd * pd * logeR / (q * q));
            const double rt = C2 / 64.0 * ((md - sd) * lg + std::log(Rd));
            push_unique(out, make_collier("phi_2", StatKind::collier_scan, std::sqrt(2.0 * lg), rt));
        }
        return;
    }
    phi2_average();
}

void build_rank_one(TestProcedure& T, std::size_t p, std::size_t s, double gamma, const std::vector<double>& v,
                    const TestOptions& opt)
{
    const double pd = static_cast<double>(p), sd = static_cast<double>(s);
    const double C2 = opt.C * opt.C;
    auto& out = T.constituents;
    const RateResult rate = rate_rank_one(p, s, gamma, v);
    T.regime = rate.regime;
    if (gamma == 1.0) {
        if (rate.regime == "perfect_sparse") {
            auto c = make("phi_dagger", StatKind::noiseless, 0.0);
            c.noise_floor_rel = 1e-20;
            push_unique(out, c);
        } else {
            push_unique(out, make("phi_dense", StatKind::raw_chisq, pd + C2 / 2.0 * pd));
        }
        return;
    }
    if (!rate.characterized)
        throw UnsupportedRegime("rank-one tests are only characterized for s <= omega(v) = " +
                                std::to_string(omega(v)));
    if (s * s <= p)
        push_unique(out, make_collier("phi", StatKind::collier, tstar(pd / (sd * sd)), C2 / 16.0 * r0(pd, sd)));
    else
        push_unique(out, make("phi", StatKind::chisq, pd + C2 / 2.0 * std::sqrt(pd)));
}

bool uses_decorrelated(StatKind k)
{
    return k == StatKind::collier || k == StatKind::chisq || k == StatKind::chisq_scan ||
           k == StatKind::collier_scan || k == StatKind::collier_family;
}

double block_max(const CorrelationModel& m, std::span<const double> z, StatKind kind, const Constituent& c)
{
    double best = -INFINITY;
    for (std::size_t k = 0; k < m.groups(); ++k) {
        auto idx = m.block(k);
        double v = 0.0;
        if (kind == StatKind::chisq_scan) {
            for (auto i : idx) v += z[i] * z[i];
        } else if (kind == StatKind::collier_scan) {
            for (auto i : idx)
                if (std::abs(z[i]) >= c.t) v += z[i] * z[i] - c.alpha_t;
        } else {
            double d = 0.0;
            for (auto i : idx) d += z[i];
            v = d * d / static_cast<double>(idx.size());
        }
        best = std::max(best, v);
    }
    return best;
}

double eval_one(const TestProcedure& T, const Constituent& c, std::span<const double> x, std::span<const double> z,
                Workspace& ws)
{
    const auto& m = T.model;
    switch (c.kind) {
    case StatKind::collier: return collier_sum(z, c.t, c.alpha_t);
    case StatKind::chisq: return chisq_stat(z).value;
    case StatKind::linear: return linear_stat(m, x).value;
    case StatKind::chisq_scan:
    case StatKind::collier_scan: return block_max(m, z, c.kind, c);
    case StatKind::linear_scan: return block_max(m, x, c.kind, c);
    case StatKind::collier_avg: {
        ws.means = standardized_group_means(m, x);
        return collier_sum(ws.means, c.t, c.alpha_t);
    }
    case StatKind::chisq_avg: return averaged_group_stats(m, x, AverageKind::chisq_avg).value;
    case StatKind::noiseless: return noiseless_residual(m, x).value;
    case StatKind::raw_chisq: return chisq_stat(x).value;
    case StatKind::collier_family: {
        collier_profile(z, c.family_t, c.family_alpha, ws.sorted, ws.profile);
        double best = -INFINITY;
        for (std::size_t j = 0; j < ws.profile.size(); ++j) best = std::max(best, ws.profile[j] / c.family_scale[j]);
        return best;
    }
    }
    throw ContractError("unknown statistic");
}

// xx caches |x|^2 for the rank-one noiseless floor; pass a negative value initially.
bool fires(const Constituent& k, double value, std::span<const double> x, double& xx)
{
    double cut = k.threshold;
    if (k.noise_floor_rel > 0.0) {
        if (xx < 0.0) xx = chisq_stat(x).value;
        cut += k.noise_floor_rel * xx;
    }
    return value > cut;
}

double order_stat(const std::vector<double>& sorted, double frac)
{
    const std::size_t n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

void check_calibration_size(double q, std::size_t n_cal)
{
    if (!(q > 0.0 && q < 1.0)) throw ContractError("quantile level must lie in (0, 1)");
    if (n_cal < 1000)
        throw ContractError("calibration needs n_cal >= 1000 (got " + std::to_string(n_cal) + ")");
    const double tail = static_cast<double>(n_cal) * (1.0 - q);
    if (tail < 20.0)
        throw ContractError("calibration at level " + std::to_string(q) + " with n_cal=" + std::to_string(n_cal) +
                            " leaves " + std::to_string(tail) + " expected tail points; need at least 20");
}

// Wilson interval on the rank fraction.
CalibrationRecord quantile_record(std::vector<double>& draws, double q, std::uint64_t seed, double& threshold)
{
    std::sort(draws.begin(), draws.end());
    const double n = static_cast<double>(draws.size());
    const double z = 2.5758293035489004;
    const double z2 = z * z;
    const double centre = (q + z2 / (2.0 * n)) / (1.0 + z2 / n);
    const double half = z / (1.0 + z2 / n) * std::sqrt(q * (1.0 - q) / n + z2 / (4.0 * n * n));
    CalibrationRecord r;
    r.level = q;
    r.n_cal = draws.size();
    r.seed = seed;
    r.rank = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(q * n - 1e-9)), 1, draws.size());
    threshold = draws[r.rank - 1];
    r.lo = order_stat(draws, centre - half);
    r.hi = order_stat(draws, centre + half);
    return r;
}

std::vector<std::vector<double>> null_draws(const TestProcedure& T, std::size_t n_cal, std::uint64_t seed,
                                            unsigned workers)
{
    const std::size_t nc = T.constituents.size();
    std::vector<std::vector<double>> vals(nc, std::vector<double>(n_cal));
    std::vector<Workspace> ws(std::max(1u, workers));
    std::vector<std::vector<double>> xs(std::max(1u, workers)), vs(std::max(1u, workers));
    parallel_for(n_cal, workers, [&](std::size_t i, unsigned w) {
        Stream rng(split(seed, i));
        sample_into(T.model, {}, rng, xs[w]);
        constituent_values(T, xs[w], rng, ws[w], vs[w]);
        for (std::size_t c = 0; c < nc; ++c) vals[c][i] = vs[w][c];
    });
    return vals;
}

}  // namespace

bool TestProcedure::needs_decorrelation() const
{
    for (const auto& c : constituents)
        if (uses_decorrelated(c.kind)) return true;
    return false;
}

TestProcedure build_test(const CorrelationModel& m, std::size_t s, const TestOptions& opt)
{
    const std::size_t p = m.dim();
    if (!(opt.C > 0.0)) throw ContractError("C must be positive");
    if (!opt.adaptive && (s < 1 || s > p)) throw ContractError("s must satisfy 1 <= s <= p");
    TestProcedure T{"", m, opt.adaptive ? 0 : s, "", opt, {}};
    const double gamma = m.gamma();
    switch (m.family()) {
    case Family::equicorrelated: build_equicorrelated(T, p, s, gamma, opt); break;
    case Family::grouped:
        if (opt.adaptive && m.groups() != 1) throw ContractError("the adaptive test is defined for a single random effect");
        if (m.groups() == 1)
            build_equicorrelated(T, p, s, gamma, opt);
        else
            build_grouped(T, p, s, gamma, m.groups(), opt);
        break;
    case Family::rank_one:
        if (opt.adaptive) throw ContractError("the adaptive test is defined for a single random effect");
        build_rank_one(T, p, s, gamma, m.direction(), opt);
        break;
    }
    if (opt.composition != Composition::full && (m.family() != Family::equicorrelated || gamma == 1.0 || opt.adaptive))
        throw ContractError("Problem I/II compositions exist only for the equicorrelated model with gamma < 1");
    T.name = family_name(m.family()) + (opt.adaptive ? std::string("_adaptive") : "_" + T.regime);
    if (opt.mode == ThresholdMode::calibrated) calibrate(T, opt.calibration);
    return T;
}

void constituent_values(const TestProcedure& T, std::span<const double> x, Stream& rng, Workspace& ws,
                        std::vector<double>& values)
{
    if (x.size() != T.model.dim()) throw ContractError("observation length does not match the test's model");
    std::span<const double> z;
    if (T.needs_decorrelation()) {
        decorrelate_into(T.model, x, rng, ws.z);
        z = ws.z;
    }
    values.resize(T.constituents.size());
    for (std::size_t c = 0; c < T.constituents.size(); ++c) values[c] = eval_one(T, T.constituents[c], x, z, ws);
}

bool rejects(const TestProcedure& T, std::span<const double> x, std::span<const double> values)
{
    double xx = -1.0;
    for (std::size_t c = 0; c < T.constituents.size(); ++c)
        if (fires(T.constituents[c], values[c], x, xx)) return true;
    return false;
}

Verdict evaluate(const TestProcedure& T, const Observation& x, Stream& rng)
{
    const auto& m = T.model;
    if (x.model.family != m.family() || x.model.p != m.dim())
        throw ContractError("observation was drawn from a different model family or dimension");
    if (x.model.gamma != m.gamma())
        throw ContractError("observation correlation " + std::to_string(x.model.gamma) +
                            " does not match the test's " + std::to_string(m.gamma()));
    Workspace ws;
    Verdict v;
    constituent_values(T, x.x, rng, ws, v.values);
    double xx = -1.0;
    for (std::size_t c = 0; c < T.constituents.size(); ++c)
        if (fires(T.constituents[c], v.values[c], x.x, xx)) v.fired.push_back(c);
    v.reject = !v.fired.empty();
    return v;
}

ThresholdRecord calibrate_null_quantile(const Constituent& plan, const CorrelationModel& m, double q,
                                        std::size_t n_cal, std::uint64_t seed, unsigned workers)
{
    check_calibration_size(q, n_cal);
    if (plan.kind == StatKind::noiseless) throw ContractError("the noiseless residual is exactly zero under the null");
    TestProcedure T{"calibration", m, 0, "", {}, {plan}};
    auto vals = null_draws(T, n_cal, seed, workers);
    ThresholdRecord out;
    out.record = quantile_record(vals[0], q, seed, out.threshold);
    return out;
}

void calibrate(TestProcedure& T, const CalibrationSpec& spec)
{
    if (!(spec.eta > 0.0 && spec.eta < 1.0)) throw ContractError("eta must lie in (0, 1)");
    std::size_t mcal = 0;
    for (const auto& c : T.constituents) mcal += c.kind != StatKind::noiseless;
    if (mcal == 0) return;
    const double q = 1.0 - spec.eta / (2.0 * static_cast<double>(mcal));
    check_calibration_size(q, spec.n_cal);
    auto vals = null_draws(T, spec.n_cal, spec.seed, spec.workers);
    for (std::size_t c = 0; c < T.constituents.size(); ++c) {
        auto& k = T.constituents[c];
        if (k.kind == StatKind::noiseless) continue;
        double thr = 0.0;
        k.calibration = quantile_record(vals[c], q, spec.seed, thr);
        k.threshold = thr;
    }
}

nlohmann::json to_json(const TestProcedure& T)
{
    nlohmann::json j;
    j["name"] = T.name;
    j["family"] = family_name(T.model.family());
    j["p"] = T.model.dim();
    j["gamma"] = T.model.gamma();
    if (T.model.family() == Family::grouped) j["R"] = T.model.groups();
    if (T.options.adaptive)
        j["s"] = nullptr;
    else
        j["s"] = T.s;
    j["regime"] = T.regime;
    j["mode"] = T.options.mode == ThresholdMode::calibrated ? "calibrated" : "paper_constants";
    j["C"] = T.options.C;
    if (T.options.mode == ThresholdMode::calibrated) {
        j["eta"] = T.options.calibration.eta;
        j["n_cal"] = T.options.calibration.n_cal;
        j["calibration_seed"] = T.options.calibration.seed;
    }
    auto& arr = j["constituents"] = nlohmann::json::array();
    for (const auto& c : T.constituents) {
        nlohmann::json e;
        e["role"] = c.role;
        e["statistic"] = stat_kind_name(c.kind);
        if (c.kind == StatKind::collier || c.kind == StatKind::collier_scan || c.kind == StatKind::collier_avg)
            e["t"] = c.t;
        if (c.kind == StatKind::collier_family) e["family_size"] = c.family_t.size();
        e["paper_threshold"] = c.paper_threshold;
        e["threshold"] = c.threshold;
        if (c.calibration) {
            e["calibration"] = {{"level", c.calibration->level}, {"n_cal", c.calibration->n_cal},
                                {"seed", c.calibration->seed},   {"rank", c.calibration->rank},
                                {"lo", c.calibration->lo},       {"hi", c.calibration->hi}};
        }
        arr.push_back(std::move(e));
    }
    return j;
}

}  // namespace corrdetect
