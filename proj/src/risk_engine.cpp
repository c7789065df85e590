#include "corrdetect/risk_engine.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "corrdetect/errors.hpp"
#include "corrdetect/parallel.hpp"
#include "corrdetect/rates.hpp"

namespace corrdetect {

Alternative Alternative::fixed(std::string label, std::vector<double> theta)
{
    Alternative a;
    a.label = std::move(label);
    a.theta = std::move(theta);
    return a;
}

Alternative Alternative::from_prior(std::string label, PriorSpec prior)
{
    Alternative a;
    a.label = std::move(label);
    a.prior = std::move(prior);
    return a;
}

double wilson_halfwidth(std::size_t k, std::size_t n, double z)
{
    if (n == 0) return 0.0;
    const double nd = static_cast<double>(n);
    const double ph = static_cast<double>(k) / nd;
    const double z2 = z * z;
    return z / (1.0 + z2 / nd) * std::sqrt(ph * (1.0 - ph) / nd + z2 / (4.0 * nd * nd));
}

namespace {

struct Scratch {
    Workspace ws;
    std::vector<double> x, values, theta;
};

// Rejection indicator for each replication of one stream.
std::vector<unsigned char> run_stream(const TestProcedure& test, const Alternative* alt, std::size_t n_reps,
                                      std::uint64_t master, std::uint64_t cell_id, std::uint64_t key,
                                      std::vector<Scratch>& scratch, unsigned workers)
{
    std::vector<unsigned char> rej(n_reps, 0);
    parallel_for(n_reps, workers, [&](std::size_t i, unsigned w) {
        auto& sc = scratch[w];
        Stream rng(split(master, cell_id, key, i));
        std::span<const double> theta;
        if (alt) {
            if (alt->prior) {
                sc.theta = draw(*alt->prior, rng);
                theta = sc.theta;
            } else {
                theta = *alt->theta;
            }
        }
        sample_into(test.model, theta, rng, sc.x);
        constituent_values(test, sc.x, rng, sc.ws, sc.values);
        rej[i] = rejects(test, sc.x, sc.values) ? 1 : 0;
    }, 32);
    return rej;
}

std::size_t count(const std::vector<unsigned char>& v)
{
    std::size_t c = 0;
    for (auto b : v) c += b;
    return c;
}

}  // namespace

RiskEstimate estimate_risk(const TestProcedure& test, const std::vector<Alternative>& alternatives, std::size_t n_reps,
                           std::uint64_t master_seed, std::uint64_t cell_id, unsigned workers)
{
    if (alternatives.empty()) throw ContractError("the alternative panel is empty");
    if (n_reps < 100) throw ContractError("n_reps must be at least 100");
    std::set<std::string> labels;
    for (const auto& a : alternatives) {
        if (a.label.empty() || a.label == "null") throw ContractError("alternative labels must be nonempty and not 'null'");
        if (!labels.insert(a.label).second) throw ContractError("duplicate alternative label '" + a.label + "'");
        if (a.theta.has_value() == a.prior.has_value())
            throw ContractError("alternative '" + a.label + "' needs exactly one of theta or prior");
        const std::size_t len = a.theta ? a.theta->size() : a.prior->p;
        if (len != test.model.dim())
            throw ContractError("alternative '" + a.label + "' has dimension " + std::to_string(len) +
                                ", the test's model has " + std::to_string(test.model.dim()));
    }
    const auto t0 = std::chrono::steady_clock::now();
    workers = std::max(1u, workers);
    std::vector<Scratch> scratch(workers);

    RiskEstimate est;
    est.n_reps = n_reps;
    est.seed = master_seed;
    const auto null_rej = run_stream(test, nullptr, n_reps, master_seed, cell_id, hash_label("null"), scratch, workers);
    est.rejects_null = count(null_rej);
    est.type_i = static_cast<double>(est.rejects_null) / static_cast<double>(n_reps);
    est.se_type_i = wilson_halfwidth(est.rejects_null, n_reps);

    est.worst_type_ii = -1.0;
    for (const auto& a : alternatives) {
        const auto rej = run_stream(test, &a, n_reps, master_seed, cell_id, hash_label(a.label), scratch, workers);
        TypeII t;
        t.label = a.label;
        t.accepts = n_reps - count(rej);
        t.rate = static_cast<double>(t.accepts) / static_cast<double>(n_reps);
        t.se = wilson_halfwidth(t.accepts, n_reps);
        if (t.rate > est.worst_type_ii) {
            est.worst_type_ii = t.rate;
            est.se_worst = t.se;
            est.worst_label = t.label;
        }
        est.type_ii.push_back(std::move(t));
    }
    est.total = est.type_i + est.worst_type_ii;
    est.se = std::sqrt(est.se_type_i * est.se_type_i + est.se_worst * est.se_worst);
    est.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return est;
}

std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::vector<double> make_direction(const std::string& kind, std::size_t p)
{
    if (p < 1) throw ContractError("p must be >= 1");
    const double pd = static_cast<double>(p);
    std::vector<double> v(p, 1.0);
    if (kind == "ones") return v;
    if (kind == "alternating") {
        for (std::size_t i = 1; i < p; i += 2) v[i] = -1.0;
        return v;
    }
    if (kind == "e1") {
        std::fill(v.begin(), v.end(), 0.0);
        v[0] = std::sqrt(pd);
        return v;
    }
    if (kind.rfind("spike:", 0) == 0) {
        // k + 1 equal large coordinates with c^2 = p/(4k + 2): the top k carry
        // less than p/4 and the top k + 1 more, so omega(v) = k.
        std::size_t k = 0;
        const auto s = kind.substr(6);
        auto r = std::from_chars(s.data(), s.data() + s.size(), k);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size() || k < 1)
            throw ContractError("spike direction needs a positive integer, got '" + s + "'");
        if (4 * k + 2 > p || k + 2 > p) throw ContractError("spike:" + s + " needs p >= 4k + 2");
        const double c2 = pd / static_cast<double>(4 * k + 2);
        const double rest = (pd - static_cast<double>(k + 1) * c2) / static_cast<double>(p - k - 1);
        for (std::size_t i = 0; i < p; ++i) v[i] = i <= k ? std::sqrt(c2) : std::sqrt(rest);
        return v;
    }
    throw ContractError("unknown rank-one direction '" + kind + "' (ones, alternating, e1, spike:<k>, file)");
}

std::uint64_t cell_key(Family f, std::size_t p, std::size_t s, std::size_t R, const std::string& v_kind)
{
    std::string d = family_name(f) + "|" + std::to_string(p) + "|" + std::to_string(s);
    if (f == Family::grouped) d += "|R" + std::to_string(R);
    if (f == Family::rank_one) d += "|v:" + v_kind;
    return hash_label(d);
}

namespace {

std::vector<double> first_s_signal(const CorrelationModel& m, std::size_t s, double eps)
{
    std::vector<double> th(m.dim(), 0.0);
    const double a = eps / std::sqrt(static_cast<double>(s));
    for (std::size_t i = 0; i < s; ++i) {
        double sg = 1.0;
        if (m.family() == Family::rank_one && m.direction()[i] < 0.0) sg = -1.0;
        th[i] = a * sg;
    }
    return th;
}

std::vector<Alternative> panel(const SweepPlan& plan, const CorrelationModel& m, std::size_t s, double eps)
{
    std::vector<Alternative> out;
    for (const auto& k : plan.alternatives) {
        if (k == "least_favorable") {
            out.push_back(Alternative::from_prior(k, least_favorable_prior(m, s, eps)));
        } else if (k == "first_s") {
            out.push_back(Alternative::fixed(k, first_s_signal(m, s, eps)));
        } else if (k == "uniform_sparse") {
            const double a = eps / std::sqrt(static_cast<double>(s));
            if (m.family() == Family::rank_one)
                out.push_back(Alternative::from_prior(
                    k, PriorSpec::uniform_sparse(m.dim(), s, a, SignRule::match_v, m.direction())));
            else
                out.push_back(Alternative::from_prior(k, PriorSpec::uniform_sparse(m.dim(), s, a)));
        } else {
            throw ContractError("unknown alternative kind '" + k + "'");
        }
    }
    return out;
}

CorrelationModel make_model(const SweepPlan& plan, std::size_t p, double gamma, std::size_t R)
{
    switch (plan.family) {
    case Family::equicorrelated: return CorrelationModel::equicorrelated(p, gamma);
    case Family::grouped: return CorrelationModel::grouped(p, R, gamma);
    case Family::rank_one: {
        if (plan.v_kind == "file") {
            if (plan.v.size() != p) throw ContractError("v file has " + std::to_string(plan.v.size()) + " entries, p is " + std::to_string(p));
            return CorrelationModel::rank_one_normalized(plan.v, gamma);
        }
        return CorrelationModel::rank_one(make_direction(plan.v_kind, p), gamma);
    }
    }
    throw ContractError("unknown family");
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepPlan& plan)
{
    if (plan.p.empty() || plan.s.empty() || plan.gamma.empty()) throw ContractError("sweep grids must be nonempty");
    if (plan.multipliers.empty()) throw ContractError("sweep needs at least one multiplier");
    for (double mlt : plan.multipliers)
        if (!(mlt > 0.0)) throw ContractError("multipliers must be positive");
    std::vector<std::size_t> Rs = plan.family == Family::grouped ? plan.R : std::vector<std::size_t>{1};
    if (Rs.empty()) throw ContractError("grouped sweeps need an R grid");

    std::vector<SweepRow> rows;
    for (auto p : plan.p)
        for (auto R : Rs)
            for (auto s : plan.s)
                for (auto g : plan.gamma) {
                    const std::size_t Rrow = plan.family == Family::rank_one ? 0 : R;
                    const auto cell = cell_key(plan.family, p, s, R, plan.v_kind);
                    std::vector<SweepRow> cell_rows;
                    for (double mlt : plan.multipliers)
                        cell_rows.push_back(SweepRow{plan.family, p, s, Rrow, g, "", NAN, mlt, NAN, {}, "ok"});
                    try {
                        const auto model = make_model(plan, p, g, R);
                        const auto rate = rate_for(model, s);
                        double ref = rate.value;
                        if (plan.reference == RateReference::gamma0) ref = rate_for(make_model(plan, p, 0.0, R), s).value;
                        if (!rate.characterized || !std::isfinite(ref))
                            throw UnsupportedRegime("rate is uncharacterized for this cell");
                        TestOptions opt = plan.test;
                        opt.calibration.seed = split(plan.seed, cell, hash_label("calibration"));
                        opt.calibration.workers = plan.workers;
                        const auto test = build_test(model, s, opt);
                        for (auto& row : cell_rows) {
                            row.regime = rate.regime;
                            row.rate_sq = rate.value;
                            row.eps = row.multiplier * std::sqrt(ref);
                            try {
                                row.est = estimate_risk(test, panel(plan, model, s, row.eps), plan.n_reps, plan.seed, cell,
                                                        plan.workers);
                            } catch (const std::exception& e) {
                                row.status = e.what();
                            }
                        }
                    } catch (const std::exception& e) {
                        for (auto& row : cell_rows) row.status = e.what();
                    }
                    for (auto& r : cell_rows) rows.push_back(std::move(r));
                }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
    std::ostringstream os;
    os << "family,p,s,gamma,R,regime,rate_sq,multiplier,type_i,worst_type_ii,total,se,n_reps,seed,eps,"
          "worst_alternative,status\n";
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c == '\n' ? ' ' : c;
        }
        return q + "\"";
    };
    for (const auto& r : rows) {
        const bool ok = r.status == "ok";
        os << family_name(r.family) << ',' << r.p << ',' << r.s << ',' << format_double(r.gamma) << ',';
        if (r.family != Family::rank_one) os << r.R;
        os << ',' << r.regime << ',' << format_double(r.rate_sq) << ',' << format_double(r.multiplier) << ',';
        if (ok)
            os << format_double(r.est.type_i) << ',' << format_double(r.est.worst_type_ii) << ','
               << format_double(r.est.total) << ',' << format_double(r.est.se) << ',' << r.est.n_reps << ',';
        else
            os << ",,,,,";
        os << r.est.seed << ',' << format_double(r.eps) << ',' << quote(r.est.worst_label) << ',' << quote(r.status)
           << '\n';
    }
    return os.str();
}

void write_atomic(const std::string& path, const std::string& content)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f << content;
        f.flush();
        if (!f) throw std::runtime_error("write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, target);
}

}  // namespace corrdetect
