#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "corrdetect/config.hpp"
#include "corrdetect/errors.hpp"
#include "corrdetect/lower_bounds.hpp"
#include "corrdetect/rates.hpp"
#include "corrdetect/risk_engine.hpp"
#include "corrdetect/selftest.hpp"

namespace fs = std::filesystem;
using namespace corrdetect;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

// Flag, then config file, then CORRDETECT_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& config)
{
    if (flag) return *flag;
    if (config) return *config;
    if (const char* env = std::getenv("CORRDETECT_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw ConfigError("CORRDETECT_SEED", "not an unsigned integer: '" + std::string(env) + "'");
    }
    return 0;
}

std::string out_path(const std::string& dir, const std::string& name)
{
    const fs::path p(name);
    return p.is_absolute() ? name : (fs::path(dir) / p).string();
}

CorrelationModel model_from_flags(const std::string& family, std::size_t p, double gamma, std::size_t R,
                                  const std::string& v_kind, const std::string& v_file)
{
    switch (parse_family(family)) {
    case Family::equicorrelated: return CorrelationModel::equicorrelated(p, gamma);
    case Family::grouped:
        if (R < 1 || p % R != 0)
            throw ConfigError("R", "R=" + std::to_string(R) + " does not divide p=" + std::to_string(p));
        return CorrelationModel::grouped(p, R, gamma);
    case Family::rank_one:
        if (!v_file.empty()) {
            auto v = load_vector(v_file);
            if (v.size() != p)
                throw ConfigError("v-file", "has " + std::to_string(v.size()) + " entries but p=" + std::to_string(p));
            return CorrelationModel::rank_one_normalized(std::move(v), gamma);
        }
        return CorrelationModel::rank_one(make_direction(v_kind, p), gamma);
    }
    throw ConfigError("family", "unknown family");
}

struct RunFlags {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
};

void add_run_flags(CLI::App* sub, RunFlags& f)
{
    sub->add_option("--config", f.config, "Experiment config (JSON) or a run manifest")->required();
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--seed", f.seed, "Master seed (falls back to the config, then CORRDETECT_SEED)");
    sub->add_option("--workers", f.workers, "Worker threads")->check(CLI::Range(1u, 1024u));
}

ExperimentConfig load_for(const RunFlags& f, std::uint64_t& seed)
{
    auto cfg = load_config(f.config);
    if (f.workers) cfg.workers = *f.workers;
    seed = resolve_seed(f.seed, cfg.seed);
    cfg.seed = seed;
    return cfg;
}

json manifest(const ExperimentConfig& cfg, const std::string& command, json run)
{
    run["command"] = command;
    run["tool"] = "corrdetect";
    run["version"] = kVersion;
    return json{{"config", to_json(cfg)}, {"run", std::move(run)}};
}

int cmd_sweep(const RunFlags& f, const std::string& command)
{
    std::uint64_t seed = 0;
    auto cfg = load_for(f, seed);
    cfg.command = command;
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = run_sweep(make_plan(cfg, seed));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::size_t failed = 0;
    json details = json::array();
    for (const auto& r : rows) {
        failed += r.status != "ok";
        if (command == "risk") {
            json per = json::object();
            for (const auto& t : r.est.type_ii) per[t.label] = {{"type_ii", t.rate}, {"se", t.se}};
            details.push_back({{"p", r.p},
                               {"s", r.s},
                               {"gamma", r.gamma},
                               {"R", r.R},
                               {"multiplier", r.multiplier},
                               {"status", r.status},
                               {"type_i", r.est.type_i},
                               {"se_type_i", r.est.se_type_i},
                               {"alternatives", per},
                               {"wall_seconds", r.est.wall_seconds}});
        }
    }
    const auto csv_path = out_path(f.out, cfg.output.csv);
    write_atomic(csv_path, sweep_csv(rows));
    json run{{"csv", cfg.output.csv}, {"rows", rows.size()}, {"failed_rows", failed}, {"wall_seconds", wall}};
    if (command == "risk") run["cells"] = details;
    write_atomic(out_path(f.out, cfg.output.manifest), manifest(cfg, command, run).dump(2) + "\n");
    std::cout << "wrote " << rows.size() << " rows to " << csv_path;
    if (failed) std::cout << " (" << failed << " failed, see the status column)";
    std::cout << "\n";
    return 0;
}

int cmd_calibrate(const RunFlags& f)
{
    std::uint64_t seed = 0;
    auto cfg = load_for(f, seed);
    cfg.command = "calibrate";
    const auto plan = make_plan(cfg, seed);
    json tests = json::array();
    const std::vector<std::size_t> Rs = cfg.model.family == Family::grouped ? cfg.model.R : std::vector<std::size_t>{1};
    for (auto p : cfg.model.p)
        for (auto R : Rs)
            for (auto s : cfg.model.s)
                for (auto g : cfg.model.gamma) {
                    const auto cell = cell_key(cfg.model.family, p, s, R, cfg.model.v);
                    json entry{{"p", p}, {"s", s}, {"gamma", g}};
                    if (cfg.model.family == Family::grouped) entry["R"] = R;
                    try {
                        CorrelationModel m = cfg.model.family == Family::equicorrelated
                                                 ? CorrelationModel::equicorrelated(p, g)
                                             : cfg.model.family == Family::grouped
                                                 ? CorrelationModel::grouped(p, R, g)
                                             : cfg.model.v == "file"
                                                 ? CorrelationModel::rank_one_normalized(plan.v, g)
                                                 : CorrelationModel::rank_one(make_direction(cfg.model.v, p), g);
                        TestOptions opt = plan.test;
                        opt.calibration.seed = split(seed, cell, hash_label("calibration"));
                        opt.calibration.workers = cfg.workers;
                        entry["test"] = to_json(build_test(m, s, opt));
                        entry["status"] = "ok";
                    } catch (const std::exception& e) {
                        entry["status"] = e.what();
                    }
                    tests.push_back(entry);
                }
    const auto path = out_path(f.out, "tests.json");
    write_atomic(path, tests.dump(2) + "\n");
    write_atomic(out_path(f.out, cfg.output.manifest),
                 manifest(cfg, "calibrate", json{{"tests", "tests.json"}, {"cells", tests.size()}}).dump(2) + "\n");
    std::cout << "wrote " << tests.size() << " calibrated tests to " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse signal detection under correlated Gaussian noise"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // rate
    auto* rate = app.add_subcommand("rate", "Print the squared separation rate and its regime");
    std::string family;
    std::size_t p = 0, s = 0, R = 1;
    double gamma = 0.0;
    std::string v_kind = "ones", v_file;
    bool as_json = false;
    rate->add_option("--family", family, "eq | grouped | rankone")->required();
    rate->add_option("--p", p)->required();
    rate->add_option("--s", s)->required();
    rate->add_option("--gamma", gamma)->required()->check(CLI::Range(0.0, 1.0));
    rate->add_option("--R", R, "Number of groups (grouped)");
    rate->add_option("--v", v_kind, "Rank-one direction: ones | alternating | e1 | spike:<k>");
    rate->add_option("--v-file", v_file, "Rank-one direction, one number per line")->check(CLI::ExistingFile);
    rate->add_flag("--json", as_json);

    // sweep, risk, calibrate
    RunFlags sweep_flags, risk_flags, cal_flags;
    auto* sweep = app.add_subcommand("sweep", "Run a risk sweep from a config");
    add_run_flags(sweep, sweep_flags);
    auto* risk = app.add_subcommand("risk", "Estimate risk per cell with per-alternative detail");
    add_run_flags(risk, risk_flags);
    auto* cal = app.add_subcommand("calibrate", "Build and calibrate the tests of a config");
    add_run_flags(cal, cal_flags);

    // divergence
    auto* div = app.add_subcommand("divergence", "Chi-square divergence and risk lower bound of a prior");
    std::string prior_kind, method = "hypergeometric_sum", d_family = "eq", d_v = "ones", d_out;
    std::size_t d_p = 0, d_s = 1, d_R = 1, d_groups = 1, n_mc = 100000;
    double d_gamma = 0.0, magnitude = 0.0;
    std::optional<double> eps;
    std::optional<std::uint64_t> d_seed;
    div->add_option("--prior", prior_kind,
                    "point_mass | uniform_sparse | group_within | group_blocks | shifted | least_favorable")
        ->required();
    div->add_option("--method", method, "closed_form | exact_enumeration | hypergeometric_sum | monte_carlo");
    div->add_option("--family", d_family);
    div->add_option("--p", d_p)->required();
    div->add_option("--s", d_s);
    div->add_option("--gamma", d_gamma)->check(CLI::Range(0.0, 1.0));
    div->add_option("--R", d_R);
    div->add_option("--groups", d_groups, "Hit groups (group_blocks)");
    div->add_option("--magnitude", magnitude, "Per-coordinate magnitude a");
    div->add_option("--eps", eps, "Signal norm (least_favorable)");
    div->add_option("--v", d_v);
    div->add_option("--seed", d_seed);
    div->add_option("--n-mc", n_mc);
    div->add_option("--out", d_out, "Write the JSON row here as well");

    // selftest
    auto* st = app.add_subcommand("selftest", "Run the oracle-backed example suite");
    std::string st_out = "selftest_out";
    std::optional<std::uint64_t> st_seed;
    unsigned st_workers = 1;
    st->add_option("--out", st_out, "Output directory");
    st->add_option("--seed", st_seed);
    st->add_option("--workers", st_workers)->check(CLI::Range(1u, 1024u));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rate->parsed()) {
            if (family.empty()) throw ConfigError("family", "required");
            const auto m = model_from_flags(family, p, gamma, R, v_kind, v_file);
            if (s < 1 || s > p) throw ConfigError("s", "must lie in [1, p]");
            const auto r = rate_for(m, s);
            if (as_json) {
                json j{{"family", family_name(r.family)}, {"p", r.p},       {"s", r.s},
                       {"gamma", r.gamma},               {"R", r.R},       {"characterized", r.characterized},
                       {"regime", r.regime},             {"rate_sq", r.characterized ? json(r.value) : json("nan")}};
                std::cout << j.dump(2) << "\n";
            } else {
                std::cout << rate_report(r);
            }
            return 0;
        }
        if (sweep->parsed()) return cmd_sweep(sweep_flags, "sweep");
        if (risk->parsed()) return cmd_sweep(risk_flags, "risk");
        if (cal->parsed()) return cmd_calibrate(cal_flags);
        if (div->parsed()) {
            const auto m = model_from_flags(d_family, d_p, d_gamma, d_R, d_v, "");
            PriorSpec pr;
            if (prior_kind == "point_mass") {
                std::vector<double> th = m.family() == Family::rank_one ? m.direction() : std::vector<double>(d_p, 1.0);
                for (auto& x : th) x *= magnitude;
                pr = PriorSpec::point_mass(th);
            } else if (prior_kind == "uniform_sparse") {
                pr = m.family() == Family::rank_one
                         ? PriorSpec::uniform_sparse(d_p, d_s, magnitude, SignRule::match_v, m.direction())
                         : PriorSpec::uniform_sparse(d_p, d_s, magnitude);
            } else if (prior_kind == "group_within") {
                pr = PriorSpec::group_within(d_p, d_R, d_s, magnitude);
            } else if (prior_kind == "group_blocks") {
                pr = PriorSpec::group_blocks(d_p, d_R, d_groups, magnitude);
            } else if (prior_kind == "shifted") {
                pr = PriorSpec::shifted(d_p, d_s, magnitude);
            } else if (prior_kind == "least_favorable") {
                if (!eps) throw ConfigError("eps", "required for the least_favorable prior");
                pr = least_favorable_prior(m, d_s, *eps);
            } else {
                throw ConfigError("prior", "unknown prior '" + prior_kind + "'");
            }
            DivergenceMethod dm;
            try {
                dm = parse_method(method);
            } catch (const ContractError& e) {
                throw ConfigError("method", e.what());
            }
            const auto r = ingster_suslina_chisq(pr, m, dm, resolve_seed(d_seed, std::nullopt), n_mc);
            const auto text = to_json(pr, m, r).dump(2) + "\n";
            if (!d_out.empty()) write_atomic(d_out, text);
            std::cout << text;
            return 0;
        }
        if (st->parsed()) {
            const auto seed = resolve_seed(st_seed, std::nullopt);
            const auto rep = run_selftest(seed, st_workers);
            write_atomic(out_path(st_out, "selftest.csv"), selftest_csv(rep));
            write_atomic(out_path(st_out, "selftest_sweep.csv"), sweep_csv(rep.sweep));
            std::size_t failed = 0;
            for (const auto& r : rep.rows) {
                if (!r.pass) {
                    ++failed;
                    std::cout << "FAIL " << r.check << ": observed " << r.observed << ", expected " << r.expected
                              << (r.detail.empty() ? "" : " (" + r.detail + ")") << "\n";
                }
            }
            std::cout << rep.rows.size() - failed << "/" << rep.rows.size() << " checks passed; wrote "
                      << out_path(st_out, "selftest.csv") << "\n";
            return failed ? 1 : 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
