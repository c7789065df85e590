#include "corrdetect/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "corrdetect/errors.hpp"

namespace corrdetect {

using nlohmann::json;
namespace fs = std::filesystem;

std::string threshold_mode_name(ThresholdMode m)
{
    return m == ThresholdMode::calibrated ? "calibrated" : "paper_constants";
}

std::string composition_name(Composition c)
{
    switch (c) {
    case Composition::full: return "full";
    case Composition::problem_I: return "problem_I";
    case Composition::problem_II: return "problem_II";
    }
    return "full";
}

std::string rate_report(const RateResult& r)
{
    std::ostringstream os;
    os << "family " << family_name(r.family) << "\n"
       << "p " << r.p << "\n"
       << "s " << r.s << "\n"
       << "gamma " << format_double(r.gamma) << "\n";
    if (r.family == Family::grouped) os << "R " << r.R << "\n";
    if (!r.characterized) {
        os << "regime uncharacterized\nrate_sq nan\n";
        return os.str();
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", r.value);
    os << "regime " << r.regime << "\n"
       << "rate_sq " << buf << "\n";
    return os.str();
}

namespace {

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
{
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
}

std::string join(const std::string& path, const char* key)
{
    return path.empty() ? std::string(key) : path + "." + key;
}

double get_real(const json& v, const std::string& field)
{
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(field, "must be finite");
    return d;
}

std::uint64_t get_uint(const json& v, const std::string& field)
{
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0) throw ConfigError(field, "must be nonnegative");
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d >= 0 && d == std::floor(d) && d < 9.007199254740992e15) return static_cast<std::uint64_t>(d);
    }
    throw ConfigError(field, "expected a nonnegative integer");
}

std::string get_string(const json& v, const std::string& field)
{
    if (!v.is_string()) throw ConfigError(field, "expected a string");
    return v.get<std::string>();
}

// A scalar is accepted where a list is expected.
template <class T, class F>
std::vector<T> get_list(const json& v, const std::string& field, F one)
{
    std::vector<T> out;
    if (v.is_array()) {
        if (v.empty()) throw ConfigError(field, "must be nonempty");
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(one(v[i], field + "[" + std::to_string(i) + "]"));
    } else {
        out.push_back(one(v, field));
    }
    return out;
}

std::vector<std::size_t> size_list(const json& v, const std::string& field)
{
    return get_list<std::size_t>(v, field, [](const json& e, const std::string& f) {
        return static_cast<std::size_t>(get_uint(e, f));
    });
}

void parse_model(const json& j, ModelBlock& m, const std::string& base_dir)
{
    check_keys(j, "model", {"family", "p", "s", "gamma", "R", "v", "v_file"});
    if (!j.contains("family")) throw ConfigError("model.family", "required");
    try {
        m.family = parse_family(get_string(j["family"], "model.family"));
    } catch (const ContractError& e) {
        throw ConfigError("model.family", e.what());
    }
    for (const char* k : {"p", "s", "gamma"})
        if (!j.contains(k)) throw ConfigError(join("model", k), "required");
    m.p = size_list(j["p"], "model.p");
    m.s = size_list(j["s"], "model.s");
    m.gamma = get_list<double>(j["gamma"], "model.gamma", get_real);
    for (auto p : m.p)
        if (p < 1) throw ConfigError("model.p", "must be >= 1");
    for (auto s : m.s)
        if (s < 1) throw ConfigError("model.s", "must be >= 1");
    for (std::size_t i = 0; i < m.gamma.size(); ++i)
        if (m.gamma[i] < 0.0 || m.gamma[i] > 1.0)
            throw ConfigError("model.gamma[" + std::to_string(i) + "]", "must lie in [0, 1]");

    if (m.family == Family::grouped) {
        if (!j.contains("R")) throw ConfigError("model.R", "required for the grouped family");
        m.R = size_list(j["R"], "model.R");
        for (auto R : m.R)
            for (auto p : m.p)
                if (R < 1 || p % R != 0)
                    throw ConfigError("model.R", "R=" + std::to_string(R) + " does not divide p=" + std::to_string(p));
    } else if (j.contains("R")) {
        m.R = size_list(j["R"], "model.R");
        for (auto R : m.R)
            if (R != 1 || m.family == Family::rank_one)
                throw ConfigError("model.R", "only the grouped family takes R (equicorrelated allows R=1)");
        m.R.clear();
    }

    if (m.family == Family::rank_one) {
        if (j.contains("v_file")) {
            if (j.contains("v") && get_string(j["v"], "model.v") != "file")
                throw ConfigError("model.v", "conflicts with model.v_file");
            fs::path f = get_string(j["v_file"], "model.v_file");
            if (f.is_relative()) f = fs::path(base_dir) / f;
            m.v = "file";
            m.v_file = fs::weakly_canonical(f).string();
            std::vector<double> v;
            try {
                v = load_vector(m.v_file);
            } catch (const std::exception& e) {
                throw ConfigError("model.v_file", e.what());
            }
            for (auto p : m.p)
                if (p != v.size())
                    throw ConfigError("model.v_file", "has " + std::to_string(v.size()) + " entries but p=" +
                                                          std::to_string(p));
        } else if (j.contains("v")) {
            m.v = get_string(j["v"], "model.v");
            if (m.v == "file") throw ConfigError("model.v_file", "required when model.v is \"file\"");
            for (auto p : m.p) {
                try {
                    make_direction(m.v, p);
                } catch (const ContractError& e) {
                    throw ConfigError("model.v", e.what());
                }
            }
        }
    } else if (j.contains("v") || j.contains("v_file")) {
        throw ConfigError(j.contains("v") ? "model.v" : "model.v_file", "only the rank-one family takes a direction");
    }
}

void parse_test(const json& j, TestBlock& t)
{
    check_keys(j, "test", {"mode", "eta", "n_cal", "C", "adaptive", "composition"});
    if (j.contains("mode")) {
        const auto m = get_string(j["mode"], "test.mode");
        if (m == "calibrated") t.mode = ThresholdMode::calibrated;
        else if (m == "paper_constants") t.mode = ThresholdMode::paper_constants;
        else throw ConfigError("test.mode", "expected \"calibrated\" or \"paper_constants\"");
    }
    if (j.contains("eta")) {
        t.eta = get_real(j["eta"], "test.eta");
        if (!(t.eta > 0.0 && t.eta < 1.0)) throw ConfigError("test.eta", "must lie in (0, 1)");
    }
    if (j.contains("n_cal")) t.n_cal = get_uint(j["n_cal"], "test.n_cal");
    if (j.contains("C")) {
        t.C = get_real(j["C"], "test.C");
        if (!(t.C > 0.0)) throw ConfigError("test.C", "must be positive");
    }
    if (j.contains("adaptive")) {
        if (!j["adaptive"].is_boolean()) throw ConfigError("test.adaptive", "expected true or false");
        t.adaptive = j["adaptive"].get<bool>();
    }
    if (j.contains("composition")) {
        const auto c = get_string(j["composition"], "test.composition");
        if (c == "full") t.composition = Composition::full;
        else if (c == "problem_I") t.composition = Composition::problem_I;
        else if (c == "problem_II") t.composition = Composition::problem_II;
        else throw ConfigError("test.composition", "expected full, problem_I or problem_II");
    }
}

void parse_sweep(const json& j, SweepBlock& s)
{
    check_keys(j, "sweep", {"multipliers", "reference", "n_reps", "alternatives"});
    if (j.contains("multipliers")) {
        s.multipliers = get_list<double>(j["multipliers"], "sweep.multipliers", get_real);
        for (double m : s.multipliers)
            if (!(m > 0.0)) throw ConfigError("sweep.multipliers", "must be positive");
    }
    if (j.contains("reference")) {
        const auto r = get_string(j["reference"], "sweep.reference");
        if (r == "cell_gamma") s.reference = RateReference::cell_gamma;
        else if (r == "gamma0") s.reference = RateReference::gamma0;
        else throw ConfigError("sweep.reference", "expected \"cell_gamma\" or \"gamma0\"");
    }
    if (j.contains("n_reps")) {
        s.n_reps = get_uint(j["n_reps"], "sweep.n_reps");
        if (s.n_reps < 100) throw ConfigError("sweep.n_reps", "must be at least 100");
    }
    if (j.contains("alternatives")) {
        s.alternatives = get_list<std::string>(j["alternatives"], "sweep.alternatives", get_string);
        std::set<std::string> seen;
        for (const auto& a : s.alternatives) {
            if (a != "least_favorable" && a != "first_s" && a != "uniform_sparse")
                throw ConfigError("sweep.alternatives", "unknown alternative '" + a + "'");
            if (!seen.insert(a).second) throw ConfigError("sweep.alternatives", "duplicate '" + a + "'");
        }
    }
}

}  // namespace

ExperimentConfig parse_config(const json& root, const std::string& base_dir)
{
    const json* jp = &root;
    if (root.is_object() && root.contains("config") && root.contains("run")) {
        check_keys(root, "", {"config", "run"});
        jp = &root["config"];
    }
    const json& j = *jp;
    check_keys(j, "", {"command", "seed", "workers", "model", "test", "sweep", "output"});
    ExperimentConfig c;
    if (j.contains("command")) {
        c.command = get_string(j["command"], "command");
        static const std::set<std::string> cmds{"rate", "calibrate", "risk", "sweep", "divergence", "selftest"};
        if (!cmds.count(c.command)) throw ConfigError("command", "unknown command '" + c.command + "'");
    }
    if (j.contains("seed")) c.seed = get_uint(j["seed"], "seed");
    if (j.contains("workers")) {
        c.workers = static_cast<unsigned>(get_uint(j["workers"], "workers"));
        if (c.workers < 1 || c.workers > 1024) throw ConfigError("workers", "must lie in [1, 1024]");
    }
    if (!j.contains("model")) throw ConfigError("model", "required");
    parse_model(j["model"], c.model, base_dir);
    if (j.contains("test")) parse_test(j["test"], c.test);
    if (c.test.mode == ThresholdMode::calibrated) {
        const double q = 1.0 - c.test.eta / 2.0;
        if (c.test.n_cal < 1000) throw ConfigError("test.n_cal", "must be at least 1000 for calibration");
        if (static_cast<double>(c.test.n_cal) * (1.0 - q) < 20.0)
            throw ConfigError("test.n_cal", "too small for the requested eta");
    }
    if (j.contains("sweep")) parse_sweep(j["sweep"], c.sweep);
    if (j.contains("output")) {
        check_keys(j["output"], "output", {"csv", "manifest"});
        if (j["output"].contains("csv")) c.output.csv = get_string(j["output"]["csv"], "output.csv");
        if (j["output"].contains("manifest"))
            c.output.manifest = get_string(j["output"]["manifest"], "output.manifest");
    }
    return c;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir)
{
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("", "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                                  ": " + e.what());
    }
    return parse_config(j, base_dir);
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("", "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    const auto dir = fs::absolute(fs::path(path)).parent_path().string();
    return parse_config_text(ss.str(), dir);
}

json to_json(const ExperimentConfig& c)
{
    json j;
    j["command"] = c.command;
    if (c.seed) j["seed"] = *c.seed;
    j["workers"] = c.workers;
    json m;
    m["family"] = family_name(c.model.family);
    m["p"] = c.model.p;
    m["s"] = c.model.s;
    m["gamma"] = c.model.gamma;
    if (c.model.family == Family::grouped) m["R"] = c.model.R;
    if (c.model.family == Family::rank_one) {
        if (c.model.v == "file") m["v_file"] = c.model.v_file;
        else m["v"] = c.model.v;
    }
    j["model"] = m;
    j["test"] = {{"mode", threshold_mode_name(c.test.mode)}, {"eta", c.test.eta},
                 {"n_cal", c.test.n_cal},                    {"C", c.test.C},
                 {"adaptive", c.test.adaptive},              {"composition", composition_name(c.test.composition)}};
    j["sweep"] = {{"multipliers", c.sweep.multipliers},
                  {"reference", c.sweep.reference == RateReference::gamma0 ? "gamma0" : "cell_gamma"},
                  {"n_reps", c.sweep.n_reps},
                  {"alternatives", c.sweep.alternatives}};
    j["output"] = {{"csv", c.output.csv}, {"manifest", c.output.manifest}};
    return j;
}

std::vector<double> load_vector(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read '" + path + "'");
    std::vector<double> v;
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) {
        ++n;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t\r");
        double x = 0.0;
        const char* first = line.data() + b;
        const char* last = line.data() + e + 1;
        auto r = std::from_chars(first, last, x);
        if (r.ec != std::errc() || r.ptr != last || !std::isfinite(x))
            throw std::runtime_error("line " + std::to_string(n) + " of '" + path + "' is not a number");
        v.push_back(x);
    }
    if (v.empty()) throw std::runtime_error("'" + path + "' holds no numbers");
    return v;
}

SweepPlan make_plan(const ExperimentConfig& c, std::uint64_t seed)
{
    SweepPlan plan;
    plan.family = c.model.family;
    plan.p = c.model.p;
    plan.s = c.model.s;
    plan.R = c.model.R;
    plan.gamma = c.model.gamma;
    plan.v_kind = c.model.v;
    if (c.model.v == "file") plan.v = load_vector(c.model.v_file);
    plan.test.C = c.test.C;
    plan.test.mode = c.test.mode;
    plan.test.adaptive = c.test.adaptive;
    plan.test.composition = c.test.composition;
    plan.test.calibration.eta = c.test.eta;
    plan.test.calibration.n_cal = c.test.n_cal;
    plan.multipliers = c.sweep.multipliers;
    plan.reference = c.sweep.reference;
    plan.n_reps = c.sweep.n_reps;
    plan.alternatives = c.sweep.alternatives;
    plan.seed = seed;
    plan.workers = c.workers;
    return plan;
}

}  // namespace corrdetect
