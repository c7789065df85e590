#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrdetect/rates.hpp"
#include "corrdetect/risk_engine.hpp"

namespace corrdetect {

// Schema violation. `field` is a dotted path such as "model.R" (empty for
// syntax errors, which carry line and column in the message instead).
struct ConfigError : std::runtime_error {
    ConfigError(std::string field, const std::string& msg)
        : std::runtime_error(field.empty() ? msg : field + ": " + msg), field(std::move(field)) {}
    std::string field;
};

struct ModelBlock {
    Family family = Family::equicorrelated;
    std::vector<std::size_t> p, s, R;
    std::vector<double> gamma;
    std::string v = "ones";  // rank-one direction kind; "file" reads v_file
    std::string v_file;      // absolute after parsing
};

struct TestBlock {
    ThresholdMode mode = ThresholdMode::calibrated;
    double eta = 0.1;
    std::size_t n_cal = 4000;
    double C = 1.0;
    bool adaptive = false;
    Composition composition = Composition::full;
};

struct SweepBlock {
    std::vector<double> multipliers{1.0};
    RateReference reference = RateReference::cell_gamma;
    std::size_t n_reps = 1000;
    std::vector<std::string> alternatives{"least_favorable", "first_s"};
};

struct OutputBlock {
    std::string csv = "sweep.csv";
    std::string manifest = "manifest.json";
};

struct ExperimentConfig {
    std::string command = "sweep";
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;
    ModelBlock model;
    TestBlock test;
    SweepBlock sweep;
    OutputBlock output;
};

// Accepts a plain config or a run manifest ({"config": ..., "run": ...}).
// Relative v_file paths resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

nlohmann::json to_json(const ExperimentConfig& c);

// One number per line; blank lines and lines starting with '#' are skipped.
std::vector<double> load_vector(const std::string& path);

SweepPlan make_plan(const ExperimentConfig& c, std::uint64_t seed);

// What `corrdetect rate` prints: one "key value" pair per line, rate_sq to 4 dp.
std::string rate_report(const RateResult& r);

std::string threshold_mode_name(ThresholdMode m);
std::string composition_name(Composition c);

}  // namespace corrdetect
