#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrdetect/models.hpp"

namespace corrdetect {

enum class StatKind {
    collier,         // Y_t on decorrelated data
    chisq,           // |X tilde|^2
    linear,          // <p^{-1/2} 1_p, X>^2 or <p^{-1/2} v, X>^2
    chisq_scan,      // max_k |X tilde_{B_k}|^2
    collier_scan,    // max_k Y_t^{(k)}
    linear_scan,     // max_k <sqrt(R/p) 1_{B_k}, X>^2
    collier_avg,     // Y_t of standardized group means
    chisq_avg,       // sum_k |xbar_k 1_{B_k}|^2
    noiseless,       // residual off the correlation span, gamma = 1
    raw_chisq,       // |X|^2, gamma = 1 dense case
    collier_family,  // max_j Y_{t_j} / r0_j
};

std::string stat_kind_name(StatKind k);

struct CalibrationRecord {
    double level = 0.0;  // q
    std::size_t n_cal = 0;
    std::uint64_t seed = 0;
    std::size_t rank = 0;  // 1-based order statistic used as the threshold
    double lo = 0.0;       // order statistics bracketing the q-quantile (99% Wilson)
    double hi = 0.0;
};

struct Constituent {
    std::string role;  // which part of the composite this serves, e.g. "phi_I", "phi_2"
    StatKind kind = StatKind::chisq;
    double t = 0.0;
    double alpha_t = 1.0;
    std::vector<double> family_t, family_alpha, family_scale;
    double paper_threshold = 0.0;
    double threshold = 0.0;  // active cutoff; reject iff statistic > threshold
    // Only for the rank-one noiseless residual: tolerance relative to |x|^2 that
    // absorbs rounding in the projection.
    double noise_floor_rel = 0.0;
    std::optional<CalibrationRecord> calibration;
};

enum class ThresholdMode { paper_constants, calibrated };
enum class Composition { full, problem_I, problem_II };

struct CalibrationSpec {
    double eta = 0.1;
    std::size_t n_cal = 4000;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

struct TestOptions {
    double C = 1.0;
    ThresholdMode mode = ThresholdMode::calibrated;
    CalibrationSpec calibration;
    bool adaptive = false;
    Composition composition = Composition::full;  // equicorrelated, gamma < 1 only
};

struct TestProcedure {
    std::string name;
    CorrelationModel model;
    std::size_t s = 0;  // 0 for the adaptive test
    std::string regime;
    TestOptions options;
    std::vector<Constituent> constituents;

    bool needs_decorrelation() const;
};

TestProcedure build_test(const CorrelationModel& m, std::size_t s, const TestOptions& opt);

struct Verdict {
    bool reject = false;
    std::vector<std::size_t> fired;  // constituent indices
    std::vector<double> values;      // one statistic per constituent
};

// Scratch buffers reused across evaluations by one thread.
struct Workspace {
    std::vector<double> z, sorted, profile, means;
};

// Checks the observation's model tag against the test.
Verdict evaluate(const TestProcedure& test, const Observation& x, Stream& rng);
// Statistic values for every constituent. Draws xi from rng iff decorrelation is needed.
void constituent_values(const TestProcedure& test, std::span<const double> x, Stream& rng, Workspace& ws,
                        std::vector<double>& values);
bool rejects(const TestProcedure& test, std::span<const double> x, std::span<const double> values);

struct ThresholdRecord {
    double threshold = 0.0;
    CalibrationRecord record;
};

// Empirical q-quantile of one constituent's null statistic from n_cal seeded
// null draws. Refuses (ContractError) when n_cal < 1000 or n_cal (1 - q) < 20.
ThresholdRecord calibrate_null_quantile(const Constituent& plan, const CorrelationModel& m, double q,
                                        std::size_t n_cal, std::uint64_t seed, unsigned workers = 1);

// Replaces every calibratable constituent's threshold by its 1 - eta/(2m)
// null quantile, all from one shared set of null draws.
void calibrate(TestProcedure& test, const CalibrationSpec& spec);

nlohmann::json to_json(const TestProcedure& test);

}  // namespace corrdetect
