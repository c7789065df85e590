#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corrdetect/lower_bounds.hpp"
#include "corrdetect/models.hpp"
#include "corrdetect/test_procedures.hpp"

namespace corrdetect {

// A fixed signal or a prior that is redrawn on every replication.
struct Alternative {
    std::string label;  // also the stream key, so labels must be unique within a panel
    std::optional<std::vector<double>> theta;
    std::optional<PriorSpec> prior;

    static Alternative fixed(std::string label, std::vector<double> theta);
    static Alternative from_prior(std::string label, PriorSpec prior);
};

struct TypeII {
    std::string label;
    std::size_t accepts = 0;
    double rate = 0.0;
    double se = 0.0;
};

struct RiskEstimate {
    std::size_t rejects_null = 0;
    double type_i = 0.0;
    double se_type_i = 0.0;
    std::vector<TypeII> type_ii;  // in panel order
    double worst_type_ii = 0.0;
    double se_worst = 0.0;
    std::string worst_label;
    double total = 0.0;
    double se = 0.0;  // sqrt(se_type_i^2 + se_worst^2)
    std::size_t n_reps = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
};

// One-sigma Wilson half-width for k successes in n trials.
double wilson_halfwidth(std::size_t k, std::size_t n, double z = 1.0);

// Null replication i uses split(seed, cell_id, hash_label("null"), i); alternative
// replications use the alternative's label in place of "null".
RiskEstimate estimate_risk(const TestProcedure& test, const std::vector<Alternative>& alternatives, std::size_t n_reps,
                           std::uint64_t master_seed, std::uint64_t cell_id = 0, unsigned workers = 1);

enum class RateReference { cell_gamma, gamma0 };

struct SweepPlan {
    Family family = Family::equicorrelated;
    std::vector<std::size_t> p, s, R;
    std::vector<double> gamma;
    std::string v_kind = "ones";  // rank-one: ones, alternating, spike:<omega>, file
    std::vector<double> v;        // rank-one, when v_kind == "file"
    TestOptions test;
    std::vector<double> multipliers;
    RateReference reference = RateReference::cell_gamma;
    std::size_t n_reps = 1000;
    std::vector<std::string> alternatives{"least_favorable", "first_s"};
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

struct SweepRow {
    Family family;
    std::size_t p, s, R;
    double gamma;
    std::string regime;
    double rate_sq;
    double multiplier;
    double eps;
    RiskEstimate est;
    std::string status = "ok";  // or the error message for a failed cell
};

// Rank-one directions by name, scaled to |v|^2 = p.
std::vector<double> make_direction(const std::string& kind, std::size_t p);

// Stream key for a cell. Gamma is left out on purpose: cells that differ only in
// gamma share calibration and replication streams (common random numbers), so
// risk-vs-gamma comparisons are not swamped by independent threshold noise.
// The standardized null statistics do not depend on gamma, so type I is then
// identical along a gamma grid.
std::uint64_t cell_key(Family f, std::size_t p, std::size_t s, std::size_t R, const std::string& v_kind);

std::vector<SweepRow> run_sweep(const SweepPlan& plan);

std::string sweep_csv(const std::vector<SweepRow>& rows);

// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

// Writes via a temporary file in the same directory and renames it into place.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace corrdetect
