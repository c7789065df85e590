#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrdetect/risk_engine.hpp"

namespace corrdetect {

struct SelftestRow {
    std::string check;
    bool pass = false;
    std::string observed;
    std::string expected;
    std::string detail;
};

struct SelftestReport {
    std::vector<SelftestRow> rows;
    std::vector<SweepRow> sweep;  // the three correlation-phenomenon sweeps
    bool passed() const;
};

// Every documented example at reduced Monte Carlo size, each against an
// independent oracle. Output depends on seed only, never on workers.
SelftestReport run_selftest(std::uint64_t seed, unsigned workers);

// check,status,observed,expected,detail
std::string selftest_csv(const SelftestReport& r);

}  // namespace corrdetect
