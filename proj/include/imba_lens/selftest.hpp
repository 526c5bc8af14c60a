#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace imba::selftest {

struct SuiteResult {
    std::string name;
    double worst = 0;      // worst observed error (suite-specific unit)
    double tolerance = 0;  // pass iff worst <= tolerance (or < for strict suites)
    bool passed = false;
    std::string detail;
};

enum class Fault {
    None,
    CorruptThreshold,  // shift every computed tau down by a few order statistics
};

struct Options {
    std::uint64_t seed = 20220901;
    std::size_t trials = 500;
    Fault fault = Fault::None;
};

SuiteResult loss_closed_forms(const Options& o);
SuiteResult loss_gradients(const Options& o);
SuiteResult cam_oracle(const Options& o);
SuiteResult alignment_oracle(const Options& o);
SuiteResult component_oracle(const Options& o);
SuiteResult quantile_calibration(const Options& o);
SuiteResult metrics_oracle(const Options& o);

/// Every suite in a fixed order.
std::vector<SuiteResult> run_all(const Options& o);

}  // namespace imba::selftest
