#pragma once

// Deterministic synthetic snapshot series for offline runs and tests.

#include "loopy/backtest.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace loopy {

enum class RatePath { constant, step, sinusoid };

RatePath parse_rate_path(std::string_view name);
const char* to_string(RatePath path) noexcept;

struct SyntheticMarketSpec {
    std::string id;
    double supplied = 50'000.0;
    double utilization = 0.85;
    double utilization_noise = 0.0;  // uniform half-width
    double lltv = 0.945;
    RatePath path = RatePath::constant;
    double rate = 0.02;       // level, or centre of the sinusoid
    double amplitude = 0.0;   // sinusoid
    double period_days = 30.0;
    double phase = 0.0;       // radians
    double step_rate = 0.04;  // level after the step
    double step_at = 0.5;     // fraction of the duration
    double noise = 0.0;       // uniform half-width added to the rate
};

struct SyntheticSpec {
    std::string name;
    Timestamp start = 1735689600;  // 2025-01-01T00:00:00Z
    std::int64_t cadence_seconds = 3600;
    std::int64_t duration_seconds = 90 * 86400;
    double staking_rate = 0.031;
    double k_p = 50.0;  // configured controller speed for the adaptive descriptors
    std::vector<SyntheticMarketSpec> markets;

    void validate() const;
};

// "positive-carry", "rate-crossing", "saturating-small-market", "volatile".
SyntheticSpec builtin_scenario(std::string_view name);
std::vector<std::string> builtin_scenario_names();

// Pure function of (spec, seed). Markets carry adaptive parameters and a
// rate_at_target consistent with the recorded rate and utilization.
SnapshotSeries generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace loopy
