#include "loopy/synthetic.hpp"

#include "loopy/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace loopy {
namespace {

// Draws from [-1, 1) using the top 53 bits; independent of the standard
// library's distribution implementations.
double symmetric_unit(std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

double path_rate(const SyntheticMarketSpec& m, double elapsed_fraction, double elapsed_days) {
    switch (m.path) {
        case RatePath::constant: return m.rate;
        case RatePath::step: return elapsed_fraction < m.step_at ? m.rate : m.step_rate;
        case RatePath::sinusoid:
            return m.rate + m.amplitude * std::sin(2.0 * std::numbers::pi * elapsed_days / m.period_days + m.phase);
    }
    return m.rate;
}

SyntheticMarketSpec market(std::string id, double supplied, double utilization) {
    SyntheticMarketSpec m;
    m.id = std::move(id);
    m.supplied = supplied;
    m.utilization = utilization;
    return m;
}

}  // namespace

RatePath parse_rate_path(std::string_view name) {
    if (name == "constant") return RatePath::constant;
    if (name == "step") return RatePath::step;
    if (name == "sinusoid") return RatePath::sinusoid;
    throw DomainError("unknown rate path '" + std::string(name) + "'");
}

const char* to_string(RatePath path) noexcept {
    switch (path) {
        case RatePath::constant: return "constant";
        case RatePath::step: return "step";
        case RatePath::sinusoid: return "sinusoid";
    }
    return "constant";
}

void SyntheticSpec::validate() const {
    if (cadence_seconds <= 0) throw DomainError("cadence must be positive");
    if (duration_seconds < cadence_seconds || duration_seconds % cadence_seconds != 0) {
        throw DomainError("duration must be a positive multiple of the cadence");
    }
    if (!(std::isfinite(staking_rate) && staking_rate >= 0.0)) throw DomainError("staking rate must be non-negative");
    if (!(k_p > 0.0)) throw DomainError("k_p must be positive");
    if (markets.empty()) throw DomainError("synthetic spec needs at least one market");
    for (const auto& m : markets) {
        const std::string who = "market " + m.id + ": ";
        if (m.id.empty()) throw DomainError("market id must not be empty");
        if (!(m.supplied > 0.0)) throw DomainError(who + "supplied must be positive");
        if (!(m.lltv > 0.0 && m.lltv < 1.0)) throw DomainError(who + "lltv must lie in (0, 1)");
        if (!(m.utilization_noise >= 0.0 && m.utilization - m.utilization_noise > 0.0 &&
              m.utilization + m.utilization_noise < 1.0)) {
            throw DomainError(who + "utilization band must stay inside (0, 1)");
        }
        if (!(m.noise >= 0.0 && m.amplitude >= 0.0)) throw DomainError(who + "noise and amplitude must be non-negative");
        if (m.path == RatePath::sinusoid && !(m.period_days > 0.0)) throw DomainError(who + "period must be positive");
        if (m.path == RatePath::step && !(m.step_at >= 0.0 && m.step_at <= 1.0)) throw DomainError(who + "step_at must lie in [0, 1]");
        double lowest = m.rate;
        if (m.path == RatePath::sinusoid) lowest -= m.amplitude;
        if (m.path == RatePath::step) lowest = std::min(lowest, m.step_rate);
        if (lowest - m.noise <= 0.0) throw DomainError(who + "rate path must stay positive");
    }
}

std::vector<std::string> builtin_scenario_names() {
    return {"positive-carry", "rate-crossing", "saturating-small-market", "volatile"};
}

SyntheticSpec builtin_scenario(std::string_view name) {
    SyntheticSpec spec;
    spec.name = std::string(name);
    if (name == "positive-carry") {
        auto a = market("A", 2'000'000.0, 0.85);
        a.rate = 0.020;
        auto b = market("B", 800'000.0, 0.80);
        b.rate = 0.024;
        b.lltv = 0.965;
        spec.markets = {a, b};
    } else if (name == "rate-crossing") {
        auto a = market("A", 1'500'000.0, 0.88);
        a.path = RatePath::sinusoid;
        a.rate = spec.staking_rate;
        a.amplitude = 0.012;
        a.period_days = 20.0;
        a.noise = 0.001;
        auto b = market("B", 600'000.0, 0.86);
        b.path = RatePath::sinusoid;
        b.rate = spec.staking_rate;
        b.amplitude = 0.010;
        b.period_days = 20.0;
        b.phase = 1.0;
        b.noise = 0.001;
        b.lltv = 0.965;
        spec.markets = {a, b};
    } else if (name == "saturating-small-market") {
        auto a = market("A", 3'000'000.0, 0.88);
        a.rate = 0.025;
        auto b = market("B", 2'000.0, 0.70);
        b.rate = 0.015;
        spec.markets = {a, b};
    } else if (name == "volatile") {
        auto a = market("A", 1'200'000.0, 0.87);
        a.path = RatePath::sinusoid;
        a.rate = 0.030;
        a.amplitude = 0.018;
        a.period_days = 3.0;
        a.noise = 0.008;
        a.utilization_noise = 0.01;
        auto b = market("B", 500'000.0, 0.84);
        b.path = RatePath::sinusoid;
        b.rate = 0.032;
        b.amplitude = 0.015;
        b.period_days = 5.0;
        b.phase = 2.0;
        b.noise = 0.010;
        b.utilization_noise = 0.01;
        b.lltv = 0.965;
        spec.markets = {a, b};
    } else {
        throw DomainError("unknown scenario '" + std::string(name) + "'");
    }
    return spec;
}

SnapshotSeries generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    SnapshotSeries out;
    out.cadence_seconds = spec.cadence_seconds;
    for (const auto& m : spec.markets) {
        AdaptiveIrm irm;
        irm.k_d = kDefaultAdaptiveKd;
        irm.u_star = kDefaultAdaptiveUStar;
        irm.k_p = spec.k_p;
        irm.r_target = m.rate / adaptive_curve(m.utilization, irm.u_star, irm.k_d);
        irm.t_last = spec.start;
        irm.u_last = m.utilization;
        out.markets.push_back({m.id, "", m.lltv, irm});
    }

    const std::int64_t n = spec.duration_seconds / spec.cadence_seconds;
    out.snapshots.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        Snapshot snap;
        snap.timestamp = spec.start + k * spec.cadence_seconds;
        snap.staking_rate = spec.staking_rate;
        const double elapsed = static_cast<double>(k * spec.cadence_seconds);
        const double fraction = elapsed / static_cast<double>(spec.duration_seconds);
        const double days = elapsed / 86400.0;
        for (const auto& m : spec.markets) {
            const double rate_noise = symmetric_unit(rng);
            const double util_noise = symmetric_unit(rng);
            MarketSnapshot ms;
            ms.supplied = m.supplied;
            const double u = m.utilization + m.utilization_noise * util_noise;
            ms.borrowed = u * m.supplied;
            ms.observed_borrow_rate = path_rate(m, fraction, days) + m.noise * rate_noise;
            ms.rate_at_target =
                ms.observed_borrow_rate / adaptive_curve(ms.borrowed / ms.supplied, kDefaultAdaptiveUStar, kDefaultAdaptiveKd);
            snap.markets.push_back(ms);
        }
        out.snapshots.push_back(std::move(snap));
    }
    return out;
}

}  // namespace loopy
