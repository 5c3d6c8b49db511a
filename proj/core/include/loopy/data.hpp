#pragma once

// On-disk dataset schema (manifest + per-market CSV + staking CSV) and
// report emission.

#include "loopy/backtest.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace loopy {

inline constexpr int kSchemaVersion = 1;

// A span of missing records. An empty market_id means every market.
struct Gap {
    std::string market_id;
    Timestamp from = 0;  // last timestamp present before the hole
    Timestamp to = 0;    // first timestamp present after it
};

struct DatasetManifest {
    int schema_version = kSchemaVersion;
    std::string chain;
    std::string source = "synthetic";  // "fetched" | "synthetic"
    std::string numeraire = "WETH";
    Timestamp period_start = 0;
    Timestamp period_end = 0;  // exclusive
    std::int64_t cadence_seconds = 3600;
    std::vector<MarketDescriptor> markets;
    std::vector<std::string> market_files;  // relative to the dataset directory
    std::string staking_file = "staking.csv";
    std::vector<Gap> gaps;

    void validate() const;
};

struct Dataset {
    DatasetManifest manifest;
    SnapshotSeries series;
    std::vector<Gap> gaps;  // recorded in the manifest plus those found while joining
};

// `path` is a dataset directory or its manifest.json.
Dataset load_dataset(const std::filesystem::path& path);
SnapshotSeries load_snapshots(const std::filesystem::path& path);

// Manifest describing `series` with default file names.
DatasetManifest make_manifest(const SnapshotSeries& series, std::string chain, std::string source);

// Writes manifest.json, market_<i>.csv and staking.csv into `dir`.
void write_dataset(const SnapshotSeries& series, const DatasetManifest& manifest, const std::filesystem::path& dir);

// JSON codec for rate-model parameters, e.g.
// {"model":"kinked","r_base":0,"r_slope1":0.04,"r_slope2":0.6,"u_star":0.9}.
std::string irm_to_json(const IrmParams& irm);
IrmParams irm_from_json(std::string_view text);

enum class ReportFormat { csv, json };

ReportFormat parse_report_format(std::string_view name);

// equity.csv, positions.csv, summary.csv (or report.json). Returns the files written.
std::vector<std::filesystem::path> emit_report(const BacktestResult& result, const std::filesystem::path& dir,
                                               ReportFormat format);

// One summary row per result, in the given order.
std::filesystem::path emit_summary(const std::vector<BacktestResult>& results, const std::filesystem::path& file);

// curve.csv (l_max,budget,apy) or curve.json.
std::filesystem::path emit_sweep(const std::vector<LeverageCurve>& curves, const std::filesystem::path& dir,
                                 ReportFormat format);

// positions.csv round trip: collateral is x*l, debt is -x*(l-1).
struct PositionHistory {
    std::vector<std::string> market_ids;
    std::vector<Timestamp> timestamps;
    std::vector<double> unleveraged;
    std::vector<std::vector<double>> collateral;  // [step][market]
    std::vector<std::vector<double>> debt;
};

PositionHistory load_position_history(const std::filesystem::path& file);

// Canonical decimal rendering used on disk; parses back to the same double.
std::string format_number(double v);

}  // namespace loopy
