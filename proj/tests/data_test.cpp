#include "loopy/data.hpp"
#include "loopy/duration.hpp"
#include "loopy/errors.hpp"
#include "loopy/synthetic.hpp"
#include "support/tmpdir.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace loopy;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

SnapshotSeries small_series(int days = 2) {
    SyntheticSpec spec = builtin_scenario("volatile");
    spec.duration_seconds = days * 86400;
    return generate_synthetic(spec, 9);
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Minimal hand-written dataset: one market, hourly, three rows.
void write_tiny(const fs::path& dir, const std::string& market_csv, const std::string& staking_csv) {
    write_file(dir / "manifest.json", R"({
  "schema_version": 1, "chain": "test", "source": "synthetic", "numeraire": "WETH",
  "period": {"start": "2025-01-01T00:00:00Z", "end": "2025-01-01T03:00:00Z"},
  "cadence_seconds": 3600,
  "markets": [{"id": "M", "lltv": 0.945, "file": "m.csv"}],
  "staking_file": "staking.csv"
})");
    write_file(dir / "m.csv", market_csv);
    write_file(dir / "staking.csv", staking_csv);
}

const char* kHeader = "timestamp,supplied,borrowed,borrow_rate,rate_at_target\n";

std::string issues_text(const ValidationError& e) {
    std::string all;
    for (const auto& s : e.issues()) all += s + "\n";
    return all;
}

}  // namespace

TEST(Dataset, RoundTripIsExact) {
    TempDir tmp;
    const SnapshotSeries series = small_series();
    const DatasetManifest man = make_manifest(series, "ethereum", "synthetic");
    write_dataset(series, man, tmp.path());
    const Dataset ds = load_dataset(tmp.path());
    EXPECT_TRUE(ds.gaps.empty());
    EXPECT_EQ(ds.manifest.period_start, series.snapshots.front().timestamp);
    EXPECT_EQ(ds.manifest.period_end, series.snapshots.back().timestamp + 3600);
    ASSERT_EQ(ds.series.snapshots.size(), series.snapshots.size());
    ASSERT_EQ(ds.series.markets.size(), 2u);
    EXPECT_EQ(std::get<AdaptiveIrm>(*ds.series.markets[0].irm).k_p, 50.0);
    EXPECT_EQ(ds.series.markets[1].lltv, 0.965);
    for (std::size_t k = 0; k < series.snapshots.size(); ++k) {
        const auto& a = series.snapshots[k];
        const auto& b = ds.series.snapshots[k];
        EXPECT_EQ(a.timestamp, b.timestamp);
        EXPECT_EQ(a.staking_rate, b.staking_rate);
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_EQ(a.markets[i].supplied, b.markets[i].supplied);
            EXPECT_EQ(a.markets[i].borrowed, b.markets[i].borrowed);
            EXPECT_EQ(a.markets[i].observed_borrow_rate, b.markets[i].observed_borrow_rate);
            EXPECT_EQ(a.markets[i].rate_at_target, b.markets[i].rate_at_target);
        }
    }
    // The manifest path works as well as the directory.
    EXPECT_EQ(load_snapshots(tmp / "manifest.json").snapshots.size(), series.snapshots.size());
}

TEST(Dataset, ManifestCarriesSchemaFields) {
    TempDir tmp;
    const SnapshotSeries series = small_series(1);
    write_dataset(series, make_manifest(series, "ethereum", "synthetic"), tmp.path());
    const auto j = nlohmann::json::parse(read_file(tmp / "manifest.json"));
    EXPECT_EQ(j["schema_version"], 1);
    EXPECT_EQ(j["source"], "synthetic");
    EXPECT_EQ(j["period"]["start"], "2025-01-01T00:00:00Z");
    EXPECT_EQ(j["cadence_seconds"], 3600);
    EXPECT_EQ(j["markets"][0]["irm"]["model"], "adaptive");
    EXPECT_TRUE(fs::exists(tmp / "market_1.csv"));
    EXPECT_TRUE(fs::exists(tmp / "staking.csv"));
}

TEST(Dataset, BundledScenariosLoad) {
    for (const auto& name : builtin_scenario_names()) {
        const Dataset ds = load_dataset(fs::path(LOOPY_SOURCE_DIR) / "data" / "synthetic" / name);
        EXPECT_EQ(ds.series.snapshots.size(), 2160u) << name;
        EXPECT_EQ(ds.manifest.source, "synthetic");
        EXPECT_TRUE(ds.gaps.empty());
    }
}

TEST(Dataset, BundledScenariosMatchGenerator) {
    const Dataset ds = load_dataset(fs::path(LOOPY_SOURCE_DIR) / "data" / "synthetic" / "rate-crossing");
    const SnapshotSeries fresh = generate_synthetic(builtin_scenario("rate-crossing"), 20250101);
    ASSERT_EQ(ds.series.snapshots.size(), fresh.snapshots.size());
    for (std::size_t k = 0; k < fresh.snapshots.size(); k += 97) {
        EXPECT_EQ(ds.series.snapshots[k].markets[0].observed_borrow_rate, fresh.snapshots[k].markets[0].observed_borrow_rate);
    }
}

TEST(Dataset, MissingRowsBecomeGaps) {
    TempDir tmp;
    write_tiny(tmp.path(),
               std::string(kHeader) + "1735689600,100,50,0.02,0.03\n1735696800,100,50,0.02,0.03\n1735700400,100,50,0.02,\n",
               "timestamp,staking_rate\n1735689600,0.03\n");
    const Dataset ds = load_dataset(tmp.path());
    ASSERT_EQ(ds.series.snapshots.size(), 3u);
    ASSERT_EQ(ds.gaps.size(), 1u);
    EXPECT_EQ(ds.gaps[0].market_id, "");
    EXPECT_EQ(ds.gaps[0].from, 1735689600);
    EXPECT_EQ(ds.gaps[0].to, 1735696800);
    EXPECT_FALSE(ds.series.snapshots[2].markets[0].rate_at_target.has_value());
}

TEST(Dataset, StakingHeldPiecewiseConstant) {
    TempDir tmp;
    write_tiny(tmp.path(),
               std::string(kHeader) + "1735689600,100,50,0.02,\n1735693200,100,50,0.02,\n1735696800,100,50,0.02,\n",
               "timestamp,staking_rate\n2024-12-31T00:00:00Z,0.03\n1735693200,0.04\n");
    const Dataset ds = load_dataset(tmp.path());
    EXPECT_EQ(ds.series.snapshots[0].staking_rate, 0.03);
    EXPECT_EQ(ds.series.snapshots[1].staking_rate, 0.04);
    EXPECT_EQ(ds.series.snapshots[2].staking_rate, 0.04);
}

TEST(Dataset, ValidationListsEveryOffendingRecord) {
    TempDir tmp;
    write_tiny(tmp.path(),
               std::string(kHeader) + "1735693200,100,50,0.02,\n1735689600,100,120,0.02,\n1735696800,0,0,-1,\n",
               "timestamp,staking_rate\n1735689600,0.03\n");
    try {
        load_dataset(tmp.path());
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        const std::string all = issues_text(e);
        EXPECT_EQ(e.issues().size(), 4u) << all;
        EXPECT_NE(all.find("market M at 2025-01-01T00:00:00Z (line 3): timestamp not after previous"), std::string::npos) << all;
        EXPECT_NE(all.find("borrowed 120 exceeds supplied 100"), std::string::npos) << all;
        EXPECT_NE(all.find("market M at 2025-01-01T02:00:00Z: supplied must be positive"), std::string::npos) << all;
        EXPECT_NE(all.find("borrow rate must be finite and non-negative"), std::string::npos) << all;
        EXPECT_NE(std::string(e.what()).find("4 validation issue"), std::string::npos);
    }
}

TEST(Dataset, StakingMustPrecedeSnapshots) {
    TempDir tmp;
    write_tiny(tmp.path(), std::string(kHeader) + "1735689600,100,50,0.02,\n1735693200,100,50,0.02,\n",
               "timestamp,staking_rate\n1735693200,0.03\n");
    try {
        load_dataset(tmp.path());
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        ASSERT_EQ(e.issues().size(), 1u);
        EXPECT_EQ(e.issues()[0], "no staking rate at or before 2025-01-01T00:00:00Z");
    }
}

TEST(Dataset, MalformedInputNamesFileAndLine) {
    TempDir tmp;
    write_tiny(tmp.path(), std::string(kHeader) + "1735689600,100,50,0.02,\n1735693200,abc,50,0.02,\n",
               "timestamp,staking_rate\n1735689600,0.03\n");
    try {
        load_dataset(tmp.path());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(std::string(e.what()), "m.csv:3: invalid supplied 'abc'");
    }

    write_tiny(tmp.path(), "timestamp,supplied\n", "timestamp,staking_rate\n");
    EXPECT_THROW(load_dataset(tmp.path()), ParseError);
    write_tiny(tmp.path(), std::string(kHeader) + "1735689600,100,50\n", "timestamp,staking_rate\n");
    EXPECT_THROW(load_dataset(tmp.path()), ParseError);
    EXPECT_THROW(load_dataset(tmp / "nowhere"), ParseError);
}

TEST(Dataset, ManifestValidation) {
    DatasetManifest man;
    man.schema_version = 2;
    man.source = "scraped";
    try {
        man.validate();
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_GE(e.issues().size(), 4u);
    }

    TempDir tmp;
    write_file(tmp / "manifest.json", R"({"schema_version": 7})");
    EXPECT_THROW(load_dataset(tmp.path()), ParseError);
}

TEST(IrmJson, RoundTrip) {
    AdaptiveIrm a;
    a.k_p = 50.0;
    a.r_target = 0.0123;
    a.t_last = 42;
    const std::vector<IrmParams> models{LinearIrm{0.01, 0.04, 0.9}, KinkedIrm{0.0, 0.04, 0.6, 0.8}, a};
    for (const auto& m : models) {
        const IrmParams back = irm_from_json(irm_to_json(m));
        EXPECT_EQ(back.index(), m.index());
        EXPECT_EQ(irm_to_json(back), irm_to_json(m));
    }
    EXPECT_THROW(irm_from_json(R"({"model":"cubic"})"), DomainError);
    EXPECT_THROW(irm_from_json(R"({"model":"kinked","r_base":0,"r_slope1":0.5,"r_slope2":0.01,"u_star":0.9})"), DomainError);
}

TEST(Reports, CsvFilesAndPositionRoundTrip) {
    TempDir tmp;
    BacktestConfig cfg;
    cfg.fees = {0.0005, 0.0005, 1.0 / 365.0};
    const BacktestResult r = run_backtest(small_series(), cfg);
    const auto files = emit_report(r, tmp.path(), ReportFormat::csv);
    ASSERT_EQ(files.size(), 3u);

    const std::string equity = read_file(tmp / "equity.csv");
    EXPECT_EQ(equity.substr(0, equity.find('\n')), "timestamp,equity,staking_accrual,borrow_interest,fees");
    EXPECT_NE(equity.find("\n2025-01-01T00:00:00Z,10000,"), std::string::npos);

    const std::string summary = read_file(tmp / "summary.csv");
    EXPECT_EQ(summary.substr(0, summary.find('\n')), "strategy,initial_investment,rebalancing_frequency,l_max,apy_pct,rebalances,fees_paid");
    EXPECT_NE(summary.find("loopy (1h-freq),10000,1h,5,"), std::string::npos) << summary;

    const PositionHistory h = load_position_history(tmp / "positions.csv");
    EXPECT_EQ(h.market_ids, (std::vector<std::string>{"A", "B"}));
    ASSERT_EQ(h.timestamps.size(), r.position_history.size());
    for (std::size_t k = 0; k < h.timestamps.size(); ++k) {
        EXPECT_EQ(h.unleveraged[k], r.position_history[k].unleveraged);
        for (std::size_t i = 0; i < 2; ++i) {
            const double x = r.position_history[k].exposures[i];
            EXPECT_EQ(h.collateral[k][i], x * 5.0);
            EXPECT_EQ(h.debt[k][i], -x * 4.0);
        }
    }
}

TEST(Reports, JsonReport) {
    TempDir tmp;
    const BacktestResult r = run_backtest(small_series(), BacktestConfig{});
    const auto files = emit_report(r, tmp.path(), ReportFormat::json);
    ASSERT_EQ(files.size(), 1u);
    const auto j = nlohmann::json::parse(read_file(files[0]));
    EXPECT_EQ(j["equity"].size(), r.equity_curve.size());
    EXPECT_EQ(j["positions"].size(), r.position_history.size());
    EXPECT_EQ(j["markets"][1], "B");
    EXPECT_THROW(parse_report_format("xml"), DomainError);
}

TEST(Reports, SummaryAndSweepFiles) {
    TempDir tmp;
    const SnapshotSeries data = small_series(3);
    BacktestConfig cfg;
    BacktestConfig dyn = cfg;
    dyn.strategy = StrategyKind::dynamic;
    dyn.rebalance_every_seconds = 86400;
    BacktestConfig stake = cfg;
    stake.strategy = StrategyKind::staking_only;
    emit_summary({run_backtest(data, cfg), run_backtest(data, dyn), run_backtest(data, stake)}, tmp / "s" / "summary.csv");
    const std::string summary = read_file(tmp / "s" / "summary.csv");
    EXPECT_NE(summary.find("\nloopy (1h-freq),"), std::string::npos);
    EXPECT_NE(summary.find("\nloopy dynamic (1d-freq),"), std::string::npos) << summary;
    EXPECT_NE(summary.find("\nstaking,"), std::string::npos);

    const auto curves = sweep_leverage(data, cfg, {1.0, 3.0}, {1e3, 1e6});
    emit_sweep(curves, tmp.path(), ReportFormat::csv);
    const std::string curve = read_file(tmp / "curve.csv");
    EXPECT_EQ(curve.substr(0, curve.find('\n')), "l_max,budget,apy");
    EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 5);
    emit_sweep(curves, tmp.path(), ReportFormat::json);
    EXPECT_EQ(nlohmann::json::parse(read_file(tmp / "curve.json")).size(), 2u);
}

TEST(FormatNumber, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5, 0.0}) {
        EXPECT_EQ(std::stod(format_number(v)), v);
    }
    EXPECT_EQ(format_number(10000.0), "10000");
    EXPECT_EQ(format_number(0.1), "0.1");
}

TEST(Durations, ParseAndFormat) {
    EXPECT_EQ(parse_duration("90s"), 90);
    EXPECT_EQ(parse_duration("15m"), 900);
    EXPECT_EQ(parse_duration("1h"), 3600);
    EXPECT_EQ(parse_duration("1d"), 86400);
    EXPECT_EQ(parse_duration("1w"), 604800);
    EXPECT_EQ(parse_duration("7200"), 7200);
    EXPECT_THROW(parse_duration("1y"), DomainError);
    EXPECT_THROW(parse_duration(""), DomainError);
    EXPECT_THROW(parse_duration("0h"), DomainError);
    EXPECT_EQ(format_duration(3600), "1h");
    EXPECT_EQ(format_duration(86400), "1d");
    EXPECT_EQ(format_duration(5400), "90m");
    EXPECT_EQ(format_duration(61), "61s");
}

TEST(Timestamps, ParseAndFormat) {
    EXPECT_EQ(parse_timestamp("2025-01-01"), 1735689600);
    EXPECT_EQ(parse_timestamp("2025-01-01T06:00:00Z"), 1735711200);
    EXPECT_EQ(parse_timestamp("1735689600"), 1735689600);
    EXPECT_EQ(parse_timestamp("2024-02-29T00:00:00Z"), 1709164800);
    EXPECT_EQ(format_timestamp(1735711200), "2025-01-01T06:00:00Z");
    EXPECT_THROW(parse_timestamp("2025-13-01"), DomainError);
    EXPECT_THROW(parse_timestamp("yesterday"), DomainError);
}
