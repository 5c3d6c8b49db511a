#include "loopy/data.hpp"

#include "loopy/duration.hpp"
#include "loopy/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace loopy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kMarketHeader = "timestamp,supplied,borrowed,borrow_rate,rate_at_target";
constexpr std::string_view kStakingHeader = "timestamp,staking_rate";

std::string summarize(const std::vector<std::string>& issues) {
    std::ostringstream msg;
    msg << issues.size() << (issues.size() == 1 ? " validation issue" : " validation issues");
    const std::size_t shown = std::min<std::size_t>(issues.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) msg << (i == 0 ? ": " : "; ") << issues[i];
    if (shown < issues.size()) msg << "; ...";
    return msg.str();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

class CsvReader {
public:
    explicit CsvReader(const fs::path& file) : file_(file), in_(file) {
        if (!in_) throw ParseError(file.string() + ": cannot open file");
    }

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(file_.filename().string() + ":" + std::to_string(line_no_) + ": " + what);
    }

    std::size_t line_no() const noexcept { return line_no_; }

    double number(std::string_view field, const char* name) const {
        double v = 0.0;
        const auto* end = field.data() + field.size();
        auto [ptr, ec] = std::from_chars(field.data(), end, v);
        if (field.empty() || ec != std::errc{} || ptr != end) {
            fail(std::string("invalid ") + name + " '" + std::string(field) + "'");
        }
        return v;
    }

    Timestamp timestamp(std::string_view field) const {
        try {
            return parse_timestamp(field);
        } catch (const DomainError& e) {
            fail(e.what());
        }
    }

    void expect_header(std::string_view header) {
        std::string line;
        if (!next(line)) fail("missing header");
        if (line != header) fail("expected header '" + std::string(header) + "', got '" + line + "'");
    }

private:
    fs::path file_;
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

struct MarketRow {
    Timestamp t = 0;
    MarketSnapshot snap;
};

std::vector<MarketRow> read_market_file(const fs::path& file, const std::string& id, std::vector<std::string>& issues) {
    CsvReader csv(file);
    csv.expect_header(kMarketHeader);
    std::vector<MarketRow> rows;
    std::string line;
    while (csv.next(line)) {
        const auto f = split(line, ',');
        if (f.size() != 5) csv.fail("expected 5 fields, got " + std::to_string(f.size()));
        MarketRow r;
        r.t = csv.timestamp(f[0]);
        r.snap.supplied = csv.number(f[1], "supplied");
        r.snap.borrowed = csv.number(f[2], "borrowed");
        r.snap.observed_borrow_rate = csv.number(f[3], "borrow_rate");
        if (!f[4].empty()) r.snap.rate_at_target = csv.number(f[4], "rate_at_target");

        const std::string where = "market " + id + " at " + format_timestamp(r.t);
        if (!rows.empty() && r.t <= rows.back().t) {
            issues.push_back(where + " (line " + std::to_string(csv.line_no()) + "): timestamp not after previous " +
                             format_timestamp(rows.back().t));
        }
        if (!(std::isfinite(r.snap.supplied) && r.snap.supplied > 0.0)) issues.push_back(where + ": supplied must be positive");
        if (!(std::isfinite(r.snap.borrowed) && r.snap.borrowed >= 0.0)) issues.push_back(where + ": borrowed must be non-negative");
        if (r.snap.borrowed > r.snap.supplied) {
            issues.push_back(where + ": borrowed " + format_number(r.snap.borrowed) + " exceeds supplied " +
                             format_number(r.snap.supplied));
        }
        if (!(std::isfinite(r.snap.observed_borrow_rate) && r.snap.observed_borrow_rate >= 0.0)) {
            issues.push_back(where + ": borrow rate must be finite and non-negative");
        }
        if (r.snap.rate_at_target && !(std::isfinite(*r.snap.rate_at_target) && *r.snap.rate_at_target >= 0.0)) {
            issues.push_back(where + ": rate at target must be finite and non-negative");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<std::pair<Timestamp, double>> read_staking_file(const fs::path& file, std::vector<std::string>& issues) {
    CsvReader csv(file);
    csv.expect_header(kStakingHeader);
    std::vector<std::pair<Timestamp, double>> rows;
    std::string line;
    while (csv.next(line)) {
        const auto f = split(line, ',');
        if (f.size() != 2) csv.fail("expected 2 fields, got " + std::to_string(f.size()));
        const Timestamp t = csv.timestamp(f[0]);
        const double s = csv.number(f[1], "staking_rate");
        const std::string where = "staking rate at " + format_timestamp(t);
        if (!rows.empty() && t <= rows.back().first) issues.push_back(where + ": timestamp not after previous");
        if (!(std::isfinite(s) && s >= 0.0)) issues.push_back(where + ": must be finite and non-negative");
        rows.emplace_back(t, s);
    }
    return rows;
}

json irm_json(const IrmParams& irm) {
    return std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LinearIrm>) {
                return {{"model", "linear"}, {"r_base", p.r_base}, {"r_slope1", p.r_slope1}, {"u_star", p.u_star}};
            } else if constexpr (std::is_same_v<T, KinkedIrm>) {
                return {{"model", "kinked"},       {"r_base", p.r_base}, {"r_slope1", p.r_slope1},
                        {"r_slope2", p.r_slope2}, {"u_star", p.u_star}};
            } else {
                return {{"model", "adaptive"}, {"r_target", p.r_target}, {"k_d", p.k_d},
                        {"u_star", p.u_star},  {"k_p", p.k_p},           {"t_last", p.t_last},
                        {"u_last", p.u_last}};
            }
        },
        irm);
}

IrmParams irm_from(const json& j) {
    const std::string model = j.at("model").get<std::string>();
    if (model == "linear") {
        LinearIrm p{j.at("r_base").get<double>(), j.at("r_slope1").get<double>(), j.at("u_star").get<double>()};
        p.validate();
        return p;
    }
    if (model == "kinked") {
        KinkedIrm p{j.at("r_base").get<double>(), j.at("r_slope1").get<double>(), j.at("r_slope2").get<double>(),
                    j.at("u_star").get<double>()};
        p.validate();
        return p;
    }
    if (model == "adaptive") {
        AdaptiveIrm p;
        p.r_target = j.at("r_target").get<double>();
        p.k_d = j.value("k_d", kDefaultAdaptiveKd);
        p.u_star = j.value("u_star", kDefaultAdaptiveUStar);
        p.k_p = j.at("k_p").get<double>();
        p.t_last = j.value("t_last", Timestamp{0});
        p.u_last = j.value("u_last", p.u_star);
        p.validate();
        return p;
    }
    throw DomainError("unknown rate model '" + model + "'");
}

fs::path manifest_path(const fs::path& path) {
    if (fs::is_directory(path)) return path / "manifest.json";
    return path;
}

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(file.string() + ": cannot open for writing");
    out << text;
    out.close();
    if (!out) throw std::runtime_error(file.string() + ": write failed");
}

std::string strategy_label(const BacktestResult& r) {
    if (r.config.strategy == StrategyKind::staking_only || r.l_max <= 1.0) return "staking";
    const std::string freq = format_duration(r.config.rebalance_every_seconds);
    if (r.config.strategy == StrategyKind::dynamic) return "loopy dynamic (" + freq + "-freq)";
    return "loopy (" + freq + "-freq)";
}

bool is_staking(const BacktestResult& r) {
    return r.config.strategy == StrategyKind::staking_only || r.l_max <= 1.0;
}

constexpr std::string_view kSummaryHeader =
    "strategy,initial_investment,rebalancing_frequency,l_max,apy_pct,rebalances,fees_paid";

std::string summary_row(const BacktestResult& r) {
    std::ostringstream row;
    const bool staking = is_staking(r);
    row << strategy_label(r) << ',' << format_number(r.config.budget) << ','
        << (staking ? "" : format_duration(r.config.rebalance_every_seconds)) << ','
        << format_number(staking ? 1.0 : r.l_max) << ',' << format_number(100.0 * r.apy) << ',' << r.rebalance_count
        << ',' << format_number(r.total_fees_paid);
    return row.str();
}

json summary_json(const BacktestResult& r) {
    const bool staking = is_staking(r);
    return {{"strategy", strategy_label(r)},
            {"initial_investment", r.config.budget},
            {"rebalancing_frequency", staking ? "" : format_duration(r.config.rebalance_every_seconds)},
            {"l_max", staking ? 1.0 : r.l_max},
            {"apy_pct", 100.0 * r.apy},
            {"rebalances", r.rebalance_count},
            {"fees_paid", r.total_fees_paid}};
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error(summarize(issues)), issues_(std::move(issues)) {}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

void DatasetManifest::validate() const {
    std::vector<std::string> issues;
    if (schema_version != kSchemaVersion) issues.push_back("unsupported schema_version " + std::to_string(schema_version));
    if (source != "fetched" && source != "synthetic") issues.push_back("source must be 'fetched' or 'synthetic'");
    if (period_end <= period_start) issues.push_back("period end must be after start");
    if (cadence_seconds <= 0) issues.push_back("cadence_seconds must be positive");
    if (markets.empty()) issues.push_back("no markets listed");
    if (market_files.size() != markets.size()) issues.push_back("every market needs a file");
    std::set<std::string> ids;
    for (const auto& m : markets) {
        if (m.id.empty()) issues.push_back("market id must not be empty");
        if (!ids.insert(m.id).second) issues.push_back("duplicate market id " + m.id);
        if (!(m.lltv > 0.0 && m.lltv < 1.0)) issues.push_back("market " + m.id + ": lltv must lie in (0, 1)");
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

DatasetManifest make_manifest(const SnapshotSeries& series, std::string chain, std::string source) {
    if (series.snapshots.empty()) throw DomainError("cannot describe an empty series");
    DatasetManifest m;
    m.chain = std::move(chain);
    m.source = std::move(source);
    m.cadence_seconds = series.cadence_seconds;
    m.period_start = series.snapshots.front().timestamp;
    m.period_end = series.snapshots.back().timestamp + series.cadence_seconds;
    m.markets = series.markets;
    for (std::size_t i = 0; i < series.markets.size(); ++i) m.market_files.push_back("market_" + std::to_string(i + 1) + ".csv");
    return m;
}

std::string irm_to_json(const IrmParams& irm) { return irm_json(irm).dump(); }

IrmParams irm_from_json(std::string_view text) {
    try {
        return irm_from(json::parse(text));
    } catch (const json::exception& e) {
        throw DomainError(std::string("invalid rate model: ") + e.what());
    }
}

Dataset load_dataset(const fs::path& path) {
    const fs::path mpath = manifest_path(path);
    const fs::path dir = mpath.parent_path();
    std::ifstream in(mpath);
    if (!in) throw ParseError(mpath.string() + ": cannot open manifest");

    Dataset ds;
    DatasetManifest& man = ds.manifest;
    try {
        const json j = json::parse(in);
        man.schema_version = j.at("schema_version").get<int>();
        if (man.schema_version != kSchemaVersion) {
            throw ParseError(mpath.filename().string() + ": unsupported schema_version " + std::to_string(man.schema_version));
        }
        man.chain = j.value("chain", "");
        man.source = j.at("source").get<std::string>();
        man.numeraire = j.value("numeraire", "WETH");
        man.period_start = parse_timestamp(j.at("period").at("start").get<std::string>());
        man.period_end = parse_timestamp(j.at("period").at("end").get<std::string>());
        man.cadence_seconds = j.at("cadence_seconds").get<std::int64_t>();
        for (const auto& jm : j.at("markets")) {
            MarketDescriptor d;
            d.id = jm.at("id").get<std::string>();
            d.creation_date = jm.value("creation_date", "");
            d.lltv = jm.at("lltv").get<double>();
            if (jm.contains("irm") && !jm["irm"].is_null()) d.irm = irm_from(jm["irm"]);
            man.markets.push_back(std::move(d));
            man.market_files.push_back(jm.at("file").get<std::string>());
        }
        man.staking_file = j.value("staking_file", "staking.csv");
        if (j.contains("gaps")) {
            for (const auto& jg : j["gaps"]) {
                man.gaps.push_back({jg.value("market", ""), parse_timestamp(jg.at("from").get<std::string>()),
                                    parse_timestamp(jg.at("to").get<std::string>())});
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(mpath.filename().string() + ": " + e.what());
    } catch (const DomainError& e) {
        throw ParseError(mpath.filename().string() + ": " + e.what());
    }
    man.validate();

    std::vector<std::string> issues;
    std::vector<std::vector<MarketRow>> rows;
    for (std::size_t i = 0; i < man.markets.size(); ++i) {
        rows.push_back(read_market_file(dir / man.market_files[i], man.markets[i].id, issues));
    }
    const auto staking = read_staking_file(dir / man.staking_file, issues);
    if (staking.empty()) issues.push_back("staking file has no records");
    if (!issues.empty()) throw ValidationError(std::move(issues));

    // Inner join on timestamp.
    std::map<Timestamp, std::size_t> seen;
    for (const auto& r : rows) {
        for (const auto& row : r) ++seen[row.t];
    }
    std::vector<Timestamp> joined;
    for (const auto& [t, count] : seen) {
        if (count == rows.size()) joined.push_back(t);
    }
    if (joined.empty()) throw ValidationError({"markets share no common timestamps"});

    ds.gaps = man.gaps;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::set<Timestamp> present;
        for (const auto& row : rows[i]) present.insert(row.t);
        std::optional<Timestamp> last;
        bool missing = false;
        for (const auto& [t, count] : seen) {
            if (present.count(t)) {
                if (missing && last) ds.gaps.push_back({man.markets[i].id, *last, t});
                last = t;
                missing = false;
            } else {
                missing = true;
            }
        }
    }
    for (std::size_t k = 1; k < joined.size(); ++k) {
        if (joined[k] - joined[k - 1] > man.cadence_seconds) ds.gaps.push_back({"", joined[k - 1], joined[k]});
    }

    SnapshotSeries& series = ds.series;
    series.markets = man.markets;
    series.cadence_seconds = man.cadence_seconds;
    std::vector<std::size_t> cursor(rows.size(), 0);
    std::size_t stake = 0;
    for (Timestamp t : joined) {
        Snapshot snap;
        snap.timestamp = t;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            while (rows[i][cursor[i]].t < t) ++cursor[i];
            snap.markets.push_back(rows[i][cursor[i]].snap);
        }
        while (stake + 1 < staking.size() && staking[stake + 1].first <= t) ++stake;
        if (staking[stake].first > t) {
            issues.push_back("no staking rate at or before " + format_timestamp(t));
            continue;
        }
        snap.staking_rate = staking[stake].second;
        series.snapshots.push_back(std::move(snap));
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return ds;
}

SnapshotSeries load_snapshots(const fs::path& path) { return load_dataset(path).series; }

void write_dataset(const SnapshotSeries& series, const DatasetManifest& manifest, const fs::path& dir) {
    manifest.validate();
    if (series.markets.size() != manifest.markets.size()) throw DomainError("manifest and series disagree on markets");
    fs::create_directories(dir);

    json jm;
    jm["schema_version"] = manifest.schema_version;
    jm["chain"] = manifest.chain;
    jm["source"] = manifest.source;
    jm["numeraire"] = manifest.numeraire;
    jm["period"] = {{"start", format_timestamp(manifest.period_start)}, {"end", format_timestamp(manifest.period_end)}};
    jm["cadence_seconds"] = manifest.cadence_seconds;
    jm["markets"] = json::array();
    for (std::size_t i = 0; i < manifest.markets.size(); ++i) {
        const auto& d = manifest.markets[i];
        json m = {{"id", d.id}, {"creation_date", d.creation_date}, {"lltv", d.lltv}, {"file", manifest.market_files[i]}};
        if (d.irm) m["irm"] = irm_json(*d.irm);
        jm["markets"].push_back(std::move(m));
    }
    jm["staking_file"] = manifest.staking_file;
    jm["gaps"] = json::array();
    for (const auto& g : manifest.gaps) {
        jm["gaps"].push_back({{"market", g.market_id}, {"from", format_timestamp(g.from)}, {"to", format_timestamp(g.to)}});
    }
    write_text(dir / "manifest.json", jm.dump(2) + "\n");

    for (std::size_t i = 0; i < series.markets.size(); ++i) {
        std::string text(kMarketHeader);
        text += '\n';
        for (const auto& snap : series.snapshots) {
            const MarketSnapshot& m = snap.markets.at(i);
            text += std::to_string(snap.timestamp) + ',' + format_number(m.supplied) + ',' + format_number(m.borrowed) + ',' +
                    format_number(m.observed_borrow_rate) + ',' + (m.rate_at_target ? format_number(*m.rate_at_target) : "") +
                    '\n';
        }
        write_text(dir / manifest.market_files[i], text);
    }

    std::string text(kStakingHeader);
    text += '\n';
    for (const auto& snap : series.snapshots) {
        text += std::to_string(snap.timestamp) + ',' + format_number(snap.staking_rate) + '\n';
    }
    write_text(dir / manifest.staking_file, text);
}

ReportFormat parse_report_format(std::string_view name) {
    if (name == "csv") return ReportFormat::csv;
    if (name == "json") return ReportFormat::json;
    throw DomainError("unknown report format '" + std::string(name) + "' (expected csv or json)");
}

std::vector<fs::path> emit_report(const BacktestResult& r, const fs::path& dir, ReportFormat format) {
    fs::create_directories(dir);
    const std::size_t n = r.market_ids.size();
    const double m = r.l_max - 1.0;

    if (format == ReportFormat::json) {
        json j;
        j["summary"] = summary_json(r);
        j["markets"] = r.market_ids;
        j["equity"] = json::array();
        j["positions"] = json::array();
        for (std::size_t k = 0; k < r.timestamps.size(); ++k) {
            const StepLedger ledger = k < r.steps.size() ? r.steps[k] : StepLedger{};
            j["equity"].push_back({{"timestamp", format_timestamp(r.timestamps[k])},
                                   {"equity", r.equity_curve[k]},
                                   {"staking_accrual", ledger.staking_accrual},
                                   {"borrow_interest", ledger.borrow_interest},
                                   {"fees", ledger.fees}});
            const Allocation& a = r.position_history[k];
            json collateral = json::object();
            json debt = json::object();
            for (std::size_t i = 0; i < n; ++i) {
                collateral[r.market_ids[i]] = a.exposures[i] * r.l_max;
                debt[r.market_ids[i]] = -a.exposures[i] * m;
            }
            j["positions"].push_back({{"timestamp", format_timestamp(r.timestamps[k])},
                                      {"unleveraged", a.unleveraged},
                                      {"collateral", collateral},
                                      {"debt", debt}});
        }
        const fs::path file = dir / "report.json";
        write_text(file, j.dump(2) + "\n");
        return {file};
    }

    std::string equity = "timestamp,equity,staking_accrual,borrow_interest,fees\n";
    for (std::size_t k = 0; k < r.timestamps.size(); ++k) {
        const StepLedger ledger = k < r.steps.size() ? r.steps[k] : StepLedger{};
        equity += format_timestamp(r.timestamps[k]) + ',' + format_number(r.equity_curve[k]) + ',' +
                  format_number(ledger.staking_accrual) + ',' + format_number(ledger.borrow_interest) + ',' +
                  format_number(ledger.fees) + '\n';
    }

    std::string positions = "timestamp,unleveraged";
    for (const auto& id : r.market_ids) positions += ',' + id + "_collateral," + id + "_debt";
    positions += '\n';
    for (std::size_t k = 0; k < r.position_history.size(); ++k) {
        const Allocation& a = r.position_history[k];
        positions += format_timestamp(r.timestamps[k]) + ',' + format_number(a.unleveraged);
        for (std::size_t i = 0; i < n; ++i) {
            positions += ',' + format_number(a.exposures[i] * r.l_max) + ',' + format_number(-a.exposures[i] * m);
        }
        positions += '\n';
    }

    const std::vector<fs::path> files{dir / "equity.csv", dir / "positions.csv", dir / "summary.csv"};
    write_text(files[0], equity);
    write_text(files[1], positions);
    write_text(files[2], std::string(kSummaryHeader) + '\n' + summary_row(r) + '\n');
    return files;
}

fs::path emit_summary(const std::vector<BacktestResult>& results, const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::string text(kSummaryHeader);
    text += '\n';
    for (const auto& r : results) text += summary_row(r) + '\n';
    write_text(file, text);
    return file;
}

fs::path emit_sweep(const std::vector<LeverageCurve>& curves, const fs::path& dir, ReportFormat format) {
    fs::create_directories(dir);
    if (format == ReportFormat::json) {
        json j = json::array();
        for (const auto& c : curves) {
            json pts = json::array();
            for (const auto& p : c.points) pts.push_back({{"budget", p.budget}, {"apy", p.apy}});
            j.push_back({{"l_max", c.l_max}, {"points", pts}});
        }
        const fs::path file = dir / "curve.json";
        write_text(file, j.dump(2) + "\n");
        return file;
    }
    std::string text = "l_max,budget,apy\n";
    for (const auto& c : curves) {
        for (const auto& p : c.points) text += format_number(c.l_max) + ',' + format_number(p.budget) + ',' + format_number(p.apy) + '\n';
    }
    const fs::path file = dir / "curve.csv";
    write_text(file, text);
    return file;
}

PositionHistory load_position_history(const fs::path& file) {
    CsvReader csv(file);
    std::string line;
    if (!csv.next(line)) csv.fail("missing header");
    const auto header = split(line, ',');
    if (header.size() < 2 || header[0] != "timestamp" || header[1] != "unleveraged" || header.size() % 2 != 0) {
        csv.fail("unexpected positions header");
    }
    PositionHistory h;
    for (std::size_t c = 2; c < header.size(); c += 2) {
        constexpr std::string_view suffix = "_collateral";
        const std::string_view col = header[c];
        if (col.size() <= suffix.size() || col.substr(col.size() - suffix.size()) != suffix) csv.fail("expected a collateral column");
        const std::string id(col.substr(0, col.size() - suffix.size()));
        if (header[c + 1] != id + "_debt") csv.fail("expected column " + id + "_debt");
        h.market_ids.push_back(id);
    }
    while (csv.next(line)) {
        const auto f = split(line, ',');
        if (f.size() != header.size()) csv.fail("expected " + std::to_string(header.size()) + " fields");
        h.timestamps.push_back(csv.timestamp(f[0]));
        h.unleveraged.push_back(csv.number(f[1], "unleveraged"));
        std::vector<double> collateral;
        std::vector<double> debt;
        for (std::size_t c = 2; c < f.size(); c += 2) {
            collateral.push_back(csv.number(f[c], "collateral"));
            debt.push_back(csv.number(f[c + 1], "debt"));
        }
        h.collateral.push_back(std::move(collateral));
        h.debt.push_back(std::move(debt));
    }
    return h;
}

}  // namespace loopy
