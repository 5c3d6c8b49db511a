#include "cli.hpp"

#include "loopy/allocator.hpp"
#include "loopy/backtest.hpp"
#include "loopy/data.hpp"
#include "loopy/duration.hpp"
#include "loopy/errors.hpp"
#include "loopy/rebalance.hpp"
#include "loopy/synthetic.hpp"
#ifdef LOOPY_HAVE_FETCH
#include "loopy/fetch.hpp"
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace loopy::cli {
namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProblemOptions {
    std::string dataset;
    std::string at;
    std::vector<std::string> markets;
    std::optional<double> staking_rate;
    std::optional<double> budget;
    double l_max = 5.0;
    double gamma_plus_bps = 0.0;
    double gamma_minus_bps = 0.0;
    std::string horizon = "1d";
    std::string current;
    bool json = false;
};

struct BacktestOptions {
    std::string dataset;
    double budget = 10'000.0;
    double l_max = 5.0;
    std::string every = "1h";
    std::string strategy = "fixed";
    double threshold_bps = 20.0;
    std::string gate = "net";
    double gamma_plus_bps = 0.0;
    double gamma_minus_bps = 0.0;
    std::string horizon = "1d";
    std::string smoothing = "1d";
    std::string target_source = "recorded";
    std::string out;
    std::string format = "csv";
    bool json = false;
};

struct SweepOptions {
    std::vector<double> budgets;
    std::vector<double> budget_range;
    std::vector<double> l_max_list;
};

struct FetchOptions {
    std::string endpoint;
    std::string chain = "ethereum";
    std::vector<std::string> ids;
    std::string start;
    std::string end;
    std::string staking_endpoint;
    std::optional<double> staking_rate;
    std::string api_key;
    int parallelism = 4;
    double rps = 4.0;
    std::string out;
};

struct SynthOptions {
    std::string scenario = "positive-carry";
    std::string spec_file;
    std::uint64_t seed = 1;
    std::string out;
    bool list = false;
};

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << (v == 0.0 ? 0.0 : v);  // no "-0"
    return s.str();
}

std::map<std::string, std::string> key_values(const std::string& text, const std::string& what) {
    std::map<std::string, std::string> kv;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError(what + ": expected key=value, got '" + item + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

double to_double(const std::string& v, const std::string& field) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError(field + ": invalid number '" + v + "'");
    }
}

// "id=A,S=100,B=0,ltv=0.945,irm=linear,r_base=0.01,r_slope1=0.05,u_star=0.9"
MarketState parse_market(const std::string& text) {
    auto kv = key_values(text, "--market");
    auto take = [&](const std::string& key) -> double {
        const auto it = kv.find(key);
        if (it == kv.end()) throw UsageError("--market: missing field '" + key + "' in '" + text + "'");
        const double v = to_double(it->second, "--market " + key);
        kv.erase(it);
        return v;
    };
    auto take_or = [&](const std::string& key, double fallback) { return kv.count(key) ? take(key) : fallback; };
    const std::string id = kv.count("id") ? kv["id"] : "";
    kv.erase("id");
    if (id.empty()) throw UsageError("--market: missing field 'id'");
    const std::string model = kv.count("irm") ? kv["irm"] : "linear";
    kv.erase("irm");
    const double supplied = take("S");
    const double borrowed = take_or("B", 0.0);
    const double ltv = take_or("ltv", 0.945);
    IrmParams irm;
    if (model == "linear") {
        irm = LinearIrm{take_or("r_base", 0.0), take("r_slope1"), take_or("u_star", 0.9)};
    } else if (model == "kinked") {
        irm = KinkedIrm{take_or("r_base", 0.0), take("r_slope1"), take("r_slope2"), take_or("u_star", 0.9)};
    } else if (model == "adaptive") {
        AdaptiveIrm a;
        a.r_target = take("r_target");
        a.k_d = take_or("k_d", kDefaultAdaptiveKd);
        a.u_star = take_or("u_star", kDefaultAdaptiveUStar);
        a.k_p = take("k_p");
        a.u_last = a.u_star;
        irm = a;
    } else {
        throw UsageError("--market: unknown irm '" + model + "'");
    }
    if (!kv.empty()) throw UsageError("--market: unknown field '" + kv.begin()->first + "'");
    return MarketState(id, supplied, borrowed, ltv, irm);
}

FeeModel fees_from(double plus_bps, double minus_bps, const std::string& horizon) {
    FeeModel f;
    f.gamma_plus = plus_bps * 1e-4;
    f.gamma_minus = minus_bps * 1e-4;
    f.horizon_T = static_cast<double>(parse_duration(horizon)) / kSecondsPerYear;
    f.validate();
    return f;
}

ProblemInstance build_instance(const ProblemOptions& o) {
    if (o.dataset.empty() == o.markets.empty()) throw UsageError("give either --dataset or at least one --market");
    ProblemInstance p;
    if (!o.dataset.empty()) {
        const SnapshotSeries series = load_snapshots(o.dataset);
        const Timestamp at = o.at.empty() ? series.snapshots.front().timestamp : parse_timestamp(o.at);
        const Snapshot* snap = nullptr;
        for (const auto& s : series.snapshots) {
            if (s.timestamp >= at) {
                snap = &s;
                break;
            }
        }
        if (!snap) throw UsageError("--at: no snapshot at or after " + o.at);
        for (std::size_t i = 0; i < series.markets.size(); ++i) {
            const auto& d = series.markets[i];
            const auto& ms = snap->markets[i];
            p.markets.push_back({MarketState(d.id, ms.supplied, ms.borrowed, d.lltv, snapshot_irm(d, ms)), o.l_max});
        }
        p.staking_rate = o.staking_rate.value_or(snap->staking_rate);
    } else {
        if (!o.staking_rate) throw UsageError("--staking-rate is required with --market");
        for (const auto& m : o.markets) p.markets.push_back({parse_market(m), o.l_max});
        p.staking_rate = *o.staking_rate;
    }
    if (!o.budget) throw UsageError("--budget is required");
    p.budget = *o.budget;
    p.validate();
    return p;
}

Allocation parse_current(const std::string& text, const ProblemInstance& p) {
    auto kv = key_values(text, "--current");
    Allocation a;
    a.exposures.assign(p.markets.size(), 0.0);
    if (kv.count("x0")) {
        a.unleveraged = to_double(kv["x0"], "--current x0");
        kv.erase("x0");
    }
    for (std::size_t i = 0; i < p.markets.size(); ++i) {
        const auto it = kv.find(p.markets[i].market.market_id());
        if (it == kv.end()) continue;
        a.exposures[i] = to_double(it->second, "--current " + it->first);
        kv.erase(it);
    }
    if (!kv.empty()) throw UsageError("--current: unknown market '" + kv.begin()->first + "'");
    return a;
}

json allocation_json(const Allocation& a, const ProblemInstance& p) {
    const YieldBreakdown yb = yield_breakdown(a, p);
    json markets = json::array();
    for (std::size_t i = 0; i < p.markets.size(); ++i) {
        const double l = p.markets[i].l_max;
        markets.push_back({{"id", p.markets[i].market.market_id()},
                           {"exposure", a.exposures[i]},
                           {"collateral", a.exposures[i] * l},
                           {"debt", -a.exposures[i] * (l - 1.0)},
                           {"borrow_rate", yb.borrow_rate[i]},
                           {"carry", yb.carry[i]}});
    }
    return {{"regime", to_string(a.regime)},
            {"lambda_star", a.lambda_star},
            {"unleveraged", a.unleveraged},
            {"expected_yield", yb.total},
            {"markets", markets}};
}

void print_allocation(std::ostream& out, const Allocation& a, const ProblemInstance& p) {
    const YieldBreakdown yb = yield_breakdown(a, p);
    out << "regime          " << to_string(a.regime) << '\n'
        << "lambda*         " << num(a.lambda_star) << '\n'
        << "unleveraged x0  " << num(a.unleveraged) << '\n'
        << "expected yield  " << num(yb.total) << "  (" << num(yb.total / p.budget * 100.0) << "%/yr)\n";
    out << std::left << std::setw(12) << "market" << std::setw(14) << "exposure" << std::setw(14) << "collateral"
        << std::setw(14) << "debt" << std::setw(14) << "borrow_rate" << "carry\n";
    for (std::size_t i = 0; i < p.markets.size(); ++i) {
        const double l = p.markets[i].l_max;
        out << std::setw(12) << p.markets[i].market.market_id() << std::setw(14) << num(a.exposures[i]) << std::setw(14)
            << num(a.exposures[i] * l) << std::setw(14) << num(-a.exposures[i] * (l - 1.0)) << std::setw(14)
            << num(yb.borrow_rate[i]) << num(yb.carry[i]) << '\n';
    }
    out << std::right;
}

int cmd_optimize(const ProblemOptions& o, bool require_current, std::ostream& out) {
    ProblemInstance p = build_instance(o);
    if (require_current && o.current.empty()) throw UsageError("--current is required");

    if (!o.current.empty()) {
        const FeeModel fees = fees_from(o.gamma_plus_bps, o.gamma_minus_bps, o.horizon);
        const Allocation current = parse_current(o.current, p);
        const RebalancePlan plan = solve_with_fees(p, current, fees);
        if (o.json) {
            out << json{{"direction", to_string(plan.direction)},
                        {"cost", plan.cost},
                        {"net_gain_rate", plan.net_gain_rate},
                        {"target", allocation_json(plan.target, p)}}
                       .dump(2)
                << '\n';
            return 0;
        }
        out << "direction       " << to_string(plan.direction) << '\n'
            << "cost            " << num(plan.cost) << '\n'
            << "net gain rate   " << num(plan.net_gain_rate) << '\n';
        print_allocation(out, plan.target, p);
        return 0;
    }

    const Allocation a = solve(p);
    const KktReport kkt = verify_kkt(a, p, 1e-8);
    bool any = false;
    for (double x : a.exposures) any = any || x > 0.0;
    if (o.json) {
        json j = allocation_json(a, p);
        j["kkt"] = {{"pass", kkt.pass},
                    {"max_stationarity_residual", kkt.max_stationarity_residual()},
                    {"budget_residual", kkt.budget_residual}};
        if (!any) j["note"] = "carry non-positive";
        out << j.dump(2) << '\n';
        return kkt.pass ? 0 : 1;
    }
    print_allocation(out, a, p);
    out << "kkt             " << (kkt.pass ? "pass" : "FAIL") << " (max residual " << num(kkt.max_stationarity_residual())
        << ")\n";
    if (!any) out << "note            carry non-positive: pure staking\n";
    return kkt.pass ? 0 : 1;
}

StrategyKind parse_strategy(const std::string& s) {
    if (s == "fixed") return StrategyKind::fixed_frequency;
    if (s == "dynamic") return StrategyKind::dynamic;
    if (s == "staking") return StrategyKind::staking_only;
    throw UsageError("--strategy must be fixed, dynamic or staking");
}

BacktestConfig backtest_config(const BacktestOptions& o) {
    BacktestConfig c;
    c.budget = o.budget;
    c.l_max = o.l_max;
    c.rebalance_every_seconds = parse_duration(o.every);
    c.strategy = parse_strategy(o.strategy);
    c.threshold = o.threshold_bps * 1e-4;
    if (o.gate != "net" && o.gate != "gross") throw UsageError("--gate must be net or gross");
    c.gate_net_of_cost = o.gate == "net";
    c.fees = fees_from(o.gamma_plus_bps, o.gamma_minus_bps, o.horizon);
    c.smoothing_window_seconds = parse_duration(o.smoothing);
    if (o.target_source == "recorded") c.target_source = TargetSource::recorded;
    else if (o.target_source == "simulated") c.target_source = TargetSource::simulated;
    else throw UsageError("--target-source must be recorded or simulated");
    return c;
}

int cmd_backtest(const BacktestOptions& o, std::ostream& out) {
    const BacktestConfig cfg = backtest_config(o);
    const SnapshotSeries series = load_snapshots(o.dataset);
    const BacktestResult r = run_backtest(series, cfg);
    std::vector<std::filesystem::path> files;
    if (!o.out.empty()) files = emit_report(r, o.out, parse_report_format(o.format));
    if (o.json) {
        json j = {{"apy", r.apy},
                  {"rebalances", r.rebalance_count},
                  {"fees_paid", r.total_fees_paid},
                  {"final_equity", r.equity_curve.back()}};
        j["files"] = json::array();
        for (const auto& f : files) j["files"].push_back(f.string());
        out << j.dump(2) << '\n';
        return 0;
    }
    out << "APY " << num(100.0 * r.apy) << "%  rebalances " << r.rebalance_count << "  fees paid " << num(r.total_fees_paid)
        << "  final equity " << num(r.equity_curve.back()) << '\n';
    for (const auto& f : files) out << "wrote " << f.string() << '\n';
    return 0;
}

int cmd_sweep(const BacktestOptions& o, const SweepOptions& s, std::ostream& out) {
    std::vector<double> budgets = s.budgets;
    if (!s.budget_range.empty()) {
        if (!budgets.empty()) throw UsageError("give --budgets or --budget-range, not both");
        if (s.budget_range.size() != 3 || s.budget_range[2] < 1.0) throw UsageError("--budget-range takes LO,HI,COUNT");
        budgets = log_spaced(s.budget_range[0], s.budget_range[1], static_cast<std::size_t>(s.budget_range[2]));
    }
    if (budgets.empty()) throw UsageError("the budget list is empty");
    std::vector<double> levers = s.l_max_list;
    if (levers.empty()) levers.push_back(o.l_max);

    const BacktestConfig cfg = backtest_config(o);
    const SnapshotSeries series = load_snapshots(o.dataset);
    const auto curves = sweep_leverage(series, cfg, levers, budgets);
    std::optional<std::filesystem::path> file;
    if (!o.out.empty()) file = emit_sweep(curves, o.out, parse_report_format(o.format));
    if (o.json) {
        json j = json::array();
        for (const auto& c : curves) {
            for (const auto& p : c.points) j.push_back({{"l_max", c.l_max}, {"budget", p.budget}, {"apy", p.apy}});
        }
        out << j.dump(2) << '\n';
        return 0;
    }
    out << std::left << std::setw(8) << "l_max" << std::setw(14) << "budget" << "apy_pct\n";
    for (const auto& c : curves) {
        for (const auto& p : c.points) out << std::setw(8) << num(c.l_max) << std::setw(14) << num(p.budget) << num(100.0 * p.apy) << '\n';
    }
    out << std::right;
    if (file) out << "wrote " << file->string() << '\n';
    return 0;
}

int cmd_fetch(const FetchOptions& o, std::ostream& out) {
#ifdef LOOPY_HAVE_FETCH
    FetchRequest req;
    if (!o.endpoint.empty()) req.endpoint = o.endpoint;
    req.chain = o.chain;
    req.market_ids = o.ids;
    req.start = parse_timestamp(o.start);
    req.end = parse_timestamp(o.end);
    req.staking_endpoint = o.staking_endpoint;
    req.constant_staking_rate = o.staking_rate;
    if (!o.api_key.empty()) req.api_key = o.api_key;
    else if (const char* env = std::getenv("LOOPY_API_KEY")) req.api_key = env;
    req.parallelism = o.parallelism;
    req.max_requests_per_second = o.rps;
    req.output_dir = o.out;
    const DatasetManifest m = fetch_market_history(req);
    out << "wrote " << m.markets.size() << " market(s) to " << o.out << '\n';
    for (const auto& g : m.gaps) {
        out << "gap " << (g.market_id.empty() ? "*" : g.market_id) << ' ' << format_timestamp(g.from) << " .. "
            << format_timestamp(g.to) << '\n';
    }
    return 0;
#else
    (void)o;
    (void)out;
    throw std::runtime_error("this build has no fetch support");
#endif
}

SyntheticSpec spec_from_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw UsageError("--spec: cannot open " + file);
    try {
        const json j = json::parse(in);
        SyntheticSpec s = j.contains("base") ? builtin_scenario(j["base"].get<std::string>()) : SyntheticSpec{};
        s.name = j.value("name", s.name);
        if (j.contains("start")) s.start = parse_timestamp(j["start"].get<std::string>());
        if (j.contains("cadence")) s.cadence_seconds = parse_duration(j["cadence"].get<std::string>());
        if (j.contains("duration")) s.duration_seconds = parse_duration(j["duration"].get<std::string>());
        s.staking_rate = j.value("staking_rate", s.staking_rate);
        s.k_p = j.value("k_p", s.k_p);
        if (j.contains("markets")) {
            s.markets.clear();
            for (const auto& jm : j["markets"]) {
                SyntheticMarketSpec m;
                m.id = jm.at("id").get<std::string>();
                m.supplied = jm.value("supplied", m.supplied);
                m.utilization = jm.value("utilization", m.utilization);
                m.utilization_noise = jm.value("utilization_noise", m.utilization_noise);
                m.lltv = jm.value("lltv", m.lltv);
                m.path = parse_rate_path(jm.value("path", std::string("constant")));
                m.rate = jm.value("rate", m.rate);
                m.amplitude = jm.value("amplitude", m.amplitude);
                m.period_days = jm.value("period_days", m.period_days);
                m.phase = jm.value("phase", m.phase);
                m.step_rate = jm.value("step_rate", m.step_rate);
                m.step_at = jm.value("step_at", m.step_at);
                m.noise = jm.value("noise", m.noise);
                s.markets.push_back(std::move(m));
            }
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("--spec: " + std::string(e.what()));
    }
}

int cmd_synth(const SynthOptions& o, std::ostream& out) {
    if (o.list) {
        for (const auto& n : builtin_scenario_names()) out << n << '\n';
        return 0;
    }
    if (o.out.empty()) throw UsageError("--out is required");
    const SyntheticSpec spec = o.spec_file.empty() ? builtin_scenario(o.scenario) : spec_from_file(o.spec_file);
    const SnapshotSeries series = generate_synthetic(spec, o.seed);
    write_dataset(series, make_manifest(series, "synthetic", "synthetic"), o.out);
    out << "wrote " << series.snapshots.size() << " records x " << series.markets.size() << " market(s) to " << o.out << '\n';
    return 0;
}

void add_problem_options(CLI::App* sub, ProblemOptions& o) {
    sub->add_option("--dataset", o.dataset, "Dataset directory; markets and staking rate are taken from one snapshot");
    sub->add_option("--at", o.at, "Snapshot time (ISO-8601 or UTC seconds); default is the first one");
    sub->add_option("--market", o.markets,
                    "Inline market, e.g. id=A,S=100,B=0,ltv=0.945,irm=linear,r_base=0.01,r_slope1=0.05,u_star=0.9 "
                    "(irm=kinked adds r_slope2; irm=adaptive takes r_target,k_d,u_star,k_p)")
        ->take_all();
    sub->add_option("--staking-rate,-s", o.staking_rate, "Staking rate, continuously compounded per year");
    sub->add_option("--budget,-b", o.budget, "Budget in loan-asset units");
    sub->add_option("--l-max", o.l_max, "Leverage cap applied to every market")->capture_default_str();
    sub->add_option("--gamma-plus-bps", o.gamma_plus_bps, "Fee on collateral increases, bps")->capture_default_str();
    sub->add_option("--gamma-minus-bps", o.gamma_minus_bps, "Fee on collateral decreases, bps")->capture_default_str();
    sub->add_option("--horizon", o.horizon, "Fee amortization horizon (e.g. 1d)")->capture_default_str();
    sub->add_option("--current", o.current, "Current position, e.g. x0=1,A=2; prints a rebalance plan");
    sub->add_flag("--json", o.json, "Machine-readable output");
}

void add_backtest_options(CLI::App* sub, BacktestOptions& o) {
    sub->add_option("--dataset", o.dataset, "Dataset directory")->required();
    sub->add_option("--budget,-b", o.budget, "Initial investment")->capture_default_str();
    sub->add_option("--l-max", o.l_max, "Leverage cap")->capture_default_str();
    sub->add_option("--every", o.every, "Rebalancing frequency (multiple of the data cadence)")->capture_default_str();
    sub->add_option("--strategy", o.strategy, "fixed | dynamic | staking")->capture_default_str();
    sub->add_option("--threshold-bps", o.threshold_bps, "Dynamic strategy gate, bps of budget per year")->capture_default_str();
    sub->add_option("--gate", o.gate, "Dynamic gate on yield gain: net (of fees) | gross")->capture_default_str();
    sub->add_option("--gamma-plus-bps", o.gamma_plus_bps, "Fee on collateral increases, bps")->capture_default_str();
    sub->add_option("--gamma-minus-bps", o.gamma_minus_bps, "Fee on collateral decreases, bps")->capture_default_str();
    sub->add_option("--horizon", o.horizon, "Fee amortization horizon")->capture_default_str();
    sub->add_option("--smoothing", o.smoothing, "Trailing moving-average window for recorded rates")->capture_default_str();
    sub->add_option("--target-source", o.target_source, "recorded | simulated")->capture_default_str();
    sub->add_option("--out,-o", o.out, "Report directory");
    sub->add_option("--format", o.format, "csv | json")->capture_default_str();
    sub->add_flag("--json", o.json, "Machine-readable summary");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Leveraged staking allocation, rebalancing and backtesting"};
    app.name("loopy");
    app.set_config("--config", "", "TOML/INI configuration file; flags take precedence");
    bool print_config = false;
    app.add_flag("--print-config", print_config, "Print the resolved configuration before running");
    app.require_subcommand(1);

    ProblemOptions optimize_opts;
    auto* optimize = app.add_subcommand("optimize", "Solve one allocation (or a rebalance plan with --current)");
    add_problem_options(optimize, optimize_opts);

    ProblemOptions rebalance_opts;
    auto* rebalance = app.add_subcommand("rebalance", "Fee-aware rebalance plan from a current position");
    add_problem_options(rebalance, rebalance_opts);

    BacktestOptions backtest_opts;
    auto* backtest = app.add_subcommand("backtest", "Replay a strategy over a dataset");
    add_backtest_options(backtest, backtest_opts);

    BacktestOptions sweep_opts;
    SweepOptions sweep_lists;
    auto* sweep = app.add_subcommand("sweep", "APY against budget for one or more leverage caps");
    add_backtest_options(sweep, sweep_opts);
    sweep->add_option("--budgets", sweep_lists.budgets, "Comma-separated budgets")->delimiter(',');
    sweep->add_option("--budget-range", sweep_lists.budget_range, "LO,HI,COUNT log-spaced budgets")->delimiter(',');
    sweep->add_option("--l-max-list", sweep_lists.l_max_list, "Comma-separated leverage caps; 1 means staking")->delimiter(',');

    FetchOptions fetch_opts;
    auto* fetch = app.add_subcommand("fetch", "Download market history into a dataset directory");
    fetch->add_option("--endpoint", fetch_opts.endpoint, "Market GraphQL endpoint (default https://api.morpho.org/graphql)");
    fetch->add_option("--chain", fetch_opts.chain, "Chain label stored in the manifest")->capture_default_str();
    fetch->add_option("--id", fetch_opts.ids, "Market id (repeatable)")->required()->take_all();
    fetch->add_option("--start", fetch_opts.start, "Range start, ISO-8601 UTC")->required();
    fetch->add_option("--end", fetch_opts.end, "Range end (exclusive), ISO-8601 UTC")->required();
    fetch->add_option("--staking-endpoint", fetch_opts.staking_endpoint, "Staking subgraph URL; {api_key} is substituted");
    fetch->add_option("--staking-rate", fetch_opts.staking_rate, "Constant staking rate instead of a staking endpoint");
    fetch->add_option("--api-key", fetch_opts.api_key, "API key (default $LOOPY_API_KEY)");
    fetch->add_option("--parallelism", fetch_opts.parallelism, "Concurrent requests")->capture_default_str();
    fetch->add_option("--rps", fetch_opts.rps, "Request rate limit per second")->capture_default_str();
    fetch->add_option("--out,-o", fetch_opts.out, "Dataset directory")->required();

    SynthOptions synth_opts;
    auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic dataset");
    synth->add_option("--scenario", synth_opts.scenario, "Built-in scenario name")->capture_default_str();
    synth->add_option("--spec", synth_opts.spec_file, "JSON scenario file");
    synth->add_option("--seed", synth_opts.seed, "Random seed")->capture_default_str();
    synth->add_option("--out,-o", synth_opts.out, "Dataset directory");
    synth->add_flag("--list", synth_opts.list, "List built-in scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    if (print_config) out << app.config_to_str(true, false);

    try {
        if (optimize->parsed()) return cmd_optimize(optimize_opts, false, out);
        if (rebalance->parsed()) return cmd_optimize(rebalance_opts, true, out);
        if (backtest->parsed()) return cmd_backtest(backtest_opts, out);
        if (sweep->parsed()) return cmd_sweep(sweep_opts, sweep_lists, out);
        if (fetch->parsed()) return cmd_fetch(fetch_opts, out);
        if (synth->parsed()) return cmd_synth(synth_opts, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        for (const auto& issue : e.issues()) err << "  " << issue << '\n';
        return 2;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConstraintError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const LiquidityError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
#ifdef LOOPY_HAVE_FETCH
    } catch (const NotFoundError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
#endif
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace loopy::cli
