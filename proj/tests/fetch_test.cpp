#include "loopy/duration.hpp"
#include "loopy/errors.hpp"
#include "loopy/fetch.hpp"
#include "support/tmpdir.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <thread>

using namespace loopy;
using nlohmann::json;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

const Timestamp kStart = parse_timestamp("2025-03-01");
constexpr Timestamp kSkipped = 1740805200;  // 2025-03-01T05:00:00Z, absent from the mock

// Local stand-in for the market and staking GraphQL endpoints.
class MockApi {
public:
    std::atomic<int> requests{0};
    std::atomic<int> throttle_first{0};  // answer this many requests with 429

    MockApi() {
        server_.Post("/graphql", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockApi() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/graphql"; }

private:
    void handle(const httplib::Request& req, httplib::Response& res) {
        ++requests;
        if (throttle_first > 0) {
            --throttle_first;
            res.status = 429;
            res.set_header("Retry-After", "0");
            return;
        }
        const json body = json::parse(req.body);
        const json& v = body["variables"];
        const std::string query = body["query"];
        json out;
        if (query.find("totalRewards") != std::string::npos) {
            json items = json::array();
            for (Timestamp t = v["start"].get<Timestamp>(); t < v["end"].get<Timestamp>(); t += 86400) {
                if (v["skip"].get<int>() == 0) items.push_back({{"apr", 3.5}, {"blockTime", std::to_string(t + 3600)}});
            }
            out = {{"data", {{"totalRewards", items}}}};
        } else if (v["id"] == "0xgood") {
            json supply = json::array(), borrow = json::array(), apy = json::array(), target = json::array();
            for (Timestamp t = v["start"].get<Timestamp>(); t <= v["end"].get<Timestamp>(); t += 3600) {
                if (t == kSkipped) continue;
                supply.push_back({{"x", t}, {"y", "2000000000000000000000"}});
                borrow.push_back({{"x", t}, {"y", 1.8e21}});
                apy.push_back({{"x", t}, {"y", 0.05}});
                target.push_back({{"x", t}, {"y", 0.04}});
            }
            out = {{"data",
                    {{"market",
                      {{"uniqueKey", "0xgood"},
                       {"lltv", "945000000000000000"},
                       {"creationTimestamp", 1700000000},
                       {"loanAsset", {{"decimals", 18}}},
                       {"historicalState",
                        {{"supplyAssets", supply}, {"borrowAssets", borrow}, {"borrowApy", apy}, {"rateAtUTarget", target}}}}}}}};
        } else {
            out = {{"data", {{"market", nullptr}}},
                   {"errors", {{{"message", "No results matching given parameters"}, {"extensions", {{"code", "NOT_FOUND"}}}}}}};
        }
        res.set_content(out.dump(), "application/json");
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

FetchRequest request(const MockApi& api, const fs::path& out) {
    FetchRequest r;
    r.endpoint = api.url();
    r.market_ids = {"0xgood"};
    r.start = kStart;
    r.end = kStart + 2 * 86400;
    r.constant_staking_rate = 0.03;
    r.max_requests_per_second = 1000.0;
    r.chunk_seconds = 86400;
    r.parallelism = 2;
    r.output_dir = out;
    return r;
}

bool has_partial(const fs::path& dir) {
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().filename().string().find(".partial-") != std::string::npos) return true;
    }
    return false;
}

}  // namespace

TEST(Fetch, WritesLoadableDataset) {
    MockApi api;
    TempDir tmp;
    const DatasetManifest man = fetch_market_history(request(api, tmp / "ds"));
    EXPECT_EQ(api.requests, 2);  // one chunk per day
    EXPECT_EQ(man.source, "fetched");
    const Dataset ds = load_dataset(tmp / "ds");
    EXPECT_EQ(ds.series.snapshots.size(), 47u);
    EXPECT_EQ(ds.manifest.period_end, kStart + 2 * 86400);
    EXPECT_EQ(ds.series.markets[0].lltv, 0.945);
    EXPECT_EQ(ds.series.markets[0].creation_date, "2023-11-14");
    const MarketSnapshot& ms = ds.series.snapshots[0].markets[0];
    EXPECT_DOUBLE_EQ(ms.supplied, 2000.0);
    EXPECT_DOUBLE_EQ(ms.borrowed, 1800.0);
    EXPECT_DOUBLE_EQ(ms.observed_borrow_rate, std::log1p(0.05));
    EXPECT_DOUBLE_EQ(*ms.rate_at_target, std::log1p(0.04));
    EXPECT_EQ(ds.series.snapshots[0].staking_rate, 0.03);

    // The missing hour is reported, not filled.
    bool reported = false;
    for (const auto& g : ds.gaps) reported = reported || (g.from == kSkipped - 3600 && g.to == kSkipped + 3600);
    EXPECT_TRUE(reported);
    for (const auto& s : ds.series.snapshots) EXPECT_NE(s.timestamp, kSkipped);
    EXPECT_FALSE(has_partial(tmp.path()));
}

TEST(Fetch, UnknownIdWritesNothing) {
    MockApi api;
    TempDir tmp;
    FetchRequest r = request(api, tmp / "ds");
    r.market_ids = {"0xgood", "0xmissing"};
    EXPECT_THROW(fetch_market_history(r), NotFoundError);
    EXPECT_FALSE(fs::exists(tmp / "ds"));
    EXPECT_FALSE(has_partial(tmp.path()));
}

TEST(Fetch, RetriesThrottledRequests) {
    MockApi api;
    api.throttle_first = 2;
    TempDir tmp;
    FetchRequest r = request(api, tmp / "ds");
    r.parallelism = 1;
    fetch_market_history(r);
    EXPECT_EQ(api.requests, 4);
    EXPECT_TRUE(fs::exists(tmp / "ds" / "manifest.json"));
}

TEST(Fetch, GivesUpAfterMaxRetries) {
    MockApi api;
    api.throttle_first = 100;
    TempDir tmp;
    FetchRequest r = request(api, tmp / "ds");
    r.max_retries = 1;
    r.parallelism = 1;
    try {
        fetch_market_history(r);
        FAIL() << "expected FetchError";
    } catch (const FetchError& e) {
        EXPECT_EQ(e.status(), 429);
        ASSERT_TRUE(e.retry_after_seconds().has_value());
        EXPECT_EQ(*e.retry_after_seconds(), 0.0);
    }
    EXPECT_FALSE(fs::exists(tmp / "ds"));
}

TEST(Fetch, StakingFromSubgraph) {
    MockApi api;
    TempDir tmp;
    FetchRequest r = request(api, tmp / "ds");
    r.constant_staking_rate.reset();
    r.staking_endpoint = api.url();
    fetch_market_history(r);
    const Dataset ds = load_dataset(tmp / "ds");
    EXPECT_DOUBLE_EQ(ds.series.snapshots[0].staking_rate, 0.035);
}

TEST(Fetch, RefusesForeignDirectory) {
    MockApi api;
    TempDir tmp;
    fs::create_directories(tmp / "ds");
    std::ofstream(tmp / "ds" / "notes.txt") << "keep me";
    EXPECT_THROW(fetch_market_history(request(api, tmp / "ds")), DomainError);
    EXPECT_TRUE(fs::exists(tmp / "ds" / "notes.txt"));
    EXPECT_EQ(api.requests, 0);
}

TEST(Fetch, ValidatesRequest) {
    FetchRequest r;
    r.output_dir = "x";
    EXPECT_THROW(r.validate(), DomainError);  // no ids
    r.market_ids = {"a"};
    r.start = 10;
    r.end = 5;
    EXPECT_THROW(r.validate(), DomainError);
    r.end = 100000;
    EXPECT_THROW(r.validate(), DomainError);  // no staking source
    r.constant_staking_rate = 0.03;
    r.cadence_seconds = 900;
    EXPECT_THROW(r.validate(), DomainError);
    r.cadence_seconds = 3600;
    EXPECT_NO_THROW(r.validate());
}
