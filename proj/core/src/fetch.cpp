#include "loopy/fetch.hpp"

#include "loopy/duration.hpp"
#include "loopy/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <unistd.h>

namespace loopy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMarketQuery = R"(query MarketHistory($id: String!, $start: Int!, $end: Int!, $interval: TimeseriesInterval!) {
  market(id: $id) {
    uniqueKey
    lltv
    creationTimestamp
    loanAsset { decimals }
    historicalState {
      supplyAssets(options: {startTimestamp: $start, endTimestamp: $end, interval: $interval}) { x y }
      borrowAssets(options: {startTimestamp: $start, endTimestamp: $end, interval: $interval}) { x y }
      borrowApy(options: {startTimestamp: $start, endTimestamp: $end, interval: $interval}) { x y }
      rateAtUTarget(options: {startTimestamp: $start, endTimestamp: $end, interval: $interval}) { x y }
    }
  }
})";

constexpr const char* kStakingQuery = R"(query StakingApr($start: Int!, $end: Int!, $skip: Int!) {
  totalRewards(first: 1000, skip: $skip, orderBy: blockTime, orderDirection: asc,
               where: {blockTime_gte: $start, blockTime_lt: $end}) { apr blockTime }
})";

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Url split_url(std::string url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw DomainError("endpoint must include a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

// Spaces request starts at least 1/rate apart across all workers.
class RateLimiter {
public:
    explicit RateLimiter(double per_second)
        : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(1.0 / per_second))) {}

    void acquire() {
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard lock(mu_);
            const auto now = std::chrono::steady_clock::now();
            slot = std::max(now, next_);
            next_ = slot + interval_;
        }
        std::this_thread::sleep_until(slot);
    }

private:
    std::mutex mu_;
    std::chrono::steady_clock::duration interval_;
    std::chrono::steady_clock::time_point next_{};
};

std::optional<double> retry_after(const httplib::Result& res) {
    if (!res || !res->has_header("Retry-After")) return std::nullopt;
    try {
        return std::stod(res->get_header_value("Retry-After"));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

class GraphQlClient {
public:
    GraphQlClient(const std::string& endpoint, const FetchRequest& req, RateLimiter& limiter,
                  std::optional<std::string> bearer)
        : url_(split_url(endpoint)), req_(req), limiter_(limiter), bearer_(std::move(bearer)) {}

    json post(const std::string& query, const json& variables) {
        httplib::Client cli(url_.origin);
        cli.set_connection_timeout(req_.timeout);
        cli.set_read_timeout(req_.timeout);
        httplib::Headers headers{{"Accept", "application/json"}};
        if (bearer_) headers.emplace("Authorization", "Bearer " + *bearer_);
        const std::string body = json{{"query", query}, {"variables", variables}}.dump();

        double backoff = 1.0;
        for (int attempt = 0;; ++attempt) {
            limiter_.acquire();
            auto res = cli.Post(url_.path, headers, body, "application/json");
            if (!res) {
                if (attempt < req_.max_retries) {
                    sleep_for(backoff);
                    backoff *= 2.0;
                    continue;
                }
                throw FetchError(url_.origin + ": " + httplib::to_string(res.error()), 0, std::nullopt);
            }
            if (res->status == 429 || res->status == 503) {
                const auto wait = retry_after(res);
                if (attempt < req_.max_retries) {
                    sleep_for(wait.value_or(backoff));
                    backoff *= 2.0;
                    continue;
                }
                throw FetchError(url_.origin + ": HTTP " + std::to_string(res->status) + " after retries", res->status, wait);
            }
            if (res->status == 404) throw NotFoundError(url_.origin + url_.path + ": HTTP 404");
            if (res->status != 200) {
                throw FetchError(url_.origin + ": HTTP " + std::to_string(res->status), res->status, retry_after(res));
            }
            json doc;
            try {
                doc = json::parse(res->body);
            } catch (const json::exception& e) {
                throw FetchError(url_.origin + ": invalid JSON response: " + e.what(), res->status, std::nullopt);
            }
            if (doc.contains("errors") && !doc["errors"].empty()) {
                const json& err = doc["errors"][0];
                const std::string message = err.value("message", "GraphQL error");
                const std::string code = err.contains("extensions") ? err["extensions"].value("code", "") : "";
                if (code == "NOT_FOUND" || message.find("not found") != std::string::npos ||
                    message.find("No results") != std::string::npos) {
                    throw NotFoundError(message);
                }
                throw FetchError(url_.origin + ": " + message, res->status, std::nullopt);
            }
            return doc.value("data", json::object());
        }
    }

private:
    static void sleep_for(double seconds) {
        std::this_thread::sleep_for(std::chrono::duration<double>(std::max(0.0, seconds)));
    }

    Url url_;
    const FetchRequest& req_;
    RateLimiter& limiter_;
    std::optional<std::string> bearer_;
};

double as_number(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return std::stod(v.get<std::string>());
    throw FetchError("unexpected value type in response", 200, std::nullopt);
}

using Points = std::map<Timestamp, double>;

struct MarketHistory {
    std::string unique_key;
    double lltv = 0.0;
    Timestamp creation = 0;
    int decimals = 18;
    Points supplied, borrowed, borrow_apy, rate_at_target;
};

void merge_points(const json& arr, Points& into) {
    if (!arr.is_array()) return;
    for (const auto& p : arr) {
        if (p.at("y").is_null()) continue;
        into[static_cast<Timestamp>(as_number(p.at("x")))] = as_number(p.at("y"));
    }
}

struct Chunk {
    std::size_t market = 0;
    Timestamp start = 0;
    Timestamp end = 0;
};

std::string interval_name(std::int64_t cadence) {
    if (cadence == 3600) return "HOUR";
    if (cadence == 86400) return "DAY";
    throw DomainError("fetch cadence must be 1h or 1d");
}

std::string substitute_key(std::string url, const std::optional<std::string>& key) {
    const std::string token = "{api_key}";
    const auto pos = url.find(token);
    if (pos != std::string::npos) {
        if (!key) throw DomainError("staking endpoint needs an API key");
        url.replace(pos, token.size(), *key);
    }
    return url;
}

std::vector<std::pair<Timestamp, double>> fetch_staking(const FetchRequest& req, RateLimiter& limiter) {
    if (req.constant_staking_rate) return {{req.start, *req.constant_staking_rate}};
    const bool key_in_url = req.staking_endpoint.find("{api_key}") != std::string::npos;
    GraphQlClient client(substitute_key(req.staking_endpoint, req.api_key), req, limiter,
                         key_in_url ? std::nullopt : req.api_key);
    // Rewards are reported daily; look back far enough to cover the start.
    const Timestamp from = req.start - 7 * 86400;
    std::vector<std::pair<Timestamp, double>> rows;
    for (int skip = 0;; skip += 1000) {
        const json data = client.post(kStakingQuery, {{"start", from}, {"end", req.end}, {"skip", skip}});
        const json& items = data.at("totalRewards");
        for (const auto& it : items) {
            rows.emplace_back(static_cast<Timestamp>(as_number(it.at("blockTime"))), as_number(it.at("apr")) / 100.0);
        }
        if (items.size() < 1000) break;
    }
    // Keep the last value at or before the start, then everything inside the range.
    std::vector<std::pair<Timestamp, double>> out;
    for (const auto& r : rows) {
        if (r.first <= req.start) {
            out = {r};
        } else {
            out.push_back(r);
        }
    }
    if (out.empty() || out.front().first > req.start) {
        throw FetchError("staking source has no record at or before " + format_timestamp(req.start), 200, std::nullopt);
    }
    out.front().first = req.start;
    return out;
}

std::string date_only(Timestamp t) { return format_timestamp(t).substr(0, 10); }

}  // namespace

void FetchRequest::validate() const {
    if (market_ids.empty()) throw DomainError("at least one market id is required");
    if (end <= start) throw DomainError("fetch range end must be after start");
    interval_name(cadence_seconds);
    if (staking_endpoint.empty() && !constant_staking_rate) {
        throw DomainError("a staking endpoint or a constant staking rate is required");
    }
    if (constant_staking_rate && !(*constant_staking_rate >= 0.0)) throw DomainError("staking rate must be non-negative");
    if (parallelism < 1) throw DomainError("parallelism must be at least 1");
    if (!(max_requests_per_second > 0.0)) throw DomainError("request rate must be positive");
    if (chunk_seconds < cadence_seconds) throw DomainError("chunk must cover at least one interval");
    if (max_retries < 0) throw DomainError("max_retries must be non-negative");
    if (output_dir.empty()) throw DomainError("output directory is required");
}

DatasetManifest fetch_market_history(const FetchRequest& req) {
    req.validate();
    if (fs::exists(req.output_dir) && !fs::is_empty(req.output_dir) && !fs::exists(req.output_dir / "manifest.json")) {
        throw DomainError(req.output_dir.string() + " exists and is not a dataset directory");
    }

    RateLimiter limiter(req.max_requests_per_second);
    const std::string interval = interval_name(req.cadence_seconds);

    std::vector<Chunk> chunks;
    for (std::size_t i = 0; i < req.market_ids.size(); ++i) {
        for (Timestamp t = req.start; t < req.end; t += req.chunk_seconds) {
            // endTimestamp is inclusive on the API side.
            chunks.push_back({i, t, std::min(req.end, t + req.chunk_seconds) - 1});
        }
    }

    std::vector<MarketHistory> history(req.market_ids.size());
    std::vector<std::mutex> locks(req.market_ids.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;

    auto worker = [&] {
        GraphQlClient client(req.endpoint, req, limiter, req.api_key);
        while (!failed) {
            const std::size_t c = next++;
            if (c >= chunks.size()) return;
            const Chunk& ch = chunks[c];
            try {
                const json data = client.post(kMarketQuery, {{"id", req.market_ids[ch.market]},
                                                             {"start", ch.start},
                                                             {"end", ch.end},
                                                             {"interval", interval}});
                const json& m = data.contains("market") ? data["market"] : json();
                if (m.is_null()) throw NotFoundError("unknown market id " + req.market_ids[ch.market]);
                std::lock_guard lock(locks[ch.market]);
                MarketHistory& h = history[ch.market];
                h.unique_key = m.value("uniqueKey", "");
                if (m.contains("lltv") && !m["lltv"].is_null()) h.lltv = as_number(m["lltv"]) / 1e18;
                if (m.contains("creationTimestamp") && !m["creationTimestamp"].is_null()) {
                    h.creation = static_cast<Timestamp>(as_number(m["creationTimestamp"]));
                }
                if (m.contains("loanAsset") && m["loanAsset"].contains("decimals")) {
                    h.decimals = static_cast<int>(as_number(m["loanAsset"]["decimals"]));
                }
                const json& hs = m.at("historicalState");
                merge_points(hs.value("supplyAssets", json()), h.supplied);
                merge_points(hs.value("borrowAssets", json()), h.borrowed);
                merge_points(hs.value("borrowApy", json()), h.borrow_apy);
                merge_points(hs.value("rateAtUTarget", json()), h.rate_at_target);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };

    const int workers = std::min<int>(req.parallelism, static_cast<int>(chunks.size()));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);

    const auto staking = fetch_staking(req, limiter);

    SnapshotSeries series;
    series.cadence_seconds = req.cadence_seconds;
    std::vector<Gap> gaps;
    std::vector<std::map<Timestamp, MarketSnapshot>> rows(history.size());
    for (std::size_t i = 0; i < history.size(); ++i) {
        const MarketHistory& h = history[i];
        if (!(h.lltv > 0.0 && h.lltv < 1.0)) throw FetchError("market " + req.market_ids[i] + ": missing lltv", 200, std::nullopt);
        const double scale = std::pow(10.0, h.decimals);
        std::optional<Timestamp> last;
        bool missing = false;
        for (Timestamp t = req.start; t < req.end; t += req.cadence_seconds) {
            const auto s = h.supplied.find(t);
            const auto b = h.borrowed.find(t);
            const auto r = h.borrow_apy.find(t);
            if (s == h.supplied.end() || b == h.borrowed.end() || r == h.borrow_apy.end() || s->second <= 0.0) {
                missing = true;
                continue;
            }
            if (missing) gaps.push_back({req.market_ids[i], last.value_or(req.start), t});
            missing = false;
            last = t;
            MarketSnapshot ms;
            ms.supplied = s->second / scale;
            ms.borrowed = b->second / scale;
            ms.observed_borrow_rate = std::log1p(r->second);
            if (const auto rt = h.rate_at_target.find(t); rt != h.rate_at_target.end()) {
                ms.rate_at_target = std::log1p(rt->second);
            }
            rows[i].emplace(t, ms);
        }
        if (missing) gaps.push_back({req.market_ids[i], last.value_or(req.start), req.end});
        if (rows[i].empty()) throw FetchError("market " + req.market_ids[i] + ": no data in range", 200, std::nullopt);

        AdaptiveIrm irm;
        irm.k_p = req.controller_k_p;
        irm.r_target = rows[i].begin()->second.rate_at_target.value_or(irm.r_target);
        irm.t_last = rows[i].begin()->first;
        irm.u_last = rows[i].begin()->second.borrowed / rows[i].begin()->second.supplied;
        series.markets.push_back({req.market_ids[i], h.creation ? date_only(h.creation) : "", h.lltv, irm});
    }

    // Timestamps present in every market; the per-market files keep their own rows.
    std::map<Timestamp, std::size_t> count;
    for (const auto& r : rows) {
        for (const auto& [t, _] : r) ++count[t];
    }
    std::size_t stake = 0;
    for (const auto& [t, c] : count) {
        if (c != rows.size()) continue;
        Snapshot snap;
        snap.timestamp = t;
        while (stake + 1 < staking.size() && staking[stake + 1].first <= t) ++stake;
        snap.staking_rate = staking[stake].second;
        for (const auto& r : rows) snap.markets.push_back(r.at(t));
        series.snapshots.push_back(std::move(snap));
    }

    DatasetManifest manifest = make_manifest(series, req.chain, "fetched");
    manifest.period_start = req.start;
    manifest.period_end = req.end;
    manifest.gaps = gaps;

    const fs::path tmp = req.output_dir.string() + ".partial-" + std::to_string(::getpid());
    fs::remove_all(tmp);
    try {
        // Market files hold every fetched row, not only the joined ones.
        write_dataset(series, manifest, tmp);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::string text = "timestamp,supplied,borrowed,borrow_rate,rate_at_target\n";
            for (const auto& [t, m] : rows[i]) {
                text += std::to_string(t) + ',' + format_number(m.supplied) + ',' + format_number(m.borrowed) + ',' +
                        format_number(m.observed_borrow_rate) + ',' +
                        (m.rate_at_target ? format_number(*m.rate_at_target) : "") + '\n';
            }
            std::ofstream(tmp / manifest.market_files[i], std::ios::trunc) << text;
        }
        std::string text = "timestamp,staking_rate\n";
        for (const auto& [t, s] : staking) text += std::to_string(t) + ',' + format_number(s) + '\n';
        std::ofstream(tmp / manifest.staking_file, std::ios::trunc) << text;
        fs::remove_all(req.output_dir);
        fs::rename(tmp, req.output_dir);
    } catch (...) {
        fs::remove_all(tmp);
        throw;
    }
    return manifest;
}

}  // namespace loopy
