#pragma once

// Market history ingestion from a GraphQL market API and a staking-rate
// subgraph. Field mappings are documented in docs/data-sources.md.

#include "loopy/data.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace loopy {

inline constexpr const char* kDefaultMarketEndpoint = "https://api.morpho.org/graphql";

// The endpoint does not know a requested market id.
class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Transport, HTTP status or GraphQL error, after retries were exhausted.
class FetchError : public std::runtime_error {
public:
    FetchError(const std::string& what, int status, std::optional<double> retry_after_seconds)
        : std::runtime_error(what), status_(status), retry_after_(retry_after_seconds) {}

    int status() const noexcept { return status_; }
    std::optional<double> retry_after_seconds() const noexcept { return retry_after_; }

private:
    int status_;
    std::optional<double> retry_after_;
};

struct FetchRequest {
    std::string endpoint = kDefaultMarketEndpoint;
    std::string chain = "ethereum";
    std::vector<std::string> market_ids;
    Timestamp start = 0;
    Timestamp end = 0;  // exclusive
    std::int64_t cadence_seconds = 3600;

    // Staking source: a lido-subgraph compatible GraphQL endpoint ("{api_key}"
    // in the URL is substituted), or a constant rate.
    std::string staking_endpoint;
    std::optional<double> constant_staking_rate;
    std::optional<std::string> api_key;

    int parallelism = 4;
    double max_requests_per_second = 4.0;
    std::int64_t chunk_seconds = 7 * 86400;
    int max_retries = 4;
    std::chrono::seconds timeout{30};
    double controller_k_p = 50.0;  // 1/year, attached to the adaptive descriptors

    std::filesystem::path output_dir;

    void validate() const;
};

// Writes a dataset directory that passes load_dataset. Nothing is left at
// output_dir when an error is thrown.
DatasetManifest fetch_market_history(const FetchRequest& request);

}  // namespace loopy
