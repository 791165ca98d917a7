#pragma once

// Summaries of a metrics file: per-node storage and traffic, confirmation
// latency per channel, partition convergence and fork counts.

#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aspen {

class StatsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StatsReport {
    struct NodeRow {
        std::string name;
        std::string role;
        bool live = true;
        uint64_t height = 0;
        uint64_t storage_bytes = 0;
        uint64_t key_blocks = 0;
        uint64_t messages_sent = 0;
        uint64_t bytes_sent = 0;
        uint64_t blocks_mined = 0;
    };
    struct ChannelLatency {
        uint32_t channel = 0;
        uint64_t count = 0;
        double mean_s = 0;
        double p50_s = 0;
        double p90_s = 0;
        double p99_s = 0;
    };
    struct Partition {
        uint64_t index = 0;
        bool converged = false;
        double convergence_s = 0;
        uint64_t key_blocks_after_heal = 0;
    };
    struct StorageSample {
        double t_s = 0;
        std::string node;
        uint64_t bytes = 0;
    };

    std::vector<NodeRow> nodes;
    std::vector<ChannelLatency> latency;
    std::vector<Partition> partitions;
    std::vector<StorageSample> storage;
    std::vector<std::pair<uint32_t, double>> confirmations;  // channel, latency in seconds
    uint64_t key_blocks = 0;
    uint64_t reorgs = 0;
    uint64_t revocations = 0;
};

// Nearest-rank percentile of an ascending sample; p in (0, 100].
double percentile(const std::vector<double> &sorted, double p);

// Throws StatsError on a line that is not a JSON object.
StatsReport summarize_metrics(std::istream &in);

std::string format_table(const StatsReport &report);
// Tab-separated sections for plotting, each introduced by a "# name" line.
std::string format_columns(const StatsReport &report);

}  // namespace aspen
