#pragma once

// Deterministic discrete-event simulation of miners and service users
// exchanging messages over a lossy, partitionable network with churn and
// Byzantine participants. Virtual time only; every random draw comes from a
// stream derived from the scenario seed. The metrics record schema is
// described in docs/metrics.md.

#include <aspen/node.hpp>
#include <aspen/scenario.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace aspen {

// A consistency check failed during a run; indicates a bug, not bad input.
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Independent bookkeeping of every output created and spent along a node's
// winning chain, restricted to the channels the node tracks.
struct SpendAudit {
    uint64_t transactions = 0;
    uint64_t inputs = 0;
    uint64_t double_spends = 0;   // outpoint consumed twice
    uint64_t unknown_inputs = 0;  // outpoint never created on this chain
    uint64_t wrong_channel = 0;   // outpoint spent outside its lock channel
    uint64_t revoked_spends = 0;  // revoked coinbase output spent afterwards
    uint64_t coinbase_lock_mismatches = 0;  // fee output locked away from its source channel

    bool clean() const
    {
        return double_spends == 0 && unknown_inputs == 0 && wrong_channel == 0 && revoked_spends == 0 &&
               coinbase_lock_mismatches == 0;
    }
};

SpendAudit audit_spends(const Node &node);

struct DoubleSpendAttempt {
    OutPoint coin;
    ServiceNumber channel;
    Hash first;
    Hash second;
    bool cross_channel = false;
};

class Simulator {
public:
    // Throws InvalidScenario.
    explicit Simulator(ScenarioConfig scenario);
    ~Simulator();
    Simulator(const Simulator &) = delete;
    Simulator &operator=(const Simulator &) = delete;

    // Runs to the end of the scenario and appends the closing records.
    // Throws InvariantViolation.
    void run();

    const ScenarioConfig &scenario() const { return scenario_; }
    const std::vector<std::string> &metrics() const { return metrics_; }
    std::string metrics_jsonl() const;

    size_t node_count() const { return nodes_.size(); }
    const Node &node(size_t i) const { return *nodes_.at(i); }
    bool live(size_t i) const { return live_.at(i); }
    bool honest(size_t i) const;
    std::optional<size_t> find_node(const std::string &name) const;
    // First honest miner; post-run analyses read the chain it ended on.
    size_t reference_node() const;

    uint64_t key_blocks_mined() const { return mined_; }
    const std::vector<DoubleSpendAttempt> &double_spend_attempts() const { return attempts_; }
    // Transactions handed to nodes by clients: hash -> submission time.
    const std::map<Hash, TimeUs> &submitted() const { return submitted_at_; }

    // Block stores of every node, the metrics and a manifest.
    void write_outputs(const std::filesystem::path &dir, const std::string &scenario_text) const;

private:
    struct Impl;
    ScenarioConfig scenario_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<bool> live_;
    std::vector<std::string> metrics_;
    std::vector<DoubleSpendAttempt> attempts_;
    std::map<Hash, TimeUs> submitted_at_;
    uint64_t mined_ = 0;
    std::unique_ptr<Impl> impl_;
};

// Runs a scenario and returns its metrics records.
std::vector<std::string> run_scenario(const ScenarioConfig &scenario);

}  // namespace aspen
