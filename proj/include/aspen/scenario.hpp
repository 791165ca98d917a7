#pragma once

// Simulator input. Scenarios are JSON documents with "version": 1; every
// object rejects keys it does not know. The schema is described in
// docs/scenario.md.

#include <aspen/node.hpp>

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aspen {

class InvalidScenario : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kForever = std::numeric_limits<double>::infinity();

struct NodeSpec {
    std::string name;
    NodeRole role = NodeRole::kMiner;
    double hash_power = 1.0;
    std::set<ServiceNumber> subscribed;
    BallotPolicy ballot = BallotPolicy::kFirstPending;
    std::optional<size_t> ballot_proposal;  // index into proposals, for BallotPolicy::kTarget
    size_t mempool_capacity = 4096;
};

struct TopologySpec {
    enum class Kind { kFull, kRing, kRandom, kExplicit };
    Kind kind = Kind::kFull;
    uint32_t degree = 4;  // kRandom: links drawn per node
    std::vector<std::pair<std::string, std::string>> links;
};

struct LatencySpec {
    double min = 0.05;   // seconds
    double mean = 0.25;  // seconds, >= min
};

// Clients moving value inside one channel among their own wallets.
struct WorkloadSpec {
    std::string name;
    ServiceNumber channel;
    double rate = 0.1;  // transactions per simulated second
    uint32_t wallets = 4;
    Amount funding = 0;  // genesis allocation per wallet in `channel`
    Amount fee_min = 1;
    Amount fee_max = 10;
    uint32_t payload_min = 16;  // service transactions only
    uint32_t payload_max = 64;
    double start = 0;
    double stop = kForever;
    std::vector<std::string> submit_to;  // empty: any live subscriber
};

// Funding pores moving value from a payment-channel workload to the wallets
// of a workload in another channel.
struct PoreSpec {
    std::string name;
    std::string from;  // workload in channel 0
    std::string to;    // workload in the destination channel
    double rate = 0.01;
    Amount amount_min = 100;
    Amount amount_max = 1000;
    Amount fee = 10;
    double start = 0;
    double stop = kForever;
};

struct ProposalSpec {
    double at = 0;
    uint64_t proposer_seed = 0;
    std::vector<ProtocolDescriptor> descriptors;
};

struct AdversarySpec {
    enum class Kind { kCensoringLeader, kMicroblockForker, kDoubleSpender, kBallotSuppressor };
    Kind kind = Kind::kCensoringLeader;
    std::string node;                     // all kinds except double spender
    std::set<ServiceNumber> channels;     // censoring leader
    std::string workload;                 // double spender: wallets it controls
    double rate = 0.05;                   // double spender attempts per second
    bool cross_channel = false;           // double spender: second spend is a funding pore
    ServiceNumber pore_channel{2};        // destination of cross-channel spends
    double start = 0;
    double stop = kForever;
};

struct ChurnSpec {
    std::vector<std::string> nodes;
    double leave_rate = 0;     // departures per node per simulated second
    double mean_downtime = 60;  // seconds
    double start = 0;
    double stop = kForever;
};

struct PartitionSpec {
    double start = 0;
    double heal = 0;  // heal <= start means no partition
    std::vector<std::vector<std::string>> groups;
};

struct DurationSpec {
    std::optional<double> seconds;
    std::optional<uint64_t> key_blocks;
    double settle = 30;  // message drain after the last key block or deadline
};

struct ScenarioConfig {
    ChainParams params;
    std::vector<NodeSpec> nodes;
    TopologySpec topology;
    LatencySpec latency;
    std::vector<WorkloadSpec> workload;
    std::vector<PoreSpec> pores;
    std::vector<ProposalSpec> proposals;
    std::vector<AdversarySpec> adversaries;
    std::vector<ChurnSpec> churn;
    std::vector<PartitionSpec> partitions;
    DurationSpec duration;
    uint64_t seed = 0;

    // Throws InvalidScenario. Fills genesis allocations for funded workloads.
    void validate();
};

// Parses and validates a scenario document. The seed is not part of the
// document; callers set it.
ScenarioConfig parse_scenario(std::string_view json_text);
ScenarioConfig load_scenario(const std::string &path);

// Deterministic key pairs used by the simulator.
KeyPair wallet_keys(const std::string &workload, uint32_t index);
uint64_t node_key_seed(const std::string &node);
// Signed registration for a proposal entry; its hash is the ballot target.
Transaction proposal_tx(const ProposalSpec &spec, size_t index);

}  // namespace aspen
