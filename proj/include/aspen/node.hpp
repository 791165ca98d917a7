#pragma once

// One participant: a full miner node that tracks every channel, or a
// service user that stores, validates and relays only its subscribed
// channels plus every key block. Nodes are run-to-completion message
// handlers; all I/O is returned as outbound messages.

#include <aspen/chain_state.hpp>
#include <aspen/consensus.hpp>

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace aspen {

using NodeId = uint32_t;

enum class NodeRole : uint8_t { kMiner, kServiceUser };

enum class BallotPolicy : uint8_t {
    kNone,          // never vote
    kFirstPending,  // oldest indexed proposal
    kTarget,        // a fixed proposal hash, when indexed
};

struct AdversaryFlags {
    std::set<ServiceNumber> censored_channels;  // never serialized while leading
    bool microblock_forker = false;             // signs two children of one microblock
    bool ballot_suppressor = false;             // never includes a ballot

    bool honest() const { return censored_channels.empty() && !microblock_forker && !ballot_suppressor; }
};

struct NodeConfig {
    NodeId id = 0;
    std::string name;
    NodeRole role = NodeRole::kMiner;
    double hash_power = 0;
    std::set<ServiceNumber> subscribed;  // service users; miners track all channels
    BallotPolicy ballot = BallotPolicy::kFirstPending;
    std::optional<Hash> ballot_target;
    AdversaryFlags adversary;
    size_t mempool_capacity = 4096;  // per channel
    uint64_t key_seed = 0;
    uint64_t fork_choice_seed = 0;
};

// Wire messages.
struct TxMessage {
    ServiceNumber channel;
    Transaction tx;

    auto operator<=>(const TxMessage &) const = default;
};

struct InflowBundle {
    Hash key_block;
    ServiceNumber channel;
    std::vector<InflowProof> proofs;

    auto operator<=>(const InflowBundle &) const = default;
};

struct GetData {
    enum class Kind : uint8_t { kKeyBlock, kMicroBlock, kInflow };
    Kind kind = Kind::kKeyBlock;
    Hash hash;  // key block hash for kKeyBlock and kInflow
    ServiceNumber channel;

    auto operator<=>(const GetData &) const = default;
};

using Message = std::variant<KeyBlock, MicroBlock, TxMessage, InflowBundle, GetData>;

void encode(Encoder &, const TxMessage &);
void decode(Decoder &, TxMessage &);
void encode(Encoder &, const InflowBundle &);
void decode(Decoder &, InflowBundle &);
void encode(Encoder &, const GetData &);
void decode(Decoder &, GetData &);
void encode(Encoder &, const Message &);
void decode(Decoder &, Message &);

// Channel a message belongs to; none for key blocks and key block requests.
std::optional<ServiceNumber> message_channel(const Message &msg);
Hash message_id(const Message &msg);
size_t message_bytes(const Message &msg);

struct PeerInfo {
    NodeId id = 0;
    bool full = false;
    std::set<ServiceNumber> subscribed;

    bool wants(ServiceNumber c) const { return full || subscribed.contains(c); }
};

struct Outbound {
    NodeId to = 0;
    Message msg;
};

// Observations reported to the simulator.
struct NodeEvent {
    enum class Kind : uint8_t {
        kTxConfirmed,      // tx confirmed by key block `block` on the new tip chain
        kTxSerialized,     // tx entered this node's view of the current epoch
        kPoisonSubmitted,  // node reported a microblock fork by `subject`
        kInvalidBlock,     // rejected key block `block`
        kReorg,            // tip moved off the previous chain; `depth` blocks undone
    };
    Kind kind;
    Hash block;
    Hash tx;
    ServiceNumber channel;
    uint64_t height = 0;
    uint64_t depth = 0;
    PublicKey subject;
    TimeUs time_us = 0;
};

class NotLeader : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Raised by partial sync when the served chain does not verify. The node
// is left untouched.
class BadChain : public std::runtime_error {
public:
    BadChain(const Hash &block, const std::string &what) : std::runtime_error(what), block_(block) {}
    const Hash &block() const { return block_; }

private:
    Hash block_;
};

struct AuditResult {
    bool ok = true;
    Hash block;  // first block whose replayed state differs
    std::string detail;
};

// Everything a node has accepted for storage, in arrival order.
struct StoredData {
    std::vector<Hash> keyblock_order;
    std::map<Hash, KeyBlock> keyblocks;
    std::map<ServiceNumber, std::vector<Hash>> microblock_order;
    MapEpochData data;
    std::map<ServiceNumber, std::vector<std::pair<Hash, ServiceNumber>>> bundle_order;
    uint64_t bytes = 0;
};

class Node {
public:
    Node(NodeConfig config, const ChainParams &params);

    const NodeConfig &config() const { return config_; }
    const ChainParams &params() const { return params_; }
    const KeyPair &keys() const { return keys_; }
    NodeId id() const { return config_.id; }
    bool is_full() const { return config_.role == NodeRole::kMiner; }
    bool subscribes(ServiceNumber c) const { return is_full() || tracking_.subscribed.contains(c); }
    const Tracking &tracking() const { return tracking_; }
    void set_peers(std::vector<PeerInfo> peers) { peers_ = std::move(peers); }
    const std::vector<PeerInfo> &peers() const { return peers_; }

    std::vector<Outbound> on_message(NodeId from, const Message &msg, TimeUs now);
    // Transaction handed to this node by a local client.
    std::vector<Outbound> submit_tx(const TxMessage &tx, TimeUs now);

    // Leader duties.
    bool is_leader() const;
    MicroBlock assemble_microblock(ServiceNumber channel, TimeUs now);
    std::vector<Outbound> on_microblock_timer(ServiceNumber channel, TimeUs now);
    // Key block on the current tip, sealed but not yet processed.
    KeyBlock assemble_key_block(TimeUs now) const;
    // Assembles, self-validates and announces a key block.
    std::vector<Outbound> mine(TimeUs now);
    // Announces the current tip to every peer.
    std::vector<Outbound> announce_tip() const;

    // Chain and state.
    const ChainView &view() const { return view_; }
    const Hash &tip() const { return view_.tip(); }
    const LedgerState &tip_state() const { return states_.at(view_.tip()); }
    const LedgerState *state_at(const Hash &block) const;
    const std::map<Hash, LedgerState> &states() const { return states_; }
    // Channel state including microblocks of the running epoch.
    const ChannelState *epoch_state(ServiceNumber c) const;
    const EpochEffects *epoch_effects(ServiceNumber c) const;
    const std::vector<Hash> *epoch_chain(ServiceNumber c) const;
    size_t mempool_size(ServiceNumber c) const;
    std::vector<Transaction> mempool_snapshot(ServiceNumber c) const;

    uint64_t storage_bytes() const { return store_.bytes; }
    const StoredData &store() const { return store_; }
    // Stored data may be altered to exercise audit.
    StoredData &store_for_testing() { return store_; }

    // Rebuilds the node from a served chain. `chain` runs from genesis to
    // the peer's tip; only subscribed channel data is read from `data`.
    void partial_sync(const std::vector<KeyBlock> &chain, const EpochData &data);
    void sync_from(const Node &peer);

    // Replays the current chain from genesis out of stored data and compares
    // every state with the incrementally maintained one.
    AuditResult audit() const;

    std::vector<NodeEvent> take_events() { return std::exchange(events_, {}); }
    uint64_t invalid_blocks() const { return invalid_.size(); }

private:
    struct MempoolEntry {
        Transaction tx;
        size_t bytes = 0;
        uint64_t seq = 0;
    };
    struct Epoch {
        Hash block;
        std::map<ServiceNumber, ChannelState> states;
        std::map<ServiceNumber, EpochEffects> effects;
        std::map<ServiceNumber, std::vector<Hash>> chain;
        std::set<Hash> included;  // tx hashes serialized this epoch
    };

    void store_keyblock(const Hash &h, const KeyBlock &kb);
    bool store_microblock(const Hash &h, const MicroBlock &mb);
    bool store_bundle(const InflowBundle &bundle);

    std::vector<Outbound> on_keyblock(NodeId from, const KeyBlock &kb, TimeUs now);
    std::vector<Outbound> on_microblock(NodeId from, const MicroBlock &mb, TimeUs now);
    std::vector<Outbound> on_tx(NodeId from, const TxMessage &tx, TimeUs now);
    std::vector<Outbound> on_bundle(NodeId from, const InflowBundle &bundle, TimeUs now);
    std::vector<Outbound> on_getdata(NodeId from, const GetData &req) const;

    // Validates pending key blocks whose data is complete, then updates the tip.
    std::vector<Outbound> progress(TimeUs now);
    void set_tip(const Hash &new_tip, TimeUs now);
    void rebuild_epoch();
    bool extend_epoch(ServiceNumber c, const MicroBlock &mb);
    void extend_epoch_from_store(ServiceNumber c);
    void connect_block(const Hash &h, TimeUs now);
    void disconnect_block(const Hash &h);

    bool admit_to_mempool(const TxMessage &tx, const Hash &txid);
    void evict(ServiceNumber c, const Hash &txid);
    std::optional<Hash> choose_ballot(const LedgerState &parent) const;

    void relay(std::vector<Outbound> &out, const Message &msg, std::optional<NodeId> except) const;
    std::vector<Outbound> request_missing(const Hash &kb_hash, const MissingData &missing, NodeId hint,
                                          TimeUs now);
    std::vector<Outbound> report_fork(const PoisonEvidence &evidence, TimeUs now);

    NodeConfig config_;
    ChainParams params_;
    KeyPair keys_;
    Tracking tracking_;
    std::vector<PeerInfo> peers_;

    ChainView view_;
    std::map<Hash, LedgerState> states_;
    std::map<Hash, std::vector<std::pair<ServiceNumber, Transaction>>> confirmed_;
    StoredData store_;
    std::set<Hash> pending_;  // stored key blocks not yet validated
    std::set<Hash> invalid_;
    std::map<Hash, TimeUs> requested_;
    std::map<Hash, NodeId> source_;  // first peer that delivered a key block

    Epoch epoch_;
    EpochContext epoch_ctx_;
    std::map<Hash, std::vector<Hash>> children_by_prev_;  // stored microblocks by prev

    std::map<ServiceNumber, std::map<Hash, MempoolEntry>> mempool_;
    std::set<Hash> seen_txs_;
    uint64_t seq_ = 0;
    MicroForkDetector fork_detector_;
    std::set<Hash> reported_epochs_;
    // Epoch and channel in which this forking leader already equivocated.
    std::set<std::pair<Hash, ServiceNumber>> forked_;

    std::vector<NodeEvent> events_;
    TimeUs now_ = 0;
};

}  // namespace aspen
