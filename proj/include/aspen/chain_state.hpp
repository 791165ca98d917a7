#pragma once

// State of the ledger as of one key block: the tracked channel states,
// governance, revocations and the chain facts that later epochs consult.
// apply_key_block is the single transition function shared by mining,
// relay validation, partial sync and audit.

#include <aspen/consensus.hpp>
#include <aspen/governance.hpp>
#include <aspen/ledger.hpp>
#include <aspen/rewards.hpp>

#include <map>
#include <set>

namespace aspen {

// Which channels a node keeps state for. A full node tracks every active
// channel; a service user tracks its subscriptions (always including the
// registration channel) that are active.
struct Tracking {
    bool all = true;
    std::set<ServiceNumber> subscribed;

    static Tracking full() { return {}; }
    static Tracking channels(std::set<ServiceNumber> subscribed);

    bool wants(ServiceNumber c) const { return all || subscribed.contains(c); }

    auto operator<=>(const Tracking &) const = default;
};

struct LedgerState {
    Hash block;
    uint64_t height = 0;
    TimeUs time_us = 0;
    PublicKey miner;
    uint64_t work = 0;
    Tracking tracking;
    std::map<ServiceNumber, ChannelState> channels;  // tracked and active
    GovernanceState governance;
    RewardState rewards;
    std::map<Hash, KeyBlockRecord> chain_blocks;  // every key block on this chain
    Amount minted = 0;                            // genesis allocation plus subsidies

    bool tracks(ServiceNumber c) const { return channels.contains(c); }
    std::set<ServiceNumber> tracked_channels() const;

    auto operator<=>(const LedgerState &) const = default;
};

// Canonical bytes of the parts two honest nodes must agree on.
void encode(Encoder &, const LedgerState &);

LedgerState genesis_state(const KeyBlock &genesis, const ChainParams &params, const Tracking &tracking);

// Off-chain data a key block depends on.
class EpochData {
public:
    virtual ~EpochData() = default;
    virtual const MicroBlock *microblock(const Hash &hash) const = 0;
    // Inflow proofs for `channel` committed by key block `key_block`.
    virtual const std::vector<InflowProof> *inflow_bundle(const Hash &key_block, ServiceNumber channel) const = 0;
};

// EpochData over plain maps, used by stores and tests.
class MapEpochData final : public EpochData {
public:
    std::map<Hash, MicroBlock> microblocks;
    std::map<std::pair<Hash, ServiceNumber>, std::vector<InflowProof>> bundles;

    void add(const MicroBlock &mb);
    const MicroBlock *microblock(const Hash &hash) const override;
    const std::vector<InflowProof> *inflow_bundle(const Hash &key_block, ServiceNumber channel) const override;
};

struct MissingData {
    std::vector<std::pair<ServiceNumber, Hash>> microblocks;
    std::vector<ServiceNumber> bundles;

    bool empty() const { return microblocks.empty() && bundles.empty(); }
};

// Data that must be fetched before apply_key_block can reach a verdict.
MissingData missing_data(const KeyBlock &kb, const LedgerState &parent, const EpochData &data);

// What a key block confirmed, for metrics and mempool maintenance.
struct EpochOutcome {
    std::map<ServiceNumber, std::vector<Hash>> microblocks;  // in chain order
    std::map<ServiceNumber, EpochEffects> effects;
    std::map<ServiceNumber, std::vector<InflowProof>> inflows;
    std::vector<Hash> revoked_blocks;
};

// Validates `kb` as the successor of `parent` and returns the new state.
// Throws ConsensusError; kMissingData when data is unavailable.
LedgerState apply_key_block(const KeyBlock &kb, const LedgerState &parent, const EpochData &data,
                            const ChainParams &params, EpochOutcome *outcome = nullptr);

ConsensusVerdict validate_key_block(const KeyBlock &kb, const LedgerState &parent, const EpochData &data,
                                    const ChainParams &params);

// Context for transactions of the epoch opened by the key block of `state`.
// Holds pointers into itself and into the state, so it is filled in place.
struct EpochContext {
    std::set<ServiceNumber> active;
    ChainContext ctx;

    EpochContext() = default;
    EpochContext(const EpochContext &) = delete;
    EpochContext &operator=(const EpochContext &) = delete;
};
void fill_epoch_context(EpochContext &out, const LedgerState &state, const ChainParams &params);

// Microblocks from `tail` back to the key block `epoch`, in chain order.
// Throws kMissingData or kBadChannelRef.
std::vector<const MicroBlock *> collect_epoch_chain(const Hash &tail, const Hash &epoch, ServiceNumber channel,
                                                    const EpochData &data);

}  // namespace aspen
