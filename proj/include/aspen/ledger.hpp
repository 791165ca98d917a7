#pragma once

// Per-channel transaction validity and state transitions, plus the
// bookkeeping that moves funding-pore outputs from the payment channel into
// their destination channels.

#include <aspen/codec.hpp>
#include <aspen/merkle.hpp>
#include <aspen/types.hpp>
#include <aspen/verdict.hpp>

#include <map>
#include <set>

namespace aspen {

enum class LedgerErrc {
    kOk,
    kUnknownInput,
    kDoubleSpend,
    kWrongChannel,
    kBadSignature,
    kOverSize,
    kBadBalance,
    kUnknownChannel,
    kFeeTooLow,
    kImmature,
    kMalformed,
    kStaleTip,
    kBadProof,
    kDuplicateInflow,
    kBadEvidence,
    kStaleEvidence,
};

const char *to_string(LedgerErrc code);

using LedgerVerdict = Verdict<LedgerErrc>;
using LedgerError = ProtocolError<LedgerErrc>;

struct Coin {
    Output output;
    uint64_t height = 0;  // key block height at which the coin became spendable state
    bool coinbase = false;

    auto operator<=>(const Coin &) const = default;
};

struct InflowRecord {
    uint64_t height = 0;
    OutPoint outpoint;
    Output output;

    auto operator<=>(const InflowRecord &) const = default;
};

struct ChannelState {
    ServiceNumber channel;
    std::map<OutPoint, Coin> utxo;
    std::set<OutPoint> spent;
    std::vector<InflowRecord> inflow_log;
    Hash tip;
    TimeUs tip_time_us = 0;

    Amount total_value() const;

    auto operator<=>(const ChannelState &) const = default;
};

void encode(Encoder &, const Coin &);
void decode(Decoder &, Coin &);
void encode(Encoder &, const InflowRecord &);
void decode(Decoder &, InflowRecord &);
void encode(Encoder &, const ChannelState &);
void decode(Decoder &, ChannelState &);

// A funding-pore output waiting to be credited to its destination channel.
struct PendingInflow {
    OutPoint outpoint;
    Output output;

    auto operator<=>(const PendingInflow &) const = default;
};

struct InflowProof {
    OutPoint outpoint;
    Output output;
    MerkleProof proof;

    auto operator<=>(const InflowProof &) const = default;
};

void encode(Encoder &, const PendingInflow &);
void decode(Decoder &, PendingInflow &);
void encode(Encoder &, const InflowProof &);
void decode(Decoder &, InflowProof &);

Hash inflow_leaf_hash(const OutPoint &outpoint, const Output &output);

// Minimal record of a key block on the chain a state was derived from.
struct KeyBlockRecord {
    Hash hash;
    uint64_t height = 0;
    PublicKey miner;
    Hash coinbase_hash;
    CoinbaseTx coinbase;

    auto operator<=>(const KeyBlockRecord &) const = default;
};

// A validated poison transaction: revoke the coinbase of `accused`.
struct PoisonRecord {
    Hash accused_block;
    PublicKey reporter;

    auto operator<=>(const PoisonRecord &) const = default;
};

// Read-only chain facts needed to judge transactions of one epoch.
struct ChainContext {
    const ChainParams *params = nullptr;
    Hash epoch_hash;             // key block opening the epoch
    uint64_t epoch_height = 0;   // its height
    PublicKey leader;            // its miner
    const std::set<ServiceNumber> *active_channels = nullptr;
    const std::map<Hash, KeyBlockRecord> *chain_blocks = nullptr;  // key blocks on this chain
    const std::set<Hash> *revoked = nullptr;
};

// Side effects of confirmed microblocks that outlive the channel state.
struct EpochEffects {
    Amount fees = 0;
    size_t tx_count = 0;
    std::vector<PendingInflow> pore_outputs;
    std::vector<PoisonRecord> poisons;
    std::vector<std::pair<Hash, RegistrationTx>> registrations;

    auto operator<=>(const EpochEffects &) const = default;
};

// Structural check shared with governance.
enum class RegistrationIssue { kNone, kEmpty, kDuplicateServiceNumber, kMalformedDescriptor };
RegistrationIssue registration_issue(const RegistrationTx &reg);

// Evidence checks for a poison transaction serialized in the epoch described
// by `ctx`. `pending` holds poisons already accepted earlier in that epoch.
LedgerVerdict check_poison_evidence(const PoisonEvidence &evidence, const ChainContext &ctx,
                                    const EpochEffects *pending = nullptr);

LedgerVerdict validate_tx(const Transaction &tx, const ChannelState &state, const ProtocolDescriptor &proto,
                          const ChainContext &ctx, const EpochEffects *pending = nullptr);

LedgerVerdict validate_funding_pore(const Transaction &tx, const ChannelState &state,
                                    const std::set<ServiceNumber> &active_channels, const ChainParams &params,
                                    const ProtocolDescriptor &proto, const ChainContext &ctx);

// Applies one transaction that already passed validate_tx.
void apply_tx(const Transaction &tx, ChannelState &state, uint64_t epoch_height, EpochEffects &effects);

// Validates every transaction in order and returns the successor state;
// throws LedgerError and leaves `state` untouched on any violation.
ChannelState apply_microblock(const MicroBlock &mb, const ChannelState &state, const ProtocolDescriptor &proto,
                              const ChainContext &ctx, EpochEffects &effects);

// Same contract as apply_microblock but mutates `state`, restoring it
// exactly before throwing.
void apply_microblock_in_place(const MicroBlock &mb, ChannelState &state, const ProtocolDescriptor &proto,
                               const ChainContext &ctx, EpochEffects &effects);

// Structural microblock checks that do not need channel state.
LedgerVerdict check_microblock_shape(const MicroBlock &mb, const ProtocolDescriptor &proto);

ChannelState credit_inflows(const ChannelState &state, std::span<const InflowProof> proofs, const Hash &commitment_root,
                            uint64_t height);

std::map<ServiceNumber, Hash> build_inflow_commitment(std::span<const PendingInflow> pending);

// Proofs for every pending output destined to `channel`, in commitment order.
std::vector<InflowProof> build_inflow_proofs(std::span<const PendingInflow> pending, ServiceNumber channel);

// True when `proofs` covers every leaf of its tree exactly once, in order.
bool inflow_proofs_complete(std::span<const InflowProof> proofs);

Hash microblock_tx_root(std::span<const Transaction> txs);

}  // namespace aspen
