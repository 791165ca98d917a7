#pragma once

// Key-block chain management: simulated proof of work, most-work fork
// choice with seeded tie-breaking, the mining lottery, and detection and
// punishment of leaders that fork their own microblock chains.

#include <aspen/ledger.hpp>
#include <aspen/random.hpp>
#include <aspen/rewards.hpp>
#include <aspen/types.hpp>
#include <aspen/verdict.hpp>

#include <map>
#include <optional>
#include <set>

namespace aspen {

enum class ConsensusErrc {
    kOk,
    kBadWork,
    kBadHeight,
    kBadTimestamp,
    kUnknownParent,
    kBadChannelRef,
    kInertChannelListed,
    kTooManyRefs,
    kBadMicroblock,
    kBadInflowCommitment,
    kBadRevocation,
    kBadCoinbase,
    kBadBallot,
    kMissingData,
    kBadEvidence,
    kStaleEvidence,
};

const char *to_string(ConsensusErrc code);
using ConsensusVerdict = Verdict<ConsensusErrc>;
using ConsensusError = ProtocolError<ConsensusErrc>;

// Simulated proof of work: every key block is worth one unit and carries a
// nonce whose block hash has `seal_bits` leading zero bits. The seal only
// makes key blocks tamper evident; winning is decided by mine_next.
bool seal_valid(const KeyBlock &kb, uint32_t seal_bits);
void seal(KeyBlock &kb, uint32_t seal_bits);

KeyBlock make_genesis(const ChainParams &params);

// Key blocks known to a node, all connected to genesis.
class ChainView {
public:
    explicit ChainView(const KeyBlock &genesis);

    const Hash &genesis() const { return genesis_; }
    const Hash &tip() const { return tip_; }
    void set_tip(const Hash &h);

    bool contains(const Hash &h) const { return blocks_.contains(h); }
    const KeyBlock &block(const Hash &h) const { return blocks_.at(h); }
    uint64_t cumulative_work(const Hash &h) const { return work_.at(h); }
    const std::set<Hash> &children(const Hash &h) const;
    size_t size() const { return blocks_.size(); }

    // Inserts a block whose parent is present. Throws kUnknownParent.
    void add(const KeyBlock &kb);

    std::vector<Hash> leaves() const;
    // Hashes from genesis to `h`, inclusive.
    std::vector<Hash> path_from_genesis(const Hash &h) const;
    Hash common_ancestor(const Hash &a, const Hash &b) const;
    bool is_ancestor(const Hash &ancestor, const Hash &h) const;

private:
    Hash genesis_;
    Hash tip_;
    std::map<Hash, KeyBlock> blocks_;
    std::map<Hash, std::set<Hash>> children_;
    std::map<Hash, uint64_t> work_;
};

// Leaf with maximum cumulative work; ties are resolved uniformly by a
// generator seeded from `rng_seed` and the tied candidate set.
Hash fork_choice(const ChainView &view, uint64_t rng_seed);

struct MineDraw {
    size_t winner = 0;
    double interval = 0;  // simulated seconds
};

// Winner proportional to hash power, exponential interval with the given
// mean. Throws std::invalid_argument when total power is not positive.
MineDraw mine_next(std::span<const double> hash_power, double mean_interval, Rng &rng);

// Returns evidence iff two distinct headers share (channel, prev, leader).
std::optional<PoisonEvidence> detect_microblock_fork(std::span<const SignedMicroHeader> headers);

// Streaming form used by nodes.
class MicroForkDetector {
public:
    std::optional<PoisonEvidence> observe(const SignedMicroHeader &h);
    void clear() { first_seen_.clear(); }

private:
    struct Key {
        ServiceNumber channel;
        Hash prev;
        PublicKey leader;
        auto operator<=>(const Key &) const = default;
    };
    std::map<Key, SignedMicroHeader> first_seen_;
};

struct RewardState {
    std::set<Hash> revoked;  // key blocks whose miner coinbase was revoked
    Amount burned = 0;
    Amount credited = 0;

    auto operator<=>(const RewardState &) const = default;
};

// Outputs removed from circulation by a revocation.
struct RevokedOutput {
    OutPoint outpoint;
    Output output;
};

std::vector<RevokedOutput> revoked_outputs(const KeyBlockRecord &accused);

// Checks evidence against the chain and records the revocation of the
// accused epoch's coinbase, crediting `reporter` the whistleblower share.
// `revoking_height` is the height of the key block enacting it.
RewardState apply_poison(const PoisonEvidence &evidence, const PublicKey &reporter, const RewardState &state,
                         const std::map<Hash, KeyBlockRecord> &chain_blocks, uint64_t revoking_height,
                         const ChainParams &params);

// Shared by apply_poison and key block application once evidence has been
// judged: checks the revocation window, marks the epoch revoked and returns
// the whistleblower credits owed by the enacting coinbase.
std::vector<WhistleblowerCredit> enact_revocation(const Revocation &rev, RewardState &state,
                                                  const std::map<Hash, KeyBlockRecord> &chain_blocks,
                                                  uint64_t revoking_height, const ChainParams &params);

}  // namespace aspen
