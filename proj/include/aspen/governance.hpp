#pragma once

// Service integration and maintenance: registration-channel proposals,
// one ballot per key block, tallying over the key blocks since the previous
// bud and activation at bud heights.

#include <aspen/codec.hpp>
#include <aspen/types.hpp>
#include <aspen/verdict.hpp>

#include <map>
#include <optional>
#include <set>

namespace aspen {

enum class GovErrc {
    kOk,
    kDuplicateServiceNumberInProposal,
    kMalformedDescriptor,
    kUnknownProposal,
    kNotBudHeight,
};

const char *to_string(GovErrc code);
using GovError = ProtocolError<GovErrc>;

struct Proposal {
    Hash tx_hash;
    std::vector<ProtocolDescriptor> descriptors;
    PublicKey proposer;
    // Parallel to descriptors: true when the service number was already
    // active when the proposal was indexed.
    std::vector<bool> is_update;
    uint64_t registered_height = 0;

    auto operator<=>(const Proposal &) const = default;
};

struct ActiveProtocol {
    ProtocolDescriptor descriptor;
    uint64_t activation_height = 0;

    auto operator<=>(const ActiveProtocol &) const = default;
};

struct ActivationRecord {
    uint64_t height = 0;
    Hash proposal;
    uint64_t ballots = 0;
    uint64_t window = 0;

    auto operator<=>(const ActivationRecord &) const = default;
};

struct GovernanceState {
    // Descriptor history per channel; the last entry is the active one.
    std::map<ServiceNumber, std::vector<ActiveProtocol>> protocols;
    std::map<Hash, Proposal> proposals;
    std::map<Hash, uint64_t> window_tally;
    uint64_t window_keyblocks = 0;
    std::vector<ActivationRecord> activations;

    static GovernanceState genesis(const ChainParams &params);

    bool is_active(ServiceNumber channel) const { return protocols.contains(channel); }
    std::set<ServiceNumber> active_channels() const;
    const ProtocolDescriptor &active(ServiceNumber channel) const;
    // Descriptor that governs microblocks of the epoch opened at `epoch_height`.
    const ProtocolDescriptor *descriptor_at(ServiceNumber channel, uint64_t epoch_height) const;

    auto operator<=>(const GovernanceState &) const = default;
};

void encode(Encoder &, const GovernanceState &);

bool is_bud_height(const ChainParams &params, uint64_t height);

// Indexes a confirmed registration transaction.
void register_proposal(GovernanceState &gov, const Hash &tx_hash, const RegistrationTx &tx, uint64_t height);

// Counts one key block in the window and its ballot, if any.
void record_ballot(GovernanceState &gov, const std::optional<Hash> &ballot);

// Winner of the closing window, then resets the tallies. A proposal wins
// when its ballots / window key blocks strictly exceed tau; among several,
// the highest tally wins and ties go to the smaller proposal hash.
std::optional<Proposal> tally_at_bud(GovernanceState &gov, const ChainParams &params);

// Pure form of the threshold test, exact in integers.
bool exceeds_threshold(uint64_t ballots, uint64_t window, uint64_t tau_ppm);

void activate(GovernanceState &gov, const Proposal &winner, uint64_t height);

// tally_at_bud followed by activate; returns the activated proposal.
std::optional<Proposal> settle_bud(GovernanceState &gov, const ChainParams &params, uint64_t height);

}  // namespace aspen
