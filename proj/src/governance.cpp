#include <aspen/governance.hpp>
#include <aspen/ledger.hpp>

#include <fmt/format.h>

namespace aspen {

const char *to_string(GovErrc code)
{
    switch (code) {
    case GovErrc::kOk: return "Ok";
    case GovErrc::kDuplicateServiceNumberInProposal: return "DuplicateServiceNumberInProposal";
    case GovErrc::kMalformedDescriptor: return "MalformedDescriptor";
    case GovErrc::kUnknownProposal: return "UnknownProposal";
    case GovErrc::kNotBudHeight: return "NotBudHeight";
    }
    return "Unknown";
}

GovernanceState GovernanceState::genesis(const ChainParams &params)
{
    GovernanceState g;
    for (const auto &d : params.initial_channels)
        g.protocols[d.service].push_back({d, 0});
    return g;
}

std::set<ServiceNumber> GovernanceState::active_channels() const
{
    std::set<ServiceNumber> out;
    for (const auto &[c, _] : protocols)
        out.insert(c);
    return out;
}

const ProtocolDescriptor &GovernanceState::active(ServiceNumber channel) const
{
    auto it = protocols.find(channel);
    if (it == protocols.end())
        throw std::out_of_range(fmt::format("channel {} is not active", channel.value));
    return it->second.back().descriptor;
}

const ProtocolDescriptor *GovernanceState::descriptor_at(ServiceNumber channel, uint64_t epoch_height) const
{
    auto it = protocols.find(channel);
    if (it == protocols.end())
        return nullptr;
    const ProtocolDescriptor *found = nullptr;
    for (const auto &p : it->second)
        if (p.activation_height <= epoch_height)
            found = &p.descriptor;
    return found;
}

void encode(Encoder &e, const GovernanceState &g)
{
    e.count(g.protocols.size());
    for (const auto &[c, history] : g.protocols) {
        encode(e, c);
        e.count(history.size());
        for (const auto &p : history) {
            encode(e, p.descriptor);
            e.u64(p.activation_height);
        }
    }
    e.count(g.proposals.size());
    for (const auto &[h, p] : g.proposals) {
        encode(e, h);
        encode(e, p.descriptors);
        encode(e, p.proposer);
        e.u64(p.registered_height);
    }
    e.count(g.window_tally.size());
    for (const auto &[h, n] : g.window_tally) {
        encode(e, h);
        e.u64(n);
    }
    e.u64(g.window_keyblocks);
    e.count(g.activations.size());
    for (const auto &a : g.activations) {
        e.u64(a.height);
        encode(e, a.proposal);
        e.u64(a.ballots);
        e.u64(a.window);
    }
}

bool is_bud_height(const ChainParams &params, uint64_t height)
{
    return height > 0 && height % params.bud_interval == 0;
}

void register_proposal(GovernanceState &gov, const Hash &tx_hash, const RegistrationTx &tx, uint64_t height)
{
    switch (registration_issue(tx)) {
    case RegistrationIssue::kNone:
        break;
    case RegistrationIssue::kDuplicateServiceNumber:
        throw GovError(GovErrc::kDuplicateServiceNumberInProposal, "proposal repeats a service number");
    case RegistrationIssue::kEmpty:
        throw GovError(GovErrc::kMalformedDescriptor, "proposal carries no descriptors");
    case RegistrationIssue::kMalformedDescriptor:
        throw GovError(GovErrc::kMalformedDescriptor, "descriptor limits must be positive");
    }
    Proposal p;
    p.tx_hash = tx_hash;
    p.descriptors = tx.proposals;
    p.proposer = tx.proposer;
    p.registered_height = height;
    for (const auto &d : tx.proposals)
        p.is_update.push_back(gov.is_active(d.service));
    gov.proposals.insert_or_assign(tx_hash, std::move(p));
}

void record_ballot(GovernanceState &gov, const std::optional<Hash> &ballot)
{
    if (ballot && !gov.proposals.contains(*ballot))
        throw GovError(GovErrc::kUnknownProposal, fmt::format("ballot for unknown proposal {}", ballot->short_hex()));
    gov.window_keyblocks += 1;
    if (ballot)
        gov.window_tally[*ballot] += 1;
}

bool exceeds_threshold(uint64_t ballots, uint64_t window, uint64_t tau_ppm)
{
    if (window == 0)
        return false;
    return static_cast<unsigned __int128>(ballots) * kPpm > static_cast<unsigned __int128>(tau_ppm) * window;
}

std::optional<Proposal> tally_at_bud(GovernanceState &gov, const ChainParams &params)
{
    const Hash *best = nullptr;
    uint64_t best_count = 0;
    for (const auto &[h, count] : gov.window_tally) {
        if (!exceeds_threshold(count, gov.window_keyblocks, params.tau_ppm))
            continue;
        // Map order is ascending by hash, so strict > keeps the smaller hash on ties.
        if (best == nullptr || count > best_count) {
            best = &h;
            best_count = count;
        }
    }
    std::optional<Proposal> winner;
    if (best != nullptr)
        winner = gov.proposals.at(*best);
    gov.window_tally.clear();
    gov.window_keyblocks = 0;
    return winner;
}

void activate(GovernanceState &gov, const Proposal &winner, uint64_t height)
{
    for (const auto &d : winner.descriptors)
        gov.protocols[d.service].push_back({d, height});
    gov.proposals.erase(winner.tx_hash);
    gov.activations.push_back({height, winner.tx_hash, 0, 0});
}

std::optional<Proposal> settle_bud(GovernanceState &gov, const ChainParams &params, uint64_t height)
{
    if (!is_bud_height(params, height))
        throw GovError(GovErrc::kNotBudHeight, fmt::format("height {} is not a bud", height));
    const auto window = gov.window_keyblocks;
    const auto tally = gov.window_tally;
    auto winner = tally_at_bud(gov, params);
    if (winner) {
        activate(gov, *winner, height);
        gov.activations.back().ballots = tally.at(winner->tx_hash);
        gov.activations.back().window = window;
    }
    return winner;
}

}  // namespace aspen
