#include <aspen/chain_state.hpp>
#include <aspen/crypto.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace aspen {

namespace {

// Longest microblock chain accepted in one epoch before the walk is treated
// as malformed. Far above anything the interval rule allows in practice.
constexpr size_t kMaxEpochChain = 1'000'000;

[[noreturn]] void fail(ConsensusErrc code, const std::string &why) { throw ConsensusError(code, why); }

}  // namespace

Tracking Tracking::channels(std::set<ServiceNumber> subscribed)
{
    subscribed.insert(kRegistrationChannel);
    return {false, std::move(subscribed)};
}

std::set<ServiceNumber> LedgerState::tracked_channels() const
{
    std::set<ServiceNumber> out;
    for (const auto &[c, _] : channels)
        out.insert(c);
    return out;
}

void encode(Encoder &e, const LedgerState &s)
{
    encode(e, s.block);
    e.u64(s.height);
    e.i64(s.time_us);
    encode(e, s.miner);
    e.u64(s.work);
    encode(e, s.channels);
    encode(e, s.governance);
    e.count(s.rewards.revoked.size());
    for (const auto &h : s.rewards.revoked)
        encode(e, h);
    e.u64(s.rewards.burned);
    e.u64(s.rewards.credited);
    e.u64(s.minted);
}

LedgerState genesis_state(const KeyBlock &genesis, const ChainParams &params, const Tracking &tracking)
{
    LedgerState s;
    s.block = block_hash(genesis);
    s.height = genesis.height;
    s.time_us = genesis.timestamp_us;
    s.miner = genesis.miner;
    s.work = genesis.work;
    s.tracking = tracking;
    s.governance = GovernanceState::genesis(params);
    for (const auto &c : s.governance.active_channels()) {
        if (!tracking.wants(c))
            continue;
        ChannelState cs;
        cs.channel = c;
        cs.tip = s.block;
        cs.tip_time_us = genesis.timestamp_us;
        s.channels.emplace(c, std::move(cs));
    }
    const Hash cbh = tx_hash(genesis.coinbase);
    const auto &outs = genesis.coinbase.outputs;
    for (uint32_t i = 0; i < outs.size(); ++i) {
        s.minted += outs[i].value;
        if (auto it = s.channels.find(outs[i].spend_channel); it != s.channels.end())
            it->second.utxo.emplace(OutPoint{cbh, i}, Coin{outs[i], 0, false});
    }
    s.chain_blocks.emplace(s.block, KeyBlockRecord{s.block, 0, genesis.miner, cbh, genesis.coinbase});
    return s;
}

void MapEpochData::add(const MicroBlock &mb) { microblocks.emplace(block_hash(mb), mb); }

const MicroBlock *MapEpochData::microblock(const Hash &hash) const
{
    auto it = microblocks.find(hash);
    return it == microblocks.end() ? nullptr : &it->second;
}

const std::vector<InflowProof> *MapEpochData::inflow_bundle(const Hash &key_block, ServiceNumber channel) const
{
    auto it = bundles.find({key_block, channel});
    return it == bundles.end() ? nullptr : &it->second;
}

void fill_epoch_context(EpochContext &out, const LedgerState &state, const ChainParams &params)
{
    out.active = state.governance.active_channels();
    out.ctx.params = &params;
    out.ctx.epoch_hash = state.block;
    out.ctx.epoch_height = state.height;
    out.ctx.leader = state.miner;
    out.ctx.active_channels = &out.active;
    out.ctx.chain_blocks = &state.chain_blocks;
    out.ctx.revoked = &state.rewards.revoked;
}

std::vector<const MicroBlock *> collect_epoch_chain(const Hash &tail, const Hash &epoch, ServiceNumber channel,
                                                    const EpochData &data)
{
    std::vector<const MicroBlock *> chain;
    Hash cur = tail;
    while (cur != epoch) {
        const auto *mb = data.microblock(cur);
        if (mb == nullptr)
            fail(ConsensusErrc::kMissingData, fmt::format("microblock {} of channel {} unavailable", cur.hex(),
                                                          channel.value));
        if (mb->header.channel != channel || mb->header.epoch != epoch)
            fail(ConsensusErrc::kBadChannelRef,
                 fmt::format("microblock {} is not in channel {} of epoch {}", cur.hex(), channel.value,
                             epoch.short_hex()));
        if (chain.size() >= kMaxEpochChain)
            fail(ConsensusErrc::kBadChannelRef, "microblock chain too long");
        chain.push_back(mb);
        cur = mb->header.prev;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

MissingData missing_data(const KeyBlock &kb, const LedgerState &parent, const EpochData &data)
{
    MissingData out;
    for (const auto &[c, ref] : kb.channel_refs) {
        if (!parent.tracks(c))
            continue;
        Hash cur = ref;
        for (size_t n = 0; cur != parent.block && n < kMaxEpochChain; ++n) {
            const auto *mb = data.microblock(cur);
            if (mb == nullptr) {
                out.microblocks.emplace_back(c, cur);
                break;
            }
            if (mb->header.channel != c || mb->header.epoch != parent.block)
                break;  // malformed; apply_key_block reports it
            cur = mb->header.prev;
        }
    }
    if (!parent.tracks(kPaymentChannel)) {
        const Hash h = block_hash(kb);
        for (const auto &[c, _] : kb.inflow_commitments)
            if (parent.tracks(c) && data.inflow_bundle(h, c) == nullptr)
                out.bundles.push_back(c);
    }
    return out;
}

LedgerState apply_key_block(const KeyBlock &kb, const LedgerState &parent, const EpochData &data,
                            const ChainParams &params, EpochOutcome *outcome)
{
    using E = ConsensusErrc;
    const Hash h = block_hash(kb);

    if (kb.prev != parent.block)
        fail(E::kUnknownParent, "key block does not extend the given parent");
    if (kb.height != parent.height + 1)
        fail(E::kBadHeight, fmt::format("height {} after parent height {}", kb.height, parent.height));
    if (kb.work != parent.work + 1)
        fail(E::kBadWork, fmt::format("work {} after parent work {}", kb.work, parent.work));
    if (!seal_valid(kb, params.seal_bits))
        fail(E::kBadWork, "seal does not meet the work target");
    if (kb.timestamp_us <= parent.time_us)
        fail(E::kBadTimestamp, "key block timestamp does not advance");
    if (kb.channel_refs.size() > params.max_channel_refs)
        fail(E::kTooManyRefs, fmt::format("{} channel references exceed the limit of {}", kb.channel_refs.size(),
                                          params.max_channel_refs));
    if (!kb.channel_refs.contains(kPaymentChannel))
        fail(E::kBadChannelRef, "payment channel reference missing");

    const auto &gov_before = parent.governance;
    for (const auto &[c, ref] : kb.channel_refs) {
        if (!gov_before.is_active(c))
            fail(E::kBadChannelRef, fmt::format("reference to inactive channel {}", c.value));
        if (c != kPaymentChannel && ref == parent.block)
            fail(E::kInertChannelListed, fmt::format("channel {} listed without microblocks", c.value));
    }

    EpochContext ec;
    fill_epoch_context(ec, parent, params);

    LedgerState next = parent;
    next.block = h;
    next.height = kb.height;
    next.time_us = kb.timestamp_us;
    next.miner = kb.miner;
    next.work = kb.work;

    EpochOutcome local;

    // Microblocks of the closing epoch, per tracked channel.
    for (const auto &[c, ref] : kb.channel_refs) {
        if (!next.tracks(c))
            continue;
        const auto chain = collect_epoch_chain(ref, parent.block, c, data);
        const auto *proto = gov_before.descriptor_at(c, parent.height);
        EpochEffects effects;
        auto &cs = next.channels.at(c);
        auto &hashes = local.microblocks[c];
        for (const auto *mb : chain) {
            if (mb->header.timestamp_us > kb.timestamp_us)
                fail(E::kBadTimestamp, "referenced microblock is newer than the key block");
            try {
                apply_microblock_in_place(*mb, cs, *proto, ec.ctx, effects);
            } catch (const LedgerError &e) {
                fail(E::kBadMicroblock, fmt::format("channel {} microblock {}: {} ({})", c.value,
                                                    block_hash(*mb).hex(), e.what(), to_string(e.code())));
            }
            hashes.push_back(block_hash(*mb));
        }
        if (c != kPaymentChannel && effects.tx_count == 0)
            fail(E::kInertChannelListed, fmt::format("channel {} listed with no transactions", c.value));
        local.effects.emplace(c, std::move(effects));
    }

    // Inflow commitments and revocations originate in the payment channel.
    const EpochEffects no_effects;
    const bool full_payment = next.tracks(kPaymentChannel);
    const auto &payment = full_payment ? local.effects.at(kPaymentChannel) : no_effects;
    if (full_payment) {
        if (build_inflow_commitment(payment.pore_outputs) != kb.inflow_commitments)
            fail(E::kBadInflowCommitment, "inflow commitments do not match the confirmed funding pores");
        std::vector<Revocation> expected;
        for (const auto &p : payment.poisons)
            expected.push_back({p.accused_block, p.reporter});
        if (expected != kb.revocations)
            fail(E::kBadRevocation, "revocations do not match the confirmed poison transactions");
    } else {
        for (const auto &[c, _] : kb.inflow_commitments)
            if (c == kPaymentChannel || !gov_before.is_active(c))
                fail(E::kBadInflowCommitment, fmt::format("inflow commitment for invalid channel {}", c.value));
    }

    std::vector<WhistleblowerCredit> credits;
    for (const auto &rev : kb.revocations) {
        std::vector<WhistleblowerCredit> owed;
        try {
            owed = enact_revocation(rev, next.rewards, parent.chain_blocks, kb.height, params);
        } catch (const ConsensusError &e) {
            fail(E::kBadRevocation, e.what());
        }
        credits.insert(credits.end(), owed.begin(), owed.end());
        for (const auto &r : revoked_outputs(parent.chain_blocks.at(rev.accused_block)))
            if (auto it = next.channels.find(r.output.spend_channel); it != next.channels.end())
                it->second.utxo.erase(r.outpoint);
        local.revoked_blocks.push_back(rev.accused_block);
    }

    // Governance: this key block's ballot counts in the window it closes;
    // registrations it confirms become eligible from the next key block.
    try {
        record_ballot(next.governance, kb.ballot);
    } catch (const GovError &e) {
        fail(E::kBadBallot, e.what());
    }
    if (is_bud_height(params, kb.height)) {
        if (auto winner = settle_bud(next.governance, params, kb.height)) {
            for (size_t i = 0; i < winner->descriptors.size(); ++i) {
                const auto c = winner->descriptors[i].service;
                if (gov_before.is_active(c) || !next.tracking.wants(c))
                    continue;
                ChannelState cs;
                cs.channel = c;
                next.channels.emplace(c, std::move(cs));
            }
        }
    }
    if (auto it = local.effects.find(kRegistrationChannel); it != local.effects.end()) {
        for (const auto &[txh, reg] : it->second.registrations) {
            try {
                register_proposal(next.governance, txh, reg, kb.height);
            } catch (const GovError &e) {
                fail(E::kBadMicroblock, e.what());
            }
        }
    }

    // Coinbase: subsidy, fee splits of the confirmed epoch and whistleblower credits.
    std::map<ServiceNumber, Amount> fees;
    for (const auto &[c, eff] : local.effects)
        if (eff.fees > 0)
            fees.emplace(c, eff.fees);
    const auto visible = next.tracked_channels();
    if (auto v = verify_coinbase(kb, params, parent.miner, fees, credits,
                                 next.tracking.all ? nullptr : &visible);
        !v)
        fail(E::kBadCoinbase, v.detail);
    next.minted += subsidy(params, kb.height);
    const Hash cbh = tx_hash(kb.coinbase);
    for (uint32_t i = 0; i < kb.coinbase.outputs.size(); ++i) {
        const auto &o = kb.coinbase.outputs[i];
        if (o.value == 0)
            continue;  // empty fee shares hold no coin
        if (auto it = next.channels.find(o.spend_channel); it != next.channels.end())
            it->second.utxo.emplace(OutPoint{cbh, i}, Coin{o, kb.height, true});
    }

    // Funding-pore outputs are credited to their destinations.
    for (const auto &[c, root] : kb.inflow_commitments) {
        auto it = next.channels.find(c);
        if (it == next.channels.end())
            continue;
        std::vector<InflowProof> proofs;
        if (full_payment) {
            proofs = build_inflow_proofs(payment.pore_outputs, c);
        } else {
            const auto *bundle = data.inflow_bundle(h, c);
            if (bundle == nullptr)
                fail(E::kMissingData, fmt::format("inflow proofs for channel {} unavailable", c.value));
            proofs = *bundle;
            if (proofs.empty() || !inflow_proofs_complete(proofs))
                fail(E::kBadInflowCommitment, fmt::format("inflow proofs for channel {} incomplete", c.value));
        }
        try {
            it->second = credit_inflows(it->second, proofs, root, kb.height);
        } catch (const LedgerError &e) {
            fail(E::kBadInflowCommitment, e.what());
        }
        local.inflows.emplace(c, std::move(proofs));
    }

    for (auto &[c, cs] : next.channels) {
        cs.tip = h;
        cs.tip_time_us = kb.timestamp_us;
    }
    next.chain_blocks.emplace(h, KeyBlockRecord{h, kb.height, kb.miner, cbh, kb.coinbase});
    if (outcome != nullptr)
        *outcome = std::move(local);
    return next;
}

ConsensusVerdict validate_key_block(const KeyBlock &kb, const LedgerState &parent, const EpochData &data,
                                    const ChainParams &params)
{
    try {
        apply_key_block(kb, parent, data, params);
    } catch (const ConsensusError &e) {
        return ConsensusVerdict::fail(e.code(), e.what());
    }
    return ConsensusVerdict::pass();
}

}  // namespace aspen
