#include <aspen/crypto.hpp>
#include <aspen/ledger.hpp>

#include <fmt/format.h>

#include <limits>

namespace aspen {

const char *to_string(LedgerErrc code)
{
    switch (code) {
    case LedgerErrc::kOk: return "Ok";
    case LedgerErrc::kUnknownInput: return "UnknownInput";
    case LedgerErrc::kDoubleSpend: return "DoubleSpend";
    case LedgerErrc::kWrongChannel: return "WrongChannel";
    case LedgerErrc::kBadSignature: return "BadSignature";
    case LedgerErrc::kOverSize: return "OverSize";
    case LedgerErrc::kBadBalance: return "BadBalance";
    case LedgerErrc::kUnknownChannel: return "UnknownChannel";
    case LedgerErrc::kFeeTooLow: return "FeeTooLow";
    case LedgerErrc::kImmature: return "Immature";
    case LedgerErrc::kMalformed: return "Malformed";
    case LedgerErrc::kStaleTip: return "StaleTip";
    case LedgerErrc::kBadProof: return "BadProof";
    case LedgerErrc::kDuplicateInflow: return "DuplicateInflow";
    case LedgerErrc::kBadEvidence: return "BadEvidence";
    case LedgerErrc::kStaleEvidence: return "StaleEvidence";
    }
    return "Unknown";
}

Amount ChannelState::total_value() const
{
    Amount sum = 0;
    for (const auto &[_, coin] : utxo)
        sum += coin.output.value;
    return sum;
}

void encode(Encoder &e, const Coin &v)
{
    encode(e, v.output);
    e.u64(v.height);
    e.u8(v.coinbase ? 1 : 0);
}

void decode(Decoder &d, Coin &v)
{
    decode(d, v.output);
    v.height = d.u64();
    const auto flag = d.u8();
    if (flag > 1)
        throw DecodeError("invalid coinbase flag");
    v.coinbase = flag == 1;
}

void encode(Encoder &e, const InflowRecord &v)
{
    e.u64(v.height);
    encode(e, v.outpoint);
    encode(e, v.output);
}

void decode(Decoder &d, InflowRecord &v)
{
    v.height = d.u64();
    decode(d, v.outpoint);
    decode(d, v.output);
}

void encode(Encoder &e, const ChannelState &v)
{
    encode(e, v.channel);
    encode(e, v.utxo);
    e.count(v.spent.size());
    for (const auto &op : v.spent)
        encode(e, op);
    encode(e, v.inflow_log);
    encode(e, v.tip);
    e.i64(v.tip_time_us);
}

void decode(Decoder &d, ChannelState &v)
{
    decode(d, v.channel);
    decode(d, v.utxo);
    std::vector<OutPoint> spent;
    decode(d, spent);
    v.spent.clear();
    for (const auto &op : spent) {
        if (!v.spent.empty() && !(*v.spent.rbegin() < op))
            throw DecodeError("spent set not strictly ascending");
        v.spent.insert(v.spent.end(), op);
    }
    decode(d, v.inflow_log);
    decode(d, v.tip);
    v.tip_time_us = d.i64();
}

void encode(Encoder &e, const PendingInflow &v)
{
    encode(e, v.outpoint);
    encode(e, v.output);
}

void decode(Decoder &d, PendingInflow &v)
{
    decode(d, v.outpoint);
    decode(d, v.output);
}

void encode(Encoder &e, const InflowProof &v)
{
    encode(e, v.outpoint);
    encode(e, v.output);
    encode(e, v.proof);
}

void decode(Decoder &d, InflowProof &v)
{
    decode(d, v.outpoint);
    decode(d, v.output);
    decode(d, v.proof);
}

Hash inflow_leaf_hash(const OutPoint &outpoint, const Output &output)
{
    Encoder e;
    encode(e, outpoint);
    encode(e, output);
    return merkle_leaf_hash(e.data());
}

RegistrationIssue registration_issue(const RegistrationTx &reg)
{
    if (reg.proposals.empty())
        return RegistrationIssue::kEmpty;
    std::set<ServiceNumber> seen;
    for (const auto &d : reg.proposals) {
        if (!seen.insert(d.service).second)
            return RegistrationIssue::kDuplicateServiceNumber;
        if (d.max_tx_bytes == 0 || d.max_microblock_bytes == 0 || d.microblock_interval_us < 0 ||
            d.max_tx_bytes > d.max_microblock_bytes)
            return RegistrationIssue::kMalformedDescriptor;
    }
    return RegistrationIssue::kNone;
}

namespace {

using V = LedgerVerdict;

bool add_overflows(Amount a, Amount b, Amount &out)
{
    if (a > std::numeric_limits<Amount>::max() - b)
        return true;
    out = a + b;
    return false;
}

// Inputs, signatures and value balance for the value-moving variants.
V check_value_flow(const Transaction &tx, const ChannelState &state, const ChainContext &ctx)
{
    const auto inputs = tx.inputs();
    const auto outputs = tx.outputs();
    if (inputs.empty())
        return V::fail(LedgerErrc::kMalformed, "transaction spends no inputs");
    if (outputs.empty())
        return V::fail(LedgerErrc::kMalformed, "transaction has no outputs");

    std::set<OutPoint> local;
    Amount in_total = 0;
    const Hash digest = signing_hash(tx);
    for (const auto &in : inputs) {
        if (!local.insert(in.prevout).second)
            return V::fail(LedgerErrc::kDoubleSpend, fmt::format("input {}:{} spent twice within the transaction",
                                                                 in.prevout.tx_hash.short_hex(), in.prevout.index));
        auto it = state.utxo.find(in.prevout);
        if (it == state.utxo.end()) {
            if (state.spent.contains(in.prevout))
                return V::fail(LedgerErrc::kDoubleSpend, fmt::format("input {}:{} already spent",
                                                                     in.prevout.tx_hash.short_hex(), in.prevout.index));
            return V::fail(LedgerErrc::kUnknownInput, fmt::format("input {}:{} not in channel {}",
                                                                  in.prevout.tx_hash.short_hex(), in.prevout.index,
                                                                  state.channel.value));
        }
        const Coin &coin = it->second;
        if (coin.output.spend_channel != state.channel)
            return V::fail(LedgerErrc::kWrongChannel, "coin is locked to another channel");
        if (coin.coinbase && ctx.epoch_height < coin.height + ctx.params->coinbase_maturity)
            return V::fail(LedgerErrc::kImmature, fmt::format("coinbase output from height {} not mature at {}",
                                                              coin.height, ctx.epoch_height));
        if (!verify_sig(digest, in.sig, coin.output.owner))
            return V::fail(LedgerErrc::kBadSignature, "input signature does not verify");
        if (add_overflows(in_total, coin.output.value, in_total))
            return V::fail(LedgerErrc::kBadBalance, "input total overflows");
    }

    Amount out_total = 0;
    for (const auto &o : outputs) {
        if (o.value == 0)
            return V::fail(LedgerErrc::kBadBalance, "zero-value output");
        if (add_overflows(out_total, o.value, out_total))
            return V::fail(LedgerErrc::kBadBalance, "output total overflows");
    }
    Amount spend_total = 0;
    if (add_overflows(out_total, tx.fee(), spend_total) || spend_total != in_total)
        return V::fail(LedgerErrc::kBadBalance,
                       fmt::format("inputs {} != outputs {} + fee {}", in_total, out_total, tx.fee()));
    return V::pass();
}

V check_outputs_local(const Transaction &tx, ServiceNumber channel)
{
    for (const auto &o : tx.outputs())
        if (o.spend_channel != channel)
            return V::fail(LedgerErrc::kWrongChannel,
                           fmt::format("output locked to channel {} inside channel {}", o.spend_channel.value,
                                       channel.value));
    return V::pass();
}

}  // namespace

LedgerVerdict check_poison_evidence(const PoisonEvidence &evidence, const ChainContext &ctx,
                                    const EpochEffects *pending)
{
    const auto &a = evidence.first;
    const auto &b = evidence.second;
    if (a.header.channel != b.header.channel || a.header.prev != b.header.prev ||
        a.header.epoch != b.header.epoch || a.header.leader != b.header.leader)
        return V::fail(LedgerErrc::kBadEvidence, "headers do not extend the same microblock under one leader");
    if (block_hash(a.header) == block_hash(b.header))
        return V::fail(LedgerErrc::kBadEvidence, "headers are identical");
    if (!verify_header(a) || !verify_header(b))
        return V::fail(LedgerErrc::kBadEvidence, "header signature does not verify");
    if (ctx.chain_blocks == nullptr)
        return V::fail(LedgerErrc::kBadEvidence, "no chain context");
    auto it = ctx.chain_blocks->find(a.header.epoch);
    if (it == ctx.chain_blocks->end())
        return V::fail(LedgerErrc::kBadEvidence, "accused epoch is not on this chain");
    const auto &accused = it->second;
    if (accused.miner != a.header.leader)
        return V::fail(LedgerErrc::kBadEvidence, "signer was not the leader of that epoch");
    // The revoking key block sits at epoch_height + 1 and must precede maturity.
    if (ctx.epoch_height + 1 > accused.height + ctx.params->coinbase_maturity)
        return V::fail(LedgerErrc::kStaleEvidence, fmt::format("evidence for height {} past the revocation window",
                                                               accused.height));
    if (ctx.revoked != nullptr && ctx.revoked->contains(accused.hash))
        return V::fail(LedgerErrc::kStaleEvidence, "epoch reward already revoked");
    if (pending != nullptr)
        for (const auto &r : pending->poisons)
            if (r.accused_block == accused.hash)
                return V::fail(LedgerErrc::kStaleEvidence, "epoch reward already revoked this epoch");
    return V::pass();
}

namespace {

V check_poison(const PoisonTx &p, const Transaction &tx, const ChainContext &ctx, const EpochEffects *pending)
{
    if (!verify_sig(signing_hash(tx), p.sig, p.reporter))
        return V::fail(LedgerErrc::kBadSignature, "reporter signature does not verify");
    return check_poison_evidence(p.evidence, ctx, pending);
}

}  // namespace

LedgerVerdict validate_funding_pore(const Transaction &tx, const ChannelState &state,
                                    const std::set<ServiceNumber> &active_channels, const ChainParams &params,
                                    const ProtocolDescriptor &proto, const ChainContext &ctx)
{
    const auto *pore = std::get_if<FundingPoreTx>(&tx.body);
    if (pore == nullptr)
        return V::fail(LedgerErrc::kMalformed, "not a funding pore");
    if (state.channel != kPaymentChannel)
        return V::fail(LedgerErrc::kWrongChannel, "funding pores live in the payment channel");
    for (const auto &o : pore->outputs)
        if (!active_channels.contains(o.spend_channel))
            return V::fail(LedgerErrc::kUnknownChannel,
                           fmt::format("destination channel {} is not active", o.spend_channel.value));
    if (pore->fee < params.min_pore_fee)
        return V::fail(LedgerErrc::kFeeTooLow, fmt::format("pore fee {} below minimum {}", pore->fee,
                                                           params.min_pore_fee));
    if (encode_to_bytes(tx).size() > proto.max_tx_bytes)
        return V::fail(LedgerErrc::kOverSize, "transaction exceeds max_tx_bytes");
    return check_value_flow(tx, state, ctx);
}

LedgerVerdict validate_tx(const Transaction &tx, const ChannelState &state, const ProtocolDescriptor &proto,
                          const ChainContext &ctx, const EpochEffects *pending)
{
    const auto channel = state.channel;
    switch (tx.kind()) {
    case TxKind::kCoinbase:
        return V::fail(LedgerErrc::kMalformed, "coinbase outside a key block");
    case TxKind::kFundingPore:
        if (channel != kPaymentChannel)
            return V::fail(LedgerErrc::kWrongChannel, "funding pores live in the payment channel");
        return validate_funding_pore(tx, state, *ctx.active_channels, *ctx.params, proto, ctx);
    case TxKind::kRegistration:
        if (channel != kRegistrationChannel)
            return V::fail(LedgerErrc::kWrongChannel, "registrations live in the registration channel");
        break;
    case TxKind::kPoison:
        if (channel != kPaymentChannel)
            return V::fail(LedgerErrc::kWrongChannel, "poison transactions live in the payment channel");
        break;
    case TxKind::kService: {
        const auto &s = std::get<ServiceTx>(tx.body);
        if (s.service != channel)
            return V::fail(LedgerErrc::kWrongChannel, fmt::format("service {} transaction submitted to channel {}",
                                                                  s.service.value, channel.value));
        if (s.schema_id != proto.payload_schema_id)
            return V::fail(LedgerErrc::kMalformed, "payload schema does not match the active protocol");
        break;
    }
    case TxKind::kPayment:
        break;
    }

    if (encode_to_bytes(tx).size() > proto.max_tx_bytes)
        return V::fail(LedgerErrc::kOverSize, "transaction exceeds max_tx_bytes");

    switch (tx.kind()) {
    case TxKind::kRegistration: {
        const auto &reg = std::get<RegistrationTx>(tx.body);
        if (registration_issue(reg) != RegistrationIssue::kNone)
            return V::fail(LedgerErrc::kMalformed, "malformed registration");
        if (!verify_sig(signing_hash(tx), reg.sig, reg.proposer))
            return V::fail(LedgerErrc::kBadSignature, "proposer signature does not verify");
        return V::pass();
    }
    case TxKind::kPoison:
        return check_poison(std::get<PoisonTx>(tx.body), tx, ctx, pending);
    default:
        break;
    }
    if (auto v = check_outputs_local(tx, channel); !v)
        return v;
    return check_value_flow(tx, state, ctx);
}

void apply_tx(const Transaction &tx, ChannelState &state, uint64_t epoch_height, EpochEffects &effects)
{
    const Hash txid = tx_hash(tx);
    for (const auto &in : tx.inputs()) {
        state.utxo.erase(in.prevout);
        state.spent.insert(in.prevout);
    }
    const auto outputs = tx.outputs();
    for (uint32_t i = 0; i < outputs.size(); ++i) {
        const OutPoint op{txid, i};
        if (outputs[i].spend_channel == state.channel)
            state.utxo.emplace(op, Coin{outputs[i], epoch_height, false});
        else
            effects.pore_outputs.push_back({op, outputs[i]});
    }
    effects.fees += tx.fee();
    effects.tx_count += 1;
    if (const auto *p = std::get_if<PoisonTx>(&tx.body))
        effects.poisons.push_back({p->evidence.first.header.epoch, p->reporter});
    if (const auto *r = std::get_if<RegistrationTx>(&tx.body))
        effects.registrations.emplace_back(txid, *r);
}

Hash microblock_tx_root(std::span<const Transaction> txs)
{
    std::vector<Hash> leaves;
    leaves.reserve(txs.size());
    for (const auto &tx : txs)
        leaves.push_back(merkle_leaf_hash(encode_to_bytes(tx)));
    return merkle_root(leaves);
}

LedgerVerdict check_microblock_shape(const MicroBlock &mb, const ProtocolDescriptor &proto)
{
    if (mb.header.channel != proto.service)
        return V::fail(LedgerErrc::kWrongChannel, "microblock channel does not match its protocol");
    if (encode_to_bytes(mb).size() > proto.max_microblock_bytes)
        return V::fail(LedgerErrc::kOverSize, "microblock exceeds max_microblock_bytes");
    if (microblock_tx_root(mb.txs) != mb.header.tx_root)
        return V::fail(LedgerErrc::kMalformed, "tx_root does not commit to the transactions");
    if (!verify_header(mb.signed_header()))
        return V::fail(LedgerErrc::kBadSignature, "leader signature does not verify");
    return V::pass();
}

void apply_microblock_in_place(const MicroBlock &mb, ChannelState &state, const ProtocolDescriptor &proto,
                               const ChainContext &ctx, EpochEffects &effects)
{
    if (mb.header.prev != state.tip)
        throw LedgerError(LedgerErrc::kStaleTip, fmt::format("microblock extends {} but channel tip is {}",
                                                             mb.header.prev.short_hex(), state.tip.short_hex()));
    if (mb.header.channel != state.channel)
        throw LedgerError(LedgerErrc::kWrongChannel, "microblock belongs to another channel");
    if (mb.header.epoch != ctx.epoch_hash || mb.header.leader != ctx.leader)
        throw LedgerError(LedgerErrc::kBadSignature, "microblock not signed by the current epoch leader");
    const bool first_in_epoch = mb.header.prev == mb.header.epoch;
    const TimeUs earliest = state.tip_time_us + (first_in_epoch ? 0 : proto.microblock_interval_us);
    if (mb.header.timestamp_us < earliest)
        throw LedgerError(LedgerErrc::kMalformed, "microblock issued faster than the channel interval allows");
    if (auto v = check_microblock_shape(mb, proto); !v)
        throw LedgerError(v);

    // Undo log: coins removed by inputs and outpoints added, in order.
    std::vector<std::pair<OutPoint, Coin>> removed;
    std::vector<OutPoint> added;
    std::vector<OutPoint> newly_spent;
    auto rollback = [&] {
        for (const auto &op : added)
            state.utxo.erase(op);
        for (const auto &op : newly_spent)
            state.spent.erase(op);
        for (auto &[op, coin] : removed)
            state.utxo.emplace(op, coin);
    };

    EpochEffects local = effects;
    for (size_t i = 0; i < mb.txs.size(); ++i) {
        const auto &tx = mb.txs[i];
        if (auto v = validate_tx(tx, state, proto, ctx, &local); !v) {
            rollback();
            throw LedgerError(v.code, fmt::format("tx {}: {}", i, v.detail));
        }
        for (const auto &in : tx.inputs()) {
            auto it = state.utxo.find(in.prevout);
            removed.emplace_back(it->first, it->second);
            newly_spent.push_back(in.prevout);
        }
        const Hash txid = tx_hash(tx);
        apply_tx(tx, state, ctx.epoch_height, local);
        for (uint32_t k = 0; k < tx.outputs().size(); ++k)
            if (tx.outputs()[k].spend_channel == state.channel)
                added.push_back({txid, k});
    }
    state.tip = block_hash(mb);
    state.tip_time_us = mb.header.timestamp_us;
    effects = std::move(local);
}

ChannelState apply_microblock(const MicroBlock &mb, const ChannelState &state, const ProtocolDescriptor &proto,
                              const ChainContext &ctx, EpochEffects &effects)
{
    ChannelState next = state;
    apply_microblock_in_place(mb, next, proto, ctx, effects);
    return next;
}

ChannelState credit_inflows(const ChannelState &state, std::span<const InflowProof> proofs, const Hash &commitment_root,
                            uint64_t height)
{
    if (state.channel == kPaymentChannel)
        throw LedgerError(LedgerErrc::kWrongChannel, "the payment channel does not receive inflows");
    ChannelState next = state;
    for (const auto &p : proofs) {
        if (p.output.spend_channel != state.channel)
            throw LedgerError(LedgerErrc::kBadProof, "inflow locked to another channel");
        if (!merkle_verify(inflow_leaf_hash(p.outpoint, p.output), p.proof, commitment_root))
            throw LedgerError(LedgerErrc::kBadProof, "inflow proof does not verify against the commitment");
        if (next.utxo.contains(p.outpoint) || next.spent.contains(p.outpoint))
            throw LedgerError(LedgerErrc::kDuplicateInflow,
                              fmt::format("inflow {}:{} already credited", p.outpoint.tx_hash.short_hex(),
                                          p.outpoint.index));
        next.utxo.emplace(p.outpoint, Coin{p.output, height, false});
        next.inflow_log.push_back({height, p.outpoint, p.output});
    }
    return next;
}

namespace {

std::map<ServiceNumber, std::vector<const PendingInflow *>> group_by_destination(std::span<const PendingInflow> pending)
{
    std::map<ServiceNumber, std::vector<const PendingInflow *>> groups;
    for (const auto &p : pending)
        groups[p.output.spend_channel].push_back(&p);
    return groups;
}

}  // namespace

std::map<ServiceNumber, Hash> build_inflow_commitment(std::span<const PendingInflow> pending)
{
    std::map<ServiceNumber, Hash> roots;
    for (const auto &[channel, items] : group_by_destination(pending)) {
        std::vector<Hash> leaves;
        leaves.reserve(items.size());
        for (const auto *p : items)
            leaves.push_back(inflow_leaf_hash(p->outpoint, p->output));
        roots.emplace(channel, merkle_root(leaves));
    }
    return roots;
}

std::vector<InflowProof> build_inflow_proofs(std::span<const PendingInflow> pending, ServiceNumber channel)
{
    std::vector<const PendingInflow *> items;
    for (const auto &p : pending)
        if (p.output.spend_channel == channel)
            items.push_back(&p);
    std::vector<Hash> leaves;
    for (const auto *p : items)
        leaves.push_back(inflow_leaf_hash(p->outpoint, p->output));
    std::vector<InflowProof> proofs;
    for (uint32_t i = 0; i < items.size(); ++i)
        proofs.push_back({items[i]->outpoint, items[i]->output, merkle_prove(leaves, i)});
    return proofs;
}

bool inflow_proofs_complete(std::span<const InflowProof> proofs)
{
    for (size_t i = 0; i < proofs.size(); ++i)
        if (proofs[i].proof.index != i || proofs[i].proof.tree_size != proofs.size())
            return false;
    return true;
}

}  // namespace aspen
