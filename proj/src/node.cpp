#include <aspen/crypto.hpp>
#include <aspen/node.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace aspen {

// ---------------------------------------------------------------------------
// Wire messages

void encode(Encoder &e, const TxMessage &v)
{
    encode(e, v.channel);
    encode(e, v.tx);
}

void decode(Decoder &d, TxMessage &v)
{
    decode(d, v.channel);
    decode(d, v.tx);
}

void encode(Encoder &e, const InflowBundle &v)
{
    encode(e, v.key_block);
    encode(e, v.channel);
    encode(e, v.proofs);
}

void decode(Decoder &d, InflowBundle &v)
{
    decode(d, v.key_block);
    decode(d, v.channel);
    decode(d, v.proofs);
}

void encode(Encoder &e, const GetData &v)
{
    e.u8(static_cast<uint8_t>(v.kind));
    encode(e, v.hash);
    encode(e, v.channel);
}

void decode(Decoder &d, GetData &v)
{
    const auto kind = d.u8();
    if (kind > static_cast<uint8_t>(GetData::Kind::kInflow))
        throw DecodeError("unknown request kind");
    v.kind = static_cast<GetData::Kind>(kind);
    decode(d, v.hash);
    decode(d, v.channel);
}

void encode(Encoder &e, const Message &msg)
{
    e.u8(static_cast<uint8_t>(msg.index()));
    std::visit([&](const auto &m) { encode(e, m); }, msg);
}

namespace {

template <size_t I>
void decode_alternative(Decoder &d, Message &msg, size_t tag)
{
    if constexpr (I < std::variant_size_v<Message>) {
        if (tag == I) {
            std::variant_alternative_t<I, Message> v{};
            decode(d, v);
            msg = std::move(v);
            return;
        }
        decode_alternative<I + 1>(d, msg, tag);
    } else {
        throw DecodeError("unknown message tag");
    }
}

}  // namespace

void decode(Decoder &d, Message &msg) { decode_alternative<0>(d, msg, d.u8()); }

std::optional<ServiceNumber> message_channel(const Message &msg)
{
    struct Visitor {
        std::optional<ServiceNumber> operator()(const KeyBlock &) const { return std::nullopt; }
        std::optional<ServiceNumber> operator()(const MicroBlock &m) const { return m.header.channel; }
        std::optional<ServiceNumber> operator()(const TxMessage &m) const { return m.channel; }
        std::optional<ServiceNumber> operator()(const InflowBundle &m) const { return m.channel; }
        std::optional<ServiceNumber> operator()(const GetData &m) const
        {
            if (m.kind == GetData::Kind::kKeyBlock)
                return std::nullopt;
            return m.channel;
        }
    };
    return std::visit(Visitor{}, msg);
}

Hash message_id(const Message &msg) { return hash_of(msg); }

size_t message_bytes(const Message &msg) { return encode_to_bytes(msg).size(); }

// ---------------------------------------------------------------------------
// Helpers

namespace {

// True when `a` should be serialized before `b`: higher fee per byte, then
// higher fee, then smaller hash.
bool higher_priority(const Transaction &a, size_t a_bytes, const Hash &a_id, const Transaction &b, size_t b_bytes,
                     const Hash &b_id)
{
    const auto lhs = static_cast<unsigned __int128>(a.fee()) * b_bytes;
    const auto rhs = static_cast<unsigned __int128>(b.fee()) * a_bytes;
    if (lhs != rhs)
        return lhs > rhs;
    if (a.fee() != b.fee())
        return a.fee() > b.fee();
    return a_id < b_id;
}

// Trial application of transactions to a channel state that is undone
// afterwards, so assembly never copies the UTXO set.
class TrialApply {
public:
    explicit TrialApply(ChannelState &state) : state_(state) {}
    ~TrialApply() { rollback(); }
    TrialApply(const TrialApply &) = delete;
    TrialApply &operator=(const TrialApply &) = delete;

    void apply(const Transaction &tx, uint64_t epoch_height, EpochEffects &effects)
    {
        for (const auto &in : tx.inputs()) {
            auto it = state_.utxo.find(in.prevout);
            removed_.emplace_back(it->first, it->second);
            spent_.push_back(in.prevout);
        }
        apply_tx(tx, state_, epoch_height, effects);
        const Hash txid = tx_hash(tx);
        for (uint32_t k = 0; k < tx.outputs().size(); ++k)
            if (tx.outputs()[k].spend_channel == state_.channel)
                added_.push_back({txid, k});
    }

    void rollback()
    {
        for (const auto &op : added_)
            state_.utxo.erase(op);
        for (const auto &op : spent_)
            state_.spent.erase(op);
        for (auto &[op, coin] : removed_)
            state_.utxo.emplace(op, coin);
        added_.clear();
        spent_.clear();
        removed_.clear();
    }

private:
    ChannelState &state_;
    std::vector<std::pair<OutPoint, Coin>> removed_;
    std::vector<OutPoint> added_;
    std::vector<OutPoint> spent_;
};

bool keep_for_later(LedgerErrc code) { return code == LedgerErrc::kUnknownInput || code == LedgerErrc::kImmature; }

// Serves only the channels a tracking policy asks for.
class FilteredData final : public EpochData {
public:
    FilteredData(const EpochData &inner, const Tracking &tracking) : inner_(inner), tracking_(tracking) {}

    const MicroBlock *microblock(const Hash &hash) const override
    {
        const auto *mb = inner_.microblock(hash);
        if (mb == nullptr || !tracking_.wants(mb->header.channel))
            return nullptr;
        return mb;
    }
    const std::vector<InflowProof> *inflow_bundle(const Hash &key_block, ServiceNumber channel) const override
    {
        if (!tracking_.wants(channel))
            return nullptr;
        return inner_.inflow_bundle(key_block, channel);
    }

private:
    const EpochData &inner_;
    const Tracking &tracking_;
};

constexpr TimeUs kRetryUs = 2'000'000;

}  // namespace

// ---------------------------------------------------------------------------
// Node

Node::Node(NodeConfig config, const ChainParams &params)
    : config_(std::move(config)),
      params_(params),
      keys_(keypair_from_seed(config_.key_seed)),
      tracking_(config_.role == NodeRole::kMiner ? Tracking::full() : Tracking::channels(config_.subscribed)),
      view_(make_genesis(params_))
{
    const Hash g = view_.genesis();
    const auto &genesis = view_.block(g);
    states_.emplace(g, genesis_state(genesis, params_, tracking_));
    store_keyblock(g, genesis);
    rebuild_epoch();
}

const LedgerState *Node::state_at(const Hash &block) const
{
    auto it = states_.find(block);
    return it == states_.end() ? nullptr : &it->second;
}

const ChannelState *Node::epoch_state(ServiceNumber c) const
{
    auto it = epoch_.states.find(c);
    return it == epoch_.states.end() ? nullptr : &it->second;
}

const EpochEffects *Node::epoch_effects(ServiceNumber c) const
{
    auto it = epoch_.effects.find(c);
    return it == epoch_.effects.end() ? nullptr : &it->second;
}

const std::vector<Hash> *Node::epoch_chain(ServiceNumber c) const
{
    auto it = epoch_.chain.find(c);
    return it == epoch_.chain.end() ? nullptr : &it->second;
}

size_t Node::mempool_size(ServiceNumber c) const
{
    auto it = mempool_.find(c);
    return it == mempool_.end() ? 0 : it->second.size();
}

std::vector<Transaction> Node::mempool_snapshot(ServiceNumber c) const
{
    std::vector<Transaction> out;
    if (auto it = mempool_.find(c); it != mempool_.end())
        for (const auto &[_, e] : it->second)
            out.push_back(e.tx);
    return out;
}

bool Node::is_leader() const { return is_full() && tip_state().miner == keys_.pub; }

void Node::store_keyblock(const Hash &h, const KeyBlock &kb)
{
    if (!store_.keyblocks.emplace(h, kb).second)
        return;
    store_.keyblock_order.push_back(h);
    store_.bytes += encode_to_bytes(kb).size();
}

bool Node::store_microblock(const Hash &h, const MicroBlock &mb)
{
    if (!store_.data.microblocks.emplace(h, mb).second)
        return false;
    store_.microblock_order[mb.header.channel].push_back(h);
    store_.bytes += encode_to_bytes(mb).size();
    children_by_prev_[mb.header.prev].push_back(h);
    return true;
}

bool Node::store_bundle(const InflowBundle &bundle)
{
    const std::pair key{bundle.key_block, bundle.channel};
    if (!store_.data.bundles.emplace(key, bundle.proofs).second)
        return false;
    store_.bundle_order[bundle.channel].push_back(key);
    store_.bytes += encode_to_bytes(bundle).size();
    return true;
}

void Node::relay(std::vector<Outbound> &out, const Message &msg, std::optional<NodeId> except) const
{
    const auto channel = message_channel(msg);
    if (channel && !subscribes(*channel))
        return;
    const bool bundle = std::holds_alternative<InflowBundle>(msg);
    for (const auto &p : peers_) {
        if (except && p.id == *except)
            continue;
        if (channel && !p.wants(*channel))
            continue;
        if (bundle && p.full)
            continue;  // full nodes derive proofs themselves
        out.push_back({p.id, msg});
    }
}

std::vector<Outbound> Node::on_message(NodeId from, const Message &msg, TimeUs now)
{
    struct Visitor {
        Node &self;
        NodeId from;
        TimeUs now;
        std::vector<Outbound> operator()(const KeyBlock &m) { return self.on_keyblock(from, m, now); }
        std::vector<Outbound> operator()(const MicroBlock &m) { return self.on_microblock(from, m, now); }
        std::vector<Outbound> operator()(const TxMessage &m) { return self.on_tx(from, m, now); }
        std::vector<Outbound> operator()(const InflowBundle &m) { return self.on_bundle(from, m, now); }
        std::vector<Outbound> operator()(const GetData &m) { return self.on_getdata(from, m); }
    };
    return std::visit(Visitor{*this, from, now}, msg);
}

std::vector<Outbound> Node::on_keyblock(NodeId from, const KeyBlock &kb, TimeUs now)
{
    const Hash h = block_hash(kb);
    if (store_.keyblocks.contains(h) || invalid_.contains(h))
        return {};
    if (kb.height == 0 || !seal_valid(kb, params_.seal_bits)) {
        invalid_.insert(h);
        return {};
    }
    store_keyblock(h, kb);
    pending_.insert(h);
    source_.emplace(h, from);
    std::vector<Outbound> out;
    relay(out, kb, from);
    auto more = progress(now);
    out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    return out;
}

std::vector<Outbound> Node::request_missing(const Hash &kb_hash, const MissingData &missing, NodeId hint,
                                            TimeUs now)
{
    std::vector<Outbound> out;
    auto ask = [&](const Hash &key, const GetData &req, ServiceNumber channel) {
        auto it = requested_.find(key);
        const bool first = it == requested_.end();
        if (!first && now - it->second < kRetryUs)
            return;
        requested_[key] = now;
        // The first request goes to the peer that announced the block when it
        // keeps the channel; retries ask every peer that may hold the data.
        bool hint_holds = false;
        for (const auto &p : peers_)
            hint_holds = hint_holds || (p.id == hint && p.wants(channel));
        for (const auto &p : peers_) {
            if (first && hint_holds && p.id != hint)
                continue;
            if (!p.wants(channel))
                continue;
            out.push_back({p.id, req});
        }
    };
    for (const auto &[c, mb] : missing.microblocks)
        ask(mb, GetData{GetData::Kind::kMicroBlock, mb, c}, c);
    for (const auto c : missing.bundles) {
        Encoder e;
        encode(e, kb_hash);
        encode(e, c);
        ask(sha256(e.data()), GetData{GetData::Kind::kInflow, kb_hash, c}, c);
    }
    return out;
}

std::vector<Outbound> Node::progress(TimeUs now)
{
    now_ = now;
    std::vector<Outbound> out;
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto it = pending_.begin(); it != pending_.end();) {
            const Hash h = *it;
            const KeyBlock &kb = store_.keyblocks.at(h);
            if (invalid_.contains(kb.prev)) {
                invalid_.insert(h);
                events_.push_back({NodeEvent::Kind::kInvalidBlock, h, {}, {}, kb.height, 0, kb.miner, now});
                it = pending_.erase(it);
                changed = true;
                continue;
            }
            auto parent = states_.find(kb.prev);
            if (parent == states_.end()) {
                if (!store_.keyblocks.contains(kb.prev)) {
                    auto it_req = requested_.find(kb.prev);
                    const bool first = it_req == requested_.end();
                    if (first || now - it_req->second >= kRetryUs) {
                        requested_[kb.prev] = now;
                        for (const auto &p : peers_)
                            if (!first || p.id == source_[h])
                                out.push_back({p.id, GetData{GetData::Kind::kKeyBlock, kb.prev, {}}});
                    }
                }
                ++it;
                continue;
            }
            const auto missing = missing_data(kb, parent->second, store_.data);
            if (!missing.empty()) {
                auto req = request_missing(h, missing, source_[h], now);
                out.insert(out.end(), req.begin(), req.end());
                ++it;
                continue;
            }
            try {
                EpochOutcome outcome;
                auto state = apply_key_block(kb, parent->second, store_.data, params_, &outcome);
                view_.add(kb);
                auto &confirmed = confirmed_[h];
                for (const auto &[c, hashes] : outcome.microblocks)
                    for (const auto &mh : hashes)
                        for (const auto &tx : store_.data.microblocks.at(mh).txs)
                            confirmed.emplace_back(c, tx);
                if (parent->second.tracks(kPaymentChannel)) {
                    for (auto &[c, proofs] : outcome.inflows) {
                        InflowBundle bundle{h, c, std::move(proofs)};
                        if (store_bundle(bundle))
                            relay(out, bundle, std::nullopt);
                    }
                }
                states_.emplace(h, std::move(state));
            } catch (const ConsensusError &e) {
                if (e.code() == ConsensusErrc::kMissingData) {
                    ++it;
                    continue;
                }
                invalid_.insert(h);
                events_.push_back({NodeEvent::Kind::kInvalidBlock, h, {}, {}, kb.height, 0, kb.miner, now});
            }
            it = pending_.erase(it);
            changed = true;
        }
    }
    const Hash best = fork_choice(view_, config_.fork_choice_seed);
    if (best != view_.tip())
        set_tip(best, now);
    return out;
}

void Node::set_tip(const Hash &new_tip, TimeUs now)
{
    const Hash old = view_.tip();
    const Hash ancestor = view_.common_ancestor(old, new_tip);
    uint64_t depth = 0;
    for (Hash b = old; b != ancestor; b = view_.block(b).prev) {
        disconnect_block(b);
        ++depth;
    }
    view_.set_tip(new_tip);
    std::vector<Hash> path;
    for (Hash b = new_tip; b != ancestor; b = view_.block(b).prev)
        path.push_back(b);
    std::reverse(path.begin(), path.end());
    for (const auto &b : path)
        connect_block(b, now);
    if (depth > 0)
        events_.push_back({NodeEvent::Kind::kReorg, new_tip, {}, {}, view_.block(new_tip).height, depth, {}, now});
    rebuild_epoch();
}

void Node::connect_block(const Hash &h, TimeUs now)
{
    const auto height = view_.block(h).height;
    for (const auto &[c, tx] : confirmed_[h]) {
        const Hash txid = tx_hash(tx);
        evict(c, txid);
        events_.push_back({NodeEvent::Kind::kTxConfirmed, h, txid, c, height, 0, {}, now});
    }
}

void Node::disconnect_block(const Hash &h)
{
    for (const auto &[c, tx] : confirmed_[h]) {
        if (!subscribes(c))
            continue;
        const Hash txid = tx_hash(tx);
        mempool_[c].emplace(txid, MempoolEntry{tx, encode_to_bytes(tx).size(), seq_++});
    }
}

void Node::evict(ServiceNumber c, const Hash &txid)
{
    if (auto it = mempool_.find(c); it != mempool_.end())
        it->second.erase(txid);
}

void Node::rebuild_epoch()
{
    const auto &st = tip_state();
    epoch_ = Epoch{};
    epoch_.block = st.block;
    epoch_.states = st.channels;
    fill_epoch_context(epoch_ctx_, st, params_);
    for (const auto &[c, _] : epoch_.states) {
        epoch_.effects[c];
        epoch_.chain[c];
        extend_epoch_from_store(c);
    }
}

bool Node::extend_epoch(ServiceNumber c, const MicroBlock &mb)
{
    const auto &st = tip_state();
    const auto *proto = st.governance.descriptor_at(c, st.height);
    auto cs = epoch_.states.find(c);
    if (proto == nullptr || cs == epoch_.states.end())
        return false;
    try {
        apply_microblock_in_place(mb, cs->second, *proto, epoch_ctx_.ctx, epoch_.effects[c]);
    } catch (const LedgerError &) {
        return false;
    }
    epoch_.chain[c].push_back(block_hash(mb));
    for (const auto &tx : mb.txs) {
        const Hash txid = tx_hash(tx);
        epoch_.included.insert(txid);
        events_.push_back({NodeEvent::Kind::kTxSerialized, epoch_.block, txid, c, st.height, 0, {}, now_});
    }
    return true;
}

void Node::extend_epoch_from_store(ServiceNumber c)
{
    while (true) {
        const auto &chain = epoch_.chain[c];
        const Hash tail = chain.empty() ? epoch_.block : chain.back();
        auto it = children_by_prev_.find(tail);
        if (it == children_by_prev_.end())
            return;
        bool extended = false;
        for (const auto &child : it->second) {
            const auto &mb = store_.data.microblocks.at(child);
            if (mb.header.channel != c || mb.header.epoch != epoch_.block)
                continue;
            if (extend_epoch(c, mb)) {
                extended = true;
                break;
            }
        }
        if (!extended)
            return;
    }
}

std::vector<Outbound> Node::on_microblock(NodeId from, const MicroBlock &mb, TimeUs now)
{
    now_ = now;
    const auto c = mb.header.channel;
    if (!subscribes(c))
        return {};
    const Hash h = block_hash(mb);
    if (store_.data.microblocks.contains(h))
        return {};
    if (!verify_header(mb.signed_header()) || microblock_tx_root(mb.txs) != mb.header.tx_root)
        return {};
    store_microblock(h, mb);
    std::vector<Outbound> out;
    relay(out, mb, from);
    if (auto evidence = fork_detector_.observe(mb.signed_header())) {
        auto more = report_fork(*evidence, now);
        out.insert(out.end(), more.begin(), more.end());
    }
    if (mb.header.epoch == epoch_.block && epoch_.states.contains(c)) {
        const auto &chain = epoch_.chain[c];
        const Hash tail = chain.empty() ? epoch_.block : chain.back();
        if (mb.header.prev == tail && extend_epoch(c, mb))
            extend_epoch_from_store(c);
    }
    if (!pending_.empty()) {
        auto more = progress(now);
        out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    }
    return out;
}

std::vector<Outbound> Node::report_fork(const PoisonEvidence &evidence, TimeUs now)
{
    if (!subscribes(kPaymentChannel) || evidence.first.header.leader == keys_.pub)
        return {};
    const Hash accused = evidence.first.header.epoch;
    if (!reported_epochs_.insert(accused).second)
        return {};
    Transaction tx{PoisonTx{evidence, keys_.pub, {}}};
    sign_poison(tx, keys_.secret);
    events_.push_back(
        {NodeEvent::Kind::kPoisonSubmitted, accused, tx_hash(tx), kPaymentChannel, 0, 0, evidence.first.header.leader, now});
    return submit_tx({kPaymentChannel, std::move(tx)}, now);
}

bool Node::admit_to_mempool(const TxMessage &msg, const Hash &txid)
{
    const auto c = msg.channel;
    if (msg.tx.kind() == TxKind::kCoinbase || epoch_.included.contains(txid))
        return false;
    auto st = epoch_.states.find(c);
    if (st == epoch_.states.end())
        return false;
    const auto &tip = tip_state();
    const auto *proto = tip.governance.descriptor_at(c, tip.height);
    if (proto == nullptr)
        return false;
    const auto v = validate_tx(msg.tx, st->second, *proto, epoch_ctx_.ctx, &epoch_.effects[c]);
    if (!v && !keep_for_later(v.code))
        return false;
    auto &pool = mempool_[c];
    pool.emplace(txid, MempoolEntry{msg.tx, encode_to_bytes(msg.tx).size(), seq_++});
    if (pool.size() > config_.mempool_capacity) {
        auto worst = pool.begin();
        for (auto it = std::next(pool.begin()); it != pool.end(); ++it)
            if (higher_priority(worst->second.tx, worst->second.bytes, worst->first, it->second.tx, it->second.bytes,
                                it->first))
                worst = it;
        pool.erase(worst);
    }
    return pool.contains(txid);
}

std::vector<Outbound> Node::on_tx(NodeId from, const TxMessage &msg, TimeUs now)
{
    now_ = now;
    if (!subscribes(msg.channel))
        return {};
    const Hash txid = tx_hash(msg.tx);
    if (!seen_txs_.insert(txid).second)
        return {};
    if (!admit_to_mempool(msg, txid))
        return {};
    std::vector<Outbound> out;
    relay(out, msg, from);
    return out;
}

std::vector<Outbound> Node::submit_tx(const TxMessage &msg, TimeUs now)
{
    now_ = now;
    if (!subscribes(msg.channel))
        return {};
    const Hash txid = tx_hash(msg.tx);
    if (!seen_txs_.insert(txid).second)
        return {};
    if (!admit_to_mempool(msg, txid))
        return {};
    std::vector<Outbound> out;
    relay(out, msg, std::nullopt);
    return out;
}

std::vector<Outbound> Node::on_bundle(NodeId from, const InflowBundle &bundle, TimeUs now)
{
    if (bundle.channel == kPaymentChannel || !subscribes(bundle.channel))
        return {};
    if (store_.data.bundles.contains({bundle.key_block, bundle.channel}))
        return {};
    // Reject proofs that cannot match a known key block's commitment, so a
    // bad bundle never condemns a valid block.
    if (auto kb = store_.keyblocks.find(bundle.key_block); kb != store_.keyblocks.end()) {
        auto root = kb->second.inflow_commitments.find(bundle.channel);
        if (root == kb->second.inflow_commitments.end() || bundle.proofs.empty() ||
            !inflow_proofs_complete(bundle.proofs))
            return {};
        for (const auto &p : bundle.proofs)
            if (!merkle_verify(inflow_leaf_hash(p.outpoint, p.output), p.proof, root->second))
                return {};
    }
    store_bundle(bundle);
    std::vector<Outbound> out;
    relay(out, bundle, from);
    auto more = progress(now);
    out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    return out;
}

std::vector<Outbound> Node::on_getdata(NodeId from, const GetData &req) const
{
    switch (req.kind) {
    case GetData::Kind::kKeyBlock:
        if (auto it = store_.keyblocks.find(req.hash); it != store_.keyblocks.end())
            return {{from, it->second}};
        break;
    case GetData::Kind::kMicroBlock:
        if (!subscribes(req.channel))
            break;
        if (const auto *mb = store_.data.microblock(req.hash); mb != nullptr && mb->header.channel == req.channel)
            return {{from, *mb}};
        break;
    case GetData::Kind::kInflow:
        if (!subscribes(req.channel))
            break;
        if (const auto *proofs = store_.data.inflow_bundle(req.hash, req.channel))
            return {{from, InflowBundle{req.hash, req.channel, *proofs}}};
        break;
    }
    return {};
}

MicroBlock Node::assemble_microblock(ServiceNumber channel, TimeUs now)
{
    if (!is_leader())
        throw NotLeader(fmt::format("node {} does not lead the current epoch", config_.name));
    auto st = epoch_.states.find(channel);
    if (st == epoch_.states.end())
        throw std::invalid_argument(fmt::format("channel {} is not active", channel.value));
    const auto &tip = tip_state();
    const auto *proto = tip.governance.descriptor_at(channel, tip.height);

    MicroBlock mb;
    mb.header.channel = channel;
    mb.header.epoch = epoch_.block;
    const auto &chain = epoch_.chain[channel];
    mb.header.prev = chain.empty() ? epoch_.block : chain.back();
    mb.header.timestamp_us = now;
    mb.header.leader = keys_.pub;

    struct Candidate {
        const Transaction *tx;
        size_t bytes;
        Hash id;
    };
    std::vector<Candidate> candidates;
    if (!config_.adversary.censored_channels.contains(channel)) {
        if (auto pool = mempool_.find(channel); pool != mempool_.end())
            for (const auto &[id, e] : pool->second)
                if (!epoch_.included.contains(id))
                    candidates.push_back({&e.tx, e.bytes, id});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
        return higher_priority(*a.tx, a.bytes, a.id, *b.tx, b.bytes, b.id);
    });

    size_t total = encode_to_bytes(mb).size();
    EpochEffects effects = epoch_.effects[channel];
    TrialApply trial(st->second);
    std::vector<bool> taken(candidates.size(), false);
    std::vector<Hash> rejected;
    // Greedy by priority; repeated so that a child ordered before its parent
    // still gets in once the parent is selected.
    for (bool progress = true; progress;) {
        progress = false;
        for (size_t i = 0; i < candidates.size(); ++i) {
            if (taken[i] || total + candidates[i].bytes > proto->max_microblock_bytes)
                continue;
            const auto v = validate_tx(*candidates[i].tx, st->second, *proto, epoch_ctx_.ctx, &effects);
            if (!v)
                continue;
            trial.apply(*candidates[i].tx, tip.height, effects);
            mb.txs.push_back(*candidates[i].tx);
            total += candidates[i].bytes;
            taken[i] = true;
            progress = true;
        }
    }
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (taken[i])
            continue;
        const auto v = validate_tx(*candidates[i].tx, st->second, *proto, epoch_ctx_.ctx, &effects);
        if (!v && !keep_for_later(v.code))
            rejected.push_back(candidates[i].id);
    }
    trial.rollback();
    for (const auto &id : rejected)
        evict(channel, id);

    mb.header.tx_root = microblock_tx_root(mb.txs);
    sign_header(mb, keys_.secret);
    return mb;
}

std::vector<Outbound> Node::on_microblock_timer(ServiceNumber channel, TimeUs now)
{
    now_ = now;
    if (!is_leader() || !epoch_.states.contains(channel))
        return {};
    const auto &tip = tip_state();
    const auto *proto = tip.governance.descriptor_at(channel, tip.height);
    const auto &state = epoch_.states.at(channel);
    const bool first = epoch_.chain[channel].empty();
    if (!first && now < state.tip_time_us + proto->microblock_interval_us)
        return {};
    if (mempool_size(channel) == 0)
        return {};
    MicroBlock mb = assemble_microblock(channel, now);
    if (mb.txs.empty())
        return {};
    const Hash h = block_hash(mb);
    const bool fork = config_.adversary.microblock_forker && forked_.insert({epoch_.block, channel}).second;
    if (!fork)
        return on_microblock(id(), mb, now);

    // Equivocation: a second, conflicting child of the same microblock goes
    // to the other half of the peers.
    MicroBlock alt = mb;
    alt.header.timestamp_us += 1;
    sign_header(alt, keys_.secret);
    store_microblock(h, mb);
    store_microblock(block_hash(alt), alt);
    extend_epoch(channel, mb);
    std::vector<Outbound> out;
    std::vector<const PeerInfo *> targets;
    for (const auto &p : peers_)
        if (p.wants(channel))
            targets.push_back(&p);
    for (size_t i = 0; i < targets.size(); ++i)
        out.push_back({targets[i]->id, i % 2 == 0 ? Message{mb} : Message{alt}});
    return out;
}

std::optional<Hash> Node::choose_ballot(const LedgerState &parent) const
{
    if (config_.adversary.ballot_suppressor)
        return std::nullopt;
    const auto &proposals = parent.governance.proposals;
    switch (config_.ballot) {
    case BallotPolicy::kNone:
        return std::nullopt;
    case BallotPolicy::kTarget:
        if (config_.ballot_target && proposals.contains(*config_.ballot_target))
            return config_.ballot_target;
        return std::nullopt;
    case BallotPolicy::kFirstPending: {
        const Proposal *best = nullptr;
        for (const auto &[h, p] : proposals)
            if (best == nullptr || p.registered_height < best->registered_height)
                best = &p;
        if (best == nullptr)
            return std::nullopt;
        return best->tx_hash;
    }
    }
    return std::nullopt;
}

KeyBlock Node::assemble_key_block(TimeUs now) const
{
    if (!is_full())
        throw std::logic_error("only full nodes mine");
    const auto &parent = tip_state();
    KeyBlock kb;
    kb.prev = parent.block;
    kb.height = parent.height + 1;
    kb.work = parent.work + 1;
    kb.miner = keys_.pub;

    TimeUs latest = parent.time_us + 1;
    auto tail_of = [&](ServiceNumber c) {
        const auto &chain = epoch_.chain.at(c);
        if (chain.empty())
            return epoch_.block;
        for (const auto &h : chain)
            latest = std::max(latest, store_.data.microblocks.at(h).header.timestamp_us);
        return chain.back();
    };

    kb.channel_refs[kPaymentChannel] = tail_of(kPaymentChannel);
    std::vector<std::pair<Amount, ServiceNumber>> others;
    for (const auto &[c, eff] : epoch_.effects)
        if (c != kPaymentChannel && eff.tx_count > 0)
            others.emplace_back(eff.fees, c);
    if (others.size() + 1 > params_.max_channel_refs) {
        // Keep the channels with the most fees at stake.
        std::sort(others.begin(), others.end(), [](const auto &a, const auto &b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        others.resize(params_.max_channel_refs - 1);
    }
    for (const auto &[_, c] : others)
        kb.channel_refs[c] = tail_of(c);

    const auto &payment = epoch_.effects.at(kPaymentChannel);
    kb.inflow_commitments = build_inflow_commitment(payment.pore_outputs);
    for (const auto &p : payment.poisons)
        kb.revocations.push_back({p.accused_block, p.reporter});

    RewardState rewards = parent.rewards;
    std::vector<WhistleblowerCredit> credits;
    for (const auto &rev : kb.revocations) {
        auto owed = enact_revocation(rev, rewards, parent.chain_blocks, kb.height, params_);
        credits.insert(credits.end(), owed.begin(), owed.end());
    }
    std::map<ServiceNumber, Amount> fees;
    for (const auto &[c, _] : kb.channel_refs)
        if (const auto f = epoch_.effects.at(c).fees; f > 0)
            fees.emplace(c, f);
    kb.ballot = choose_ballot(parent);
    kb.coinbase = build_coinbase(params_, kb.height, keys_.pub, parent.miner, fees, credits);
    kb.timestamp_us = std::max(now, latest);
    seal(kb, params_.seal_bits);
    return kb;
}

std::vector<Outbound> Node::mine(TimeUs now)
{
    const KeyBlock kb = assemble_key_block(now);
    const Hash h = block_hash(kb);
    auto out = on_keyblock(id(), kb, now);
    if (!view_.contains(h))
        throw std::logic_error(fmt::format("node {} assembled key block {} that fails its own validation",
                                           config_.name, h.hex()));
    return out;
}

std::vector<Outbound> Node::announce_tip() const
{
    std::vector<Outbound> out;
    for (const auto &p : peers_)
        out.push_back({p.id, view_.block(view_.tip())});
    return out;
}

void Node::partial_sync(const std::vector<KeyBlock> &chain, const EpochData &data)
{
    if (chain.empty() || block_hash(chain.front()) != view_.genesis())
        throw BadChain(chain.empty() ? Hash{} : block_hash(chain.front()), "served chain does not start at genesis");
    const FilteredData filtered(data, tracking_);
    struct Fetched {
        Hash hash;
        LedgerState state;
        std::vector<std::pair<ServiceNumber, Transaction>> confirmed;
        std::vector<InflowBundle> bundles;
    };
    std::vector<Fetched> fetched;
    std::vector<const MicroBlock *> microblocks;
    const LedgerState *prev = &states_.at(view_.genesis());
    for (size_t i = 1; i < chain.size(); ++i) {
        const auto &kb = chain[i];
        const Hash h = block_hash(kb);
        EpochOutcome outcome;
        Fetched f;
        f.hash = h;
        try {
            f.state = apply_key_block(kb, *prev, filtered, params_, &outcome);
        } catch (const ConsensusError &e) {
            throw BadChain(h, fmt::format("key block {} at height {}: {} ({})", h.hex(), kb.height, e.what(),
                                          to_string(e.code())));
        }
        for (const auto &[c, hashes] : outcome.microblocks)
            for (const auto &mh : hashes) {
                const auto *mb = filtered.microblock(mh);
                microblocks.push_back(mb);
                for (const auto &tx : mb->txs)
                    f.confirmed.emplace_back(c, tx);
            }
        for (auto &[c, proofs] : outcome.inflows)
            f.bundles.push_back({h, c, std::move(proofs)});
        fetched.push_back(std::move(f));
        prev = &fetched.back().state;
    }

    // Everything verified; commit.
    for (size_t i = 1; i < chain.size(); ++i)
        store_keyblock(fetched[i - 1].hash, chain[i]);
    for (const auto *mb : microblocks)
        store_microblock(block_hash(*mb), *mb);
    for (auto &f : fetched) {
        for (const auto &b : f.bundles)
            store_bundle(b);
        if (!view_.contains(f.hash)) {
            view_.add(store_.keyblocks.at(f.hash));
            confirmed_[f.hash] = std::move(f.confirmed);
            states_.emplace(f.hash, std::move(f.state));
        }
        pending_.erase(f.hash);
        invalid_.erase(f.hash);
    }
    const Hash best = fork_choice(view_, config_.fork_choice_seed);
    if (best != view_.tip())
        set_tip(best, now_);
    else
        rebuild_epoch();
}

void Node::sync_from(const Node &peer)
{
    std::vector<KeyBlock> chain;
    for (const auto &h : peer.view().path_from_genesis(peer.tip()))
        chain.push_back(peer.view().block(h));
    partial_sync(chain, peer.store().data);
}

AuditResult Node::audit() const
{
    const auto path = view_.path_from_genesis(view_.tip());
    LedgerState state = genesis_state(view_.block(view_.genesis()), params_, tracking_);
    if (state != states_.at(view_.genesis()))
        return {false, view_.genesis(), "genesis state differs"};
    for (size_t i = 1; i < path.size(); ++i) {
        const Hash &h = path[i];
        auto kb = store_.keyblocks.find(h);
        if (kb == store_.keyblocks.end())
            return {false, h, "key block missing from the store"};
        try {
            state = apply_key_block(kb->second, state, store_.data, params_);
        } catch (const ConsensusError &e) {
            return {false, h, fmt::format("replay rejected the block: {} ({})", e.what(), to_string(e.code()))};
        }
        if (state != states_.at(h))
            return {false, h, "replayed state differs from the incremental state"};
    }
    return {};
}

}  // namespace aspen
