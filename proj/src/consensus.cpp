#include <aspen/consensus.hpp>
#include <aspen/crypto.hpp>
#include <aspen/rewards.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <tuple>

namespace aspen {

const char *to_string(ConsensusErrc code)
{
    switch (code) {
    case ConsensusErrc::kOk: return "Ok";
    case ConsensusErrc::kBadWork: return "BadWork";
    case ConsensusErrc::kBadHeight: return "BadHeight";
    case ConsensusErrc::kBadTimestamp: return "BadTimestamp";
    case ConsensusErrc::kUnknownParent: return "UnknownParent";
    case ConsensusErrc::kBadChannelRef: return "BadChannelRef";
    case ConsensusErrc::kInertChannelListed: return "InertChannelListed";
    case ConsensusErrc::kTooManyRefs: return "TooManyRefs";
    case ConsensusErrc::kBadMicroblock: return "BadMicroblock";
    case ConsensusErrc::kBadInflowCommitment: return "BadInflowCommitment";
    case ConsensusErrc::kBadRevocation: return "BadRevocation";
    case ConsensusErrc::kBadCoinbase: return "BadCoinbase";
    case ConsensusErrc::kBadBallot: return "BadBallot";
    case ConsensusErrc::kMissingData: return "MissingData";
    case ConsensusErrc::kBadEvidence: return "BadEvidence";
    case ConsensusErrc::kStaleEvidence: return "StaleEvidence";
    }
    return "Unknown";
}

bool seal_valid(const KeyBlock &kb, uint32_t seal_bits)
{
    const Hash h = block_hash(kb);
    uint32_t bits = seal_bits;
    for (size_t i = 0; bits > 0; ++i) {
        const uint32_t take = std::min<uint32_t>(bits, 8);
        const uint8_t mask = static_cast<uint8_t>(0xff << (8 - take));
        if ((h.bytes[i] & mask) != 0)
            return false;
        bits -= take;
    }
    return true;
}

void seal(KeyBlock &kb, uint32_t seal_bits)
{
    kb.work_nonce = 0;
    while (!seal_valid(kb, seal_bits))
        ++kb.work_nonce;
}

KeyBlock make_genesis(const ChainParams &params)
{
    params.validate();
    KeyBlock g;
    g.prev = hash_of(params);  // binds the chain to its parameters
    g.height = 0;
    g.timestamp_us = 0;
    g.coinbase.height = 0;
    g.coinbase.outputs = params.genesis_allocation;
    g.work = 1;
    seal(g, params.seal_bits);
    return g;
}

ChainView::ChainView(const KeyBlock &genesis)
{
    genesis_ = block_hash(genesis);
    tip_ = genesis_;
    blocks_.emplace(genesis_, genesis);
    children_[genesis_];
    work_[genesis_] = genesis.work;
}

void ChainView::set_tip(const Hash &h)
{
    if (!contains(h))
        throw std::out_of_range("tip must be a known block");
    tip_ = h;
}

const std::set<Hash> &ChainView::children(const Hash &h) const { return children_.at(h); }

void ChainView::add(const KeyBlock &kb)
{
    const Hash h = block_hash(kb);
    if (blocks_.contains(h))
        return;
    auto parent = work_.find(kb.prev);
    if (parent == work_.end())
        throw ConsensusError(ConsensusErrc::kUnknownParent, fmt::format("parent {} unknown", kb.prev.short_hex()));
    const uint64_t work = parent->second + 1;
    blocks_.emplace(h, kb);
    children_[kb.prev].insert(h);
    children_[h];
    work_[h] = work;
}

std::vector<Hash> ChainView::leaves() const
{
    std::vector<Hash> out;
    for (const auto &[h, kids] : children_)
        if (kids.empty())
            out.push_back(h);
    return out;
}

std::vector<Hash> ChainView::path_from_genesis(const Hash &h) const
{
    std::vector<Hash> path;
    Hash cur = h;
    while (true) {
        path.push_back(cur);
        if (cur == genesis_)
            break;
        cur = blocks_.at(cur).prev;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

Hash ChainView::common_ancestor(const Hash &a, const Hash &b) const
{
    Hash x = a;
    Hash y = b;
    while (blocks_.at(x).height > blocks_.at(y).height)
        x = blocks_.at(x).prev;
    while (blocks_.at(y).height > blocks_.at(x).height)
        y = blocks_.at(y).prev;
    while (x != y) {
        x = blocks_.at(x).prev;
        y = blocks_.at(y).prev;
    }
    return x;
}

bool ChainView::is_ancestor(const Hash &ancestor, const Hash &h) const
{
    const auto target = blocks_.at(ancestor).height;
    Hash cur = h;
    while (blocks_.at(cur).height > target)
        cur = blocks_.at(cur).prev;
    return cur == ancestor;
}

Hash fork_choice(const ChainView &view, uint64_t rng_seed)
{
    std::vector<Hash> best;
    uint64_t best_work = 0;
    for (const auto &leaf : view.leaves()) {
        const auto w = view.cumulative_work(leaf);
        if (w > best_work) {
            best.clear();
            best_work = w;
        }
        if (w == best_work)
            best.push_back(leaf);
    }
    if (best.size() == 1)
        return best.front();
    // The draw is keyed by who mined each candidate and when, not by block
    // contents, so traffic in one channel cannot steer which branch wins.
    std::sort(best.begin(), best.end(), [&](const Hash &a, const Hash &b) {
        const auto &x = view.block(a), &y = view.block(b);
        return std::tie(x.timestamp_us, x.miner, a) < std::tie(y.timestamp_us, y.miner, b);
    });
    Encoder e;
    for (const auto &h : best) {
        e.i64(view.block(h).timestamp_us);
        encode(e, view.block(h).miner);
    }
    const Hash set_digest = sha256(e.data());
    uint64_t salt = 0;
    for (size_t i = 0; i < 8; ++i)
        salt = salt << 8 | set_digest.bytes[i];
    Rng rng(mix_seed(rng_seed, salt));
    return best[rng.below(best.size())];
}

MineDraw mine_next(std::span<const double> hash_power, double mean_interval, Rng &rng)
{
    double total = 0;
    for (double p : hash_power) {
        if (p < 0)
            throw std::invalid_argument("hash power must be non-negative");
        total += p;
    }
    if (!(total > 0))
        throw std::invalid_argument("mine_next requires positive total hash power");
    MineDraw d;
    d.winner = rng.weighted(hash_power);
    d.interval = rng.exponential(mean_interval);
    return d;
}

std::optional<PoisonEvidence> MicroForkDetector::observe(const SignedMicroHeader &h)
{
    const Key key{h.header.channel, h.header.prev, h.header.leader};
    auto [it, inserted] = first_seen_.emplace(key, h);
    if (inserted)
        return std::nullopt;
    if (block_hash(it->second.header) == block_hash(h.header))
        return std::nullopt;
    return PoisonEvidence{it->second, h};
}

std::optional<PoisonEvidence> detect_microblock_fork(std::span<const SignedMicroHeader> headers)
{
    MicroForkDetector detector;
    for (const auto &h : headers)
        if (auto ev = detector.observe(h))
            return ev;
    return std::nullopt;
}

std::vector<RevokedOutput> revoked_outputs(const KeyBlockRecord &accused)
{
    std::vector<RevokedOutput> out;
    for (uint32_t i = 0; i < accused.coinbase.outputs.size(); ++i) {
        const auto &o = accused.coinbase.outputs[i];
        if (o.owner == accused.miner)
            out.push_back({OutPoint{accused.coinbase_hash, i}, o});
    }
    return out;
}

RewardState apply_poison(const PoisonEvidence &evidence, const PublicKey &reporter, const RewardState &state,
                         const std::map<Hash, KeyBlockRecord> &chain_blocks, uint64_t revoking_height,
                         const ChainParams &params)
{
    if (revoking_height == 0)
        throw ConsensusError(ConsensusErrc::kBadEvidence, "genesis cannot enact a revocation");
    ChainContext ctx;
    ctx.params = &params;
    ctx.epoch_height = revoking_height - 1;
    ctx.chain_blocks = &chain_blocks;
    ctx.revoked = &state.revoked;
    if (auto v = check_poison_evidence(evidence, ctx); !v) {
        const auto code = v.code == LedgerErrc::kStaleEvidence ? ConsensusErrc::kStaleEvidence
                                                                : ConsensusErrc::kBadEvidence;
        throw ConsensusError(code, v.detail);
    }
    RewardState next = state;
    enact_revocation({evidence.first.header.epoch, reporter}, next, chain_blocks, revoking_height, params);
    return next;
}

std::vector<WhistleblowerCredit> enact_revocation(const Revocation &rev, RewardState &state,
                                                  const std::map<Hash, KeyBlockRecord> &chain_blocks,
                                                  uint64_t revoking_height, const ChainParams &params)
{
    auto it = chain_blocks.find(rev.accused_block);
    if (it == chain_blocks.end())
        throw ConsensusError(ConsensusErrc::kBadEvidence, "accused key block is not on this chain");
    const auto &accused = it->second;
    if (accused.height == 0 || revoking_height <= accused.height)
        throw ConsensusError(ConsensusErrc::kBadEvidence, "revocation must follow the accused key block");
    if (revoking_height > accused.height + params.coinbase_maturity)
        throw ConsensusError(ConsensusErrc::kStaleEvidence, "revocation past the maturity window");
    if (state.revoked.contains(accused.hash))
        throw ConsensusError(ConsensusErrc::kStaleEvidence, "epoch reward already revoked");
    state.revoked.insert(accused.hash);
    std::vector<WhistleblowerCredit> credits;
    for (const auto &r : revoked_outputs(accused)) {
        const auto credit = whistleblower_share(r.output.value, params.whistleblower_ppm);
        state.credited += credit;
        state.burned += r.output.value - credit;
        credits.push_back({rev.reporter, r.output});
    }
    return credits;
}

}  // namespace aspen
