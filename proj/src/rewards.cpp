#include <aspen/rewards.hpp>

#include <fmt/format.h>

#include <set>

namespace aspen {

const char *to_string(RewardErrc code) { return code == RewardErrc::kOk ? "Ok" : "BadCoinbase"; }

void FeeLedger::add(uint64_t epoch, ServiceNumber channel, Amount fee)
{
    if (fee == 0)
        return;
    fees_[{epoch, channel}] += fee;
}

Amount FeeLedger::total(uint64_t epoch, ServiceNumber channel) const
{
    auto it = fees_.find({epoch, channel});
    return it == fees_.end() ? 0 : it->second;
}

std::map<ServiceNumber, Amount> FeeLedger::epoch(uint64_t epoch) const
{
    std::map<ServiceNumber, Amount> out;
    for (auto it = fees_.lower_bound({epoch, ServiceNumber{0}}); it != fees_.end() && it->first.first == epoch; ++it)
        out.emplace(it->first.second, it->second);
    return out;
}

Amount subsidy(const ChainParams &params, uint64_t height)
{
    (void)height;  // fixed
    return params.subsidy;
}

FeeSplit split_fees(Amount total, uint64_t r_ppm)
{
    const auto serializer = static_cast<Amount>(static_cast<unsigned __int128>(total) * r_ppm / kPpm);
    return {serializer, total - serializer};
}

Amount whistleblower_share(Amount revoked_value, uint64_t share_ppm)
{
    return static_cast<Amount>(static_cast<unsigned __int128>(revoked_value) * share_ppm / kPpm);
}

CoinbaseTx build_coinbase(const ChainParams &params, uint64_t height, const PublicKey &current_miner,
                          const PublicKey &previous_miner, const std::map<ServiceNumber, Amount> &epoch_fees,
                          std::span<const WhistleblowerCredit> credits)
{
    CoinbaseTx cb;
    cb.height = height;
    if (const auto s = subsidy(params, height); s > 0)
        cb.outputs.push_back({s, current_miner, kPaymentChannel});
    // Both shares are always present for the payment channel, which every
    // key block references, and for each channel that collected fees. The
    // layout then depends only on which channels were active, never on amounts.
    std::map<ServiceNumber, Amount> split_channels{{kPaymentChannel, 0}};
    for (const auto &[channel, fees] : epoch_fees)
        split_channels[channel] += fees;
    for (const auto &[channel, fees] : split_channels) {
        const auto split = split_fees(fees, params.fee_split_ppm);
        cb.outputs.push_back({split.serializer, previous_miner, channel});
        cb.outputs.push_back({split.next, current_miner, channel});
    }
    for (const auto &c : credits)
        if (const auto v = whistleblower_share(c.revoked.value, params.whistleblower_ppm); v > 0)
            cb.outputs.push_back({v, c.reporter, c.revoked.spend_channel});
    return cb;
}

CoinbaseTx build_coinbase(const ChainParams &params, uint64_t height, const PublicKey &current_miner,
                          const PublicKey &previous_miner, const FeeLedger &ledger,
                          std::span<const WhistleblowerCredit> credits)
{
    if (height == 0)
        throw std::invalid_argument("coinbase of the genesis block is the genesis allocation");
    return build_coinbase(params, height, current_miner, previous_miner, ledger.epoch(height - 1), credits);
}

RewardVerdict verify_coinbase(const KeyBlock &kb, const ChainParams &params, const PublicKey &previous_miner,
                              const std::map<ServiceNumber, Amount> &epoch_fees,
                              std::span<const WhistleblowerCredit> credits, const std::set<ServiceNumber> *visible)
{
    const auto expected = build_coinbase(params, kb.height, kb.miner, previous_miner, epoch_fees, credits);
    if (kb.coinbase.height != expected.height)
        return RewardVerdict::fail(RewardErrc::kBadCoinbase, "coinbase height mismatch");
    if (visible == nullptr) {
        if (kb.coinbase.outputs != expected.outputs)
            return RewardVerdict::fail(RewardErrc::kBadCoinbase,
                                       fmt::format("coinbase at height {} differs from the recomputed split", kb.height));
        return RewardVerdict::pass();
    }
    auto filtered = [&](const std::vector<Output> &outs) {
        std::vector<Output> r;
        for (const auto &o : outs)
            if (visible->contains(o.spend_channel))
                r.push_back(o);
        return r;
    };
    if (filtered(kb.coinbase.outputs) != filtered(expected.outputs))
        return RewardVerdict::fail(RewardErrc::kBadCoinbase,
                                   fmt::format("coinbase outputs for tracked channels differ at height {}", kb.height));
    return RewardVerdict::pass();
}

RewardVerdict verify_coinbase(const KeyBlock &kb, const ChainParams &params, const PublicKey &previous_miner,
                              const FeeLedger &ledger)
{
    if (kb.height == 0)
        return RewardVerdict::fail(RewardErrc::kBadCoinbase, "genesis has no reward coinbase");
    return verify_coinbase(kb, params, previous_miner, ledger.epoch(kb.height - 1));
}

}  // namespace aspen
