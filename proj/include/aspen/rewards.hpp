#pragma once

// Coinbase construction: a fixed subsidy for the key block miner plus, for
// every channel, the previous epoch's fees split between the miner that
// serialized them and the miner that extended its microblock chain. Every
// fee output stays locked to the channel it was collected in.

#include <aspen/types.hpp>
#include <aspen/verdict.hpp>

#include <map>
#include <set>
#include <span>

namespace aspen {

enum class RewardErrc { kOk, kBadCoinbase };
const char *to_string(RewardErrc code);
using RewardVerdict = Verdict<RewardErrc>;

class FeeLedger {
public:
    void add(uint64_t epoch, ServiceNumber channel, Amount fee);
    Amount total(uint64_t epoch, ServiceNumber channel) const;
    // Fees of one epoch keyed by channel; channels without fees are absent.
    std::map<ServiceNumber, Amount> epoch(uint64_t epoch) const;

private:
    std::map<std::pair<uint64_t, ServiceNumber>, Amount> fees_;
};

Amount subsidy(const ChainParams &params, uint64_t height);

struct FeeSplit {
    Amount serializer = 0;  // previous-epoch leader
    Amount next = 0;        // miner of the key block that closes the epoch
};

// serializer = floor(total * r), next = total - serializer.
FeeSplit split_fees(Amount total, uint64_t r_ppm);

// Share of a revoked output paid to the poison reporter, locked to the same
// channel as the revoked output.
struct WhistleblowerCredit {
    PublicKey reporter;
    Output revoked;
};

CoinbaseTx build_coinbase(const ChainParams &params, uint64_t height, const PublicKey &current_miner,
                          const PublicKey &previous_miner, const std::map<ServiceNumber, Amount> &epoch_fees,
                          std::span<const WhistleblowerCredit> credits = {});

CoinbaseTx build_coinbase(const ChainParams &params, uint64_t height, const PublicKey &current_miner,
                          const PublicKey &previous_miner, const FeeLedger &ledger,
                          std::span<const WhistleblowerCredit> credits = {});

Amount whistleblower_share(Amount revoked_value, uint64_t share_ppm);

// Exact comparison against build_coinbase. When `visible` is set, only
// outputs locked to those channels are compared, which is what a node
// tracking a subset of channels can check.
RewardVerdict verify_coinbase(const KeyBlock &kb, const ChainParams &params, const PublicKey &previous_miner,
                              const std::map<ServiceNumber, Amount> &epoch_fees,
                              std::span<const WhistleblowerCredit> credits = {},
                              const std::set<ServiceNumber> *visible = nullptr);

RewardVerdict verify_coinbase(const KeyBlock &kb, const ChainParams &params, const PublicKey &previous_miner,
                              const FeeLedger &ledger);

}  // namespace aspen
