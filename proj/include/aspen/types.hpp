#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace aspen {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

// Coin units. All consensus arithmetic is integral.
using Amount = uint64_t;

// Simulated time in microseconds. On-chain timestamps use the same unit.
using TimeUs = int64_t;

// Fractions are carried as parts-per-million so that threshold and split
// arithmetic stays exact and platform independent.
inline constexpr uint64_t kPpm = 1'000'000;

struct ServiceNumber {
    uint32_t value = 0;

    constexpr auto operator<=>(const ServiceNumber &) const = default;
};

inline constexpr ServiceNumber kPaymentChannel{0};
inline constexpr ServiceNumber kRegistrationChannel{1};

template <size_t N>
struct FixedBytes {
    std::array<uint8_t, N> bytes{};

    static constexpr size_t size() { return N; }
    bool is_zero() const;
    std::string hex() const;
    // Short prefix for diagnostics.
    std::string short_hex() const { return hex().substr(0, 12); }

    auto operator<=>(const FixedBytes &) const = default;
};

template <size_t N>
bool FixedBytes<N>::is_zero() const
{
    for (auto b : bytes)
        if (b != 0)
            return false;
    return true;
}

template <size_t N>
std::string FixedBytes<N>::hex() const
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(N * 2);
    for (auto b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

struct Hash : FixedBytes<32> {
    static Hash from_hex(std::string_view hex);
};
struct PublicKey : FixedBytes<32> {};
struct Signature : FixedBytes<64> {};
// libsodium layout: 32-byte seed followed by the public key.
struct SecretKey : FixedBytes<64> {};

struct KeyPair {
    PublicKey pub;
    SecretKey secret;
};

struct ProtocolDescriptor {
    ServiceNumber service;
    uint32_t max_tx_bytes = 4096;
    uint32_t max_microblock_bytes = 65536;
    TimeUs microblock_interval_us = 10'000'000;
    uint32_t payload_schema_id = 0;

    auto operator<=>(const ProtocolDescriptor &) const = default;
};

struct Output {
    Amount value = 0;
    PublicKey owner;
    ServiceNumber spend_channel;

    auto operator<=>(const Output &) const = default;
};

struct OutPoint {
    Hash tx_hash;
    uint32_t index = 0;

    auto operator<=>(const OutPoint &) const = default;
};

struct TxInput {
    OutPoint prevout;
    Signature sig;

    auto operator<=>(const TxInput &) const = default;
};

struct PaymentTx {
    std::vector<TxInput> inputs;
    std::vector<Output> outputs;
    Amount fee = 0;

    auto operator<=>(const PaymentTx &) const = default;
};

// Payment-channel transaction whose outputs may be locked to other channels.
struct FundingPoreTx {
    std::vector<TxInput> inputs;
    std::vector<Output> outputs;
    Amount fee = 0;

    auto operator<=>(const FundingPoreTx &) const = default;
};

struct ServiceTx {
    ServiceNumber service;
    uint32_t schema_id = 0;
    Bytes payload;
    std::vector<TxInput> inputs;
    std::vector<Output> outputs;
    Amount fee = 0;

    auto operator<=>(const ServiceTx &) const = default;
};

struct RegistrationTx {
    PublicKey proposer;
    std::vector<ProtocolDescriptor> proposals;
    uint64_t nonce = 0;
    Signature sig;

    auto operator<=>(const RegistrationTx &) const = default;
};

struct MicroBlockHeader {
    ServiceNumber channel;
    Hash epoch;  // key block that opened the epoch
    Hash prev;   // previous microblock of this channel, or `epoch`
    TimeUs timestamp_us = 0;
    Hash tx_root;
    PublicKey leader;

    auto operator<=>(const MicroBlockHeader &) const = default;
};

struct SignedMicroHeader {
    MicroBlockHeader header;
    Signature sig;

    auto operator<=>(const SignedMicroHeader &) const = default;
};

// Two headers signed by one leader that extend the same microblock.
struct PoisonEvidence {
    SignedMicroHeader first;
    SignedMicroHeader second;

    auto operator<=>(const PoisonEvidence &) const = default;
};

struct PoisonTx {
    PoisonEvidence evidence;
    PublicKey reporter;
    Signature sig;

    auto operator<=>(const PoisonTx &) const = default;
};

struct CoinbaseTx {
    uint64_t height = 0;
    std::vector<Output> outputs;

    auto operator<=>(const CoinbaseTx &) const = default;
};

enum class TxKind : uint8_t {
    kPayment = 0,
    kFundingPore = 1,
    kService = 2,
    kRegistration = 3,
    kPoison = 4,
    kCoinbase = 5,
};

const char *to_string(TxKind kind);

struct Transaction {
    std::variant<PaymentTx, FundingPoreTx, ServiceTx, RegistrationTx, PoisonTx, CoinbaseTx> body;

    TxKind kind() const { return static_cast<TxKind>(body.index()); }
    Amount fee() const;
    // Inputs and outputs of value-moving variants; empty spans otherwise.
    std::span<const TxInput> inputs() const;
    std::span<const Output> outputs() const;

    auto operator<=>(const Transaction &) const = default;
};

struct MicroBlock {
    MicroBlockHeader header;
    Signature sig;
    std::vector<Transaction> txs;

    SignedMicroHeader signed_header() const { return {header, sig}; }

    auto operator<=>(const MicroBlock &) const = default;
};

// Coinbase of `accused_block` paid to its miner is revoked; `reporter`
// receives the whistleblower share.
struct Revocation {
    Hash accused_block;
    PublicKey reporter;

    auto operator<=>(const Revocation &) const = default;
};

struct KeyBlock {
    Hash prev;
    uint64_t height = 0;
    TimeUs timestamp_us = 0;
    std::map<ServiceNumber, Hash> channel_refs;
    std::map<ServiceNumber, Hash> inflow_commitments;
    std::vector<Revocation> revocations;
    std::optional<Hash> ballot;
    CoinbaseTx coinbase;
    PublicKey miner;
    uint64_t work = 0;  // accumulated, genesis = 1
    uint64_t work_nonce = 0;

    auto operator<=>(const KeyBlock &) const = default;
};

struct ChainParams {
    uint64_t tau_ppm = 750'000;
    uint64_t bud_interval = 20;
    double target_keyblock_interval = 600.0;  // simulated seconds
    uint32_t max_channel_refs = 256;
    Amount min_pore_fee = 10;
    Amount subsidy = 50;
    uint64_t fee_split_ppm = 400'000;  // share of the serializing miner
    uint64_t coinbase_maturity = 6;
    uint32_t seal_bits = 8;
    uint64_t whistleblower_ppm = 50'000;
    // Channels active at genesis. Always contains 0 and 1.
    std::vector<ProtocolDescriptor> initial_channels;
    std::vector<Output> genesis_allocation;

    static ChainParams defaults();
    static ProtocolDescriptor default_descriptor(ServiceNumber service);

    // Throws InvalidParams.
    void validate() const;
};

class InvalidParams : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace aspen
