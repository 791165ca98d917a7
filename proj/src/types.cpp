#include <aspen/types.hpp>

#include <fmt/format.h>

#include <set>

namespace aspen {

const char *to_string(TxKind kind)
{
    switch (kind) {
    case TxKind::kPayment: return "payment";
    case TxKind::kFundingPore: return "funding_pore";
    case TxKind::kService: return "service";
    case TxKind::kRegistration: return "registration";
    case TxKind::kPoison: return "poison";
    case TxKind::kCoinbase: return "coinbase";
    }
    return "unknown";
}

Hash Hash::from_hex(std::string_view hex)
{
    if (hex.size() != 64)
        throw std::invalid_argument("hash hex must be 64 characters");
    auto nibble = [](char c) -> uint8_t {
        if (c >= '0' && c <= '9')
            return c - '0';
        if (c >= 'a' && c <= 'f')
            return c - 'a' + 10;
        if (c >= 'A' && c <= 'F')
            return c - 'A' + 10;
        throw std::invalid_argument("invalid hex digit");
    };
    Hash h;
    for (size_t i = 0; i < 32; ++i)
        h.bytes[i] = static_cast<uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return h;
}

Amount Transaction::fee() const
{
    return std::visit(
        [](const auto &t) -> Amount {
            if constexpr (requires { t.fee; })
                return t.fee;
            else
                return 0;
        },
        body);
}

std::span<const TxInput> Transaction::inputs() const
{
    return std::visit(
        [](const auto &t) -> std::span<const TxInput> {
            if constexpr (requires { t.inputs; })
                return t.inputs;
            else
                return {};
        },
        body);
}

std::span<const Output> Transaction::outputs() const
{
    return std::visit(
        [](const auto &t) -> std::span<const Output> {
            if constexpr (requires { t.outputs; })
                return t.outputs;
            else
                return {};
        },
        body);
}

ProtocolDescriptor ChainParams::default_descriptor(ServiceNumber service)
{
    ProtocolDescriptor d;
    d.service = service;
    return d;
}

ChainParams ChainParams::defaults()
{
    ChainParams p;
    p.initial_channels = {default_descriptor(kPaymentChannel), default_descriptor(kRegistrationChannel)};
    return p;
}

void ChainParams::validate() const
{
    if (tau_ppm == 0 || tau_ppm > kPpm)
        throw InvalidParams("tau must lie in (0, 1]");
    if (fee_split_ppm == 0 || fee_split_ppm >= kPpm)
        throw InvalidParams("fee_split must lie strictly between 0 and 1");
    if (whistleblower_ppm > kPpm)
        throw InvalidParams("whistleblower share must lie in [0, 1]");
    if (bud_interval < 1 || max_channel_refs < 1 || coinbase_maturity < 1)
        throw InvalidParams("bud_interval, max_channel_refs and coinbase_maturity must be >= 1");
    if (!(target_keyblock_interval > 0))
        throw InvalidParams("target_keyblock_interval must be positive");
    if (seal_bits > 24)
        throw InvalidParams("seal_bits above 24 is not supported");

    std::set<ServiceNumber> seen;
    for (const auto &d : initial_channels) {
        if (!seen.insert(d.service).second)
            throw InvalidParams(fmt::format("duplicate initial channel {}", d.service.value));
        if (d.max_tx_bytes == 0 || d.max_microblock_bytes == 0 || d.microblock_interval_us < 0)
            throw InvalidParams(fmt::format("channel {} has non-positive limits", d.service.value));
    }
    if (!seen.contains(kPaymentChannel) || !seen.contains(kRegistrationChannel))
        throw InvalidParams("channels 0 and 1 must be present at genesis");
    for (const auto &o : genesis_allocation) {
        if (o.value == 0)
            throw InvalidParams("genesis allocation outputs must be positive");
        if (!seen.contains(o.spend_channel))
            throw InvalidParams(fmt::format("genesis allocation locked to unknown channel {}", o.spend_channel.value));
    }
}

}  // namespace aspen
