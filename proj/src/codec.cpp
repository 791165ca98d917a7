#include <aspen/codec.hpp>
#include <aspen/merkle.hpp>

#include <bit>
#include <cstring>
#include <limits>

namespace aspen {

void Encoder::bytes(ByteView b)
{
    count(b.size());
    raw(b);
}

void Encoder::count(size_t n)
{
    if (n > std::numeric_limits<uint32_t>::max())
        throw std::length_error("sequence too long to encode");
    u32(static_cast<uint32_t>(n));
}

void Decoder::need(size_t n) const
{
    if (remaining() < n)
        throw DecodeError("unexpected end of input");
}

uint8_t Decoder::u8()
{
    need(1);
    return in_[pos_++];
}

void Decoder::raw(std::span<uint8_t> out)
{
    need(out.size());
    std::memcpy(out.data(), in_.data() + pos_, out.size());
    pos_ += out.size();
}

Bytes Decoder::bytes()
{
    const auto n = count(1);
    Bytes b(n);
    raw(b);
    return b;
}

size_t Decoder::count(size_t min_item_bytes)
{
    const size_t n = u32();
    if (min_item_bytes > 0 && n > remaining() / min_item_bytes)
        throw DecodeError("sequence count exceeds remaining input");
    return n;
}

void Decoder::expect_end() const
{
    if (remaining() != 0)
        throw DecodeError("trailing bytes after object");
}

void encode(Encoder &e, const ServiceNumber &v) { e.u32(v.value); }
void decode(Decoder &d, ServiceNumber &v) { v.value = d.u32(); }

void encode(Encoder &e, const ProtocolDescriptor &v)
{
    encode(e, v.service);
    e.u32(v.max_tx_bytes);
    e.u32(v.max_microblock_bytes);
    e.i64(v.microblock_interval_us);
    e.u32(v.payload_schema_id);
}

void decode(Decoder &d, ProtocolDescriptor &v)
{
    decode(d, v.service);
    v.max_tx_bytes = d.u32();
    v.max_microblock_bytes = d.u32();
    v.microblock_interval_us = d.i64();
    v.payload_schema_id = d.u32();
}

void encode(Encoder &e, const Output &v)
{
    e.u64(v.value);
    encode(e, v.owner);
    encode(e, v.spend_channel);
}

void decode(Decoder &d, Output &v)
{
    v.value = d.u64();
    decode(d, v.owner);
    decode(d, v.spend_channel);
}

void encode(Encoder &e, const OutPoint &v)
{
    encode(e, v.tx_hash);
    e.u32(v.index);
}

void decode(Decoder &d, OutPoint &v)
{
    decode(d, v.tx_hash);
    v.index = d.u32();
}

void encode(Encoder &e, const TxInput &v)
{
    encode(e, v.prevout);
    encode(e, v.sig);
}

void decode(Decoder &d, TxInput &v)
{
    decode(d, v.prevout);
    decode(d, v.sig);
}

void encode(Encoder &e, const MicroBlockHeader &v)
{
    encode(e, v.channel);
    encode(e, v.epoch);
    encode(e, v.prev);
    e.i64(v.timestamp_us);
    encode(e, v.tx_root);
    encode(e, v.leader);
}

void decode(Decoder &d, MicroBlockHeader &v)
{
    decode(d, v.channel);
    decode(d, v.epoch);
    decode(d, v.prev);
    v.timestamp_us = d.i64();
    decode(d, v.tx_root);
    decode(d, v.leader);
}

void encode(Encoder &e, const SignedMicroHeader &v)
{
    encode(e, v.header);
    encode(e, v.sig);
}

void decode(Decoder &d, SignedMicroHeader &v)
{
    decode(d, v.header);
    decode(d, v.sig);
}

void encode(Encoder &e, const PoisonEvidence &v)
{
    encode(e, v.first);
    encode(e, v.second);
}

void decode(Decoder &d, PoisonEvidence &v)
{
    decode(d, v.first);
    decode(d, v.second);
}

void encode(Encoder &e, const CoinbaseTx &v)
{
    e.u64(v.height);
    encode(e, v.outputs);
}

void decode(Decoder &d, CoinbaseTx &v)
{
    v.height = d.u64();
    decode(d, v.outputs);
}

namespace {

void encode_body(Encoder &e, const PaymentTx &t)
{
    encode(e, t.inputs);
    encode(e, t.outputs);
    e.u64(t.fee);
}

void decode_body(Decoder &d, PaymentTx &t)
{
    decode(d, t.inputs);
    decode(d, t.outputs);
    t.fee = d.u64();
}

void encode_body(Encoder &e, const FundingPoreTx &t)
{
    encode(e, t.inputs);
    encode(e, t.outputs);
    e.u64(t.fee);
}

void decode_body(Decoder &d, FundingPoreTx &t)
{
    decode(d, t.inputs);
    decode(d, t.outputs);
    t.fee = d.u64();
}

void encode_body(Encoder &e, const ServiceTx &t)
{
    encode(e, t.service);
    e.u32(t.schema_id);
    e.bytes(t.payload);
    encode(e, t.inputs);
    encode(e, t.outputs);
    e.u64(t.fee);
}

void decode_body(Decoder &d, ServiceTx &t)
{
    decode(d, t.service);
    t.schema_id = d.u32();
    t.payload = d.bytes();
    decode(d, t.inputs);
    decode(d, t.outputs);
    t.fee = d.u64();
}

void encode_body(Encoder &e, const RegistrationTx &t)
{
    encode(e, t.proposer);
    encode(e, t.proposals);
    e.u64(t.nonce);
    encode(e, t.sig);
}

void decode_body(Decoder &d, RegistrationTx &t)
{
    decode(d, t.proposer);
    decode(d, t.proposals);
    t.nonce = d.u64();
    decode(d, t.sig);
}

void encode_body(Encoder &e, const PoisonTx &t)
{
    encode(e, t.evidence);
    encode(e, t.reporter);
    encode(e, t.sig);
}

void decode_body(Decoder &d, PoisonTx &t)
{
    decode(d, t.evidence);
    decode(d, t.reporter);
    decode(d, t.sig);
}

void encode_body(Encoder &e, const CoinbaseTx &t) { encode(e, t); }
void decode_body(Decoder &d, CoinbaseTx &t) { decode(d, t); }

template <size_t I = 0>
void decode_alternative(Decoder &d, Transaction &tx, size_t tag)
{
    using Body = decltype(tx.body);
    if constexpr (I < std::variant_size_v<Body>) {
        if (tag == I) {
            decode_body(d, tx.body.template emplace<I>());
            return;
        }
        decode_alternative<I + 1>(d, tx, tag);
    } else {
        throw DecodeError("unknown transaction tag");
    }
}

}  // namespace

void encode(Encoder &e, const Transaction &v)
{
    e.u8(static_cast<uint8_t>(v.body.index()));
    std::visit([&](const auto &t) { encode_body(e, t); }, v.body);
}

void decode(Decoder &d, Transaction &v)
{
    const auto tag = d.u8();
    decode_alternative(d, v, tag);
}

void encode(Encoder &e, const MicroBlock &v)
{
    encode(e, v.header);
    encode(e, v.sig);
    encode(e, v.txs);
}

void decode(Decoder &d, MicroBlock &v)
{
    decode(d, v.header);
    decode(d, v.sig);
    decode(d, v.txs);
}

void encode(Encoder &e, const Revocation &v)
{
    encode(e, v.accused_block);
    encode(e, v.reporter);
}

void decode(Decoder &d, Revocation &v)
{
    decode(d, v.accused_block);
    decode(d, v.reporter);
}

void encode(Encoder &e, const KeyBlock &v)
{
    encode(e, v.prev);
    e.u64(v.height);
    e.i64(v.timestamp_us);
    encode(e, v.channel_refs);
    encode(e, v.inflow_commitments);
    encode(e, v.revocations);
    encode(e, v.ballot);
    encode(e, v.coinbase);
    encode(e, v.miner);
    e.u64(v.work);
    e.u64(v.work_nonce);
}

void decode(Decoder &d, KeyBlock &v)
{
    decode(d, v.prev);
    v.height = d.u64();
    v.timestamp_us = d.i64();
    decode(d, v.channel_refs);
    decode(d, v.inflow_commitments);
    decode(d, v.revocations);
    decode(d, v.ballot);
    decode(d, v.coinbase);
    decode(d, v.miner);
    v.work = d.u64();
    v.work_nonce = d.u64();
}

void encode(Encoder &e, const ChainParams &v)
{
    e.u64(v.tau_ppm);
    e.u64(v.bud_interval);
    e.u64(std::bit_cast<uint64_t>(v.target_keyblock_interval));
    e.u32(v.max_channel_refs);
    e.u64(v.min_pore_fee);
    e.u64(v.subsidy);
    e.u64(v.fee_split_ppm);
    e.u64(v.coinbase_maturity);
    e.u32(v.seal_bits);
    e.u64(v.whistleblower_ppm);
    encode(e, v.initial_channels);
    encode(e, v.genesis_allocation);
}

void decode(Decoder &d, ChainParams &v)
{
    v.tau_ppm = d.u64();
    v.bud_interval = d.u64();
    v.target_keyblock_interval = std::bit_cast<double>(d.u64());
    v.max_channel_refs = d.u32();
    v.min_pore_fee = d.u64();
    v.subsidy = d.u64();
    v.fee_split_ppm = d.u64();
    v.coinbase_maturity = d.u64();
    v.seal_bits = d.u32();
    v.whistleblower_ppm = d.u64();
    decode(d, v.initial_channels);
    decode(d, v.genesis_allocation);
}

void encode(Encoder &e, const MerkleProof &v)
{
    e.u32(v.index);
    e.u32(v.tree_size);
    encode(e, v.path);
}

void decode(Decoder &d, MerkleProof &v)
{
    v.index = d.u32();
    v.tree_size = d.u32();
    decode(d, v.path);
}

}  // namespace aspen
