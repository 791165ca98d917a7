#pragma once

// Canonical wire encoding. Scalars are fixed-width little endian, sequences
// carry a u32 count prefix, maps are written in ascending key order and the
// decoder rejects anything a conforming encoder could not have produced, so
// encode(decode(b)) == b for every accepted b.

#include <aspen/types.hpp>

#include <concepts>
#include <stdexcept>
#include <type_traits>

namespace aspen {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Encoder {
public:
    void u8(uint8_t v) { out_.push_back(v); }
    void u32(uint32_t v) { put_le(v); }
    void u64(uint64_t v) { put_le(v); }
    void i64(int64_t v) { put_le(static_cast<uint64_t>(v)); }
    void raw(ByteView bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
    void bytes(ByteView bytes);
    void count(size_t n);

    const Bytes &data() const & { return out_; }
    Bytes take() && { return std::move(out_); }

private:
    template <typename T>
    void put_le(T v)
    {
        for (size_t i = 0; i < sizeof(T); ++i)
            out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }

    Bytes out_;
};

class Decoder {
public:
    explicit Decoder(ByteView in) : in_(in) {}

    uint8_t u8();
    uint32_t u32() { return get_le<uint32_t>(); }
    uint64_t u64() { return get_le<uint64_t>(); }
    int64_t i64() { return static_cast<int64_t>(get_le<uint64_t>()); }
    void raw(std::span<uint8_t> out);
    Bytes bytes();
    // Reads a sequence count and checks that at least `min_item_bytes` per
    // item remain, which bounds allocation on hostile input.
    size_t count(size_t min_item_bytes = 1);

    size_t remaining() const { return in_.size() - pos_; }
    size_t position() const { return pos_; }
    void expect_end() const;

private:
    template <typename T>
    T get_le()
    {
        need(sizeof(T));
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }
    void need(size_t n) const;

    ByteView in_;
    size_t pos_ = 0;
};

// Per-type encoders. Every on-chain type has an overload pair.
void encode(Encoder &, const ServiceNumber &);
void decode(Decoder &, ServiceNumber &);
template <size_t N>
void encode(Encoder &e, const FixedBytes<N> &v) { e.raw(v.bytes); }
template <size_t N>
void decode(Decoder &d, FixedBytes<N> &v) { d.raw(v.bytes); }
void encode(Encoder &, const ProtocolDescriptor &);
void decode(Decoder &, ProtocolDescriptor &);
void encode(Encoder &, const Output &);
void decode(Decoder &, Output &);
void encode(Encoder &, const OutPoint &);
void decode(Decoder &, OutPoint &);
void encode(Encoder &, const TxInput &);
void decode(Decoder &, TxInput &);
void encode(Encoder &, const MicroBlockHeader &);
void decode(Decoder &, MicroBlockHeader &);
void encode(Encoder &, const SignedMicroHeader &);
void decode(Decoder &, SignedMicroHeader &);
void encode(Encoder &, const PoisonEvidence &);
void decode(Decoder &, PoisonEvidence &);
void encode(Encoder &, const Transaction &);
void decode(Decoder &, Transaction &);
void encode(Encoder &, const CoinbaseTx &);
void decode(Decoder &, CoinbaseTx &);
void encode(Encoder &, const MicroBlock &);
void decode(Decoder &, MicroBlock &);
void encode(Encoder &, const Revocation &);
void decode(Decoder &, Revocation &);
void encode(Encoder &, const KeyBlock &);
void decode(Decoder &, KeyBlock &);
void encode(Encoder &, const ChainParams &);
void decode(Decoder &, ChainParams &);

// Minimum encoded size of a type, used to bound sequence counts.
template <typename T>
constexpr size_t min_encoded_size()
{
    if constexpr (std::is_same_v<T, uint8_t>)
        return 1;
    else if constexpr (requires { T::size(); })
        return T::size();
    else
        return 1;
}

template <typename T>
void encode(Encoder &e, const std::vector<T> &v)
{
    e.count(v.size());
    for (const auto &item : v)
        encode(e, item);
}

template <typename T>
void decode(Decoder &d, std::vector<T> &v)
{
    const auto n = d.count(min_encoded_size<T>());
    v.clear();
    v.reserve(n);
    for (size_t i = 0; i < n; ++i)
        decode(d, v.emplace_back());
}

template <typename K, typename V>
void encode(Encoder &e, const std::map<K, V> &m)
{
    e.count(m.size());
    for (const auto &[k, v] : m) {
        encode(e, k);
        encode(e, v);
    }
}

template <typename K, typename V>
void decode(Decoder &d, std::map<K, V> &m)
{
    const auto n = d.count(2);
    m.clear();
    for (size_t i = 0; i < n; ++i) {
        K k{};
        V v{};
        decode(d, k);
        decode(d, v);
        if (!m.empty() && !(m.rbegin()->first < k))
            throw DecodeError("map keys not strictly ascending");
        m.emplace_hint(m.end(), std::move(k), std::move(v));
    }
}

template <typename T>
void encode(Encoder &e, const std::optional<T> &v)
{
    e.u8(v ? 1 : 0);
    if (v)
        encode(e, *v);
}

template <typename T>
void decode(Decoder &d, std::optional<T> &v)
{
    const auto flag = d.u8();
    if (flag > 1)
        throw DecodeError("invalid optional flag");
    if (flag == 0) {
        v.reset();
        return;
    }
    decode(d, v.emplace());
}

template <typename T>
Bytes encode_to_bytes(const T &v)
{
    Encoder e;
    encode(e, v);
    return std::move(e).take();
}

template <typename T>
T decode_from_bytes(ByteView bytes)
{
    Decoder d(bytes);
    T v{};
    decode(d, v);
    d.expect_end();
    return v;
}

}  // namespace aspen
