#include <aspen/block_store.hpp>
#include <aspen/crypto.hpp>

#include <fmt/format.h>

#include <fstream>
#include <iterator>

namespace aspen {

namespace fs = std::filesystem;

void append_record(Bytes &out, ByteView record)
{
    const auto n = static_cast<uint32_t>(record.size());
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<uint8_t>(n >> (8 * i)));
    out.insert(out.end(), record.begin(), record.end());
}

std::vector<Bytes> split_records(ByteView log)
{
    std::vector<Bytes> out;
    size_t pos = 0;
    while (pos < log.size()) {
        if (log.size() - pos < 4)
            throw DecodeError(fmt::format("truncated length prefix at offset {}", pos));
        uint32_t n = 0;
        for (int i = 0; i < 4; ++i)
            n |= static_cast<uint32_t>(log[pos + i]) << (8 * i);
        pos += 4;
        if (log.size() - pos < n)
            throw DecodeError(fmt::format("record at offset {} runs past the end of the log", pos - 4));
        out.emplace_back(log.begin() + pos, log.begin() + pos + n);
        pos += n;
    }
    return out;
}

namespace {

void write_file(const fs::path &path, const Bytes &bytes)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw StoreError(fmt::format("cannot write {}", path.string()));
    f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw StoreError(fmt::format("cannot write {}", path.string()));
}

Bytes read_file(const fs::path &path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw StoreError(fmt::format("cannot read {}", path.string()));
    return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void encode_tracking(Encoder &e, const Tracking &t)
{
    e.u8(t.all ? 1 : 0);
    e.count(t.subscribed.size());
    for (const auto &c : t.subscribed)
        encode(e, c);
}

Tracking decode_tracking(Decoder &d)
{
    Tracking t;
    const auto all = d.u8();
    if (all > 1)
        throw DecodeError("invalid tracking flag");
    t.all = all == 1;
    const auto n = d.count(4);
    for (size_t i = 0; i < n; ++i) {
        ServiceNumber c;
        decode(d, c);
        if (!t.subscribed.empty() && !(*t.subscribed.rbegin() < c))
            throw DecodeError("tracked channels not ascending");
        t.subscribed.insert(c);
    }
    return t;
}

struct StoredState {
    Tracking tracking;
    Bytes ledger;  // encoded LedgerState
    Hash block;
    std::map<ServiceNumber, ChannelState> channels;
};

StoredState decode_stored_state(ByteView bytes)
{
    StoredState s;
    Decoder d(bytes);
    s.tracking = decode_tracking(d);
    s.ledger.assign(bytes.begin() + static_cast<ptrdiff_t>(d.position()), bytes.end());
    decode(d, s.block);
    d.u64();  // height
    d.i64();  // time
    PublicKey miner;
    decode(d, miner);
    d.u64();  // work
    decode(d, s.channels);
    return s;
}

StoreVerdict fail(const Hash &block, std::string detail) { return {false, block, std::move(detail)}; }

std::string channel_log(ServiceNumber c) { return fmt::format("channel-{}.log", c.value); }
std::string inflow_log(ServiceNumber c) { return fmt::format("inflows-{}.log", c.value); }

}  // namespace

void write_store(const fs::path &dir, const Node &node)
{
    fs::create_directories(dir);
    const auto &store = node.store();
    write_file(dir / "params.bin", encode_to_bytes(node.params()));

    Bytes log;
    for (const auto &h : store.keyblock_order)
        append_record(log, encode_to_bytes(store.keyblocks.at(h)));
    write_file(dir / "keyblocks.log", log);

    for (const auto &[c, order] : store.microblock_order) {
        log.clear();
        for (const auto &h : order)
            append_record(log, encode_to_bytes(store.data.microblocks.at(h)));
        write_file(dir / channel_log(c), log);
    }
    for (const auto &[c, order] : store.bundle_order) {
        log.clear();
        for (const auto &key : order)
            append_record(log, encode_to_bytes(InflowBundle{key.first, key.second, store.data.bundles.at(key)}));
        write_file(dir / inflow_log(c), log);
    }

    write_file(dir / "tip.bin", encode_to_bytes(node.tip()));
    Encoder e;
    encode_tracking(e, node.tracking());
    encode(e, node.tip_state());
    write_file(dir / "state.bin", e.data());
}

StoreVerdict verify_store(const fs::path &dir, const std::optional<std::set<ServiceNumber>> &channels)
{
    if (!fs::is_directory(dir))
        throw StoreError(fmt::format("{} is not a directory", dir.string()));
    for (const char *name : {"params.bin", "keyblocks.log", "tip.bin", "state.bin"})
        if (!fs::exists(dir / name))
            throw StoreError(fmt::format("{} has no {}", dir.string(), name));

    ChainParams params;
    Hash tip;
    StoredState stored;
    try {
        params = decode_from_bytes<ChainParams>(read_file(dir / "params.bin"));
        params.validate();
        tip = decode_from_bytes<Hash>(read_file(dir / "tip.bin"));
        stored = decode_stored_state(read_file(dir / "state.bin"));
    } catch (const DecodeError &e) {
        return fail({}, fmt::format("store metadata does not decode: {}", e.what()));
    } catch (const InvalidParams &e) {
        return fail({}, fmt::format("stored parameters are invalid: {}", e.what()));
    }
    const Tracking tracking = channels ? Tracking::channels(*channels) : stored.tracking;

    // Key blocks: decode and check seals.
    std::vector<KeyBlock> keyblocks;
    try {
        for (const auto &rec : split_records(read_file(dir / "keyblocks.log"))) {
            KeyBlock kb;
            try {
                kb = decode_from_bytes<KeyBlock>(rec);
            } catch (const DecodeError &e) {
                return fail(sha256(rec), fmt::format("key block record does not decode: {}", e.what()));
            }
            if (kb.height != 0 && !seal_valid(kb, params.seal_bits))
                return fail(block_hash(kb), "key block seal is invalid");
            keyblocks.push_back(std::move(kb));
        }
    } catch (const DecodeError &e) {
        return fail({}, fmt::format("keyblocks.log: {}", e.what()));
    }
    const KeyBlock genesis = make_genesis(params);
    if (keyblocks.empty() || keyblocks.front() != genesis)
        return fail(keyblocks.empty() ? Hash{} : block_hash(keyblocks.front()),
                    "first key block is not the genesis of the stored parameters");

    // Microblocks and bundles of the channels being verified.
    MapEpochData data;
    for (const auto &entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        unsigned c = 0;
        char tail = 0;
        const bool is_channel = std::sscanf(name.c_str(), "channel-%u.lo%c", &c, &tail) == 2 && tail == 'g';
        const bool is_inflow = !is_channel && std::sscanf(name.c_str(), "inflows-%u.lo%c", &c, &tail) == 2 && tail == 'g';
        if ((!is_channel && !is_inflow) || !tracking.wants(ServiceNumber{c}))
            continue;
        std::vector<Bytes> records;
        try {
            records = split_records(read_file(entry.path()));
        } catch (const DecodeError &e) {
            return fail({}, fmt::format("{}: {}", name, e.what()));
        }
        for (const auto &rec : records) {
            if (is_channel) {
                MicroBlock mb;
                try {
                    mb = decode_from_bytes<MicroBlock>(rec);
                } catch (const DecodeError &e) {
                    return fail(sha256(rec), fmt::format("{}: microblock record does not decode: {}", name, e.what()));
                }
                const Hash h = block_hash(mb);
                if (mb.header.channel != ServiceNumber{c})
                    return fail(h, fmt::format("{}: microblock belongs to channel {}", name, mb.header.channel.value));
                if (!verify_header(mb.signed_header()))
                    return fail(h, fmt::format("{}: microblock signature is invalid", name));
                if (microblock_tx_root(mb.txs) != mb.header.tx_root)
                    return fail(h, fmt::format("{}: microblock transactions do not match tx_root", name));
                data.microblocks.emplace(h, std::move(mb));
            } else {
                InflowBundle b;
                try {
                    b = decode_from_bytes<InflowBundle>(rec);
                } catch (const DecodeError &e) {
                    return fail(sha256(rec), fmt::format("{}: inflow record does not decode: {}", name, e.what()));
                }
                if (b.channel != ServiceNumber{c})
                    return fail(b.key_block, fmt::format("{}: inflow bundle belongs to channel {}", name, b.channel.value));
                data.bundles.emplace(std::pair{b.key_block, b.channel}, std::move(b.proofs));
            }
        }
    }

    // Link key blocks into a tree; stored blocks may arrive child first.
    ChainView view(genesis);
    std::vector<const KeyBlock *> unlinked;
    for (size_t i = 1; i < keyblocks.size(); ++i)
        unlinked.push_back(&keyblocks[i]);
    for (bool progress = true; progress;) {
        progress = false;
        for (auto it = unlinked.begin(); it != unlinked.end();) {
            if (view.contains((*it)->prev)) {
                view.add(**it);
                it = unlinked.erase(it);
                progress = true;
            } else {
                ++it;
            }
        }
    }
    if (!view.contains(tip))
        return fail(tip, "stored tip is not connected to genesis");

    const auto path = view.path_from_genesis(tip);
    LedgerState state = genesis_state(genesis, params, tracking);
    for (size_t i = 1; i < path.size(); ++i) {
        try {
            state = apply_key_block(view.block(path[i]), state, data, params);
        } catch (const ConsensusError &e) {
            return fail(path[i], fmt::format("replay rejected key block at height {}: {} ({})",
                                             view.block(path[i]).height, e.what(), to_string(e.code())));
        }
    }

    if (stored.block != tip)
        return fail(tip, "stored state does not belong to the stored tip");
    if (!channels) {
        if (encode_to_bytes(state) != stored.ledger)
            return fail(tip, "replayed state differs from the stored state");
        return {};
    }
    for (const auto &[c, cs] : state.channels) {
        auto it = stored.channels.find(c);
        if (it == stored.channels.end()) {
            if (stored.tracking.wants(c))
                return fail(tip, fmt::format("stored state lacks channel {}", c.value));
            continue;
        }
        if (it->second != cs)
            return fail(tip, fmt::format("replayed channel {} differs from the stored state", c.value));
    }
    return {};
}

}  // namespace aspen
