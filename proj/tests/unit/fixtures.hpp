#pragma once

// Shared builders for unit tests: funded genesis parameters, signed
// transactions and a synchronous in-memory network of nodes.

#include <aspen/chain_state.hpp>
#include <aspen/crypto.hpp>
#include <aspen/node.hpp>

#include <deque>
#include <memory>
#include <utility>
#include <vector>

namespace fixture {

using namespace aspen;

// Tree root recomputed from the definition over leaf hashes: interior
// nodes H(0x01 || l || r), split at the largest power of two below n.
inline Hash reference_merkle_root(const std::vector<Hash> &leaves, size_t lo, size_t hi)
{
    if (hi - lo == 1)
        return leaves[lo];
    size_t k = 1;
    while (k * 2 < hi - lo)
        k *= 2;
    const Hash l = reference_merkle_root(leaves, lo, lo + k);
    const Hash r = reference_merkle_root(leaves, lo + k, hi);
    Bytes b{0x01};
    b.insert(b.end(), l.bytes.begin(), l.bytes.end());
    b.insert(b.end(), r.bytes.begin(), r.bytes.end());
    return sha256(b);
}

inline KeyPair wallet(uint64_t i) { return keypair_from_seed(0xA11CE000 + i); }

// Defaults plus the given extra channels active at genesis. `funded` lists
// (channel, wallets): wallets 0..n-1 each get one output of `value` there,
// in list order.
inline ChainParams params_with(std::vector<uint32_t> extra_channels = {3},
                               std::vector<std::pair<uint32_t, uint32_t>> funded = {{0, 4}}, Amount value = 1000)
{
    ChainParams p = ChainParams::defaults();
    p.seal_bits = 4;
    for (auto c : extra_channels)
        p.initial_channels.push_back(ChainParams::default_descriptor(ServiceNumber{c}));
    for (const auto &[channel, wallets] : funded)
        for (uint32_t w = 0; w < wallets; ++w)
            p.genesis_allocation.push_back({value, wallet(w).pub, ServiceNumber{channel}});
    p.validate();
    return p;
}

// Genesis outpoint `index` of `params`.
inline OutPoint genesis_coin(const ChainParams &params, uint32_t index)
{
    return {tx_hash(make_genesis(params).coinbase), index};
}

struct Spend {
    OutPoint coin;
    KeyPair owner;
};

template <typename Body>
Transaction signed_tx(Body body, const std::vector<Spend> &spends)
{
    for (const auto &s : spends)
        body.inputs.push_back({s.coin, {}});
    Transaction tx{std::move(body)};
    std::vector<SecretKey> secrets;
    for (const auto &s : spends)
        secrets.push_back(s.owner.secret);
    sign_inputs(tx, secrets);
    return tx;
}

inline Transaction payment(const std::vector<Spend> &spends, std::vector<Output> outputs, Amount fee)
{
    PaymentTx p;
    p.outputs = std::move(outputs);
    p.fee = fee;
    return signed_tx(std::move(p), spends);
}

inline Transaction pore(const std::vector<Spend> &spends, std::vector<Output> outputs, Amount fee)
{
    FundingPoreTx p;
    p.outputs = std::move(outputs);
    p.fee = fee;
    return signed_tx(std::move(p), spends);
}

inline Transaction service(ServiceNumber channel, const std::vector<Spend> &spends, std::vector<Output> outputs,
                           Amount fee, Bytes payload = {1, 2, 3})
{
    ServiceTx s;
    s.service = channel;
    s.payload = std::move(payload);
    s.outputs = std::move(outputs);
    s.fee = fee;
    return signed_tx(std::move(s), spends);
}

inline NodeConfig miner_config(NodeId id, uint64_t key_seed)
{
    NodeConfig c;
    c.id = id;
    c.name = "miner" + std::to_string(id);
    c.role = NodeRole::kMiner;
    c.hash_power = 1;
    c.key_seed = key_seed;
    c.fork_choice_seed = 77 + id;
    return c;
}

inline NodeConfig user_config(NodeId id, std::set<ServiceNumber> channels)
{
    NodeConfig c;
    c.id = id;
    c.name = "user" + std::to_string(id);
    c.role = NodeRole::kServiceUser;
    c.subscribed = std::move(channels);
    c.key_seed = 5000 + id;
    c.fork_choice_seed = 77 + id;
    return c;
}

// Fully connected nodes with FIFO delivery; `now` advances only when told.
struct Net {
    ChainParams params;
    std::vector<std::unique_ptr<Node>> nodes;
    std::deque<std::pair<NodeId, Outbound>> queue;
    TimeUs now = 0;
    uint64_t delivered = 0;

    explicit Net(ChainParams p) : params(std::move(p)) {}

    Node &add(NodeConfig cfg)
    {
        cfg.id = static_cast<NodeId>(nodes.size());
        nodes.push_back(std::make_unique<Node>(std::move(cfg), params));
        wire();
        return *nodes.back();
    }

    void wire()
    {
        for (auto &n : nodes) {
            std::vector<PeerInfo> peers;
            for (auto &m : nodes)
                if (m->id() != n->id())
                    peers.push_back({m->id(), m->is_full(), m->tracking().subscribed});
            n->set_peers(std::move(peers));
        }
    }

    Node &operator[](size_t i) { return *nodes.at(i); }

    void send(NodeId from, std::vector<Outbound> out)
    {
        for (auto &o : out)
            queue.emplace_back(from, std::move(o));
    }

    void drain()
    {
        while (!queue.empty()) {
            auto [from, o] = std::move(queue.front());
            queue.pop_front();
            ++delivered;
            send(o.to, nodes.at(o.to)->on_message(from, o.msg, now));
        }
    }

    void mine(size_t i, TimeUs at)
    {
        now = at;
        send(nodes[i]->id(), nodes[i]->mine(now));
        drain();
    }

    void submit(size_t i, ServiceNumber channel, const Transaction &tx)
    {
        send(nodes[i]->id(), nodes[i]->submit_tx({channel, tx}, now));
        drain();
    }

    void tick(size_t i, ServiceNumber channel, TimeUs at)
    {
        now = at;
        send(nodes[i]->id(), nodes[i]->on_microblock_timer(channel, now));
        drain();
    }
};

}  // namespace fixture
