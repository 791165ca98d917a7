#include <aspen/block_store.hpp>
#include <aspen/crypto.hpp>
#include <aspen/netsim.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace aspen {

using ojson = nlohmann::ordered_json;

namespace {

TimeUs to_us(double seconds)
{
    if (!std::isfinite(seconds))
        return std::numeric_limits<TimeUs>::max();
    return static_cast<TimeUs>(std::llround(seconds * 1e6));
}

// Stream identifiers for the independent generators of one run.
enum Stream : uint64_t {
    kMineStream = 1,
    kLatencyStream = 2,
    kTopologyStream = 3,
    kChurnStream = 4,
    kProposalStream = 5,
    kWorkloadStream = 100,
    kPoreStream = 200,
    kAdversaryStream = 300,
    kForkChoiceStream = 400,
};

}  // namespace

// ---------------------------------------------------------------------------
// Spend audit

SpendAudit audit_spends(const Node &node)
{
    SpendAudit out;
    const auto &view = node.view();
    const auto &tip_state = node.tip_state();
    const auto &data = node.store().data;
    std::map<OutPoint, ServiceNumber> created;  // outpoint -> lock channel
    std::set<OutPoint> spent;
    std::set<OutPoint> revoked;

    auto add_coinbase = [&](const CoinbaseTx &cb) {
        const Hash h = tx_hash(cb);
        for (uint32_t i = 0; i < cb.outputs.size(); ++i)
            created.emplace(OutPoint{h, i}, cb.outputs[i].spend_channel);
    };

    const auto path = view.path_from_genesis(node.tip());
    add_coinbase(view.block(path.front()).coinbase);
    for (size_t k = 1; k < path.size(); ++k) {
        const auto &kb = view.block(path[k]);
        const auto &parent = *node.state_at(kb.prev);
        std::map<ServiceNumber, Amount> fees;
        for (const auto &[c, tail] : kb.channel_refs) {
            if (!parent.tracks(c))
                continue;
            Amount fee_sum = 0;
            for (const auto *mb : collect_epoch_chain(tail, kb.prev, c, data)) {
                for (const auto &tx : mb->txs) {
                    ++out.transactions;
                    fee_sum += tx.fee();
                    for (const auto &in : tx.inputs()) {
                        ++out.inputs;
                        auto it = created.find(in.prevout);
                        if (it == created.end())
                            ++out.unknown_inputs;
                        else if (it->second != c)
                            ++out.wrong_channel;
                        if (revoked.contains(in.prevout))
                            ++out.revoked_spends;
                        if (!spent.insert(in.prevout).second)
                            ++out.double_spends;
                    }
                    const Hash txid = tx_hash(tx);
                    const auto outs = tx.outputs();
                    for (uint32_t i = 0; i < outs.size(); ++i)
                        created.emplace(OutPoint{txid, i}, outs[i].spend_channel);
                }
            }
            fees[c] = fee_sum;
        }
        // Inflows reach partial nodes only through bundles.
        for (const auto &[c, _] : kb.inflow_commitments)
            if (const auto *proofs = data.inflow_bundle(path[k], c))
                for (const auto &p : *proofs)
                    created.emplace(p.outpoint, p.output.spend_channel);

        // Whistleblower shares stay in the channel of the revoked output.
        std::map<ServiceNumber, Amount> shares;
        for (const auto &rev : kb.revocations) {
            auto rec = tip_state.chain_blocks.find(rev.accused_block);
            if (rec == tip_state.chain_blocks.end())
                continue;
            for (const auto &r : revoked_outputs(rec->second))
                shares[r.output.spend_channel] += static_cast<Amount>(
                    static_cast<unsigned __int128>(r.output.value) * node.params().whistleblower_ppm / 1'000'000);
        }
        for (const auto &o : kb.coinbase.outputs)
            if (o.spend_channel != kPaymentChannel && !kb.channel_refs.contains(o.spend_channel) &&
                !shares.contains(o.spend_channel))
                ++out.coinbase_lock_mismatches;
        for (const auto &[c, f] : fees) {
            if (c == kPaymentChannel)
                continue;
            Amount locked = 0;
            for (const auto &o : kb.coinbase.outputs)
                if (o.spend_channel == c)
                    locked += o.value;
            if (locked != f + shares[c])
                ++out.coinbase_lock_mismatches;
        }
        add_coinbase(kb.coinbase);

        for (const auto &rev : kb.revocations) {
            auto rec = tip_state.chain_blocks.find(rev.accused_block);
            if (rec == tip_state.chain_blocks.end())
                continue;
            for (const auto &r : revoked_outputs(rec->second))
                revoked.insert(r.outpoint);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simulator internals

struct Simulator::Impl {
    struct Event {
        enum class Kind : uint8_t {
            kDeliver,
            kMine,
            kMicroTimer,
            kClientTx,
            kPore,
            kDoubleSpend,
            kProposal,
            kLeave,
            kJoin,
            kPartitionStart,
            kPartitionHeal,
        };
        TimeUs t = 0;
        uint64_t seq = 0;
        Kind kind = Kind::kDeliver;
        uint32_t a = 0;  // target node or spec index
        uint32_t b = 0;  // sender node
        ServiceNumber channel;
        Hash epoch;
        std::shared_ptr<const Message> msg;

        bool operator>(const Event &o) const { return t != o.t ? t > o.t : seq > o.seq; }
    };

    struct WalletStream {
        const WorkloadSpec *spec = nullptr;
        std::vector<KeyPair> keys;
        std::map<PublicKey, uint32_t> index;
        std::map<OutPoint, TimeUs> in_flight;
    };

    struct Convergence {
        size_t partition = 0;
        TimeUs heal = 0;
        uint64_t mined_at_heal = 0;
    };

    Simulator &sim;
    const ScenarioConfig &sc;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
    uint64_t seq = 0;

    Rng mine_rng;
    Rng churn_rng;
    Rng proposal_rng;
    std::vector<Rng> workload_rng;
    std::vector<Rng> pore_rng;
    std::vector<Rng> adversary_rng;
    std::map<std::tuple<uint32_t, uint32_t, uint64_t>, uint64_t> link_counter;

    std::vector<std::set<uint32_t>> adjacency;
    std::vector<int> group_of;  // -1 when no partition is active
    std::map<std::string, WalletStream> streams;
    std::vector<Hash> proposal_hashes;
    std::vector<uint64_t> sent_messages;
    std::vector<uint64_t> sent_bytes;
    std::map<Hash, bool> confirmed;  // first confirmation seen
    std::vector<Convergence> awaiting;

    TimeUs deadline = std::numeric_limits<TimeUs>::max();
    TimeUs end = std::numeric_limits<TimeUs>::max();
    TimeUs now = 0;

    Impl(Simulator &s)
        : sim(s),
          sc(s.scenario_),
          mine_rng(mix_seed(sc.seed, kMineStream)),
          churn_rng(mix_seed(sc.seed, kChurnStream)),
          proposal_rng(mix_seed(sc.seed, kProposalStream))
    {
        for (size_t i = 0; i < sc.workload.size(); ++i)
            workload_rng.emplace_back(mix_seed(sc.seed, kWorkloadStream + i));
        for (size_t i = 0; i < sc.pores.size(); ++i)
            pore_rng.emplace_back(mix_seed(sc.seed, kPoreStream + i));
        for (size_t i = 0; i < sc.adversaries.size(); ++i)
            adversary_rng.emplace_back(mix_seed(sc.seed, kAdversaryStream + i));
    }

    void push(Event e)
    {
        e.seq = seq++;
        queue.push(std::move(e));
    }

    void emit(ojson record) { sim.metrics_.push_back(record.dump()); }

    const std::string &name(size_t i) const { return sc.nodes[i].name; }

    std::string name_of_key(const PublicKey &pk) const
    {
        for (size_t i = 0; i < sim.nodes_.size(); ++i)
            if (sim.nodes_[i]->keys().pub == pk)
                return name(i);
        return pk.hex().substr(0, 16);
    }

    // ---- network

    TimeUs latency(uint32_t from, uint32_t to, const Message &msg)
    {
        // Per-link draws are counted per message type and channel, so load on
        // one channel never shifts the delays of another.
        const auto channel = message_channel(msg);
        const uint64_t cls = static_cast<uint64_t>(msg.index()) << 33 |
                             (channel ? uint64_t{1} << 32 | channel->value : uint64_t{0});
        const uint64_t n = link_counter[{from, to, cls}]++;
        uint64_t x = mix_seed(sc.seed, kLatencyStream);
        x = mix64(x ^ (static_cast<uint64_t>(from) << 32 | to));
        x = mix64(x ^ cls);
        x = mix64(x ^ n);
        const double u = static_cast<double>(x >> 11) * 0x1.0p-53;
        const double extra = sc.latency.mean - sc.latency.min;
        const double delay = sc.latency.min + (extra > 0 ? -extra * std::log1p(-u) : 0.0);
        return std::max<TimeUs>(1, to_us(delay));
    }

    void dispatch(uint32_t from, std::vector<Outbound> &&out)
    {
        for (auto &o : out) {
            if (o.to >= sim.nodes_.size() || o.to == from)
                continue;
            if (!sim.live_[o.to] || !sim.live_[from])
                continue;
            if (group_of[from] != group_of[o.to])
                continue;
            ++sent_messages[from];
            sent_bytes[from] += message_bytes(o.msg);
            Event e;
            e.t = now + latency(from, o.to, o.msg);
            e.kind = Event::Kind::kDeliver;
            e.a = o.to;
            e.b = from;
            e.msg = std::make_shared<const Message>(std::move(o.msg));
            push(std::move(e));
        }
    }

    void drain_events(uint32_t i)
    {
        for (const auto &ev : sim.nodes_[i]->take_events()) {
            switch (ev.kind) {
            case NodeEvent::Kind::kTxConfirmed:
                if (sim.honest(i) && sim.submitted_at_.contains(ev.tx) && !confirmed.contains(ev.tx)) {
                    confirmed[ev.tx] = true;
                    emit({{"type", "confirm"},
                          {"t", ev.time_us},
                          {"node", name(i)},
                          {"channel", ev.channel.value},
                          {"tx", ev.tx.hex()},
                          {"height", ev.height},
                          {"latency_us", ev.time_us - sim.submitted_at_.at(ev.tx)}});
                }
                break;
            case NodeEvent::Kind::kPoisonSubmitted:
                emit({{"type", "poison"},
                      {"t", ev.time_us},
                      {"node", name(i)},
                      {"accused_block", ev.block.hex()},
                      {"accused", name_of_key(ev.subject)},
                      {"tx", ev.tx.hex()}});
                break;
            case NodeEvent::Kind::kReorg:
                emit({{"type", "fork"},
                      {"t", ev.time_us},
                      {"node", name(i)},
                      {"depth", ev.depth},
                      {"height", ev.height},
                      {"tip", ev.block.hex()}});
                break;
            case NodeEvent::Kind::kInvalidBlock:
                emit({{"type", "invalid"},
                      {"t", ev.time_us},
                      {"node", name(i)},
                      {"block", ev.block.hex()},
                      {"height", ev.height}});
                break;
            case NodeEvent::Kind::kTxSerialized:
                break;
            }
        }
    }

    void check_convergence()
    {
        if (awaiting.empty())
            return;
        std::optional<Hash> tip;
        for (size_t i = 0; i < sim.nodes_.size(); ++i) {
            if (!sim.live_[i] || !sim.honest(i))
                continue;
            if (tip && *tip != sim.nodes_[i]->tip())
                return;
            tip = sim.nodes_[i]->tip();
        }
        for (const auto &c : awaiting)
            emit({{"type", "partition"},
                  {"index", c.partition},
                  {"heal", c.heal},
                  {"converged", true},
                  {"converged_at", now},
                  {"convergence_us", now - c.heal},
                  {"key_blocks_after_heal", sim.mined_ - c.mined_at_heal},
                  {"tip", tip ? tip->hex() : std::string()}});
        awaiting.clear();
    }

    // ---- setup

    void build_topology()
    {
        const auto n = static_cast<uint32_t>(sim.nodes_.size());
        adjacency.assign(n, {});
        auto link = [&](uint32_t a, uint32_t b) {
            if (a == b)
                return;
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        };
        switch (sc.topology.kind) {
        case TopologySpec::Kind::kFull:
            for (uint32_t a = 0; a < n; ++a)
                for (uint32_t b = a + 1; b < n; ++b)
                    link(a, b);
            break;
        case TopologySpec::Kind::kRandom: {
            Rng rng(mix_seed(sc.seed, kTopologyStream));
            for (uint32_t a = 0; a < n; ++a) {
                link(a, (a + 1) % n);
                for (uint32_t k = 0; k < sc.topology.degree && n > 1; ++k)
                    link(a, static_cast<uint32_t>(rng.below(n)));
            }
            break;
        }
        case TopologySpec::Kind::kRing:
            for (uint32_t a = 0; a < n; ++a)
                link(a, (a + 1) % n);
            break;
        case TopologySpec::Kind::kExplicit:
            for (const auto &[x, y] : sc.topology.links)
                link(static_cast<uint32_t>(*sim.find_node(x)), static_cast<uint32_t>(*sim.find_node(y)));
            break;
        }
    }

    void install_peers(uint32_t i)
    {
        std::vector<PeerInfo> peers;
        for (auto j : adjacency[i]) {
            const auto &spec = sc.nodes[j];
            peers.push_back({j, spec.role == NodeRole::kMiner, sim.nodes_[j]->tracking().subscribed});
        }
        sim.nodes_[i]->set_peers(std::move(peers));
    }

    NodeConfig node_config(uint32_t i) const
    {
        const auto &spec = sc.nodes[i];
        NodeConfig cfg;
        cfg.id = i;
        cfg.name = spec.name;
        cfg.role = spec.role;
        cfg.hash_power = spec.hash_power;
        cfg.subscribed = spec.subscribed;
        cfg.ballot = spec.ballot;
        if (spec.ballot_proposal)
            cfg.ballot_target = proposal_hashes.at(*spec.ballot_proposal);
        cfg.mempool_capacity = spec.mempool_capacity;
        cfg.key_seed = node_key_seed(spec.name);
        cfg.fork_choice_seed = mix_seed(sc.seed, kForkChoiceStream + i);
        for (const auto &a : sc.adversaries) {
            if (a.node != spec.name)
                continue;
            switch (a.kind) {
            case AdversarySpec::Kind::kCensoringLeader:
                cfg.adversary.censored_channels.insert(a.channels.begin(), a.channels.end());
                break;
            case AdversarySpec::Kind::kMicroblockForker:
                cfg.adversary.microblock_forker = true;
                break;
            case AdversarySpec::Kind::kBallotSuppressor:
                cfg.adversary.ballot_suppressor = true;
                break;
            case AdversarySpec::Kind::kDoubleSpender:
                break;
            }
        }
        return cfg;
    }

    void setup()
    {
        for (size_t i = 0; i < sc.proposals.size(); ++i)
            proposal_hashes.push_back(tx_hash(proposal_tx(sc.proposals[i], i)));
        for (uint32_t i = 0; i < sc.nodes.size(); ++i) {
            sim.nodes_.push_back(std::make_unique<Node>(node_config(i), sc.params));
            sim.live_.push_back(true);
        }
        sent_messages.assign(sim.nodes_.size(), 0);
        sent_bytes.assign(sim.nodes_.size(), 0);
        group_of.assign(sim.nodes_.size(), -1);
        build_topology();
        for (uint32_t i = 0; i < sim.nodes_.size(); ++i)
            install_peers(i);

        for (const auto &w : sc.workload) {
            WalletStream s;
            s.spec = &w;
            for (uint32_t k = 0; k < w.wallets; ++k) {
                s.keys.push_back(wallet_keys(w.name, k));
                s.index.emplace(s.keys.back().pub, k);
            }
            streams.emplace(w.name, std::move(s));
        }

        if (sc.duration.seconds)
            deadline = to_us(*sc.duration.seconds);
        end = deadline == std::numeric_limits<TimeUs>::max() ? deadline : deadline + to_us(sc.duration.settle);

        schedule_mine(0);
        for (uint32_t i = 0; i < sc.workload.size(); ++i)
            schedule_poisson(Event::Kind::kClientTx, i, sc.workload[i].rate, sc.workload[i].start,
                             workload_rng[i]);
        for (uint32_t i = 0; i < sc.pores.size(); ++i)
            schedule_poisson(Event::Kind::kPore, i, sc.pores[i].rate, sc.pores[i].start, pore_rng[i]);
        for (uint32_t i = 0; i < sc.adversaries.size(); ++i)
            if (sc.adversaries[i].kind == AdversarySpec::Kind::kDoubleSpender)
                schedule_poisson(Event::Kind::kDoubleSpend, i, sc.adversaries[i].rate, sc.adversaries[i].start,
                                 adversary_rng[i]);
        for (uint32_t i = 0; i < sc.proposals.size(); ++i) {
            Event e;
            e.t = to_us(sc.proposals[i].at);
            e.kind = Event::Kind::kProposal;
            e.a = i;
            push(std::move(e));
        }
        for (uint32_t ci = 0; ci < sc.churn.size(); ++ci) {
            const auto &c = sc.churn[ci];
            if (!(c.leave_rate > 0))
                continue;
            for (const auto &n : c.nodes) {
                Event e;
                e.t = to_us(c.start + churn_rng.exponential(1.0 / c.leave_rate));
                e.kind = Event::Kind::kLeave;
                e.a = static_cast<uint32_t>(*sim.find_node(n));
                e.b = ci;
                push(std::move(e));
            }
        }
        for (uint32_t pi = 0; pi < sc.partitions.size(); ++pi) {
            const auto &p = sc.partitions[pi];
            if (p.heal <= p.start)
                continue;
            Event e;
            e.t = to_us(p.start);
            e.kind = Event::Kind::kPartitionStart;
            e.a = pi;
            push(e);
            e.t = to_us(p.heal);
            e.kind = Event::Kind::kPartitionHeal;
            push(std::move(e));
        }
    }

    void schedule_poisson(Event::Kind kind, uint32_t index, double rate, double after, Rng &rng)
    {
        if (!(rate > 0))
            return;
        Event e;
        e.t = std::max(now, to_us(after)) + to_us(rng.exponential(1.0 / rate));
        e.kind = kind;
        e.a = index;
        push(std::move(e));
    }

    void schedule_mine(TimeUs from)
    {
        std::vector<double> power;
        std::vector<uint32_t> who;
        for (uint32_t i = 0; i < sim.nodes_.size(); ++i)
            if (sim.live_[i] && sc.nodes[i].role == NodeRole::kMiner && sc.nodes[i].hash_power > 0) {
                power.push_back(sc.nodes[i].hash_power);
                who.push_back(i);
            }
        // With every miner offline the lottery idles for one target interval.
        Event e;
        e.kind = Event::Kind::kMine;
        if (power.empty()) {
            e.t = from + to_us(sc.params.target_keyblock_interval);
            e.a = std::numeric_limits<uint32_t>::max();
        } else {
            const auto draw = mine_next(power, sc.params.target_keyblock_interval, mine_rng);
            e.t = from + std::max<TimeUs>(1, to_us(draw.interval));
            e.a = who[draw.winner];
        }
        push(std::move(e));
    }

    // ---- handlers

    void on_mine(const Event &e)
    {
        if (e.a < sim.nodes_.size() && sim.live_[e.a]) {
            auto &node = *sim.nodes_[e.a];
            std::vector<Outbound> out;
            try {
                out = node.mine(now);
            } catch (const std::logic_error &ex) {
                throw InvariantViolation(ex.what());
            }
            ++sim.mined_;
            const auto &kb = node.view().block(node.tip());
            const auto &state = node.tip_state();
            check_conservation(e.a, state);
            emit({{"type", "mined"},
                  {"t", now},
                  {"node", name(e.a)},
                  {"height", kb.height},
                  {"block", node.tip().hex()},
                  {"refs", kb.channel_refs.size()},
                  {"ballot", kb.ballot ? kb.ballot->hex() : std::string()},
                  {"revocations", kb.revocations.size()}});
            dispatch(e.a, std::move(out));
            drain_events(e.a);
            for (const auto &[c, _] : state.channels) {
                Event t;
                t.kind = Event::Kind::kMicroTimer;
                t.a = e.a;
                t.channel = c;
                t.epoch = node.tip();
                // A new leader serializes its backlog at once; later
                // microblocks keep the channel interval.
                t.t = now;
                push(std::move(t));
            }
            for (size_t i = 0; i < sim.nodes_.size(); ++i)
                emit({{"type", "storage"},
                      {"t", now},
                      {"node", name(i)},
                      {"bytes", sim.nodes_[i]->storage_bytes()},
                      {"key_blocks", sim.nodes_[i]->store().keyblocks.size()}});
            if (sc.duration.key_blocks && sim.mined_ >= *sc.duration.key_blocks) {
                deadline = now;
                end = now + to_us(sc.duration.settle);
                return;
            }
        }
        schedule_mine(now);
    }

    static TimeUs microblock_interval(const Node &node, ServiceNumber c)
    {
        const auto &st = node.tip_state();
        const auto *d = st.governance.descriptor_at(c, st.height);
        const TimeUs interval = d == nullptr ? 0 : d->microblock_interval_us;
        return std::max<TimeUs>(interval, 100'000);
    }

    void check_conservation(uint32_t i, const LedgerState &state)
    {
        if (!sim.nodes_[i]->is_full())
            return;
        Amount total = 0;
        for (const auto &[_, cs] : state.channels)
            total += cs.total_value();
        if (total + state.rewards.burned != state.minted)
            throw InvariantViolation(fmt::format(
                "value not conserved at height {} on {}: circulating {} + burned {} != minted {}", state.height,
                name(i), total, state.rewards.burned, state.minted));
    }

    void on_micro_timer(const Event &e)
    {
        if (!sim.live_[e.a])
            return;
        auto &node = *sim.nodes_[e.a];
        if (node.tip() != e.epoch)
            return;
        dispatch(e.a, node.on_microblock_timer(e.channel, now));
        drain_events(e.a);
        Event next = e;
        next.t = now + microblock_interval(node, e.channel);
        push(std::move(next));
    }

    void on_deliver(const Event &e)
    {
        if (!sim.live_[e.a])
            return;
        dispatch(e.a, sim.nodes_[e.a]->on_message(e.b, *e.msg, now));
        drain_events(e.a);
        check_convergence();
    }

    // Random live node that stores `channel`, preferring the listed names.
    std::optional<uint32_t> pick_submitter(ServiceNumber channel, const std::vector<std::string> &names, Rng &rng,
                                           std::optional<uint32_t> exclude = std::nullopt)
    {
        std::vector<uint32_t> candidates;
        for (uint32_t i = 0; i < sim.nodes_.size(); ++i) {
            if (!sim.live_[i] || (exclude && *exclude == i) || !sim.nodes_[i]->subscribes(channel))
                continue;
            if (!names.empty() && std::find(names.begin(), names.end(), name(i)) == names.end())
                continue;
            candidates.push_back(i);
        }
        if (candidates.empty())
            return std::nullopt;
        return candidates[rng.below(candidates.size())];
    }

    std::optional<std::pair<OutPoint, Coin>> pick_coin(WalletStream &s, const ChannelState &state, Rng &rng)
    {
        for (auto it = s.in_flight.begin(); it != s.in_flight.end();)
            it = it->second <= now ? s.in_flight.erase(it) : std::next(it);
        std::vector<std::pair<OutPoint, Coin>> coins;
        for (const auto &[op, coin] : state.utxo)
            if (!coin.coinbase && s.index.contains(coin.output.owner) && !s.in_flight.contains(op))
                coins.emplace_back(op, coin);
        if (coins.empty())
            return std::nullopt;
        return coins[rng.below(coins.size())];
    }

    // A wallet does not respend a coin while its transaction may still confirm.
    TimeUs hold_time() const { return to_us(10 * sc.params.target_keyblock_interval); }

    Amount draw(Rng &rng, Amount lo, Amount hi) { return lo + rng.below(hi - lo + 1); }

    // Same-channel transfer of `coin` to a random wallet of the stream.
    Transaction transfer(WalletStream &s, const Node &node, const std::pair<OutPoint, Coin> &coin, Amount fee,
                         Rng &rng)
    {
        const auto c = s.spec->channel;
        const Amount value = coin.second.output.value;
        const Amount amount = 1 + rng.below(value - fee);
        std::vector<Output> outputs{{amount, s.keys[rng.below(s.keys.size())].pub, c}};
        if (value - fee - amount > 0)
            outputs.push_back({value - fee - amount, coin.second.output.owner, c});
        std::vector<TxInput> inputs{{coin.first, {}}};
        Transaction tx;
        if (c == kPaymentChannel) {
            tx.body = PaymentTx{inputs, outputs, fee};
        } else {
            const auto &st = node.tip_state();
            const auto *d = st.governance.descriptor_at(c, st.height);
            Bytes payload(s.spec->payload_min + rng.below(s.spec->payload_max - s.spec->payload_min + 1));
            for (auto &b : payload)
                b = static_cast<uint8_t>(rng.next_u64());
            tx.body = ServiceTx{c, d == nullptr ? 0 : d->payload_schema_id, std::move(payload), inputs, outputs, fee};
        }
        const SecretKey secret = s.keys[s.index.at(coin.second.output.owner)].secret;
        sign_inputs(tx, std::span(&secret, 1));
        return tx;
    }

    void submit(uint32_t to, ServiceNumber channel, const Transaction &tx)
    {
        sim.submitted_at_.emplace(tx_hash(tx), now);
        submitted_channel.emplace(tx_hash(tx), channel);
        dispatch(to, sim.nodes_[to]->submit_tx({channel, tx}, now));
        drain_events(to);
    }

    void on_client_tx(const Event &e)
    {
        const auto &spec = sc.workload[e.a];
        auto &rng = workload_rng[e.a];
        if (now > to_us(spec.stop))
            return;
        auto &s = streams.at(spec.name);
        if (auto to = pick_submitter(spec.channel, spec.submit_to, rng)) {
            const auto *state = sim.nodes_[*to]->epoch_state(spec.channel);
            if (state != nullptr) {
                if (auto coin = pick_coin(s, *state, rng)) {
                    const Amount fee = draw(rng, spec.fee_min, spec.fee_max);
                    if (coin->second.output.value > fee) {
                        const auto tx = transfer(s, *sim.nodes_[*to], *coin, fee, rng);
                        s.in_flight[coin->first] = now + hold_time();
                        submit(*to, spec.channel, tx);
                    }
                }
            }
        }
        schedule_poisson(Event::Kind::kClientTx, e.a, spec.rate, 0, rng);
    }

    void on_pore(const Event &e)
    {
        const auto &spec = sc.pores[e.a];
        auto &rng = pore_rng[e.a];
        if (now > to_us(spec.stop))
            return;
        auto &from = streams.at(spec.from);
        auto &to_stream = streams.at(spec.to);
        const auto dest = to_stream.spec->channel;
        if (auto to = pick_submitter(kPaymentChannel, from.spec->submit_to, rng)) {
            const auto &node = *sim.nodes_[*to];
            const auto *state = node.epoch_state(kPaymentChannel);
            if (state != nullptr && node.tip_state().governance.is_active(dest)) {
                if (auto coin = pick_coin(from, *state, rng)) {
                    const Amount value = coin->second.output.value;
                    if (value > spec.fee) {
                        const Amount amount = std::min(draw(rng, spec.amount_min, spec.amount_max), value - spec.fee);
                        std::vector<Output> outputs{
                            {amount, to_stream.keys[rng.below(to_stream.keys.size())].pub, dest}};
                        if (value - spec.fee - amount > 0)
                            outputs.push_back({value - spec.fee - amount, coin->second.output.owner, kPaymentChannel});
                        Transaction tx{FundingPoreTx{{{coin->first, {}}}, outputs, spec.fee}};
                        const SecretKey secret = from.keys[from.index.at(coin->second.output.owner)].secret;
                        sign_inputs(tx, std::span(&secret, 1));
                        from.in_flight[coin->first] = now + hold_time();
                        submit(*to, kPaymentChannel, tx);
                    }
                }
            }
        }
        schedule_poisson(Event::Kind::kPore, e.a, spec.rate, 0, rng);
    }

    void on_double_spend(const Event &e)
    {
        const auto &spec = sc.adversaries[e.a];
        auto &rng = adversary_rng[e.a];
        if (now > to_us(spec.stop))
            return;
        auto &s = streams.at(spec.workload);
        const auto c = s.spec->channel;
        auto first = pick_submitter(c, {}, rng);
        if (first) {
            auto second = pick_submitter(c, {}, rng, first);
            if (!second)
                second = first;
            const auto &node = *sim.nodes_[*first];
            const auto *state = node.epoch_state(c);
            std::optional<std::pair<OutPoint, Coin>> coin;
            if (state != nullptr)
                coin = pick_coin(s, *state, rng);
            const Amount fee = std::max<Amount>(s.spec->fee_min, 1);
            if (coin && coin->second.output.value > fee + sc.params.min_pore_fee + 1) {
                const auto a = transfer(s, node, *coin, fee, rng);
                Transaction b;
                const bool cross = spec.cross_channel && node.tip_state().governance.is_active(spec.pore_channel);
                if (cross) {
                    const Amount pore_fee = sc.params.min_pore_fee;
                    b.body = FundingPoreTx{{{coin->first, {}}},
                                           {{coin->second.output.value - pore_fee, coin->second.output.owner,
                                             spec.pore_channel}},
                                           pore_fee};
                    const SecretKey secret = s.keys[s.index.at(coin->second.output.owner)].secret;
                    sign_inputs(b, std::span(&secret, 1));
                } else {
                    b = transfer(s, node, *coin, fee + 1, rng);
                }
                s.in_flight[coin->first] = now + hold_time();
                sim.attempts_.push_back({coin->first, c, tx_hash(a), tx_hash(b), cross});
                emit({{"type", "double_spend"},
                      {"t", now},
                      {"channel", c.value},
                      {"coin", fmt::format("{}:{}", coin->first.tx_hash.hex(), coin->first.index)},
                      {"first", tx_hash(a).hex()},
                      {"second", tx_hash(b).hex()},
                      {"cross_channel", cross}});
                submit(*first, c, a);
                submit(*second, c, b);
            }
        }
        schedule_poisson(Event::Kind::kDoubleSpend, e.a, spec.rate, 0, rng);
    }

    void on_proposal(const Event &e)
    {
        const auto tx = proposal_tx(sc.proposals[e.a], e.a);
        if (auto to = pick_submitter(kRegistrationChannel, {}, proposal_rng)) {
            emit({{"type", "proposal"}, {"t", now}, {"index", e.a}, {"tx", tx_hash(tx).hex()}, {"node", name(*to)}});
            submit(*to, kRegistrationChannel, tx);
        }
    }

    void on_leave(const Event &e)
    {
        const auto &spec = sc.churn[e.b];
        if (now > to_us(spec.stop) || !sim.live_[e.a])
            return;
        sim.live_[e.a] = false;
        emit({{"type", "churn"}, {"t", now}, {"node", name(e.a)}, {"event", "leave"}});
        Event j = e;
        j.kind = Event::Kind::kJoin;
        j.t = now + std::max<TimeUs>(1, to_us(churn_rng.exponential(spec.mean_downtime)));
        push(std::move(j));
    }

    void on_join(const Event &e)
    {
        const uint32_t i = e.a;
        sim.live_[i] = true;
        sim.nodes_[i] = std::make_unique<Node>(node_config(i), sc.params);
        install_peers(i);
        // Bootstrap from a live peer that stores everything this node needs.
        const auto &mine = sim.nodes_[i]->tracking();
        std::vector<uint32_t> sources;
        for (uint32_t j = 0; j < sim.nodes_.size(); ++j) {
            if (j == i || !sim.live_[j])
                continue;
            const auto &theirs = sim.nodes_[j]->tracking();
            bool covers = theirs.all;
            if (!covers && !mine.all)
                covers = std::includes(theirs.subscribed.begin(), theirs.subscribed.end(), mine.subscribed.begin(),
                                       mine.subscribed.end());
            if (covers)
                sources.push_back(j);
        }
        ojson rec{{"type", "churn"}, {"t", now}, {"node", name(i)}, {"event", "join"}};
        if (!sources.empty()) {
            const auto src = sources[churn_rng.below(sources.size())];
            rec["sync_from"] = name(src);
            try {
                sim.nodes_[i]->sync_from(*sim.nodes_[src]);
                rec["synced_height"] = sim.nodes_[i]->tip_state().height;
            } catch (const BadChain &ex) {
                rec["sync_error"] = ex.what();
            }
        }
        emit(std::move(rec));
        drain_events(i);
        const auto &spec = sc.churn[e.b];
        Event l = e;
        l.kind = Event::Kind::kLeave;
        l.t = now + to_us(churn_rng.exponential(1.0 / spec.leave_rate));
        push(std::move(l));
    }

    void on_partition_start(const Event &e)
    {
        const auto &p = sc.partitions[e.a];
        for (size_t g = 0; g < p.groups.size(); ++g)
            for (const auto &n : p.groups[g])
                group_of[*sim.find_node(n)] = static_cast<int>(g);
        emit({{"type", "partition"}, {"index", e.a}, {"t", now}, {"event", "start"}, {"groups", p.groups.size()}});
    }

    void on_partition_heal(const Event &e)
    {
        std::fill(group_of.begin(), group_of.end(), -1);
        emit({{"type", "partition"}, {"index", e.a}, {"t", now}, {"event", "heal"}});
        awaiting.push_back({e.a, now, sim.mined_});
        for (uint32_t i = 0; i < sim.nodes_.size(); ++i)
            if (sim.live_[i])
                dispatch(i, sim.nodes_[i]->announce_tip());
        check_convergence();
    }

    void loop()
    {
        while (!queue.empty()) {
            Event e = queue.top();
            queue.pop();
            if (e.t > end)
                break;
            now = e.t;
            if (e.kind != Event::Kind::kDeliver && now > deadline)
                continue;
            switch (e.kind) {
            case Event::Kind::kDeliver: on_deliver(e); break;
            case Event::Kind::kMine: on_mine(e); break;
            case Event::Kind::kMicroTimer: on_micro_timer(e); break;
            case Event::Kind::kClientTx: on_client_tx(e); break;
            case Event::Kind::kPore: on_pore(e); break;
            case Event::Kind::kDoubleSpend: on_double_spend(e); break;
            case Event::Kind::kProposal: on_proposal(e); break;
            case Event::Kind::kLeave: on_leave(e); break;
            case Event::Kind::kJoin: on_join(e); break;
            case Event::Kind::kPartitionStart: on_partition_start(e); break;
            case Event::Kind::kPartitionHeal: on_partition_heal(e); break;
            }
        }
    }

    // ---- closing analyses on the reference chain

    void report_censorship(const Node &ref)
    {
        std::map<PublicKey, std::set<ServiceNumber>> censored;
        for (size_t i = 0; i < sc.nodes.size(); ++i)
            for (const auto &c : sim.nodes_[i]->config().adversary.censored_channels)
                censored[sim.nodes_[i]->keys().pub].insert(c);
        if (censored.empty())
            return;
        const auto path = ref.view().path_from_genesis(ref.tip());
        // Height at which each submitted transaction was confirmed on this chain.
        std::map<Hash, uint64_t> confirmed_at;
        for (size_t k = 1; k < path.size(); ++k) {
            const auto &kb = ref.view().block(path[k]);
            for (const auto &[c, tail] : kb.channel_refs)
                for (const auto *mb : collect_epoch_chain(tail, kb.prev, c, ref.store().data))
                    for (const auto &tx : mb->txs)
                        confirmed_at.emplace(tx_hash(tx), kb.height);
        }
        for (size_t k = 1; k < path.size(); ++k) {
            const auto &kb = ref.view().block(path[k]);
            auto it = censored.find(kb.miner);
            if (it == censored.end())
                continue;
            // The censoring epoch runs until the next key block on the chain.
            const TimeUs opened = kb.timestamp_us;
            const TimeUs closed = k + 1 < path.size() ? ref.view().block(path[k + 1]).timestamp_us : now;
            size_t honest = k + 1;
            while (honest < path.size() && censored.contains(ref.view().block(path[honest]).miner))
                ++honest;
            // An honest epoch opened at height h is confirmed by the key block at h + 1.
            const bool bounded = honest + 1 < path.size();
            const uint64_t bound = bounded ? ref.view().block(path[honest]).height + 1 : 0;
            for (const auto &[tx, at] : sim.submitted_at_) {
                if (at < opened || at >= closed)
                    continue;
                const auto ch = submitted_channel.find(tx);
                if (ch == submitted_channel.end() || !it->second.contains(ch->second))
                    continue;
                auto conf = confirmed_at.find(tx);
                ojson rec{{"type", "censor"},
                          {"channel", ch->second.value},
                          {"censor", name_of_key(kb.miner)},
                          {"censor_height", kb.height},
                          {"tx", tx.hex()},
                          {"submitted", at}};
                rec["confirmed_height"] = conf == confirmed_at.end() ? ojson() : ojson(conf->second);
                rec["bound_height"] = bounded ? ojson(bound) : ojson();
                rec["within_bound"] =
                    bounded && conf != confirmed_at.end() ? ojson(conf->second <= bound) : ojson();
                emit(std::move(rec));
            }
        }
    }

    std::map<Hash, ServiceNumber> submitted_channel;

    void report_governance(const Node &ref)
    {
        const auto path = ref.view().path_from_genesis(ref.tip());
        const auto &gov = ref.tip_state().governance;
        std::map<Hash, uint64_t> tally;
        uint64_t window = 0;
        for (size_t k = 1; k < path.size(); ++k) {
            const auto &kb = ref.view().block(path[k]);
            ++window;
            if (kb.ballot)
                ++tally[*kb.ballot];
            if (!is_bud_height(sc.params, kb.height))
                continue;
            ojson tallies = ojson::object();
            for (const auto &[h, n] : tally)
                tallies[h.hex()] = n;
            ojson rec{{"type", "governance"}, {"bud_height", kb.height}, {"window", window}, {"tallies", tallies}};
            rec["activated"] = ojson();
            for (const auto &a : gov.activations)
                if (a.height == kb.height)
                    rec["activated"] = a.proposal.hex();
            emit(std::move(rec));
            tally.clear();
            window = 0;
        }
    }

    void report_revocations(const Node &ref)
    {
        const auto path = ref.view().path_from_genesis(ref.tip());
        const auto &blocks = ref.tip_state().chain_blocks;
        for (size_t k = 1; k < path.size(); ++k) {
            const auto &kb = ref.view().block(path[k]);
            for (const auto &rev : kb.revocations) {
                const auto &accused = blocks.at(rev.accused_block);
                emit({{"type", "revocation"},
                      {"height", kb.height},
                      {"accused_block", rev.accused_block.hex()},
                      {"accused_height", accused.height},
                      {"accused", name_of_key(accused.miner)},
                      {"reporter", name_of_key(rev.reporter)},
                      {"before_maturity", kb.height <= accused.height + sc.params.coinbase_maturity}});
            }
        }
    }

    void report_rewards(const Node &ref)
    {
        const auto &st = ref.tip_state();
        for (size_t i = 0; i < sc.nodes.size(); ++i) {
            if (sc.nodes[i].role != NodeRole::kMiner)
                continue;
            const auto &pub = sim.nodes_[i]->keys().pub;
            Amount balance = 0;
            for (const auto &[_, cs] : st.channels)
                for (const auto &[op, coin] : cs.utxo)
                    if (coin.output.owner == pub)
                        balance += coin.output.value;
            uint64_t blocks = 0;
            for (const auto &[h, rec] : st.chain_blocks)
                if (rec.height > 0 && rec.miner == pub)
                    ++blocks;
            emit({{"type", "reward"}, {"node", name(i)}, {"balance", balance}, {"blocks", blocks}});
        }
    }

    void report_final()
    {
        for (size_t i = 0; i < sim.nodes_.size(); ++i) {
            const auto &node = *sim.nodes_[i];
            const auto spends = audit_spends(node);
            const auto audit = node.audit();
            ojson channels = ojson::object();
            for (const auto &[c, cs] : node.tip_state().channels)
                channels[std::to_string(c.value)] = hash_of(cs).hex();
            emit({{"type", "final"},
                  {"node", name(i)},
                  {"role", node.is_full() ? "miner" : "service_user"},
                  {"live", static_cast<bool>(sim.live_[i])},
                  {"honest", sim.honest(i)},
                  {"tip", node.tip().hex()},
                  {"height", node.tip_state().height},
                  {"storage_bytes", node.storage_bytes()},
                  {"key_blocks_stored", node.store().keyblocks.size()},
                  {"messages_sent", sent_messages[i]},
                  {"bytes_sent", sent_bytes[i]},
                  {"invalid_blocks", node.invalid_blocks()},
                  {"transactions", spends.transactions},
                  {"double_spends", spends.double_spends},
                  {"unknown_inputs", spends.unknown_inputs},
                  {"wrong_channel_spends", spends.wrong_channel},
                  {"revoked_spends", spends.revoked_spends},
                  {"coinbase_lock_mismatches", spends.coinbase_lock_mismatches},
                  {"audit", audit.ok},
                  {"channels", channels}});
            if (!audit.ok)
                throw InvariantViolation(
                    fmt::format("audit of {} failed at {}: {}", name(i), audit.block.hex(), audit.detail));
            if (sim.honest(i) && !spends.clean())
                throw InvariantViolation(fmt::format(
                    "spend audit of {} found invalid spends: double {}, unknown {}, wrong channel {}, revoked {}, "
                    "coinbase lock {}",
                    name(i), spends.double_spends, spends.unknown_inputs, spends.wrong_channel,
                    spends.revoked_spends, spends.coinbase_lock_mismatches));
        }
    }

    void finish()
    {
        for (const auto &c : awaiting)
            emit({{"type", "partition"},
                  {"index", c.partition},
                  {"heal", c.heal},
                  {"converged", false},
                  {"key_blocks_after_heal", sim.mined_ - c.mined_at_heal}});
        awaiting.clear();
        const auto &ref = *sim.nodes_[sim.reference_node()];
        report_censorship(ref);
        report_governance(ref);
        report_revocations(ref);
        report_rewards(ref);
        report_final();
    }
};

// ---------------------------------------------------------------------------

Simulator::Simulator(ScenarioConfig scenario) : scenario_(std::move(scenario))
{
    scenario_.validate();
    impl_ = std::make_unique<Impl>(*this);
    impl_->setup();
}

Simulator::~Simulator() = default;

bool Simulator::honest(size_t i) const
{
    if (!nodes_.at(i)->config().adversary.honest())
        return false;
    for (const auto &a : scenario_.adversaries)
        if (a.kind != AdversarySpec::Kind::kDoubleSpender && a.node == scenario_.nodes[i].name)
            return false;
    return true;
}

std::optional<size_t> Simulator::find_node(const std::string &name) const
{
    for (size_t i = 0; i < scenario_.nodes.size(); ++i)
        if (scenario_.nodes[i].name == name)
            return i;
    return std::nullopt;
}

size_t Simulator::reference_node() const
{
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i]->is_full() && honest(i))
            return i;
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i]->is_full())
            return i;
    return 0;
}

void Simulator::run()
{
    ojson names = ojson::array();
    for (const auto &n : scenario_.nodes)
        names.push_back(n.name);
    impl_->emit({{"type", "run"},
                 {"seed", scenario_.seed},
                 {"params", hash_of(scenario_.params).hex()},
                 {"nodes", names}});
    impl_->loop();
    impl_->finish();
}

std::string Simulator::metrics_jsonl() const
{
    std::string out;
    for (const auto &line : metrics_) {
        out += line;
        out += '\n';
    }
    return out;
}

void Simulator::write_outputs(const std::filesystem::path &dir, const std::string &scenario_text) const
{
    namespace fs = std::filesystem;
    fs::create_directories(dir / "nodes");
    {
        std::ofstream f(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
        f << metrics_jsonl();
        if (!f)
            throw StoreError("cannot write metrics.jsonl");
    }
    {
        std::ofstream f(dir / "scenario.json", std::ios::binary | std::ios::trunc);
        f << scenario_text;
    }
    ojson stores = ojson::array();
    for (size_t i = 0; i < nodes_.size(); ++i) {
        write_store(dir / "nodes" / scenario_.nodes[i].name, *nodes_[i]);
        stores.push_back("nodes/" + scenario_.nodes[i].name);
    }
    const auto digest = sha256(ByteView(reinterpret_cast<const uint8_t *>(scenario_text.data()), scenario_text.size()));
    ojson manifest{{"scenario", "scenario.json"},
                   {"scenario_sha256", digest.hex()},
                   {"seed", scenario_.seed},
                   {"metrics", "metrics.jsonl"},
                   {"stores", stores}};
    std::ofstream f(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    f << manifest.dump(2) << '\n';
}

std::vector<std::string> run_scenario(const ScenarioConfig &scenario)
{
    Simulator sim(scenario);
    sim.run();
    return sim.metrics();
}

}  // namespace aspen
