// End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
// the exit status is nonzero when any criterion fails. Criteria can be
// selected by number on the command line.

#include "fixtures.hpp"

#include <aspen/governance.hpp>
#include <aspen/netsim.hpp>
#include <aspen/scenario.hpp>

#include <fmt/core.h>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

using namespace aspen;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and sizes.
constexpr size_t kEquivalenceScenarios = 50;
constexpr size_t kEquivalenceMaxTxs = 2000;
constexpr double kEquivalenceBudgetSeconds = 120.0;
constexpr size_t kMinDoubleSpendAttempts = 10'000;
constexpr uint64_t kMaxKeyBlocksToConverge = 2;
constexpr int kTieDraws = 10'000;
constexpr double kTieTolerance = 0.02;  // absolute, on each candidate's share
constexpr size_t kCensorSeeds = 20;

struct Outcome {
    bool pass = true;
    std::string detail;
};

// ---- helpers

ScenarioConfig make(const json &doc, uint64_t seed)
{
    auto sc = parse_scenario(doc.dump());
    sc.seed = seed;
    return sc;
}

std::vector<json> records(const Simulator &sim, const std::string &type)
{
    std::vector<json> out;
    for (const auto &line : sim.metrics()) {
        auto j = json::parse(line);
        if (j["type"] == type)
            out.push_back(std::move(j));
    }
    return out;
}

// Transactions confirmed on a node's winning chain, with their confirming height.
std::map<Hash, uint64_t> confirmed_on_chain(const Node &n, std::optional<ServiceNumber> only = {})
{
    std::map<Hash, uint64_t> out;
    const auto path = n.view().path_from_genesis(n.tip());
    for (size_t k = 1; k < path.size(); ++k) {
        const auto &kb = n.view().block(path[k]);
        for (const auto &[c, tail] : kb.channel_refs) {
            if (!n.subscribes(c) || (only && *only != c))
                continue;
            for (const auto *mb : collect_epoch_chain(tail, kb.prev, c, n.store().data))
                for (const auto &tx : mb->txs)
                    out.emplace(tx_hash(tx), kb.height);
        }
    }
    return out;
}

// Every transaction in any microblock the node stored, on any branch.
std::set<Hash> serialized_anywhere(const Node &n)
{
    std::set<Hash> out;
    for (const auto &[h, mb] : n.store().data.microblocks)
        for (const auto &tx : mb.txs)
            out.insert(tx_hash(tx));
    return out;
}

std::string slurp(const fs::path &p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ---- scenario builders

json base_doc(double interval, uint64_t key_blocks)
{
    return {{"version", 1},
            {"chain_params", {{"target_keyblock_interval", interval}, {"bud_interval", 10}, {"coinbase_maturity", 6}}},
            {"channels", json::array()},
            {"nodes", json::array()},
            {"latency", {{"min", 0.05}, {"mean", 0.2}}},
            {"workload", json::array()},
            {"duration", {{"key_blocks", key_blocks}, {"settle", 30}}}};
}

json random_scenario(Rng &rng)
{
    const uint64_t key_blocks = 20 + rng.below(41);
    json doc = base_doc(60, key_blocks);

    std::vector<uint32_t> pool{2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<uint32_t> services;
    const size_t n_services = 1 + rng.below(3);
    for (size_t i = 0; i < n_services; ++i) {
        const size_t j = rng.below(pool.size());
        services.push_back(pool[j]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    for (auto s : services)
        doc["channels"].push_back({{"service", s}, {"microblock_interval", 3 + rng.below(10)}});

    std::vector<std::string> all, miners;
    const size_t n_miners = 2 + rng.below(3);
    for (size_t i = 0; i < n_miners; ++i) {
        miners.push_back(fmt::format("m{}", i));
        doc["nodes"].push_back(
            {{"name", miners.back()}, {"role", "miner"}, {"hash_power", 0.5 + static_cast<double>(rng.below(16)) / 10}});
    }
    all = miners;
    const size_t n_users = 1 + rng.below(3);
    for (size_t i = 0; i < n_users; ++i) {
        json subs = json::array();
        for (auto s : services)
            if (rng.below(2) == 1)
                subs.push_back(s);
        if (subs.empty())
            subs.push_back(services[rng.below(services.size())]);
        if (rng.below(3) == 0)
            subs.push_back(0);
        all.push_back(fmt::format("u{}", i));
        doc["nodes"].push_back({{"name", all.back()}, {"role", "service_user"}, {"subscribed", subs}});
    }

    // Keeps the expected number of client transactions well under the cap.
    const double seconds = 60.0 * static_cast<double>(key_blocks);
    const double rate = 1200.0 / seconds / static_cast<double>(services.size() + 1);
    doc["workload"].push_back({{"name", "pay"}, {"channel", 0}, {"rate", rate}, {"wallets", 6}, {"funding", 100000}});
    for (auto s : services)
        doc["workload"].push_back(
            {{"name", fmt::format("s{}", s)}, {"channel", s}, {"rate", rate}, {"wallets", 4}, {"funding", 50000}});
    if (rng.below(2) == 0)
        doc["pores"] = json::array({{{"from", "pay"},
                                     {"to", fmt::format("s{}", services[rng.below(services.size())])},
                                     {"rate", 0.01},
                                     {"amount", {100, 500}},
                                     {"fee", 10}}});

    const auto kind = rng.below(3);
    doc["topology"] = kind == 0 ? json{{"kind", "full"}} : kind == 1 ? json{{"kind", "ring"}}
                                                                     : json{{"kind", "random"}, {"degree", 2}};
    const double lo = 0.02 + static_cast<double>(rng.below(9)) / 100;
    doc["latency"] = {{"min", lo}, {"mean", lo + 0.05 + static_cast<double>(rng.below(46)) / 100}};

    json adversaries = json::array();
    if (rng.below(4) == 0) {
        doc["nodes"].push_back({{"name", "forker"}, {"role", "miner"}});
        all.push_back("forker");
        adversaries.push_back({{"kind", "microblock_forker"}, {"node", "forker"}});
    }
    if (rng.below(4) == 0)
        adversaries.push_back(
            {{"kind", "double_spender"}, {"workload", fmt::format("s{}", services[0])}, {"rate", 0.02}});
    if (!adversaries.empty())
        doc["adversaries"] = adversaries;
    if (rng.below(4) == 0) {
        const double start = 300 + static_cast<double>(rng.below(601));
        json a = json::array(), b = json::array();
        for (size_t i = 0; i < all.size(); ++i)
            (i % 2 == rng.below(2) ? a : b).push_back(all[i]);
        if (a.empty() || b.empty()) {
            a = json::array({all[0]});
            b = json::array();
            for (size_t i = 1; i < all.size(); ++i)
                b.push_back(all[i]);
        }
        doc["partitions"] = json::array(
            {{{"start", start}, {"heal", start + 300 + static_cast<double>(rng.below(301))}, {"groups", json::array({a, b})}}});
    }
    if (rng.below(5) == 0) {
        json users = json::array();
        for (size_t i = 0; i < n_users; ++i)
            users.push_back(fmt::format("u{}", i));
        doc["churn"] = json::array({{{"nodes", users}, {"leave_rate", 0.002}, {"mean_downtime", 120}}});
    }
    return doc;
}

// ---- criteria

// A service user's state for its channels equals a full node's, block by block.
Outcome partial_validation_equivalence()
{
    const auto started = std::chrono::steady_clock::now();
    Rng rng(0xE0'01);
    uint64_t comparisons = 0, mismatches = 0, unmatched = 0, max_txs = 0, runs_with_adversaries = 0;
    std::string first_problem;
    for (size_t s = 0; s < kEquivalenceScenarios; ++s) {
        const auto doc = random_scenario(rng);
        runs_with_adversaries += doc.contains("adversaries") || doc.contains("partitions") ? 1 : 0;
        Simulator sim(make(doc, 1000 + s));
        sim.run();
        max_txs = std::max<uint64_t>(max_txs, sim.submitted().size());
        std::vector<const Node *> full;
        for (size_t i = 0; i < sim.node_count(); ++i)
            if (sim.node(i).is_full())
                full.push_back(&sim.node(i));
        for (size_t i = 0; i < sim.node_count(); ++i) {
            const auto &user = sim.node(i);
            if (user.is_full())
                continue;
            for (const auto &[h, st] : user.states()) {
                const LedgerState *ref = nullptr;
                for (const auto *f : full)
                    if ((ref = f->state_at(h)) != nullptr)
                        break;
                if (ref == nullptr) {
                    ++unmatched;
                    continue;
                }
                ++comparisons;
                bool same = st.governance == ref->governance && st.rewards.revoked == ref->rewards.revoked &&
                            st.height == ref->height;
                std::set<ServiceNumber> expected;
                for (const auto &[c, cs] : ref->channels)
                    if (user.tracking().wants(c))
                        expected.insert(c);
                same = same && st.tracked_channels() == expected;
                for (const auto &c : expected)
                    same = same && st.channels.contains(c) &&
                           encode_to_bytes(st.channels.at(c)) == encode_to_bytes(ref->channels.at(c));
                if (!same) {
                    ++mismatches;
                    if (first_problem.empty())
                        first_problem = fmt::format(" first: scenario {} {} height {}", s, user.config().name, st.height);
                }
            }
        }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    Outcome o;
    o.pass = mismatches == 0 && unmatched == 0 && comparisons > 0 && max_txs <= kEquivalenceMaxTxs &&
             elapsed <= kEquivalenceBudgetSeconds;
    o.detail = fmt::format("{} scenarios ({} adversarial), {} state comparisons, {} mismatches, {} without a full-node "
                           "counterpart, max {} txs per run, {:.1f}s of {:.0f}s{}",
                           kEquivalenceScenarios, runs_with_adversaries, comparisons, mismatches, unmatched, max_txs,
                           elapsed, kEquivalenceBudgetSeconds, first_problem);
    return o;
}

json double_spend_doc(uint64_t seed)
{
    json doc = base_doc(60, 60);
    doc["channels"] = json::array({{{"service", 2}, {"microblock_interval", 5}}, {{"service", 3}, {"microblock_interval", 5}}});
    doc["nodes"] = json::array({{{"name", "m"}, {"count", 5}, {"role", "miner"}},
                                {{"name", "u23"}, {"role", "service_user"}, {"subscribed", {2, 3}}},
                                {{"name", "u0"}, {"role", "service_user"}, {"subscribed", {0, 3}}}});
    doc["topology"] = {{"kind", "random"}, {"degree", 2}};
    doc["workload"] = json::array({{{"name", "pay"}, {"channel", 0}, {"rate", 0.5}, {"wallets", 40}, {"funding", 100000}},
                                   {{"name", "s3"}, {"channel", 3}, {"rate", 0.3}, {"wallets", 30}, {"funding", 50000}},
                                   {{"name", "s2"}, {"channel", 2}, {"rate", 0.1}, {"wallets", 8}, {"funding", 20000}}});
    doc["adversaries"] = json::array(
        {{{"kind", "double_spender"}, {"workload", "pay"}, {"rate", 1.0}, {"cross_channel", true}, {"pore_channel", 2}},
         {{"kind", "double_spender"}, {"workload", "pay"}, {"rate", 1.0}},
         {{"kind", "double_spender"}, {"workload", "s3"}, {"rate", 1.0}}});
    const double start = 600 + 300 * static_cast<double>(seed % 3);
    doc["partitions"] = json::array({{{"start", start},
                                      {"heal", start + 600},
                                      {"groups", {{"m0", "m1", "u23"}, {"m2", "m3", "m4", "u0"}}}}});
    doc["churn"] = json::array({{{"nodes", {"m4", "u23"}}, {"leave_rate", 0.001}, {"mean_downtime", 120}}});
    return doc;
}

// Never both halves of a double spend on any honest node's winning chain.
Outcome double_spend_safety()
{
    uint64_t attempts = 0, cross = 0, during_partition = 0, both_serialized = 0, violations = 0, dirty_audits = 0;
    uint64_t checks = 0, runs = 0;
    for (uint64_t seed = 1; attempts < kMinDoubleSpendAttempts && seed <= 10; ++seed) {
        ++runs;
        Simulator sim(make(double_spend_doc(seed), seed));
        sim.run();
        const auto &list = sim.double_spend_attempts();
        attempts += list.size();

        std::vector<std::pair<double, double>> windows;
        for (const auto &p : sim.scenario().partitions)
            windows.emplace_back(p.start * 1e6, p.heal * 1e6);
        const auto recs = records(sim, "double_spend");
        for (const auto &r : recs) {
            const auto t = r["t"].get<double>();
            for (const auto &[a, b] : windows)
                during_partition += t >= a && t < b ? 1 : 0;
        }

        std::set<Hash> anywhere;
        for (size_t i = 0; i < sim.node_count(); ++i) {
            if (!sim.honest(i))
                continue;
            const auto &n = sim.node(i);
            dirty_audits += audit_spends(n).clean() ? 0 : 1;
            const auto s = serialized_anywhere(n);
            anywhere.insert(s.begin(), s.end());
            const auto confirmed = confirmed_on_chain(n);
            for (const auto &a : list) {
                if (!n.subscribes(a.channel))
                    continue;
                ++checks;
                violations += confirmed.contains(a.first) && confirmed.contains(a.second) ? 1 : 0;
            }
        }
        for (const auto &a : list) {
            cross += a.cross_channel ? 1 : 0;
            both_serialized += anywhere.contains(a.first) && anywhere.contains(a.second) ? 1 : 0;
        }
    }
    Outcome o;
    o.pass = attempts >= kMinDoubleSpendAttempts && violations == 0 && dirty_audits == 0 && cross > 0 &&
             both_serialized > 0;
    o.detail = fmt::format("{} attempts over {} runs ({} cross-channel, {} during a partition, {} with both halves "
                           "serialized on competing branches), {} node-chain checks, {} violations, {} unclean audits",
                           attempts, runs, cross, during_partition, both_serialized, checks, violations, dirty_audits);
    return o;
}

struct ConservationTally {
    uint64_t states = 0, supply_errors = 0, lock_errors = 0, coinbase_blocks = 0, coinbase_errors = 0;
    uint64_t burned_runs = 0, probes = 0, probe_accepted = 0, home_rejected = 0;
};

// Supply equals genesis plus subsidies minus poison burns at every block,
// and value never leaves a channel except through a funding pore.
void check_conservation(const Simulator &sim, ConservationTally &t)
{
    const auto &sc = sim.scenario();
    Amount genesis = 0;
    for (const auto &o : sc.params.genesis_allocation)
        genesis += o.value;

    std::map<PublicKey, KeyPair> owners;
    for (const auto &w : sc.workload)
        for (uint32_t i = 0; i < w.wallets; ++i) {
            const auto k = wallet_keys(w.name, i);
            owners.emplace(k.pub, k);
        }

    bool burned_any = false;
    for (size_t i = 0; i < sim.node_count(); ++i) {
        const auto &n = sim.node(i);
        if (!n.is_full() || !sim.honest(i))
            continue;
        const auto path = n.view().path_from_genesis(n.tip());
        Amount burned = 0;
        for (size_t k = 0; k < path.size(); ++k) {
            const auto &kb = n.view().block(path[k]);
            std::map<ServiceNumber, Amount> expected_locks;
            for (const auto &rev : kb.revocations) {
                const auto &accused = n.view().block(rev.accused_block);
                for (const auto &out : accused.coinbase.outputs) {
                    if (out.owner != accused.miner)
                        continue;
                    const Amount credit = out.value * sc.params.whistleblower_ppm / kPpm;
                    burned += out.value - credit;
                    expected_locks[out.spend_channel] += credit;
                }
            }
            burned_any = burned_any || burned > 0;
            const auto *st = n.state_at(path[k]);
            Amount circulating = 0;
            for (const auto &[c, cs] : st->channels)
                for (const auto &[op, coin] : cs.utxo) {
                    circulating += coin.output.value;
                    t.lock_errors += coin.output.spend_channel == c ? 0 : 1;
                }
            ++t.states;
            t.supply_errors += circulating == genesis + sc.params.subsidy * kb.height - burned ? 0 : 1;
            if (k == 0)
                continue;

            // Fee outputs stay in the channel that collected the fees.
            ++t.coinbase_blocks;
            expected_locks[kPaymentChannel] += sc.params.subsidy;
            for (const auto &[c, tail] : kb.channel_refs)
                for (const auto *mb : collect_epoch_chain(tail, kb.prev, c, n.store().data))
                    for (const auto &tx : mb->txs)
                        expected_locks[c] += tx.fee();
            std::map<ServiceNumber, Amount> locks;
            for (const auto &out : kb.coinbase.outputs)
                locks[out.spend_channel] += out.value;
            std::erase_if(expected_locks, [](const auto &e) { return e.second == 0; });
            std::erase_if(locks, [](const auto &e) { return e.second == 0; });
            t.coinbase_errors += locks == expected_locks ? 0 : 1;
        }

        // Probe spends of wallet coins from the tip, in their home channel and in every other channel.
        const auto &tip = n.tip_state();
        EpochContext ec;
        fill_epoch_context(ec, tip, sc.params);
        for (const auto &[home, cs] : tip.channels) {
            size_t taken = 0;
            for (const auto &[op, coin] : cs.utxo) {
                auto key = owners.find(coin.output.owner);
                if (key == owners.end() || coin.output.value < 20 || taken == 5)
                    continue;
                ++taken;
                for (const auto &[c, other] : tip.channels) {
                    if (c == kRegistrationChannel)
                        continue;
                    const std::vector<fixture::Spend> spend{{op, key->second}};
                    const std::vector<Output> outs{{coin.output.value - 10, coin.output.owner, c}};
                    const auto tx = c == kPaymentChannel ? fixture::payment(spend, outs, 10)
                                                         : fixture::service(c, spend, outs, 10);
                    const auto &proto = tip.governance.active(c);
                    if (c == home) {
                        t.home_rejected += validate_tx(tx, other, proto, ec.ctx).ok() ? 0 : 1;
                        continue;
                    }
                    // Both as seen by the foreign channel and with the coin planted in its state.
                    ++t.probes;
                    t.probe_accepted += validate_tx(tx, other, proto, ec.ctx).ok() ? 1 : 0;
                    ChannelState planted = other;
                    planted.utxo.emplace(op, coin);
                    ++t.probes;
                    t.probe_accepted += validate_tx(tx, planted, proto, ec.ctx).ok() ? 1 : 0;
                }
            }
        }
    }
    t.burned_runs += burned_any ? 1 : 0;
}

Outcome conservation_and_one_way_flow()
{
    ConservationTally t;
    for (uint64_t seed = 1; seed <= 4; ++seed) {
        auto sc = load_scenario(std::string(ASPEN_SOURCE_DIR) + "/scenarios/adversarial.json");
        sc.seed = seed;
        Simulator sim(sc);
        sim.run();
        check_conservation(sim, t);
    }
    Rng rng(0xE0'03);
    for (uint64_t s = 0; s < 6; ++s) {
        Simulator sim(make(random_scenario(rng), 300 + s));
        sim.run();
        check_conservation(sim, t);
    }
    Outcome o;
    o.pass = t.supply_errors == 0 && t.lock_errors == 0 && t.coinbase_errors == 0 && t.probe_accepted == 0 &&
             t.home_rejected == 0 && t.probes > 0 && t.burned_runs > 0;
    o.detail = fmt::format("{} states: {} supply errors, {} misplaced outputs; {} coinbases, {} fee-lock errors; "
                           "{} runs with burns; {} foreign-channel spends, {} accepted; {} home spends rejected",
                           t.states, t.supply_errors, t.lock_errors, t.coinbase_blocks, t.coinbase_errors,
                           t.burned_runs, t.probes, t.probe_accepted, t.home_rejected);
    return o;
}

// Activation at a bud iff the window's ballots strictly exceed tau of its key blocks.
Outcome governance_threshold()
{
    uint64_t chains = 0, wrong = 0, boundary = 0, pure_checked = 0, pure_wrong = 0;
    std::string first_problem;
    const std::vector<std::pair<uint64_t, uint64_t>> taus{{1, 2}, {3, 4}};  // num/den
    for (const auto &[num, den] : taus) {
        for (uint64_t w = 10; w <= 40; ++w) {
            const uint64_t floor_tw = num * w / den;
            for (uint64_t k : {floor_tw, floor_tw + 1}) {
                auto params = fixture::params_with({}, {{0, 1}});
                params.tau_ppm = kPpm * num / den;
                params.bud_interval = w;
                params.validate();
                fixture::Net net(params);
                auto voter = fixture::miner_config(0, 11);
                voter.ballot = BallotPolicy::kFirstPending;
                auto abstainer = fixture::miner_config(1, 12);
                abstainer.ballot = BallotPolicy::kNone;
                net.add(voter);
                net.add(abstainer);

                TimeUs t = 0;
                auto next = [&] { return t += 1'000'000; };
                net.mine(1, next());
                ProposalSpec spec;
                spec.proposer_seed = 9;
                spec.descriptors.push_back(ChainParams::default_descriptor(ServiceNumber{7}));
                const auto reg = proposal_tx(spec, 0);
                net.submit(1, kRegistrationChannel, reg);
                net.tick(1, kRegistrationChannel, next());
                for (uint64_t h = 2; h <= w; ++h)
                    net.mine(1, next());
                bool ok = net[0].tip_state().governance.proposals.contains(tx_hash(reg)) &&
                          net[0].tip_state().governance.activations.empty();
                for (uint64_t i = 0; i < w; ++i)
                    net.mine(i < k ? 0 : 1, next());
                const auto &gov = net[1].tip_state().governance;
                const bool expected = k * den > num * w;
                boundary += k * den == num * w ? 1 : 0;
                const bool activated = gov.is_active(ServiceNumber{7});
                ok = ok && activated == expected && net[0].tip() == net[1].tip();
                for (const auto &a : gov.activations)
                    ok = ok && a.height == 2 * w && a.ballots == k && a.window == w && a.proposal == tx_hash(reg);
                ++chains;
                if (!ok) {
                    ++wrong;
                    if (first_problem.empty())
                        first_problem = fmt::format(" first: tau {}/{} window {} ballots {}", num, den, w, k);
                }
            }
        }
    }
    for (uint64_t tau : {1ull, 250'000ull, 333'333ull, 500'000ull, 666'667ull, 750'000ull, 999'999ull})
        for (uint64_t w = 1; w <= 100; ++w)
            for (uint64_t b = 0; b <= w; ++b) {
                ++pure_checked;
                pure_wrong += exceeds_threshold(b, w, tau) == (b * kPpm > tau * w) ? 0 : 1;
            }
    Outcome o;
    o.pass = wrong == 0 && pure_wrong == 0 && boundary > 0;
    o.detail = fmt::format("{} simulated chains (tau 1/2 and 3/4, windows 10-40, {} exact-boundary cases), {} wrong; "
                           "{} threshold evaluations, {} wrong{}",
                           chains, boundary, wrong, pure_checked, pure_wrong, first_problem);
    return o;
}

KeyBlock child_of(const KeyBlock &parent, TimeUs ts)
{
    KeyBlock kb;
    kb.prev = block_hash(parent);
    kb.height = parent.height + 1;
    kb.timestamp_us = ts;
    kb.coinbase.height = kb.height;
    kb.work = parent.work + 1;
    return kb;
}

// Healed partitions converge within a bounded number of key blocks, and
// ties break uniformly and reproducibly.
Outcome convergence_and_ties()
{
    uint64_t partitions = 0, converged = 0, slow = 0, split_tips = 0, max_after = 0;
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        json doc = base_doc(60, 40);
        doc["channels"] = json::array({{{"service", 3}, {"microblock_interval", 5}}});
        doc["nodes"] = json::array({{{"name", "m"}, {"count", 6}, {"role", "miner"}},
                                    {{"name", "u"}, {"role", "service_user"}, {"subscribed", {3}}}});
        doc["workload"] = json::array({{{"name", "pay"}, {"channel", 0}, {"rate", 0.2}, {"funding", 10000}},
                                       {{"name", "s3"}, {"channel", 3}, {"rate", 0.2}, {"funding", 10000}}});
        json groups = seed % 2 == 0 ? json::array({{"m0", "m1", "m2", "u"}, {"m3", "m4", "m5"}})
                                    : json::array({{"m0", "m1"}, {"m2", "m3", "u"}, {"m4", "m5"}});
        doc["partitions"] = json::array({{{"start", 300}, {"heal", 900 + 60 * static_cast<double>(seed)}, {"groups", groups}}});
        Simulator sim(make(doc, seed));
        sim.run();
        for (const auto &r : records(sim, "partition")) {
            if (!r.contains("converged"))
                continue;
            ++partitions;
            const auto after = r["key_blocks_after_heal"].get<uint64_t>();
            max_after = std::max(max_after, after);
            if (r["converged"] == true)
                ++converged;
            slow += r["converged"] == true && after <= kMaxKeyBlocksToConverge ? 0 : 1;
        }
        for (size_t i = 0; i < sim.node_count(); ++i)
            split_tips += sim.live(i) && sim.node(i).tip() != sim.node(0).tip() ? 1 : 0;
    }

    // Ties between two and three equal-work leaves.
    bool ties_ok = true;
    std::string tie_detail;
    const auto g = make_genesis(fixture::params_with({}));
    for (size_t n : {2u, 3u}) {
        ChainView view(g), reversed(g);
        std::vector<KeyBlock> leaves;
        for (size_t i = 0; i < n; ++i)
            leaves.push_back(child_of(g, 100 + static_cast<TimeUs>(i)));
        for (const auto &kb : leaves)
            view.add(kb);
        for (auto it = leaves.rbegin(); it != leaves.rend(); ++it)
            reversed.add(*it);
        std::map<Hash, int> wins;
        for (uint64_t seed = 0; seed < kTieDraws; ++seed) {
            const auto pick = fork_choice(view, seed);
            ties_ok = ties_ok && pick == fork_choice(view, seed) && pick == fork_choice(reversed, seed);
            ++wins[pick];
        }
        ties_ok = ties_ok && wins.size() == n;
        for (const auto &kb : leaves) {
            const double share = static_cast<double>(wins[block_hash(kb)]) / kTieDraws;
            ties_ok = ties_ok && std::abs(share - 1.0 / static_cast<double>(n)) <= kTieTolerance;
            tie_detail += fmt::format("{}{:.3f}", tie_detail.empty() || tie_detail.back() == ' ' ? "" : "/", share);
        }
        tie_detail += " ";
    }
    Outcome o;
    o.pass = partitions > 0 && converged == partitions && slow == 0 && split_tips == 0 && ties_ok;
    o.detail = fmt::format("{} healed partitions, {} converged, at most {} key blocks after heal (bound {}), {} live "
                           "nodes off the common tip; tie shares {}within {} of uniform",
                           partitions, converged, max_after, kMaxKeyBlocksToConverge, split_tips, tie_detail,
                           kTieTolerance);
    return o;
}

// A transaction withheld by a censoring leader confirms by the end of the
// first honest epoch after it.
Outcome censorship_bound()
{
    uint64_t records_total = 0, bounded = 0, late = 0, unconfirmed = 0, disagreements = 0, censor_epochs = 0;
    for (uint64_t seed = 1; seed <= kCensorSeeds; ++seed) {
        json doc = base_doc(600, 30);
        doc["channels"] = json::array({{{"service", 3}, {"microblock_interval", 5}}});
        doc["nodes"] = json::array({{{"name", "h"}, {"count", 3}, {"role", "miner"}},
                                    {{"name", "censor"}, {"role", "miner"}},
                                    {{"name", "u"}, {"role", "service_user"}, {"subscribed", {3}}}});
        doc["latency"] = {{"min", 0.01}, {"mean", 0.05}};
        doc["workload"] = json::array({{{"name", "pay"}, {"channel", 0}, {"rate", 0.02}, {"funding", 10000}},
                                       {{"name", "s3"}, {"channel", 3}, {"rate", 0.05}, {"wallets", 8}, {"funding", 10000}}});
        doc["adversaries"] = json::array({{{"kind", "censoring_leader"}, {"node", "censor"}, {"channels", {3}}}});
        doc["duration"] = {{"key_blocks", 30}, {"settle", 600}};
        Simulator sim(make(doc, seed));
        sim.run();

        // Recompute confirmation heights and bounds from the reference chain.
        const auto &ref = sim.node(sim.reference_node());
        const auto confirmed = confirmed_on_chain(ref, ServiceNumber{3});
        const auto path = ref.view().path_from_genesis(ref.tip());
        const auto censor_key = sim.node(*sim.find_node("censor")).keys().pub;
        std::map<uint64_t, std::optional<uint64_t>> bound_of;
        for (size_t k = 1; k < path.size(); ++k) {
            if (ref.view().block(path[k]).miner != censor_key)
                continue;
            ++censor_epochs;
            size_t honest = k + 1;
            while (honest < path.size() && ref.view().block(path[honest]).miner == censor_key)
                ++honest;
            bound_of[k] = honest + 1 < path.size() ? std::optional<uint64_t>(honest + 1) : std::nullopt;
        }
        for (const auto &r : records(sim, "censor")) {
            ++records_total;
            const auto height = r["censor_height"].get<uint64_t>();
            const auto tx = Hash::from_hex(r["tx"].get<std::string>());
            const auto bound = bound_of.at(height);
            const bool listed_bound = !r["bound_height"].is_null();
            disagreements += listed_bound == bound.has_value() ? 0 : 1;
            if (!bound)
                continue;
            ++bounded;
            auto it = confirmed.find(tx);
            if (it == confirmed.end())
                ++unconfirmed;
            else if (it->second > *bound) {
                ++late;
                if (std::getenv("ASPEN_ACCEPTANCE_VERBOSE") != nullptr) {
                    const auto &epoch = ref.view().block(path[*bound - 1]);
                    const auto &closing = ref.view().block(path[*bound]);
                    fmt::print(stderr, "late: seed {} censor {} submitted {} bound {} confirmed {} honest epoch {}..{}\n",
                               seed, height, r["submitted"].get<int64_t>(), *bound, it->second, epoch.timestamp_us,
                               closing.timestamp_us);
                }
            }
            const bool within = it != confirmed.end() && it->second <= *bound;
            disagreements += r["within_bound"].is_boolean() && r["within_bound"].get<bool>() == within
                                 ? 0
                                 : (r["within_bound"].is_null() && !within ? 0 : 1);
        }
    }
    Outcome o;
    o.pass = bounded > 0 && late == 0 && unconfirmed == 0 && disagreements == 0;
    o.detail = fmt::format("{} seeds, {} censoring epochs, {} withheld transactions ({} with a closed honest epoch): "
                           "{} late, {} never confirmed, {} metric disagreements",
                           kCensorSeeds, censor_epochs, records_total, bounded, late, unconfirmed, disagreements);
    return o;
}

// Every equivocating leader on the final chain is revoked before its coinbase
// matures, and no honest miner is ever revoked.
Outcome poison_detection()
{
    uint64_t forked = 0, revoked_in_time = 0, missed = 0, pending = 0, honest_revoked = 0, runs = 0;
    for (uint64_t seed = 1; seed <= 6; ++seed) {
        json doc = base_doc(60, 40);
        doc["channels"] = json::array({{{"service", 3}, {"microblock_interval", 5}}});
        doc["nodes"] = json::array({{{"name", "m"}, {"count", 4}, {"role", "miner"}},
                                    {{"name", "forker"}, {"count", seed % 2 + 1}, {"role", "miner"}},
                                    {{"name", "u"}, {"role", "service_user"}, {"subscribed", {3}}}});
        doc["workload"] = json::array({{{"name", "pay"}, {"channel", 0}, {"rate", 0.3}, {"funding", 10000}},
                                       {{"name", "s3"}, {"channel", 3}, {"rate", 0.3}, {"funding", 10000}}});
        json adversaries = json::array();
        for (uint64_t i = 0; i <= seed % 2; ++i)
            adversaries.push_back({{"kind", "microblock_forker"}, {"node", fmt::format("forker{}", i)}});
        doc["adversaries"] = adversaries;
        Simulator sim(make(doc, seed));
        sim.run();
        ++runs;

        std::set<PublicKey> honest_keys;
        std::map<std::tuple<Hash, ServiceNumber, Hash, PublicKey>, std::set<Hash>> children;
        for (size_t i = 0; i < sim.node_count(); ++i) {
            if (!sim.honest(i))
                continue;
            if (sim.node(i).is_full())
                honest_keys.insert(sim.node(i).keys().pub);
            for (const auto &[h, mb] : sim.node(i).store().data.microblocks)
                children[{mb.header.epoch, mb.header.channel, mb.header.prev, mb.header.leader}].insert(h);
        }
        std::set<Hash> forked_epochs;
        for (const auto &[key, hs] : children)
            if (hs.size() > 1)
                forked_epochs.insert(std::get<0>(key));

        const auto &ref = sim.node(sim.reference_node());
        const auto path = ref.view().path_from_genesis(ref.tip());
        const std::set<Hash> on_chain(path.begin(), path.end());
        const uint64_t tip_height = ref.tip_state().height;
        const uint64_t maturity = sim.scenario().params.coinbase_maturity;
        std::map<Hash, uint64_t> revoked_at;
        for (size_t i = 0; i < sim.node_count(); ++i) {
            if (!sim.honest(i))
                continue;
            const auto &n = sim.node(i);
            for (const auto &h : n.view().path_from_genesis(n.tip()))
                for (const auto &rev : n.view().block(h).revocations) {
                    honest_revoked += honest_keys.contains(n.view().block(rev.accused_block).miner) ? 1 : 0;
                    if (&n == &ref)
                        revoked_at.emplace(rev.accused_block, n.view().block(h).height);
                }
        }
        for (const auto &e : forked_epochs) {
            if (!on_chain.contains(e))
                continue;
            ++forked;
            const uint64_t height = ref.view().block(e).height;
            auto it = revoked_at.find(e);
            if (it != revoked_at.end() && it->second <= height + maturity)
                ++revoked_in_time;
            else if (it == revoked_at.end() && tip_height < height + maturity)
                ++pending;
            else
                ++missed;
        }
    }
    Outcome o;
    o.pass = forked > 0 && missed == 0 && honest_revoked == 0;
    o.detail = fmt::format("{} runs, {} forked epochs on the final chain: {} revoked before maturity, {} still within "
                           "the window at the end, {} missed; {} revocations of honest miners",
                           runs, forked, revoked_in_time, pending, missed, honest_revoked);
    return o;
}

json storage_doc(double payment_rate)
{
    json doc = base_doc(60, 40);
    doc["channels"] = json::array({{{"service", 3}, {"microblock_interval", 5}}, {{"service", 4}, {"microblock_interval", 5}}});
    doc["nodes"] = json::array({{{"name", "m"}, {"count", 3}, {"role", "miner"}},
                                {{"name", "u"}, {"role", "service_user"}, {"subscribed", {3}}}});
    doc["workload"] = json::array({{{"name", "pay"}, {"channel", 0}, {"rate", payment_rate}, {"wallets", 20}, {"funding", 100000}},
                                   {{"name", "s3"}, {"channel", 3}, {"rate", 0.2}, {"funding", 50000}},
                                   {{"name", "s4"}, {"channel", 4}, {"rate", 0.2}, {"funding", 50000}}});
    return doc;
}

// A user's storage does not depend on load in channels it does not follow.
Outcome storage_locality()
{
    uint64_t pairs = 0, equal = 0;
    std::string detail;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        Simulator low(make(storage_doc(0.5), seed)), high(make(storage_doc(5.0), seed));
        low.run();
        high.run();
        const auto ul = *low.find_node("u"), uh = *high.find_node("u");
        const auto &a = low.node(ul), &b = high.node(uh);
        ++pairs;
        const bool same = a.storage_bytes() == b.storage_bytes() &&
                          a.store().keyblocks.size() == b.store().keyblocks.size() &&
                          low.key_blocks_mined() == high.key_blocks_mined();
        equal += same ? 1 : 0;
        detail += fmt::format(" seed {}: user {} vs {} bytes, miner {} vs {} bytes;", seed, a.storage_bytes(),
                              b.storage_bytes(), low.node(0).storage_bytes(), high.node(0).storage_bytes());
    }
    Outcome o;
    o.pass = equal == pairs;
    o.detail = fmt::format("{}/{} pairs equal at 1x and 10x payment load;{}", equal, pairs, detail);
    o.detail.pop_back();
    return o;
}

std::map<std::string, std::string> tree(const fs::path &root)
{
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

// Same scenario and seed give byte-identical outputs, sequentially and concurrently.
Outcome determinism()
{
    const std::string path = std::string(ASPEN_SOURCE_DIR) + "/scenarios/adversarial.json";
    const auto text = slurp(path);
    auto sc = load_scenario(path);
    sc.seed = 42;
    const auto base = fs::temp_directory_path() / "aspen-acceptance-determinism";
    fs::remove_all(base);
    std::vector<fs::path> dirs{base / "a", base / "b", base / "c", base / "d"};
    {
        Simulator sim(sc);
        sim.run();
        sim.write_outputs(dirs[0], text);
    }
    {
        Simulator sim(sc);
        sim.run();
        sim.write_outputs(dirs[1], text);
    }
    std::vector<std::thread> threads;
    for (size_t i = 2; i < 4; ++i)
        threads.emplace_back([&, i] {
            Simulator sim(sc);
            sim.run();
            sim.write_outputs(dirs[i], text);
        });
    for (auto &t : threads)
        t.join();

    const auto reference = tree(dirs[0]);
    size_t differing = 0;
    for (size_t i = 1; i < dirs.size(); ++i)
        differing += tree(dirs[i]) == reference ? 0 : 1;
    sc.seed = 43;
    const bool seed_matters = run_scenario(sc) != run_scenario([&] {
                                  auto s = sc;
                                  s.seed = 42;
                                  return s;
                              }());
    fs::remove_all(base);
    Outcome o;
    o.pass = differing == 0 && reference.size() > 3 && seed_matters;
    o.detail = fmt::format("{} files per run, {} of 3 repeat runs differ (2 concurrent), another seed {}",
                           reference.size(), differing, seed_matters ? "differs" : "does not differ");
    return o;
}

struct Criterion {
    int number;
    const char *name;
    std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char **argv)
{
    const std::vector<Criterion> criteria{
        {1, "partial validation equals full validation", partial_validation_equivalence},
        {2, "double spends never confirm", double_spend_safety},
        {3, "value conservation and one-way flow", conservation_and_one_way_flow},
        {4, "governance activation threshold", governance_threshold},
        {5, "partition convergence and tie-breaking", convergence_and_ties},
        {6, "censorship bounded by one honest epoch", censorship_bound},
        {7, "microblock forks are poisoned", poison_detection},
        {8, "storage independent of unfollowed channels", storage_locality},
        {9, "deterministic replay", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i)
        selected.insert(std::stoi(argv[i]));

    int failures = 0;
    for (const auto &c : criteria) {
        if (!selected.empty() && !selected.contains(c.number))
            continue;
        const auto started = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception &e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        failures += o.pass ? 0 : 1;
        fmt::print("{} [{}] {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", c.number, c.name, o.detail, secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
