#include <aspen/crypto.hpp>
#include <aspen/scenario.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace aspen {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string &where, const std::string &what)
{
    throw InvalidScenario(fmt::format("{}: {}", where, what));
}

void check_keys(const json &j, const std::string &where, std::initializer_list<const char *> allowed)
{
    if (!j.is_object())
        bad(where, "expected an object");
    for (const auto &[key, _] : j.items()) {
        bool known = false;
        for (const char *a : allowed)
            known = known || key == a;
        if (!known)
            bad(where, fmt::format("unknown key \"{}\"", key));
    }
}

double num(const json &j, const std::string &where)
{
    if (!j.is_number())
        bad(where, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v))
        bad(where, "expected a finite number");
    return v;
}

double nonneg(const json &j, const std::string &where)
{
    const double v = num(j, where);
    if (v < 0)
        bad(where, "must not be negative");
    return v;
}

uint64_t u64(const json &j, const std::string &where)
{
    if (!j.is_number_unsigned())
        bad(where, "expected a non-negative integer");
    return j.get<uint64_t>();
}

uint32_t u32(const json &j, const std::string &where)
{
    const auto v = u64(j, where);
    if (v > std::numeric_limits<uint32_t>::max())
        bad(where, "out of range");
    return static_cast<uint32_t>(v);
}

std::string str(const json &j, const std::string &where)
{
    if (!j.is_string())
        bad(where, "expected a string");
    return j.get<std::string>();
}

bool boolean(const json &j, const std::string &where)
{
    if (!j.is_boolean())
        bad(where, "expected true or false");
    return j.get<bool>();
}

const json &array(const json &j, const std::string &where)
{
    if (!j.is_array())
        bad(where, "expected an array");
    return j;
}

// Fraction in [0, 1] written as a decimal, stored in parts per million.
uint64_t ppm(const json &j, const std::string &where)
{
    const double v = num(j, where);
    if (v < 0 || v > 1)
        bad(where, "must lie in [0, 1]");
    return static_cast<uint64_t>(std::llround(v * 1e6));
}

TimeUs seconds_to_us(double s) { return static_cast<TimeUs>(std::llround(s * 1e6)); }

std::pair<uint64_t, uint64_t> range(const json &j, const std::string &where)
{
    if (!j.is_array() || j.size() != 2)
        bad(where, "expected [min, max]");
    const auto lo = u64(j[0], where + "[0]");
    const auto hi = u64(j[1], where + "[1]");
    if (lo > hi)
        bad(where, "min exceeds max");
    return {lo, hi};
}

std::set<ServiceNumber> channel_set(const json &j, const std::string &where)
{
    std::set<ServiceNumber> out;
    for (size_t i = 0; i < array(j, where).size(); ++i)
        out.insert(ServiceNumber{u32(j[i], fmt::format("{}[{}]", where, i))});
    return out;
}

ProtocolDescriptor parse_descriptor(const json &j, const std::string &where)
{
    check_keys(j, where, {"service", "max_tx_bytes", "max_microblock_bytes", "microblock_interval", "payload_schema_id"});
    if (!j.contains("service"))
        bad(where, "missing \"service\"");
    auto d = ChainParams::default_descriptor(ServiceNumber{u32(j["service"], where + ".service")});
    if (j.contains("max_tx_bytes"))
        d.max_tx_bytes = u32(j["max_tx_bytes"], where + ".max_tx_bytes");
    if (j.contains("max_microblock_bytes"))
        d.max_microblock_bytes = u32(j["max_microblock_bytes"], where + ".max_microblock_bytes");
    if (j.contains("microblock_interval"))
        d.microblock_interval_us = seconds_to_us(nonneg(j["microblock_interval"], where + ".microblock_interval"));
    if (j.contains("payload_schema_id"))
        d.payload_schema_id = u32(j["payload_schema_id"], where + ".payload_schema_id");
    return d;
}

void parse_chain_params(const json &j, ChainParams &p)
{
    const std::string w = "chain_params";
    check_keys(j, w,
               {"tau", "bud_interval", "target_keyblock_interval", "max_channel_refs", "min_pore_fee", "subsidy",
                "fee_split", "coinbase_maturity", "seal_bits", "whistleblower_share"});
    if (j.contains("tau"))
        p.tau_ppm = ppm(j["tau"], w + ".tau");
    if (j.contains("bud_interval"))
        p.bud_interval = u64(j["bud_interval"], w + ".bud_interval");
    if (j.contains("target_keyblock_interval"))
        p.target_keyblock_interval = num(j["target_keyblock_interval"], w + ".target_keyblock_interval");
    if (j.contains("max_channel_refs"))
        p.max_channel_refs = u32(j["max_channel_refs"], w + ".max_channel_refs");
    if (j.contains("min_pore_fee"))
        p.min_pore_fee = u64(j["min_pore_fee"], w + ".min_pore_fee");
    if (j.contains("subsidy"))
        p.subsidy = u64(j["subsidy"], w + ".subsidy");
    if (j.contains("fee_split"))
        p.fee_split_ppm = ppm(j["fee_split"], w + ".fee_split");
    if (j.contains("coinbase_maturity"))
        p.coinbase_maturity = u64(j["coinbase_maturity"], w + ".coinbase_maturity");
    if (j.contains("seal_bits"))
        p.seal_bits = u32(j["seal_bits"], w + ".seal_bits");
    if (j.contains("whistleblower_share"))
        p.whistleblower_ppm = ppm(j["whistleblower_share"], w + ".whistleblower_share");
}

void parse_nodes(const json &j, ScenarioConfig &s)
{
    for (size_t i = 0; i < array(j, "nodes").size(); ++i) {
        const auto w = fmt::format("nodes[{}]", i);
        const auto &n = j[i];
        check_keys(n, w, {"name", "count", "role", "hash_power", "subscribed", "ballot", "ballot_proposal",
                          "mempool_capacity"});
        NodeSpec spec;
        if (!n.contains("name"))
            bad(w, "missing \"name\"");
        spec.name = str(n["name"], w + ".name");
        if (n.contains("role")) {
            const auto role = str(n["role"], w + ".role");
            if (role == "miner")
                spec.role = NodeRole::kMiner;
            else if (role == "service_user")
                spec.role = NodeRole::kServiceUser;
            else
                bad(w + ".role", "expected \"miner\" or \"service_user\"");
        }
        if (n.contains("hash_power"))
            spec.hash_power = nonneg(n["hash_power"], w + ".hash_power");
        if (spec.role == NodeRole::kServiceUser)
            spec.hash_power = 0;
        if (n.contains("subscribed")) {
            if (spec.role == NodeRole::kMiner)
                bad(w + ".subscribed", "miners track every channel");
            spec.subscribed = channel_set(n["subscribed"], w + ".subscribed");
        }
        if (n.contains("ballot")) {
            const auto b = str(n["ballot"], w + ".ballot");
            if (b == "none")
                spec.ballot = BallotPolicy::kNone;
            else if (b == "first_pending")
                spec.ballot = BallotPolicy::kFirstPending;
            else if (b == "target")
                spec.ballot = BallotPolicy::kTarget;
            else
                bad(w + ".ballot", "expected \"none\", \"first_pending\" or \"target\"");
        }
        if (n.contains("ballot_proposal"))
            spec.ballot_proposal = u64(n["ballot_proposal"], w + ".ballot_proposal");
        if (spec.ballot == BallotPolicy::kTarget && !spec.ballot_proposal)
            bad(w, "ballot \"target\" needs \"ballot_proposal\"");
        if (n.contains("mempool_capacity"))
            spec.mempool_capacity = u64(n["mempool_capacity"], w + ".mempool_capacity");
        const uint64_t count = n.contains("count") ? u64(n["count"], w + ".count") : 0;
        if (n.contains("count") && count == 0)
            bad(w + ".count", "must be positive");
        if (count == 0) {
            s.nodes.push_back(spec);
        } else {
            for (uint64_t k = 0; k < count; ++k) {
                auto copy = spec;
                copy.name = fmt::format("{}{}", spec.name, k);
                s.nodes.push_back(std::move(copy));
            }
        }
    }
}

void parse_topology(const json &j, TopologySpec &t)
{
    check_keys(j, "topology", {"kind", "degree", "links"});
    const auto kind = j.contains("kind") ? str(j["kind"], "topology.kind") : std::string("full");
    if (kind == "full")
        t.kind = TopologySpec::Kind::kFull;
    else if (kind == "ring")
        t.kind = TopologySpec::Kind::kRing;
    else if (kind == "random")
        t.kind = TopologySpec::Kind::kRandom;
    else if (kind == "explicit")
        t.kind = TopologySpec::Kind::kExplicit;
    else
        bad("topology.kind", "expected \"full\", \"ring\", \"random\" or \"explicit\"");
    if (j.contains("degree"))
        t.degree = u32(j["degree"], "topology.degree");
    if (j.contains("links")) {
        for (size_t i = 0; i < array(j["links"], "topology.links").size(); ++i) {
            const auto &l = j["links"][i];
            const auto w = fmt::format("topology.links[{}]", i);
            if (!l.is_array() || l.size() != 2)
                bad(w, "expected [node, node]");
            t.links.emplace_back(str(l[0], w), str(l[1], w));
        }
    }
    if (t.kind == TopologySpec::Kind::kExplicit && t.links.empty())
        bad("topology", "explicit topology needs links");
}

void parse_window(const json &j, const std::string &w, double &start, double &stop)
{
    if (j.contains("start"))
        start = nonneg(j["start"], w + ".start");
    if (j.contains("stop"))
        stop = nonneg(j["stop"], w + ".stop");
}

void parse_workload(const json &j, ScenarioConfig &s)
{
    for (size_t i = 0; i < array(j, "workload").size(); ++i) {
        const auto w = fmt::format("workload[{}]", i);
        const auto &x = j[i];
        check_keys(x, w, {"name", "channel", "rate", "wallets", "funding", "fee", "payload", "start", "stop",
                          "submit_to"});
        WorkloadSpec spec;
        if (!x.contains("name") || !x.contains("channel"))
            bad(w, "needs \"name\" and \"channel\"");
        spec.name = str(x["name"], w + ".name");
        spec.channel = ServiceNumber{u32(x["channel"], w + ".channel")};
        if (x.contains("rate"))
            spec.rate = nonneg(x["rate"], w + ".rate");
        if (x.contains("wallets"))
            spec.wallets = u32(x["wallets"], w + ".wallets");
        if (x.contains("funding"))
            spec.funding = u64(x["funding"], w + ".funding");
        if (x.contains("fee"))
            std::tie(spec.fee_min, spec.fee_max) = range(x["fee"], w + ".fee");
        if (x.contains("payload")) {
            const auto [lo, hi] = range(x["payload"], w + ".payload");
            spec.payload_min = static_cast<uint32_t>(lo);
            spec.payload_max = static_cast<uint32_t>(hi);
        }
        parse_window(x, w, spec.start, spec.stop);
        if (x.contains("submit_to"))
            for (size_t k = 0; k < array(x["submit_to"], w + ".submit_to").size(); ++k)
                spec.submit_to.push_back(str(x["submit_to"][k], w + ".submit_to"));
        s.workload.push_back(std::move(spec));
    }
}

void parse_pores(const json &j, ScenarioConfig &s)
{
    for (size_t i = 0; i < array(j, "pores").size(); ++i) {
        const auto w = fmt::format("pores[{}]", i);
        const auto &x = j[i];
        check_keys(x, w, {"name", "from", "to", "rate", "amount", "fee", "start", "stop"});
        PoreSpec spec;
        if (!x.contains("from") || !x.contains("to"))
            bad(w, "needs \"from\" and \"to\"");
        spec.name = x.contains("name") ? str(x["name"], w + ".name") : fmt::format("pore{}", i);
        spec.from = str(x["from"], w + ".from");
        spec.to = str(x["to"], w + ".to");
        if (x.contains("rate"))
            spec.rate = nonneg(x["rate"], w + ".rate");
        if (x.contains("amount"))
            std::tie(spec.amount_min, spec.amount_max) = range(x["amount"], w + ".amount");
        if (x.contains("fee"))
            spec.fee = u64(x["fee"], w + ".fee");
        parse_window(x, w, spec.start, spec.stop);
        s.pores.push_back(std::move(spec));
    }
}

void parse_proposals(const json &j, ScenarioConfig &s)
{
    for (size_t i = 0; i < array(j, "proposals").size(); ++i) {
        const auto w = fmt::format("proposals[{}]", i);
        const auto &x = j[i];
        check_keys(x, w, {"at", "proposer_seed", "descriptors"});
        ProposalSpec spec;
        if (x.contains("at"))
            spec.at = nonneg(x["at"], w + ".at");
        if (x.contains("proposer_seed"))
            spec.proposer_seed = u64(x["proposer_seed"], w + ".proposer_seed");
        if (!x.contains("descriptors"))
            bad(w, "missing \"descriptors\"");
        for (size_t k = 0; k < array(x["descriptors"], w + ".descriptors").size(); ++k)
            spec.descriptors.push_back(parse_descriptor(x["descriptors"][k], fmt::format("{}.descriptors[{}]", w, k)));
        s.proposals.push_back(std::move(spec));
    }
}

void parse_adversaries(const json &j, ScenarioConfig &s)
{
    for (size_t i = 0; i < array(j, "adversaries").size(); ++i) {
        const auto w = fmt::format("adversaries[{}]", i);
        const auto &x = j[i];
        check_keys(x, w, {"kind", "node", "channels", "workload", "rate", "cross_channel", "pore_channel", "start",
                          "stop"});
        AdversarySpec spec;
        if (!x.contains("kind"))
            bad(w, "missing \"kind\"");
        const auto kind = str(x["kind"], w + ".kind");
        if (kind == "censoring_leader")
            spec.kind = AdversarySpec::Kind::kCensoringLeader;
        else if (kind == "microblock_forker")
            spec.kind = AdversarySpec::Kind::kMicroblockForker;
        else if (kind == "double_spender")
            spec.kind = AdversarySpec::Kind::kDoubleSpender;
        else if (kind == "ballot_suppressor")
            spec.kind = AdversarySpec::Kind::kBallotSuppressor;
        else
            bad(w + ".kind", fmt::format("unknown adversary \"{}\"", kind));
        if (x.contains("node"))
            spec.node = str(x["node"], w + ".node");
        if (x.contains("channels"))
            spec.channels = channel_set(x["channels"], w + ".channels");
        if (x.contains("workload"))
            spec.workload = str(x["workload"], w + ".workload");
        if (x.contains("rate"))
            spec.rate = nonneg(x["rate"], w + ".rate");
        if (x.contains("cross_channel"))
            spec.cross_channel = boolean(x["cross_channel"], w + ".cross_channel");
        if (x.contains("pore_channel"))
            spec.pore_channel = ServiceNumber{u32(x["pore_channel"], w + ".pore_channel")};
        parse_window(x, w, spec.start, spec.stop);
        s.adversaries.push_back(std::move(spec));
    }
}

void parse_churn(const json &j, ScenarioConfig &s)
{
    for (size_t i = 0; i < array(j, "churn").size(); ++i) {
        const auto w = fmt::format("churn[{}]", i);
        const auto &x = j[i];
        check_keys(x, w, {"nodes", "leave_rate", "mean_downtime", "start", "stop"});
        ChurnSpec spec;
        if (!x.contains("nodes"))
            bad(w, "missing \"nodes\"");
        const auto &n = x["nodes"];
        if (n.is_string()) {
            const auto cls = n.get<std::string>();
            for (const auto &node : s.nodes) {
                const bool match = cls == "all" || (cls == "miners" && node.role == NodeRole::kMiner) ||
                                   (cls == "service_users" && node.role == NodeRole::kServiceUser);
                if (cls != "all" && cls != "miners" && cls != "service_users")
                    bad(w + ".nodes", "expected \"all\", \"miners\", \"service_users\" or a list of names");
                if (match)
                    spec.nodes.push_back(node.name);
            }
        } else {
            for (size_t k = 0; k < array(n, w + ".nodes").size(); ++k)
                spec.nodes.push_back(str(n[k], w + ".nodes"));
        }
        if (x.contains("leave_rate"))
            spec.leave_rate = nonneg(x["leave_rate"], w + ".leave_rate");
        if (x.contains("mean_downtime"))
            spec.mean_downtime = nonneg(x["mean_downtime"], w + ".mean_downtime");
        parse_window(x, w, spec.start, spec.stop);
        s.churn.push_back(std::move(spec));
    }
}

void parse_partitions(const json &j, ScenarioConfig &s)
{
    for (size_t i = 0; i < array(j, "partitions").size(); ++i) {
        const auto w = fmt::format("partitions[{}]", i);
        const auto &x = j[i];
        check_keys(x, w, {"start", "heal", "groups"});
        PartitionSpec spec;
        if (x.contains("start"))
            spec.start = nonneg(x["start"], w + ".start");
        if (x.contains("heal"))
            spec.heal = nonneg(x["heal"], w + ".heal");
        if (!x.contains("groups"))
            bad(w, "missing \"groups\"");
        for (size_t g = 0; g < array(x["groups"], w + ".groups").size(); ++g) {
            auto &group = spec.groups.emplace_back();
            const auto &names = x["groups"][g];
            for (size_t k = 0; k < array(names, w + ".groups").size(); ++k)
                group.push_back(str(names[k], w + ".groups"));
        }
        s.partitions.push_back(std::move(spec));
    }
}

void parse_duration(const json &j, DurationSpec &d)
{
    check_keys(j, "duration", {"seconds", "key_blocks", "settle"});
    if (j.contains("seconds"))
        d.seconds = nonneg(j["seconds"], "duration.seconds");
    if (j.contains("key_blocks"))
        d.key_blocks = u64(j["key_blocks"], "duration.key_blocks");
    if (j.contains("settle"))
        d.settle = nonneg(j["settle"], "duration.settle");
}

uint64_t name_seed(std::string_view domain, std::string_view name, uint64_t index)
{
    Encoder e;
    e.bytes(ByteView(reinterpret_cast<const uint8_t *>(domain.data()), domain.size()));
    e.bytes(ByteView(reinterpret_cast<const uint8_t *>(name.data()), name.size()));
    e.u64(index);
    const auto digest = sha256(e.data());
    uint64_t seed = 0;
    for (int i = 0; i < 8; ++i)
        seed |= static_cast<uint64_t>(digest.bytes[i]) << (8 * i);
    return seed;
}

}  // namespace

KeyPair wallet_keys(const std::string &workload, uint32_t index)
{
    return keypair_from_seed(name_seed("wallet", workload, index));
}

uint64_t node_key_seed(const std::string &node) { return name_seed("node", node, 0); }

Transaction proposal_tx(const ProposalSpec &spec, size_t index)
{
    const auto keys = keypair_from_seed(name_seed("proposer", "", spec.proposer_seed));
    Transaction tx{RegistrationTx{keys.pub, spec.descriptors, index, {}}};
    sign_registration(tx, keys.secret);
    return tx;
}

void ScenarioConfig::validate()
{
    std::map<std::string, const NodeSpec *> by_name;
    for (const auto &n : nodes)
        if (!by_name.emplace(n.name, &n).second)
            bad("nodes", fmt::format("duplicate node name \"{}\"", n.name));
    auto node_exists = [&](const std::string &where, const std::string &name) {
        if (!by_name.contains(name))
            bad(where, fmt::format("unknown node \"{}\"", name));
    };
    double power = 0;
    for (const auto &n : nodes)
        if (n.role == NodeRole::kMiner)
            power += n.hash_power;
    if (!(power > 0))
        bad("nodes", "at least one miner with positive hash power is required");
    for (const auto &n : nodes)
        if (n.ballot_proposal && *n.ballot_proposal >= proposals.size())
            bad("nodes", fmt::format("node \"{}\" targets proposal {} which does not exist", n.name,
                                     *n.ballot_proposal));

    if (latency.min < 0 || latency.mean < latency.min)
        bad("latency", "need 0 <= min <= mean");
    for (const auto &[a, b] : topology.links) {
        node_exists("topology.links", a);
        node_exists("topology.links", b);
        if (a == b)
            bad("topology.links", "self link");
    }

    std::set<ServiceNumber> genesis_channels;
    for (const auto &d : params.initial_channels)
        genesis_channels.insert(d.service);
    std::set<ServiceNumber> proposed;
    for (const auto &p : proposals)
        for (const auto &d : p.descriptors)
            proposed.insert(d.service);
    std::map<std::string, const WorkloadSpec *> streams;
    params.genesis_allocation.clear();
    for (const auto &w : workload) {
        if (!streams.emplace(w.name, &w).second)
            bad("workload", fmt::format("duplicate workload name \"{}\"", w.name));
        if (w.wallets == 0)
            bad("workload", fmt::format("workload \"{}\" needs at least one wallet", w.name));
        if (w.channel == kRegistrationChannel)
            bad("workload", "the registration channel carries no value");
        if (!genesis_channels.contains(w.channel) && !proposed.contains(w.channel))
            bad("workload", fmt::format("workload \"{}\" uses channel {} which is neither active nor proposed",
                                        w.name, w.channel.value));
        if (w.payload_max > 1 << 20)
            bad("workload", fmt::format("workload \"{}\" payload too large", w.name));
        if (w.stop < w.start)
            bad("workload", fmt::format("workload \"{}\" stops before it starts", w.name));
        for (const auto &n : w.submit_to)
            node_exists("workload.submit_to", n);
        if (w.funding > 0) {
            if (!genesis_channels.contains(w.channel))
                bad("workload", fmt::format("workload \"{}\" is funded in channel {} which is not active at genesis",
                                            w.name, w.channel.value));
            for (uint32_t i = 0; i < w.wallets; ++i)
                params.genesis_allocation.push_back({w.funding, wallet_keys(w.name, i).pub, w.channel});
        }
    }
    for (const auto &p : pores) {
        auto from = streams.find(p.from);
        auto to = streams.find(p.to);
        if (from == streams.end() || to == streams.end())
            bad("pores", fmt::format("pore \"{}\" names an unknown workload", p.name));
        if (from->second->channel != kPaymentChannel)
            bad("pores", fmt::format("pore \"{}\" must draw from a payment-channel workload", p.name));
        if (to->second->channel == kPaymentChannel)
            bad("pores", fmt::format("pore \"{}\" must lead out of the payment channel", p.name));
        if (p.amount_min == 0)
            bad("pores", fmt::format("pore \"{}\" moves nothing", p.name));
    }
    for (const auto &p : proposals)
        if (p.descriptors.empty())
            bad("proposals", "a proposal needs at least one descriptor");
    for (const auto &a : adversaries) {
        if (a.kind == AdversarySpec::Kind::kDoubleSpender) {
            auto it = streams.find(a.workload);
            if (it == streams.end())
                bad("adversaries", "double spender needs the name of the workload whose wallets it controls");
            if (a.cross_channel && it->second->channel != kPaymentChannel)
                bad("adversaries", "cross-channel double spends start in the payment channel");
        } else {
            node_exists("adversaries.node", a.node);
            if (by_name.at(a.node)->role != NodeRole::kMiner)
                bad("adversaries", fmt::format("adversary \"{}\" must be a miner", a.node));
            if (a.kind == AdversarySpec::Kind::kCensoringLeader && a.channels.empty())
                bad("adversaries", "censoring leader needs channels");
        }
    }
    for (const auto &c : churn)
        for (const auto &n : c.nodes)
            node_exists("churn.nodes", n);
    for (const auto &p : partitions) {
        if (p.heal <= p.start)
            continue;
        std::set<std::string> seen;
        for (const auto &g : p.groups)
            for (const auto &n : g) {
                node_exists("partitions.groups", n);
                if (!seen.insert(n).second)
                    bad("partitions", fmt::format("node \"{}\" appears in two groups", n));
            }
        if (seen.size() != nodes.size())
            bad("partitions", "groups must cover every node");
    }
    if (!duration.seconds && !duration.key_blocks)
        bad("duration", "needs \"seconds\" or \"key_blocks\"");

    try {
        params.validate();
    } catch (const InvalidParams &e) {
        bad("chain_params", e.what());
    }
}

ScenarioConfig parse_scenario(std::string_view text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw InvalidScenario(fmt::format("not valid JSON: {}", e.what()));
    }
    check_keys(j, "scenario",
               {"version", "chain_params", "channels", "nodes", "topology", "latency", "workload", "pores",
                "proposals", "adversaries", "churn", "partitions", "duration"});
    if (!j.contains("version") || !j["version"].is_number_unsigned() || j["version"].get<uint64_t>() != 1)
        bad("scenario", "\"version\" must be 1");

    ScenarioConfig s;
    s.params = ChainParams::defaults();
    if (j.contains("chain_params"))
        parse_chain_params(j["chain_params"], s.params);
    if (j.contains("channels")) {
        for (size_t i = 0; i < array(j["channels"], "channels").size(); ++i) {
            const auto d = parse_descriptor(j["channels"][i], fmt::format("channels[{}]", i));
            auto it = std::find_if(s.params.initial_channels.begin(), s.params.initial_channels.end(),
                                   [&](const auto &x) { return x.service == d.service; });
            if (it != s.params.initial_channels.end())
                *it = d;
            else
                s.params.initial_channels.push_back(d);
        }
    }
    if (!j.contains("nodes"))
        bad("scenario", "missing \"nodes\"");
    parse_nodes(j["nodes"], s);
    if (j.contains("topology"))
        parse_topology(j["topology"], s.topology);
    if (j.contains("latency")) {
        check_keys(j["latency"], "latency", {"min", "mean"});
        if (j["latency"].contains("min"))
            s.latency.min = nonneg(j["latency"]["min"], "latency.min");
        if (j["latency"].contains("mean"))
            s.latency.mean = nonneg(j["latency"]["mean"], "latency.mean");
    }
    if (j.contains("workload"))
        parse_workload(j["workload"], s);
    if (j.contains("pores"))
        parse_pores(j["pores"], s);
    if (j.contains("proposals"))
        parse_proposals(j["proposals"], s);
    if (j.contains("adversaries"))
        parse_adversaries(j["adversaries"], s);
    if (j.contains("churn"))
        parse_churn(j["churn"], s);
    if (j.contains("partitions"))
        parse_partitions(j["partitions"], s);
    if (!j.contains("duration"))
        bad("scenario", "missing \"duration\"");
    parse_duration(j["duration"], s.duration);
    s.validate();
    return s;
}

ScenarioConfig load_scenario(const std::string &path)
{
    std::ifstream f(path);
    if (!f)
        throw InvalidScenario(fmt::format("cannot read scenario file {}", path));
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_scenario(ss.str());
}

}  // namespace aspen
