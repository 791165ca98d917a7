#include <aspen/crypto.hpp>
#include <aspen/scenario.hpp>

#include <doctest.h>
#include <json.hpp>

#include <string>

using namespace aspen;
using json = nlohmann::json;

namespace {

json minimal()
{
    return json::parse(R"({
      "version": 1,
      "nodes": [{"name": "m", "role": "miner"}],
      "duration": {"key_blocks": 3}
    })");
}

std::string rejection(const json &doc)
{
    try {
        parse_scenario(doc.dump());
    } catch (const InvalidScenario &e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("minimal scenario takes defaults")
{
    const auto s = parse_scenario(minimal().dump());
    REQUIRE(s.nodes.size() == 1);
    CHECK(s.nodes[0].name == "m");
    CHECK(s.nodes[0].role == NodeRole::kMiner);
    CHECK(s.nodes[0].hash_power == 1.0);
    CHECK(encode_to_bytes(s.params) == encode_to_bytes(ChainParams::defaults()));
    CHECK(s.duration.key_blocks == 3u);
    CHECK_FALSE(s.duration.seconds);
    CHECK(s.topology.kind == TopologySpec::Kind::kFull);
}

TEST_CASE("the bundled smoke scenario loads")
{
    const auto s = load_scenario(std::string(ASPEN_SOURCE_DIR) + "/scenarios/smoke.json");
    CHECK(s.nodes.size() == 4);
    CHECK(s.nodes[0].name == "miner0");
    CHECK(s.nodes[2].name == "miner2");
    CHECK(s.nodes[3].subscribed == std::set<ServiceNumber>{ServiceNumber{3}});
    CHECK(s.params.tau_ppm == 500'000);
    CHECK(s.params.bud_interval == 10);
    // Funded workloads become genesis allocations.
    Amount ch3 = 0;
    for (const auto &o : s.params.genesis_allocation)
        if (o.spend_channel == ServiceNumber{3})
            ch3 += o.value;
    CHECK(ch3 == 4 * 50'000);
    CHECK(s.params.initial_channels.size() == 3);  // payment, registration, service 3
}

TEST_CASE("parse errors name the offending location")
{
    CHECK(rejection(minimal()).empty());

    auto doc = minimal();
    doc["bogus"] = 1;
    CHECK(rejection(doc).find("unknown key \"bogus\"") != std::string::npos);

    doc = minimal();
    doc["nodes"][0]["hashpower"] = 2;
    CHECK(rejection(doc).find("nodes[0]") != std::string::npos);

    doc = minimal();
    doc["version"] = 2;
    CHECK(rejection(doc).find("version") != std::string::npos);

    doc = minimal();
    doc.erase("duration");
    CHECK(rejection(doc).find("duration") != std::string::npos);

    doc = minimal();
    doc["chain_params"] = {{"tau", 1.5}};
    CHECK(rejection(doc).find("chain_params.tau") != std::string::npos);

    doc = minimal();
    doc["nodes"][0]["subscribed"] = {3};
    CHECK(rejection(doc).find("miners track every channel") != std::string::npos);

    doc = minimal();
    doc["nodes"][0]["count"] = 0;
    CHECK(rejection(doc).find("count") != std::string::npos);

    doc = minimal();
    doc["nodes"].push_back({{"name", "m"}, {"role", "miner"}});
    CHECK_FALSE(rejection(doc).empty());

    doc = minimal();
    doc["workload"] = json::array({{{"name", "w"}, {"channel", 7}, {"rate", 0.1}}});
    CHECK_FALSE(rejection(doc).empty());  // channel 7 is not active

    doc = minimal();
    doc["partitions"] = json::array({{{"start", 10}, {"heal", 20}, {"groups", json::array({json::array({"m"}), json::array({"ghost"})})}}});
    CHECK_FALSE(rejection(doc).empty());

    CHECK_THROWS_AS(parse_scenario("{not json"), InvalidScenario);
    CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), InvalidScenario);
}

TEST_CASE("node counts expand to numbered names")
{
    auto doc = minimal();
    doc["nodes"] = json::array({{{"name", "miner"}, {"count", 3}, {"role", "miner"}},
                                {{"name", "u"}, {"role", "service_user"}, {"subscribed", {3}}, {"hash_power", 5}}});
    doc["channels"] = json::array({{{"service", 3}}});
    const auto s = parse_scenario(doc.dump());
    REQUIRE(s.nodes.size() == 4);
    CHECK(s.nodes[1].name == "miner1");
    CHECK(s.nodes[3].hash_power == 0);  // users do not mine
}

TEST_CASE("key material is a pure function of names")
{
    CHECK(wallet_keys("payments", 0).pub == wallet_keys("payments", 0).pub);
    CHECK(wallet_keys("payments", 0).pub != wallet_keys("payments", 1).pub);
    CHECK(wallet_keys("payments", 0).pub != wallet_keys("service3", 0).pub);
    CHECK(node_key_seed("miner0") == node_key_seed("miner0"));
    CHECK(node_key_seed("miner0") != node_key_seed("miner1"));

    ProposalSpec p;
    p.descriptors.push_back(ChainParams::default_descriptor(ServiceNumber{4}));
    CHECK(tx_hash(proposal_tx(p, 0)) == tx_hash(proposal_tx(p, 0)));
    CHECK(proposal_tx(p, 0).kind() == TxKind::kRegistration);
}
