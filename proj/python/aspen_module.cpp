// Python bindings: scenarios, simulation runs, store verification and
// metrics summaries. Heavy calls release the GIL.
#include <aspen/block_store.hpp>
#include <aspen/netsim.hpp>
#include <aspen/scenario.hpp>
#include <aspen/stats.hpp>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace aspen;

namespace {

const char *role_name(NodeRole r) { return r == NodeRole::kMiner ? "miner" : "service_user"; }

py::dict node_summary(const Simulator &sim, size_t i)
{
    const auto &n = sim.node(i);
    py::dict d;
    d["name"] = n.config().name;
    d["role"] = role_name(n.config().role);
    d["honest"] = sim.honest(i);
    d["live"] = sim.live(i);
    d["height"] = n.tip_state().height;
    d["tip"] = n.tip().hex();
    d["storage_bytes"] = n.storage_bytes();
    std::vector<uint32_t> channels;
    for (const auto &[c, _] : n.tip_state().channels)
        channels.push_back(c.value);
    d["channels"] = channels;
    return d;
}

py::dict audit_dict(const SpendAudit &a)
{
    py::dict d;
    d["transactions"] = a.transactions;
    d["inputs"] = a.inputs;
    d["double_spends"] = a.double_spends;
    d["unknown_inputs"] = a.unknown_inputs;
    d["wrong_channel"] = a.wrong_channel;
    d["revoked_spends"] = a.revoked_spends;
    d["coinbase_lock_mismatches"] = a.coinbase_lock_mismatches;
    d["clean"] = a.clean();
    return d;
}

py::dict report_dict(const StatsReport &r)
{
    py::dict d;
    py::list nodes;
    for (const auto &n : r.nodes) {
        py::dict row;
        row["name"] = n.name;
        row["role"] = n.role;
        row["live"] = n.live;
        row["height"] = n.height;
        row["storage_bytes"] = n.storage_bytes;
        row["key_blocks"] = n.key_blocks;
        row["messages_sent"] = n.messages_sent;
        row["bytes_sent"] = n.bytes_sent;
        row["blocks_mined"] = n.blocks_mined;
        nodes.append(row);
    }
    py::list latency;
    for (const auto &l : r.latency) {
        py::dict row;
        row["channel"] = l.channel;
        row["count"] = l.count;
        row["mean_s"] = l.mean_s;
        row["p50_s"] = l.p50_s;
        row["p90_s"] = l.p90_s;
        row["p99_s"] = l.p99_s;
        latency.append(row);
    }
    py::list partitions;
    for (const auto &p : r.partitions) {
        py::dict row;
        row["index"] = p.index;
        row["converged"] = p.converged;
        row["convergence_s"] = p.convergence_s;
        row["key_blocks_after_heal"] = p.key_blocks_after_heal;
        partitions.append(row);
    }
    d["nodes"] = nodes;
    d["latency"] = latency;
    d["partitions"] = partitions;
    d["key_blocks"] = r.key_blocks;
    d["reorgs"] = r.reorgs;
    d["revocations"] = r.revocations;
    return d;
}

}  // namespace

PYBIND11_MODULE(_aspen, m)
{
    m.doc() = "Multi-channel sharded ledger simulator";

    py::register_exception<InvalidScenario>(m, "InvalidScenario", PyExc_ValueError);
    py::register_exception<InvariantViolation>(m, "InvariantViolation", PyExc_RuntimeError);
    py::register_exception<StoreError>(m, "StoreError", PyExc_OSError);
    py::register_exception<StatsError>(m, "StatsError", PyExc_ValueError);

    py::class_<ScenarioConfig>(m, "Scenario")
        .def_static(
            "parse", [](const std::string &text, uint64_t seed) {
                auto s = parse_scenario(text);
                s.seed = seed;
                return s;
            },
            py::arg("text"), py::arg("seed") = 0)
        .def_static(
            "load", [](const std::string &path, uint64_t seed) {
                auto s = load_scenario(path);
                s.seed = seed;
                return s;
            },
            py::arg("path"), py::arg("seed") = 0)
        .def_readwrite("seed", &ScenarioConfig::seed)
        .def_property_readonly("node_names",
                               [](const ScenarioConfig &s) {
                                   std::vector<std::string> out;
                                   for (const auto &n : s.nodes)
                                       out.push_back(n.name);
                                   return out;
                               })
        .def_property_readonly("key_blocks", [](const ScenarioConfig &s) { return s.duration.key_blocks; })
        .def_property_readonly("channels", [](const ScenarioConfig &s) {
            std::vector<uint32_t> out;
            for (const auto &d : s.params.initial_channels)
                out.push_back(d.service.value);
            return out;
        });

    py::class_<Simulator>(m, "Simulator")
        .def(py::init<ScenarioConfig>(), py::arg("scenario"))
        .def("run", &Simulator::run, py::call_guard<py::gil_scoped_release>())
        .def_property_readonly("metrics", &Simulator::metrics)
        .def("metrics_jsonl", &Simulator::metrics_jsonl)
        .def_property_readonly("node_count", &Simulator::node_count)
        .def_property_readonly("key_blocks_mined", &Simulator::key_blocks_mined)
        .def_property_readonly("reference_node", &Simulator::reference_node)
        .def_property_readonly("double_spend_attempts",
                               [](const Simulator &s) { return s.double_spend_attempts().size(); })
        .def("find_node", &Simulator::find_node, py::arg("name"))
        .def("node", &node_summary, py::arg("index"))
        .def("audit", [](const Simulator &s, size_t i) { return audit_dict(audit_spends(s.node(i))); },
             py::arg("index"))
        .def("write_outputs", &Simulator::write_outputs, py::arg("dir"), py::arg("scenario_text"),
             py::call_guard<py::gil_scoped_release>());

    m.def(
        "run_scenario", [](const ScenarioConfig &s) { return run_scenario(s); }, py::arg("scenario"),
        py::call_guard<py::gil_scoped_release>(), "Runs a scenario and returns its metrics records.");

    m.def(
        "verify_store",
        [](const std::filesystem::path &dir, std::optional<std::vector<uint32_t>> channels) {
            std::optional<std::set<ServiceNumber>> restrict;
            if (channels) {
                restrict.emplace();
                for (auto c : *channels)
                    restrict->insert(ServiceNumber{c});
            }
            StoreVerdict v;
            {
                py::gil_scoped_release release;
                v = verify_store(dir, restrict);
            }
            py::dict d;
            d["ok"] = v.ok;
            d["block"] = v.ok ? std::string() : v.block.hex();
            d["detail"] = v.detail;
            return d;
        },
        py::arg("dir"), py::arg("channels") = py::none());

    m.def(
        "summarize_metrics",
        [](const std::string &jsonl) {
            std::istringstream in(jsonl);
            return report_dict(summarize_metrics(in));
        },
        py::arg("jsonl"));
    m.def(
        "format_table",
        [](const std::string &jsonl) {
            std::istringstream in(jsonl);
            return format_table(summarize_metrics(in));
        },
        py::arg("jsonl"));
    m.def("percentile", &percentile, py::arg("sorted"), py::arg("p"));
}
