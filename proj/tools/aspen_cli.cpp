// aspen: run simulations, verify block stores and summarize metrics.
//
//   aspen run --scenario <path> --seed <u64> --out <dir>
//   aspen verify --store <dir> [--channels a,b]
//   aspen stats --metrics <path> [--format table|columns]
//
// ASPEN_LOG=quiet|info|debug controls diagnostics on stderr.

#include <aspen/block_store.hpp>
#include <aspen/netsim.hpp>
#include <aspen/scenario.hpp>
#include <aspen/stats.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

enum class Verbosity { kQuiet, kInfo, kDebug };

Verbosity verbosity()
{
    const char *v = std::getenv("ASPEN_LOG");
    if (v == nullptr)
        return Verbosity::kInfo;
    const std::string s(v);
    if (s == "quiet")
        return Verbosity::kQuiet;
    if (s == "debug")
        return Verbosity::kDebug;
    return Verbosity::kInfo;
}

void info(const std::string &msg)
{
    if (verbosity() != Verbosity::kQuiet)
        std::cerr << msg << '\n';
}

constexpr int kExitInvalidScenario = 1;
constexpr int kExitInvariant = 2;
constexpr int kExitAuditMismatch = 3;

int cmd_run(const std::string &scenario_path, uint64_t seed, const std::string &out_dir)
{
    std::string text;
    aspen::ScenarioConfig scenario;
    try {
        std::ifstream f(scenario_path, std::ios::binary);
        if (!f)
            throw aspen::InvalidScenario(fmt::format("cannot read scenario file {}", scenario_path));
        std::ostringstream ss;
        ss << f.rdbuf();
        text = ss.str();
        scenario = aspen::parse_scenario(text);
    } catch (const aspen::InvalidScenario &e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return kExitInvalidScenario;
    }
    scenario.seed = seed;
    try {
        aspen::Simulator sim(std::move(scenario));
        sim.run();
        sim.write_outputs(out_dir, text);
        info(fmt::format("{} key blocks, {} metrics records, outputs in {}", sim.key_blocks_mined(),
                         sim.metrics().size(), out_dir));
    } catch (const aspen::InvalidScenario &e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return kExitInvalidScenario;
    } catch (const aspen::InvariantViolation &e) {
        std::cerr << "invariant violated: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const std::exception &e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInvariant;
    }
    return 0;
}

int cmd_verify(const std::string &store, const std::vector<uint32_t> &channels)
{
    std::optional<std::set<aspen::ServiceNumber>> restrict;
    if (!channels.empty()) {
        restrict.emplace();
        for (auto c : channels)
            restrict->insert(aspen::ServiceNumber{c});
    }
    try {
        const auto verdict = aspen::verify_store(store, restrict);
        if (!verdict.ok) {
            std::cout << "MISMATCH " << verdict.block.hex() << '\n';
            std::cerr << verdict.detail << '\n';
            return kExitAuditMismatch;
        }
        std::cout << "OK\n";
        return 0;
    } catch (const aspen::StoreError &e) {
        std::cerr << "unreadable store: " << e.what() << '\n';
        return 1;
    }
}

int cmd_stats(const std::string &metrics, const std::string &format)
{
    std::ifstream f(metrics);
    if (!f) {
        std::cerr << "cannot read " << metrics << '\n';
        return 1;
    }
    try {
        const auto report = aspen::summarize_metrics(f);
        std::cout << (format == "columns" ? aspen::format_columns(report) : aspen::format_table(report));
    } catch (const aspen::StatsError &e) {
        std::cerr << "unreadable metrics: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Multi-channel sharded ledger simulator"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir, store, metrics, format = "table";
    uint64_t seed = 0;
    std::vector<uint32_t> channels;

    auto *run = app.add_subcommand("run", "Run a scenario and write metrics and block stores");
    run->add_option("--scenario", scenario_path, "Scenario file")->required();
    run->add_option("--seed", seed, "Seed for every random draw")->required();
    run->add_option("--out", out_dir, "Output directory")->required();

    auto *verify = app.add_subcommand("verify", "Replay a block store from genesis");
    verify->add_option("--store", store, "Block store directory")->required();
    verify->add_option("--channels", channels, "Restrict to these channels")->delimiter(',');

    auto *stats = app.add_subcommand("stats", "Summarize a metrics file");
    stats->add_option("--metrics", metrics, "metrics.jsonl")->required();
    stats->add_option("--format", format, "table or columns")->check(CLI::IsMember({"table", "columns"}));

    CLI11_PARSE(app, argc, argv);

    if (run->parsed())
        return cmd_run(scenario_path, seed, out_dir);
    if (verify->parsed())
        return cmd_verify(store, channels);
    return cmd_stats(metrics, format);
}
