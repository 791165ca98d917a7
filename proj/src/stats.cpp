#include <aspen/stats.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace aspen {

using json = nlohmann::json;

double percentile(const std::vector<double> &sorted, double p)
{
    if (sorted.empty())
        return 0;
    const auto rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
    return sorted[std::clamp<size_t>(rank, 1, sorted.size()) - 1];
}

namespace {

uint64_t u64_or(const json &j, const char *key, uint64_t fallback = 0)
{
    auto it = j.find(key);
    return it != j.end() && it->is_number_unsigned() ? it->get<uint64_t>() : fallback;
}

std::string str_or(const json &j, const char *key)
{
    auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string();
}

}  // namespace

StatsReport summarize_metrics(std::istream &in)
{
    StatsReport r;
    std::map<std::string, uint64_t> mined_by;
    std::map<uint32_t, std::vector<double>> latencies;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error &e) {
            throw StatsError(fmt::format("line {}: not JSON: {}", lineno, e.what()));
        }
        if (!j.is_object() || !j.contains("type"))
            throw StatsError(fmt::format("line {}: record without a type", lineno));
        const auto type = str_or(j, "type");
        if (type == "mined") {
            ++r.key_blocks;
            ++mined_by[str_or(j, "node")];
        } else if (type == "fork") {
            ++r.reorgs;
        } else if (type == "revocation") {
            ++r.revocations;
        } else if (type == "storage") {
            r.storage.push_back({static_cast<double>(u64_or(j, "t")) / 1e6, str_or(j, "node"), u64_or(j, "bytes")});
        } else if (type == "confirm") {
            const auto c = static_cast<uint32_t>(u64_or(j, "channel"));
            const double s = static_cast<double>(u64_or(j, "latency_us")) / 1e6;
            latencies[c].push_back(s);
            r.confirmations.emplace_back(c, s);
        } else if (type == "partition" && j.contains("converged")) {
            StatsReport::Partition p;
            p.index = u64_or(j, "index");
            p.converged = j["converged"].is_boolean() && j["converged"].get<bool>();
            p.convergence_s = static_cast<double>(u64_or(j, "convergence_us")) / 1e6;
            p.key_blocks_after_heal = u64_or(j, "key_blocks_after_heal");
            r.partitions.push_back(p);
        } else if (type == "final") {
            StatsReport::NodeRow row;
            row.name = str_or(j, "node");
            row.role = str_or(j, "role");
            row.live = !j.contains("live") || (j["live"].is_boolean() && j["live"].get<bool>());
            row.height = u64_or(j, "height");
            row.storage_bytes = u64_or(j, "storage_bytes");
            row.key_blocks = u64_or(j, "key_blocks_stored");
            row.messages_sent = u64_or(j, "messages_sent");
            row.bytes_sent = u64_or(j, "bytes_sent");
            r.nodes.push_back(std::move(row));
        }
    }
    for (auto &row : r.nodes)
        row.blocks_mined = mined_by[row.name];
    for (auto &[c, v] : latencies) {
        std::sort(v.begin(), v.end());
        StatsReport::ChannelLatency l;
        l.channel = c;
        l.count = v.size();
        double sum = 0;
        for (double x : v)
            sum += x;
        l.mean_s = sum / static_cast<double>(v.size());
        l.p50_s = percentile(v, 50);
        l.p90_s = percentile(v, 90);
        l.p99_s = percentile(v, 99);
        r.latency.push_back(l);
    }
    return r;
}

std::string format_table(const StatsReport &r)
{
    std::string out;
    out += fmt::format("{:<16} {:<13} {:>5} {:>7} {:>14} {:>10} {:>10} {:>14} {:>6}\n", "node", "role", "live",
                       "height", "storage_bytes", "key_blocks", "messages", "bytes_sent", "mined");
    for (const auto &n : r.nodes)
        out += fmt::format("{:<16} {:<13} {:>5} {:>7} {:>14} {:>10} {:>10} {:>14} {:>6}\n", n.name, n.role,
                           n.live ? "yes" : "no", n.height, n.storage_bytes, n.key_blocks, n.messages_sent,
                           n.bytes_sent, n.blocks_mined);
    if (!r.latency.empty()) {
        out += fmt::format("\n{:<8} {:>8} {:>10} {:>10} {:>10} {:>10}\n", "channel", "count", "mean_s", "p50_s",
                           "p90_s", "p99_s");
        for (const auto &l : r.latency)
            out += fmt::format("{:<8} {:>8} {:>10.3f} {:>10.3f} {:>10.3f} {:>10.3f}\n", l.channel, l.count, l.mean_s,
                               l.p50_s, l.p90_s, l.p99_s);
    }
    if (!r.partitions.empty()) {
        out += fmt::format("\n{:<10} {:>10} {:>15} {:>12}\n", "partition", "converged", "convergence_s",
                           "key_blocks");
        for (const auto &p : r.partitions)
            out += fmt::format("{:<10} {:>10} {:>15.3f} {:>12}\n", p.index, p.converged ? "yes" : "no",
                               p.convergence_s, p.key_blocks_after_heal);
    }
    if (r.key_blocks > 0 || r.reorgs > 0 || r.revocations > 0)
        out += fmt::format("\nkey_blocks {}  reorgs {}  revocations {}\n", r.key_blocks, r.reorgs, r.revocations);
    return out;
}

std::string format_columns(const StatsReport &r)
{
    std::string out = "# storage\nt_s\tnode\tbytes\n";
    for (const auto &s : r.storage)
        out += fmt::format("{:.6f}\t{}\t{}\n", s.t_s, s.node, s.bytes);
    out += "# confirmation\nchannel\tlatency_s\n";
    for (const auto &[c, s] : r.confirmations)
        out += fmt::format("{}\t{:.6f}\n", c, s);
    out += "# latency\nchannel\tcount\tmean_s\tp50_s\tp90_s\tp99_s\n";
    for (const auto &l : r.latency)
        out += fmt::format("{}\t{}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\n", l.channel, l.count, l.mean_s, l.p50_s, l.p90_s,
                           l.p99_s);
    out += "# convergence\npartition\tconverged\tconvergence_s\tkey_blocks\n";
    for (const auto &p : r.partitions)
        out += fmt::format("{}\t{}\t{:.6f}\t{}\n", p.index, p.converged ? 1 : 0, p.convergence_s,
                           p.key_blocks_after_heal);
    return out;
}

}  // namespace aspen
