#pragma once

// On-disk block store of one node. Every log is a sequence of records, each
// a u32 little-endian length followed by the canonical encoding:
//   params.bin        ChainParams
//   keyblocks.log     KeyBlock records in arrival order, genesis first
//   channel-<c>.log   MicroBlock records of channel c
//   inflows-<c>.log   InflowBundle records for channel c
//   tip.bin           hash of the node's tip key block
//   state.bin         tracking policy followed by the tip LedgerState

#include <aspen/node.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

namespace aspen {

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_store(const std::filesystem::path &dir, const Node &node);

struct StoreVerdict {
    bool ok = true;
    Hash block;  // first offending block
    std::string detail;
};

// Replays the stored chain from genesis to the stored tip and compares the
// result with the stored state. With `channels`, only those channels (plus
// the registration channel and all key blocks) are read and compared.
// Throws StoreError when the directory is not a block store at all.
StoreVerdict verify_store(const std::filesystem::path &dir,
                          const std::optional<std::set<ServiceNumber>> &channels = std::nullopt);

// Length-prefixed record framing shared by all logs.
void append_record(Bytes &out, ByteView record);
std::vector<Bytes> split_records(ByteView log);

}  // namespace aspen
