#pragma once

// Binary Merkle tree with domain-separated leaves and interior nodes.
// Leaves are hashed as H(0x00 || data) and interior nodes as
// H(0x01 || left || right). A tree over n > 1 leaves splits at the largest
// power of two strictly below n, so no node is ever duplicated.

#include <aspen/types.hpp>

namespace aspen {

Hash merkle_leaf_hash(ByteView data);
Hash merkle_node_hash(const Hash &left, const Hash &right);

// Root over already-hashed leaves. Zero hash for an empty list.
Hash merkle_root(std::span<const Hash> leaf_hashes);

struct MerkleProof {
    uint32_t index = 0;
    uint32_t tree_size = 0;
    std::vector<Hash> path;  // siblings from leaf to root

    auto operator<=>(const MerkleProof &) const = default;
};

MerkleProof merkle_prove(std::span<const Hash> leaf_hashes, uint32_t index);
bool merkle_verify(const Hash &leaf_hash, const MerkleProof &proof, const Hash &root);

class Encoder;
class Decoder;
void encode(Encoder &, const MerkleProof &);
void decode(Decoder &, MerkleProof &);

}  // namespace aspen
