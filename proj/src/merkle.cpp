#include <aspen/crypto.hpp>
#include <aspen/merkle.hpp>

#include <stdexcept>

namespace aspen {

Hash merkle_leaf_hash(ByteView data)
{
    Bytes buf;
    buf.reserve(data.size() + 1);
    buf.push_back(0x00);
    buf.insert(buf.end(), data.begin(), data.end());
    return sha256(buf);
}

Hash merkle_node_hash(const Hash &left, const Hash &right)
{
    std::array<uint8_t, 65> buf;
    buf[0] = 0x01;
    std::copy(left.bytes.begin(), left.bytes.end(), buf.begin() + 1);
    std::copy(right.bytes.begin(), right.bytes.end(), buf.begin() + 33);
    return sha256(buf);
}

// Level-by-level reduction; an unpaired last node is carried up unchanged.
Hash merkle_root(std::span<const Hash> leaf_hashes)
{
    if (leaf_hashes.empty())
        return Hash{};
    std::vector<Hash> level(leaf_hashes.begin(), leaf_hashes.end());
    while (level.size() > 1) {
        std::vector<Hash> next;
        next.reserve((level.size() + 1) / 2);
        for (size_t i = 0; i + 1 < level.size(); i += 2)
            next.push_back(merkle_node_hash(level[i], level[i + 1]));
        if (level.size() % 2 == 1)
            next.push_back(level.back());
        level = std::move(next);
    }
    return level.front();
}

MerkleProof merkle_prove(std::span<const Hash> leaf_hashes, uint32_t index)
{
    if (index >= leaf_hashes.size())
        throw std::out_of_range("merkle proof index out of range");
    MerkleProof proof;
    proof.index = index;
    proof.tree_size = static_cast<uint32_t>(leaf_hashes.size());
    std::vector<Hash> level(leaf_hashes.begin(), leaf_hashes.end());
    size_t idx = index;
    while (level.size() > 1) {
        const size_t sibling = idx ^ 1;
        if (sibling < level.size())
            proof.path.push_back(level[sibling]);
        std::vector<Hash> next;
        for (size_t i = 0; i + 1 < level.size(); i += 2)
            next.push_back(merkle_node_hash(level[i], level[i + 1]));
        if (level.size() % 2 == 1)
            next.push_back(level.back());
        level = std::move(next);
        idx /= 2;
    }
    return proof;
}

bool merkle_verify(const Hash &leaf_hash, const MerkleProof &proof, const Hash &root)
{
    if (proof.tree_size == 0 || proof.index >= proof.tree_size)
        return false;
    Hash acc = leaf_hash;
    size_t idx = proof.index;
    size_t width = proof.tree_size;
    size_t used = 0;
    while (width > 1) {
        const size_t sibling = idx ^ 1;
        if (sibling < width) {
            if (used >= proof.path.size())
                return false;
            const auto &s = proof.path[used++];
            acc = (idx % 2 == 0) ? merkle_node_hash(acc, s) : merkle_node_hash(s, acc);
        }
        idx /= 2;
        width = (width + 1) / 2;
    }
    return used == proof.path.size() && acc == root;
}

}  // namespace aspen
