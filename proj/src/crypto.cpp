#include <aspen/crypto.hpp>

#include <sodium.h>

#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace aspen {

namespace {

void ensure_sodium()
{
    static const bool ready = [] {
        if (sodium_init() < 0)
            throw std::runtime_error("libsodium initialisation failed");
        return true;
    }();
    (void)ready;
}

std::shared_ptr<const SignatureScheme> &installed_scheme()
{
    static std::shared_ptr<const SignatureScheme> scheme = std::make_shared<Ed25519Scheme>();
    return scheme;
}

struct DigestHasher {
    size_t operator()(const Hash &h) const
    {
        size_t v = 0;
        std::memcpy(&v, h.bytes.data(), sizeof(v));
        return v;
    }
};

// Successful verifications, keyed by a digest of (message, signature, key).
// Only positive results are cached, so a cache hit can never turn a bad
// signature into a good one.
std::unordered_set<Hash, DigestHasher> &verified_cache()
{
    thread_local std::unordered_set<Hash, DigestHasher> cache;
    return cache;
}

constexpr size_t kVerifiedCacheLimit = 1 << 20;

}  // namespace

Hash sha256(ByteView data)
{
    ensure_sodium();
    Hash h;
    crypto_hash_sha256(h.bytes.data(), data.data(), data.size());
    return h;
}

Hash block_hash(const KeyBlock &kb) { return hash_of(kb); }
Hash block_hash(const MicroBlockHeader &header) { return hash_of(header); }
Hash block_hash(const MicroBlock &mb) { return hash_of(mb.header); }
Hash tx_hash(const Transaction &tx) { return hash_of(tx); }
Hash tx_hash(const CoinbaseTx &coinbase) { return tx_hash(Transaction{coinbase}); }

Hash signing_hash(const Transaction &tx)
{
    Transaction stripped = tx;
    std::visit(
        [](auto &t) {
            if constexpr (requires { t.inputs; })
                for (auto &in : t.inputs)
                    in.sig = Signature{};
            if constexpr (requires { t.sig; })
                t.sig = Signature{};
        },
        stripped.body);
    return hash_of(stripped);
}

KeyPair Ed25519Scheme::keypair_from_seed(ByteView seed32) const
{
    ensure_sodium();
    if (seed32.size() != crypto_sign_SEEDBYTES)
        throw std::invalid_argument("ed25519 seed must be 32 bytes");
    KeyPair kp;
    crypto_sign_seed_keypair(kp.pub.bytes.data(), kp.secret.bytes.data(), seed32.data());
    return kp;
}

Signature Ed25519Scheme::sign(ByteView msg, const SecretKey &secret) const
{
    ensure_sodium();
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, msg.data(), msg.size(), secret.bytes.data());
    return sig;
}

bool Ed25519Scheme::verify(ByteView msg, const Signature &sig, const PublicKey &pub) const
{
    ensure_sodium();
    return crypto_sign_verify_detached(sig.bytes.data(), msg.data(), msg.size(), pub.bytes.data()) == 0;
}

const SignatureScheme &signature_scheme() { return *installed_scheme(); }

ScopedSignatureScheme::ScopedSignatureScheme(std::shared_ptr<const SignatureScheme> scheme)
    : previous_(installed_scheme())
{
    installed_scheme() = std::move(scheme);
    verified_cache().clear();
}

ScopedSignatureScheme::~ScopedSignatureScheme()
{
    installed_scheme() = std::move(previous_);
    verified_cache().clear();
}

KeyPair keypair_from_seed(uint64_t seed)
{
    Encoder e;
    e.raw(ByteView(reinterpret_cast<const uint8_t *>("aspen-key"), 9));
    e.u64(seed);
    const auto digest = sha256(e.data());
    return signature_scheme().keypair_from_seed(digest.bytes);
}

Signature sign(ByteView msg, const SecretKey &secret) { return signature_scheme().sign(msg, secret); }

bool verify_sig(ByteView msg, const Signature &sig, const PublicKey &pub)
{
    Encoder e;
    e.bytes(msg);
    encode(e, sig);
    encode(e, pub);
    const Hash key = sha256(e.data());
    auto &cache = verified_cache();
    if (cache.contains(key))
        return true;
    if (!signature_scheme().verify(msg, sig, pub))
        return false;
    if (cache.size() >= kVerifiedCacheLimit)
        cache.clear();
    cache.insert(key);
    return true;
}

void sign_header(MicroBlock &mb, const SecretKey &secret) { mb.sig = sign(block_hash(mb.header), secret); }

bool verify_header(const SignedMicroHeader &h) { return verify_sig(block_hash(h.header), h.sig, h.header.leader); }

void sign_inputs(Transaction &tx, std::span<const SecretKey> secrets_per_input)
{
    const auto digest = signing_hash(tx);
    std::visit(
        [&](auto &t) {
            if constexpr (requires { t.inputs; }) {
                if (secrets_per_input.size() != t.inputs.size())
                    throw std::invalid_argument("one secret per input required");
                for (size_t i = 0; i < t.inputs.size(); ++i)
                    t.inputs[i].sig = sign(digest, secrets_per_input[i]);
            } else {
                throw std::invalid_argument("transaction variant has no inputs");
            }
        },
        tx.body);
}

void sign_registration(Transaction &tx, const SecretKey &secret)
{
    auto &reg = std::get<RegistrationTx>(tx.body);
    reg.sig = sign(signing_hash(tx), secret);
}

void sign_poison(Transaction &tx, const SecretKey &secret)
{
    auto &p = std::get<PoisonTx>(tx.body);
    p.sig = sign(signing_hash(tx), secret);
}

}  // namespace aspen
