#pragma once

#include <aspen/codec.hpp>
#include <aspen/types.hpp>

#include <memory>

namespace aspen {

Hash sha256(ByteView data);

// Hash of the canonical encoding.
template <typename T>
Hash hash_of(const T &v)
{
    return sha256(encode_to_bytes(v));
}

// Identity hashes of on-chain objects. A microblock is identified by its
// header, which commits to the transactions through tx_root.
Hash block_hash(const KeyBlock &kb);
Hash block_hash(const MicroBlockHeader &header);
Hash block_hash(const MicroBlock &mb);
Hash tx_hash(const Transaction &tx);
Hash tx_hash(const CoinbaseTx &coinbase);

// Digest that input signatures commit to: the transaction with every
// signature field cleared.
Hash signing_hash(const Transaction &tx);

class SignatureScheme {
public:
    virtual ~SignatureScheme() = default;
    virtual KeyPair keypair_from_seed(ByteView seed32) const = 0;
    virtual Signature sign(ByteView msg, const SecretKey &secret) const = 0;
    virtual bool verify(ByteView msg, const Signature &sig, const PublicKey &pub) const = 0;
    virtual const char *name() const = 0;
};

// Ed25519 through libsodium. Signatures are deterministic.
class Ed25519Scheme final : public SignatureScheme {
public:
    KeyPair keypair_from_seed(ByteView seed32) const override;
    Signature sign(ByteView msg, const SecretKey &secret) const override;
    bool verify(ByteView msg, const Signature &sig, const PublicKey &pub) const override;
    const char *name() const override { return "ed25519"; }
};

// Process-wide scheme used by sign/verify_sig. Defaults to Ed25519.
const SignatureScheme &signature_scheme();

// Installs a scheme for the lifetime of the guard. Not thread safe; meant
// for tests and tooling set-up.
class ScopedSignatureScheme {
public:
    explicit ScopedSignatureScheme(std::shared_ptr<const SignatureScheme> scheme);
    ~ScopedSignatureScheme();
    ScopedSignatureScheme(const ScopedSignatureScheme &) = delete;
    ScopedSignatureScheme &operator=(const ScopedSignatureScheme &) = delete;

private:
    std::shared_ptr<const SignatureScheme> previous_;
};

KeyPair keypair_from_seed(uint64_t seed);
Signature sign(ByteView msg, const SecretKey &secret);
bool verify_sig(ByteView msg, const Signature &sig, const PublicKey &pub);

inline Signature sign(const Hash &digest, const SecretKey &secret) { return sign(ByteView(digest.bytes), secret); }
inline bool verify_sig(const Hash &digest, const Signature &sig, const PublicKey &pub)
{
    return verify_sig(ByteView(digest.bytes), sig, pub);
}

// Signing helpers for the signed object types.
void sign_header(MicroBlock &mb, const SecretKey &secret);
bool verify_header(const SignedMicroHeader &h);
void sign_inputs(Transaction &tx, std::span<const SecretKey> secrets_per_input);
void sign_registration(Transaction &tx, const SecretKey &secret);
void sign_poison(Transaction &tx, const SecretKey &secret);

}  // namespace aspen
