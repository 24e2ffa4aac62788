#include "vfl/identity.hpp"

#include <sodium.h>

#include <stdexcept>

#include "vfl/encode.hpp"

namespace vfl::identity {

namespace {

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw std::runtime_error("libsodium initialization failed");
}

}  // namespace

KeyPair generate_keypair(std::uint64_t seed) {
    ensure_sodium();
    Encoder enc;
    enc.put_string("vfl.keypair.v1");
    enc.put_u64(seed);
    const Digest seed32 = digest(enc.bytes());

    KeyPair key;
    if (crypto_sign_seed_keypair(key.public_key.bytes.data(), key.secret_key.data(),
                                 seed32.bytes.data()) != 0)
        throw std::runtime_error("keypair generation failed");
    return key;
}

VehicleId derive_public(const KeyPair& key) {
    ensure_sodium();
    VehicleId id;
    if (crypto_sign_ed25519_sk_to_pk(id.bytes.data(), key.secret_key.data()) != 0)
        throw std::runtime_error("public key derivation failed");
    return id;
}

Signature sign(const KeyPair& key, ByteView msg) {
    ensure_sodium();
    Signature sig;
    if (crypto_sign_detached(sig.bytes.data(), nullptr, msg.data(), msg.size(),
                             key.secret_key.data()) != 0)
        throw std::runtime_error("signing failed");
    return sig;
}

bool verify(const VehicleId& id, ByteView msg, const Signature& sig) {
    ensure_sodium();
    return crypto_sign_verify_detached(sig.bytes.data(), msg.data(), msg.size(),
                                       id.bytes.data()) == 0;
}

Digest digest(ByteView msg) {
    ensure_sodium();
    Digest out;
    crypto_hash_sha256(out.bytes.data(), msg.data(), msg.size());
    return out;
}

}  // namespace vfl::identity
