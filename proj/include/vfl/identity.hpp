#pragma once

#include <array>
#include <compare>
#include <cstdint>

#include "vfl/bytes.hpp"

namespace vfl::identity {

inline constexpr std::size_t kPublicKeyBytes = 32;
inline constexpr std::size_t kSecretKeyBytes = 64;
inline constexpr std::size_t kSignatureBytes = 64;
inline constexpr std::size_t kDigestBytes = 32;

// A vehicle's identity is its public key. Lexicographic ordering on the key
// bytes gives the total order used for every deterministic tie-break.
struct VehicleId {
    std::array<std::uint8_t, kPublicKeyBytes> bytes{};

    auto operator<=>(const VehicleId&) const = default;

    ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
    std::string hex() const { return to_hex(view()); }
    std::string short_hex() const { return to_hex(view()).substr(0, 16); }
};

struct Signature {
    std::array<std::uint8_t, kSignatureBytes> bytes{};

    auto operator<=>(const Signature&) const = default;
    ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
};

struct Digest {
    std::array<std::uint8_t, kDigestBytes> bytes{};

    auto operator<=>(const Digest&) const = default;
    ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
    std::string hex() const { return to_hex(view()); }
};

struct KeyPair {
    VehicleId public_key;
    std::array<std::uint8_t, kSecretKeyBytes> secret_key{};

    const VehicleId& id() const { return public_key; }
};

// Deterministic per seed: the same seed always yields the same pair.
KeyPair generate_keypair(std::uint64_t seed);

// Recomputes the public key from the secret key half.
VehicleId derive_public(const KeyPair& key);

// Ed25519 detached signature; deterministic per (key, message) so reruns
// are bit-identical.
Signature sign(const KeyPair& key, ByteView msg);

// True iff sig was produced by the private key matching id over exactly msg.
// Malformed signatures return false, never throw.
bool verify(const VehicleId& id, ByteView msg, const Signature& sig);

// SHA-256.
Digest digest(ByteView msg);

}  // namespace vfl::identity
