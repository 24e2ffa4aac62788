#include <doctest.h>

#include <algorithm>

#include "vfl/identity.hpp"
#include "vfl/rng.hpp"

using namespace vfl;
using namespace vfl::identity;

TEST_CASE("keypair generation is deterministic per seed") {
    const KeyPair a = generate_keypair(7);
    const KeyPair b = generate_keypair(7);
    CHECK(a.public_key == b.public_key);
    CHECK(a.secret_key == b.secret_key);
}

TEST_CASE("distinct seeds give distinct public keys") {
    const KeyPair a = generate_keypair(1);
    const KeyPair b = generate_keypair(2);
    CHECK(a.public_key != b.public_key);
}

TEST_CASE("public key is derivable from the private key") {
    const KeyPair key = generate_keypair(42);
    CHECK(derive_public(key) == key.public_key);
}

TEST_CASE("sign/verify roundtrip, tamper, and wrong key") {
    const KeyPair key = generate_keypair(3);
    const KeyPair other = generate_keypair(4);
    const Bytes msg = to_bytes("local model update bytes");
    const Signature sig = sign(key, msg);

    CHECK(verify(key.id(), msg, sig));

    Bytes tampered = msg;
    tampered[0] ^= 0x01;
    CHECK_FALSE(verify(key.id(), tampered, sig));

    CHECK_FALSE(verify(other.id(), msg, sig));
}

TEST_CASE("signing is deterministic per (key, message)") {
    const KeyPair key = generate_keypair(9);
    const Bytes msg = to_bytes("replay me");
    CHECK(sign(key, msg) == sign(key, msg));
}

TEST_CASE("malformed signature bytes verify false, not throw") {
    const KeyPair key = generate_keypair(5);
    const Bytes msg = to_bytes("m");
    Signature junk;
    junk.bytes.fill(0xff);
    CHECK_FALSE(verify(key.id(), msg, junk));
}

TEST_CASE("digest is deterministic, 32 bytes, and bit-sensitive") {
    const Bytes x = to_bytes("payload");
    CHECK(digest(x) == digest(x));
    CHECK(digest(x).bytes.size() == 32);

    Bytes y = x;
    y[2] ^= 0x40;
    CHECK(digest(x) != digest(y));
}

TEST_CASE("sha-256 known answer") {
    // SHA-256("abc")
    const Digest d = digest(to_bytes("abc"));
    CHECK(d.hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("property: roundtrip holds and cross-message verification fails") {
    Rng rng(2024);
    for (int trial = 0; trial < 32; ++trial) {
        const KeyPair key = generate_keypair(rng.next_u64());
        Bytes msg(1 + rng.uniform_below(64));
        for (auto& b : msg) b = static_cast<std::uint8_t>(rng.uniform_below(256));
        const Signature sig = sign(key, msg);
        CHECK(verify(key.id(), msg, sig));

        Bytes altered = msg;
        altered[rng.uniform_below(altered.size())] ^= 1 + rng.uniform_below(255);
        CHECK_FALSE(verify(key.id(), altered, sig));
    }
}

TEST_CASE("vehicle id ordering is total and consistent") {
    std::vector<VehicleId> ids;
    for (int i = 0; i < 12; ++i) ids.push_back(generate_keypair(std::uint64_t(i)).id());

    std::vector<VehicleId> sorted_once = ids;
    std::sort(sorted_once.begin(), sorted_once.end());
    std::vector<VehicleId> sorted_twice = ids;
    std::sort(sorted_twice.begin(), sorted_twice.end());
    CHECK(sorted_once == sorted_twice);

    for (std::size_t i = 0; i + 1 < sorted_once.size(); ++i) {
        CHECK(sorted_once[i] < sorted_once[i + 1]);  // strict: ids are distinct
    }
    // trichotomy on a pair
    CHECK((ids[0] < ids[1] || ids[1] < ids[0] || ids[0] == ids[1]));
}
