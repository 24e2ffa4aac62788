#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vfl/encode.hpp"
#include "vfl/identity.hpp"

namespace vfl::chain {

// Hash-linked, miner-signed record of one round's vote tallies, included
// updates, and rewards. The digest covers every field except itself and the
// signature; the signature covers the digest.
struct Block {
    std::uint64_t index = 0;
    identity::Digest prev_digest;
    identity::VehicleId miner;
    Bytes payload;
    std::uint64_t total_positive_votes = 0;
    double total_rewards = 0.0;
    identity::Digest digest;
    identity::Signature miner_signature;

    bool operator==(const Block&) const = default;
};

using BlockPtr = std::shared_ptr<const Block>;

identity::Digest compute_block_digest(const Block& block);

// Full wire encoding, digest and signature included.
Bytes encode_block(const Block& block);
Block decode_block(Decoder& dec);

// Fills digest and miner_signature from the other fields.
Block seal_block(Block block, const identity::KeyPair& miner_key);

enum class AppendError {
    BannedMiner,
    BadSignature,
    DigestMismatch,
    WrongPrevDigest,
    WrongIndex,
};

std::string to_string(AppendError err);

struct Ledger {
    std::vector<BlockPtr> blocks;

    const Block& tip() const { return *blocks.back(); }
    std::size_t height() const { return blocks.size(); }
};

// Index 0, all-zero prev digest, sentinel signature; the payload records the
// digest of the initial global model.
Block genesis(const identity::Digest& initial_model_digest);

// Verifies the block (banned miner, signature, digest recomputation, link,
// index) and appends on success; on error the ledger is unchanged.
std::optional<AppendError> append(Ledger& ledger, BlockPtr block,
                                  const std::set<identity::VehicleId>& banned_miners = {});

// True iff every link, digest, and signature holds from genesis to tip.
bool verify_chain(const Ledger& ledger);

// Whole-ledger persistence.
Bytes encode_ledger(const Ledger& ledger);
Ledger decode_ledger(ByteView bytes);
void save_ledger(const Ledger& ledger, const std::string& path);
Ledger load_ledger(const std::string& path);

}  // namespace vfl::chain
