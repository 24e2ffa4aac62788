#include "vfl/chain.hpp"

#include <fstream>

namespace vfl::chain {

namespace {

constexpr std::string_view kLedgerMagic = "VFLCHN01";

void encode_digest_fields(Encoder& enc, const Block& b) {
    enc.put_u64(b.index);
    enc.put_raw(b.prev_digest.view());
    enc.put_raw(b.miner.view());
    enc.put_bytes(b.payload);
    enc.put_u64(b.total_positive_votes);
    enc.put_f64(b.total_rewards);
}

}  // namespace

identity::Digest compute_block_digest(const Block& block) {
    Encoder enc;
    encode_digest_fields(enc, block);
    return identity::digest(enc.bytes());
}

Bytes encode_block(const Block& block) {
    Encoder enc;
    encode_digest_fields(enc, block);
    enc.put_raw(block.digest.view());
    enc.put_raw(block.miner_signature.view());
    return enc.take();
}

Block decode_block(Decoder& dec) {
    Block b;
    b.index = dec.get_u64();
    dec.get_raw(b.prev_digest.bytes);
    dec.get_raw(b.miner.bytes);
    b.payload = dec.get_bytes();
    b.total_positive_votes = dec.get_u64();
    b.total_rewards = dec.get_f64();
    dec.get_raw(b.digest.bytes);
    dec.get_raw(b.miner_signature.bytes);
    return b;
}

Block seal_block(Block block, const identity::KeyPair& miner_key) {
    block.miner = miner_key.id();
    block.digest = compute_block_digest(block);
    block.miner_signature = identity::sign(miner_key, block.digest.view());
    return block;
}

std::string to_string(AppendError err) {
    switch (err) {
        case AppendError::BannedMiner: return "banned miner";
        case AppendError::BadSignature: return "bad miner signature";
        case AppendError::DigestMismatch: return "digest mismatch";
        case AppendError::WrongPrevDigest: return "previous-digest link broken";
        case AppendError::WrongIndex: return "wrong block index";
    }
    return "unknown";
}

Block genesis(const identity::Digest& initial_model_digest) {
    Block b;
    b.index = 0;
    b.prev_digest = identity::Digest{};  // all zeros
    b.miner = identity::VehicleId{};
    b.payload = Bytes(initial_model_digest.view().begin(), initial_model_digest.view().end());
    b.total_positive_votes = 0;
    b.total_rewards = 0.0;
    b.digest = compute_block_digest(b);
    b.miner_signature = identity::Signature{};  // unsigned-by-convention sentinel
    return b;
}

std::optional<AppendError> append(Ledger& ledger, BlockPtr block,
                                  const std::set<identity::VehicleId>& banned_miners) {
    if (banned_miners.contains(block->miner)) return AppendError::BannedMiner;
    if (compute_block_digest(*block) != block->digest) return AppendError::DigestMismatch;
    if (!identity::verify(block->miner, block->digest.view(), block->miner_signature))
        return AppendError::BadSignature;
    const Block& tip = ledger.tip();
    if (block->prev_digest != tip.digest) return AppendError::WrongPrevDigest;
    if (block->index != tip.index + 1) return AppendError::WrongIndex;
    ledger.blocks.push_back(std::move(block));
    return std::nullopt;
}

bool verify_chain(const Ledger& ledger) {
    if (ledger.blocks.empty()) return false;
    const Block& g = *ledger.blocks.front();
    if (g.index != 0 || g.prev_digest != identity::Digest{}) return false;
    if (compute_block_digest(g) != g.digest) return false;
    for (std::size_t i = 1; i < ledger.blocks.size(); ++i) {
        const Block& b = *ledger.blocks[i];
        if (b.index != i) return false;
        if (b.prev_digest != ledger.blocks[i - 1]->digest) return false;
        if (compute_block_digest(b) != b.digest) return false;
        if (!identity::verify(b.miner, b.digest.view(), b.miner_signature)) return false;
    }
    return true;
}

Bytes encode_ledger(const Ledger& ledger) {
    Encoder enc;
    enc.put_string(std::string(kLedgerMagic));
    enc.put_u32(static_cast<std::uint32_t>(ledger.blocks.size()));
    for (const BlockPtr& b : ledger.blocks) enc.put_bytes(encode_block(*b));
    return enc.take();
}

Ledger decode_ledger(ByteView bytes) {
    Decoder dec(bytes);
    if (dec.get_string() != kLedgerMagic) throw DecodeError("bad ledger magic");
    const std::uint32_t count = dec.get_u32();
    Ledger ledger;
    ledger.blocks.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const Bytes raw = dec.get_bytes();
        Decoder bdec(raw);
        Block b = decode_block(bdec);
        if (!bdec.exhausted()) throw DecodeError("trailing bytes after block");
        ledger.blocks.push_back(std::make_shared<const Block>(std::move(b)));
    }
    if (!dec.exhausted()) throw DecodeError("trailing bytes after ledger");
    return ledger;
}

void save_ledger(const Ledger& ledger, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const Bytes bytes = encode_ledger(ledger);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

Ledger load_ledger(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ledger(bytes);
}

}  // namespace vfl::chain
