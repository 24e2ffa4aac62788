#include "vfl/protocol.hpp"

#include <algorithm>
#include <numeric>

#include "vfl/rng.hpp"

namespace vfl::protocol {

namespace {

constexpr std::string_view kWorkerTxContext = "vfl.worker-tx.v1";
constexpr std::string_view kValidatorTxContext = "vfl.validator-tx.v1";

void encode_tally(Encoder& enc, const VoteTally& t) {
    enc.put_raw(t.worker.view());
    enc.put_u32(static_cast<std::uint32_t>(t.positive));
    enc.put_u32(static_cast<std::uint32_t>(t.negative));
}

VoteTally decode_tally(Decoder& dec) {
    VoteTally t;
    dec.get_raw(t.worker.bytes);
    t.positive = static_cast<int>(dec.get_u32());
    t.negative = static_cast<int>(dec.get_u32());
    return t;
}

void encode_reward(Encoder& enc, const RewardRecord& r) {
    enc.put_raw(r.vehicle.view());
    enc.put_u8(static_cast<std::uint8_t>(r.role));
    enc.put_f64(r.amount);
}

RewardRecord decode_reward(Decoder& dec) {
    RewardRecord r;
    dec.get_raw(r.vehicle.bytes);
    const std::uint8_t role = dec.get_u8();
    if (role > 2) throw DecodeError("bad reward role");
    r.role = static_cast<Role>(role);
    r.amount = dec.get_f64();
    return r;
}

}  // namespace

std::string to_string(Role role) {
    switch (role) {
        case Role::Worker: return "worker";
        case Role::Validator: return "validator";
        case Role::Miner: return "miner";
    }
    return "unknown";
}

Bytes worker_tx_signing_bytes(const WorkerTx& tx) {
    Encoder enc;
    enc.put_string(std::string(kWorkerTxContext));
    enc.put_raw(tx.worker.view());
    enc.put_u32(static_cast<std::uint32_t>(tx.round));
    learner::encode(enc, tx.update);
    enc.put_u32(static_cast<std::uint32_t>(tx.sample_count));
    enc.put_u32(static_cast<std::uint32_t>(tx.epochs));
    enc.put_f64(tx.claimed_reward);
    return enc.take();
}

WorkerTx make_worker_tx(const identity::KeyPair& worker_key, int round,
                        learner::ModelParams update, int sample_count, int epochs,
                        double claimed_reward) {
    if (sample_count < 1) throw ProtocolError("worker tx: sample_count must be >= 1");
    WorkerTx tx;
    tx.worker = worker_key.id();
    tx.round = round;
    tx.update = std::move(update);
    tx.sample_count = sample_count;
    tx.epochs = epochs;
    tx.claimed_reward = claimed_reward;
    tx.signature = identity::sign(worker_key, worker_tx_signing_bytes(tx));
    return tx;
}

bool verify_worker_tx(const WorkerTx& tx) {
    return identity::verify(tx.worker, worker_tx_signing_bytes(tx), tx.signature);
}

Vote validate_update(double a_v, double a_w, double v_h) {
    Vote vote;
    vote.a_v = a_v;
    vote.a_w = a_w;
    vote.polarity = (a_v - a_w > v_h) ? Polarity::Negative : Polarity::Positive;
    return vote;
}

Bytes validator_tx_signing_bytes(const ValidatorTx& tx) {
    Encoder enc;
    enc.put_string(std::string(kValidatorTxContext));
    enc.put_raw(tx.validator.view());
    enc.put_raw(tx.worker.view());
    enc.put_u32(static_cast<std::uint32_t>(tx.round));
    enc.put_u8(static_cast<std::uint8_t>(tx.vote.polarity));
    enc.put_f64(tx.vote.a_v);
    enc.put_f64(tx.vote.a_w);
    enc.put_f64(tx.r_veri);
    enc.put_f64(tx.r_vali);
    return enc.take();
}

ValidatorTx make_validator_tx(const identity::KeyPair& validator_key,
                              const identity::VehicleId& worker, int round, Vote vote,
                              double r_veri, double r_vali) {
    ValidatorTx tx;
    tx.validator = validator_key.id();
    tx.worker = worker;
    tx.round = round;
    tx.vote = vote;
    tx.r_veri = r_veri;
    tx.r_vali = r_vali;
    tx.signature = identity::sign(validator_key, validator_tx_signing_bytes(tx));
    return tx;
}

bool verify_validator_tx(const ValidatorTx& tx) {
    return identity::verify(tx.validator, validator_tx_signing_bytes(tx), tx.signature);
}

VoteTally tally_votes(const std::vector<ValidatorTx>& votes) {
    VoteTally tally;
    if (votes.empty()) return tally;
    tally.worker = votes.front().worker;
    std::set<identity::VehicleId> seen;
    for (const ValidatorTx& tx : votes) {
        if (tx.worker != tally.worker) throw ProtocolError("tally_votes: mixed workers");
        if (tx.round != votes.front().round) throw ProtocolError("tally_votes: mixed rounds");
        if (!seen.insert(tx.validator).second)
            throw ProtocolError("tally_votes: duplicate vote from validator " +
                                tx.validator.short_hex());
        if (tx.vote.polarity == Polarity::Positive)
            ++tally.positive;
        else
            ++tally.negative;
    }
    return tally;
}

bool decide_inclusion(const VoteTally& tally) { return tally.positive >= tally.negative; }

bool flagged_malicious(const VoteTally& tally) { return tally.negative > tally.positive; }

double worker_reward(int sample_count, int epochs, const VoteTally& tally, double r) {
    if (sample_count < 1 || epochs < 1)
        throw ProtocolError("worker_reward: sample_count and epochs must be >= 1");
    if (flagged_malicious(tally)) return 0.0;
    return static_cast<double>(sample_count) * static_cast<double>(epochs) * r;
}

double validator_reward(int num_worker_tx_verified, int num_votes_cast, double r) {
    if (num_worker_tx_verified < 0 || num_votes_cast < 0)
        throw ProtocolError("validator_reward: negative counts");
    return (static_cast<double>(num_worker_tx_verified) + static_cast<double>(num_votes_cast)) * r;
}

double miner_reward(int num_validator_tx_verified, double alpha) {
    if (num_validator_tx_verified < 0) throw ProtocolError("miner_reward: negative count");
    return static_cast<double>(num_validator_tx_verified) * alpha;
}

Blacklist update_blacklist(const Blacklist& bl,
                           const std::set<identity::VehicleId>& malicious_this_round,
                           const std::set<identity::VehicleId>& all_workers_this_round, int k) {
    Blacklist out = bl;
    for (const identity::VehicleId& worker : all_workers_this_round) {
        if (malicious_this_round.contains(worker)) {
            const int count = ++out.consecutive_malicious[worker];
            if (count >= k) out.banned.insert(worker);
        } else {
            out.consecutive_malicious[worker] = 0;
        }
    }
    return out;
}

std::map<identity::VehicleId, Role> assign_roles(const std::vector<identity::VehicleId>& active,
                                                 const RoleCounts& counts, int round,
                                                 std::uint64_t seed) {
    if (counts.workers < 0 || counts.validators < 0 || counts.miners < 0)
        throw ProtocolError("assign_roles: negative role count");
    if (static_cast<std::size_t>(counts.total()) != active.size())
        throw ProtocolError("assign_roles: role counts sum to " + std::to_string(counts.total()) +
                            " but " + std::to_string(active.size()) + " vehicles are active");

    std::vector<identity::VehicleId> order = active;
    Rng rng(derive_seed(seed, "roles", static_cast<std::uint64_t>(round)));
    rng.shuffle(std::span<identity::VehicleId>(order));

    std::map<identity::VehicleId, Role> roles;
    for (std::size_t i = 0; i < order.size(); ++i) {
        Role role = Role::Miner;
        if (i < static_cast<std::size_t>(counts.workers))
            role = Role::Worker;
        else if (i < static_cast<std::size_t>(counts.workers + counts.validators))
            role = Role::Validator;
        roles[order[i]] = role;
    }
    return roles;
}

Bytes encode_payload(const BlockPayload& payload) {
    Encoder enc;
    enc.put_u32(static_cast<std::uint32_t>(payload.tallies.size()));
    for (const VoteTally& t : payload.tallies) encode_tally(enc, t);
    enc.put_u8(payload.full_updates ? 1 : 0);
    if (payload.full_updates) {
        enc.put_u32(static_cast<std::uint32_t>(payload.updates.size()));
        for (const IncludedUpdate& u : payload.updates) {
            enc.put_raw(u.worker.view());
            learner::encode(enc, u.update);
            enc.put_u32(static_cast<std::uint32_t>(u.sample_count));
        }
    } else {
        enc.put_u32(static_cast<std::uint32_t>(payload.update_digests.size()));
        for (const auto& [worker, dg] : payload.update_digests) {
            enc.put_raw(worker.view());
            enc.put_raw(dg.view());
        }
    }
    enc.put_u32(static_cast<std::uint32_t>(payload.rewards.size()));
    for (const RewardRecord& r : payload.rewards) encode_reward(enc, r);
    return enc.take();
}

BlockPayload decode_payload(ByteView bytes) {
    Decoder dec(bytes);
    BlockPayload payload;
    payload.tallies.resize(dec.get_u32());
    for (VoteTally& t : payload.tallies) t = decode_tally(dec);
    payload.full_updates = dec.get_u8() != 0;
    if (payload.full_updates) {
        payload.updates.resize(dec.get_u32());
        for (IncludedUpdate& u : payload.updates) {
            dec.get_raw(u.worker.bytes);
            u.update = learner::decode_model_params(dec);
            u.sample_count = static_cast<int>(dec.get_u32());
        }
    } else {
        payload.update_digests.resize(dec.get_u32());
        for (auto& [worker, dg] : payload.update_digests) {
            dec.get_raw(worker.bytes);
            dec.get_raw(dg.bytes);
        }
    }
    payload.rewards.resize(dec.get_u32());
    for (RewardRecord& r : payload.rewards) r = decode_reward(dec);
    if (!dec.exhausted()) throw DecodeError("trailing bytes after payload");
    return payload;
}

chain::Block build_candidate_block(const identity::KeyPair& miner_key, int round,
                                   std::vector<VoteTally> tallies,
                                   std::vector<IncludedUpdate> included_updates,
                                   std::vector<RewardRecord> rewards,
                                   const identity::Digest& prev_digest, bool full_updates) {
    std::sort(tallies.begin(), tallies.end(),
              [](const VoteTally& a, const VoteTally& b) { return a.worker < b.worker; });
    std::sort(included_updates.begin(), included_updates.end(),
              [](const IncludedUpdate& a, const IncludedUpdate& b) { return a.worker < b.worker; });
    std::sort(rewards.begin(), rewards.end(), [](const RewardRecord& a, const RewardRecord& b) {
        if (a.vehicle != b.vehicle) return a.vehicle < b.vehicle;
        return static_cast<int>(a.role) < static_cast<int>(b.role);
    });

    BlockPayload payload;
    payload.tallies = std::move(tallies);
    payload.full_updates = full_updates;
    if (full_updates) {
        payload.updates = std::move(included_updates);
    } else {
        for (const IncludedUpdate& u : included_updates) {
            Encoder enc;
            learner::encode(enc, u.update);
            payload.update_digests.emplace_back(u.worker, identity::digest(enc.bytes()));
        }
    }
    payload.rewards = std::move(rewards);

    chain::Block block;
    block.index = static_cast<std::uint64_t>(round);
    block.prev_digest = prev_digest;
    block.payload = encode_payload(payload);
    block.total_positive_votes = 0;
    for (const VoteTally& t : payload.tallies)
        block.total_positive_votes += static_cast<std::uint64_t>(t.positive);
    block.total_rewards = 0.0;
    for (const RewardRecord& r : payload.rewards) block.total_rewards += r.amount;
    return chain::seal_block(std::move(block), miner_key);
}

chain::BlockPtr select_winning_block(const std::vector<TimedBlock>& blocks, double cutoff,
                                     const std::set<identity::VehicleId>& banned) {
    chain::BlockPtr best;
    for (const TimedBlock& tb : blocks) {
        if (banned.contains(tb.block->miner)) continue;
        if (tb.arrival_time > cutoff) continue;
        if (!best) {
            best = tb.block;
            continue;
        }
        const chain::Block& cand = *tb.block;
        if (cand.total_positive_votes != best->total_positive_votes) {
            if (cand.total_positive_votes > best->total_positive_votes) best = tb.block;
        } else if (cand.total_rewards != best->total_rewards) {
            if (cand.total_rewards > best->total_rewards) best = tb.block;
        } else if (cand.digest < best->digest) {
            best = tb.block;
        }
    }
    return best;
}

}  // namespace vfl::protocol
