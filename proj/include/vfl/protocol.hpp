#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "vfl/chain.hpp"
#include "vfl/identity.hpp"
#include "vfl/learner.hpp"

namespace vfl::protocol {

class ProtocolError : public std::runtime_error {
  public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

struct ProtocolParams {
    double v_h = 1.0;                // validation threshold V_h
    double r = 1.0;                  // voting/reward unit
    double alpha = 1.0;              // miner reward unit
    int blacklist_threshold = 3;     // consecutive malicious rounds before banning
    double propagation_cutoff = 1.0;  // simulated-time limit for block arrival
};

enum class Role : std::uint8_t { Worker = 0, Validator = 1, Miner = 2 };

std::string to_string(Role role);

struct RoleCounts {
    int workers = 12;
    int validators = 5;
    int miners = 3;

    int total() const { return workers + validators + miners; }
};

// Signed message carrying a worker's local update, sample count, epochs, and
// anticipated reward.
struct WorkerTx {
    identity::VehicleId worker;
    int round = 0;
    learner::ModelParams update;
    int sample_count = 0;
    int epochs = 0;
    double claimed_reward = 0.0;
    identity::Signature signature;
};

Bytes worker_tx_signing_bytes(const WorkerTx& tx);
WorkerTx make_worker_tx(const identity::KeyPair& worker_key, int round,
                        learner::ModelParams update, int sample_count, int epochs,
                        double claimed_reward);
bool verify_worker_tx(const WorkerTx& tx);

enum class Polarity : std::uint8_t { Positive = 0, Negative = 1 };

struct Vote {
    Polarity polarity = Polarity::Positive;
    double a_v = 0.0;  // reference accuracy of the previous global model
    double a_w = 0.0;  // accuracy of the worker's submitted update

    bool operator==(const Vote&) const = default;
};

// Negative iff a_v - a_w > v_h (strict); the returned vote records both
// accuracies.
Vote validate_update(double a_v, double a_w, double v_h);

// Signed message carrying one validator's vote on one worker's update.
struct ValidatorTx {
    identity::VehicleId validator;
    identity::VehicleId worker;
    int round = 0;
    Vote vote;
    double r_veri = 0.0;
    double r_vali = 0.0;
    identity::Signature signature;
};

Bytes validator_tx_signing_bytes(const ValidatorTx& tx);
ValidatorTx make_validator_tx(const identity::KeyPair& validator_key,
                              const identity::VehicleId& worker, int round, Vote vote,
                              double r_veri, double r_vali);
bool verify_validator_tx(const ValidatorTx& tx);

struct VoteTally {
    identity::VehicleId worker;
    int positive = 0;
    int negative = 0;

    bool operator==(const VoteTally&) const = default;
};

// Counts votes for one worker; all txs must reference the same worker and
// round, one vote per validator.
VoteTally tally_votes(const std::vector<ValidatorTx>& votes);

// Include the update in the aggregate iff positives are not outnumbered.
bool decide_inclusion(const VoteTally& tally);

// Majority-negative is the malicious mark; strictly more negatives required.
bool flagged_malicious(const VoteTally& tally);

double worker_reward(int sample_count, int epochs, const VoteTally& tally, double r);
double validator_reward(int num_worker_tx_verified, int num_votes_cast, double r);
double miner_reward(int num_validator_tx_verified, double alpha);

struct RewardRecord {
    identity::VehicleId vehicle;
    Role role = Role::Worker;
    double amount = 0.0;

    bool operator==(const RewardRecord&) const = default;
};

struct Blacklist {
    std::map<identity::VehicleId, int> consecutive_malicious;
    std::set<identity::VehicleId> banned;
};

// Counters increment for flagged workers, reset for unflagged workers, stay
// untouched for vehicles that did not work this round. A vehicle is banned
// once its counter reaches threshold K.
Blacklist update_blacklist(const Blacklist& bl,
                           const std::set<identity::VehicleId>& malicious_this_round,
                           const std::set<identity::VehicleId>& all_workers_this_round, int k);

// Uniform role permutation, deterministic per (round, seed); banned vehicles
// must already be excluded from the active list.
std::map<identity::VehicleId, Role> assign_roles(const std::vector<identity::VehicleId>& active,
                                                 const RoleCounts& counts, int round,
                                                 std::uint64_t seed);

struct IncludedUpdate {
    identity::VehicleId worker;
    learner::ModelParams update;
    int sample_count = 0;

    bool operator==(const IncludedUpdate&) const = default;
};

// What a candidate block carries. Updates are stored either in full (the
// chain alone can then rebuild every global model) or as digests.
struct BlockPayload {
    std::vector<VoteTally> tallies;
    bool full_updates = true;
    std::vector<IncludedUpdate> updates;
    std::vector<std::pair<identity::VehicleId, identity::Digest>> update_digests;
    std::vector<RewardRecord> rewards;
};

Bytes encode_payload(const BlockPayload& payload);
BlockPayload decode_payload(ByteView bytes);

// Assembles and seals a candidate block; inputs are consumed in canonical
// VehicleId order regardless of caller order. The header caches the summed
// positive votes and rewards.
chain::Block build_candidate_block(const identity::KeyPair& miner_key, int round,
                                   std::vector<VoteTally> tallies,
                                   std::vector<IncludedUpdate> included_updates,
                                   std::vector<RewardRecord> rewards,
                                   const identity::Digest& prev_digest, bool full_updates = true);

struct TimedBlock {
    chain::BlockPtr block;
    double arrival_time = 0.0;
};

// Among on-time blocks from unbanned miners, the most positive votes wins;
// ties break by total rewards, then smallest digest. Returns nullptr when
// every block is late or banned (the round is skipped).
chain::BlockPtr select_winning_block(const std::vector<TimedBlock>& blocks, double cutoff,
                                     const std::set<identity::VehicleId>& banned = {});

}  // namespace vfl::protocol
