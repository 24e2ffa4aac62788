#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vfl/adversary.hpp"
#include "vfl/chain.hpp"
#include "vfl/dataset.hpp"
#include "vfl/learner.hpp"
#include "vfl/protocol.hpp"
#include "vfl/rng.hpp"

namespace vfl::sim {

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Mode { Protocol, VanillaFL };

struct LatencyModel {
    enum class Kind { Constant, Uniform };
    Kind kind = Kind::Constant;
    double constant = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    double draw(Rng& rng) const;
};

struct DatasetConfig {
    enum class Source { Idx, Synthetic };
    Source source = Source::Idx;

    // IDX source: directory holding the four standard files, or explicit paths.
    std::string dir = "data";
    std::string train_images, train_labels, test_images, test_labels;
    int train_subsample = 6000;  // 0 = use everything
    int test_subsample = 1000;

    // Synthetic source.
    int classes = 10;
    int dim = 784;
    int train_per_class = 600;
    int test_per_class = 100;
    double spread = 0.3;
};

struct ExperimentConfig {
    int n_vehicles = 20;
    std::set<int> malicious_indices;  // indices into the vehicle list
    protocol::RoleCounts role_counts;
    int rounds = 25;
    learner::TrainConfig train;
    protocol::ProtocolParams protocol;
    learner::Architecture arch;
    DatasetConfig dataset;
    adversary::MaliciousProfile adversary;
    LatencyModel latency;
    learner::Weighting fedavg_weighting = learner::Weighting::BySamples;
    bool block_stores_full_updates = true;
    std::vector<int> force_worker_indices;  // fixed-role test harness
    std::uint64_t master_seed = 1;
    std::map<std::string, std::uint64_t> seed_overrides;  // per-substream replacements
    Mode mode = Mode::Protocol;
};

// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& cfg);

// Per-substream seed: the named override when present, the master otherwise.
std::uint64_t stream_seed(const ExperimentConfig& cfg, const std::string& stream);

struct Vehicle {
    identity::KeyPair key;
    bool malicious = false;

    const identity::VehicleId& id() const { return key.id(); }
};

struct SimulationState {
    int round = 0;
    std::vector<Vehicle> vehicles;  // creation order; ids give canonical order
    learner::ModelParams global_model;
    std::map<identity::VehicleId, chain::Ledger> ledgers;
    protocol::Blacklist blacklist;
    std::map<identity::VehicleId, double> cumulative_rewards;
    std::shared_ptr<const data::Dataset> train_data;
    std::shared_ptr<const data::Dataset> test_data;
    std::optional<double> cached_global_accuracy;
};

struct RoundMetrics {
    int round = 0;
    double global_accuracy = 0.0;
    std::vector<protocol::VoteTally> tallies;  // per worker, id-sorted
    int excluded_update_count = 0;
    std::set<identity::VehicleId> malicious_flagged;
    int blacklist_size = 0;
    std::optional<identity::VehicleId> winning_miner;
    bool round_failed = false;
    int reward_claim_mismatches = 0;
};

enum class TraceKind : std::uint8_t {
    WorkerTxSent = 0,
    ValidatorTxSent = 1,
    CandidateBlockBuilt = 2,
    BlockSelected = 3,
};

struct TraceEvent {
    TraceKind kind;
    identity::VehicleId sender;
};

struct RoundArtifacts {
    std::map<identity::VehicleId, protocol::Role> roles;
    std::vector<protocol::WorkerTx> worker_txs;          // id-sorted
    std::vector<protocol::ValidatorTx> validator_txs;    // (validator, worker)-sorted
    std::vector<protocol::TimedBlock> candidates;
    chain::BlockPtr winning;
    std::vector<protocol::RewardRecord> rewards;  // winning block's records
    std::vector<TraceEvent> trace;
};

using RoundSink = std::function<void(const RoundMetrics&, const RoundArtifacts&)>;

// Loads data, generates vehicle keys, initializes the global model, and
// builds every vehicle's genesis ledger.
SimulationState make_initial_state(const ExperimentConfig& cfg);

// Swaps the starting global model and rebuilds the genesis ledgers to match.
void reset_initial_model(SimulationState& state, learner::ModelParams model);

// Executes one full communication round (roles, shards, local training,
// validation votes, candidate blocks, winner selection, ledger append,
// aggregation, blacklist, metrics).
std::pair<RoundMetrics, RoundArtifacts> run_round(SimulationState& state,
                                                  const ExperimentConfig& cfg);

// Runs cfg.rounds rounds against an externally owned state.
std::vector<RoundMetrics> run_rounds(SimulationState& state, const ExperimentConfig& cfg,
                                     const RoundSink& sink = {});

std::vector<RoundMetrics> run_experiment(const ExperimentConfig& cfg, const RoundSink& sink = {});

// Same sharding and training, but every submitted update is aggregated:
// no validation, no blocks, no blacklist.
std::vector<RoundMetrics> run_vanilla_fl(const ExperimentConfig& cfg, const RoundSink& sink = {});

// Role counts for a shrunken active set: validators and miners scale by
// floor, workers absorb the remainder.
protocol::RoleCounts rescale_role_counts(const protocol::RoleCounts& configured, int configured_total,
                                         int active);

// Rebuilds the round-i global models from block payloads alone; only valid
// for full-update blocks. Returns one model per non-genesis block.
std::vector<learner::ModelParams> rebuild_models_from_chain(const chain::Ledger& ledger,
                                                            const learner::ModelParams& initial,
                                                            learner::Weighting weighting);

}  // namespace vfl::sim
