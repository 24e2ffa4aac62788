#include "vfl/simulator.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "vfl/rng.hpp"

namespace vfl::sim {

namespace {

namespace fs = std::filesystem;

std::string idx_path(const DatasetConfig& d, const std::string& explicit_path,
                     const char* standard_name) {
    if (!explicit_path.empty()) return explicit_path;
    return (fs::path(d.dir) / standard_name).string();
}

data::Dataset subsample(const data::Dataset& full, int keep, std::uint64_t seed) {
    if (keep <= 0 || static_cast<std::size_t>(keep) >= full.size()) return full;
    std::vector<std::uint32_t> indices(full.size());
    std::iota(indices.begin(), indices.end(), 0u);
    Rng rng(seed);
    for (int i = 0; i < keep; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) +
            static_cast<std::size_t>(rng.uniform_below(indices.size() - static_cast<std::size_t>(i)));
        std::swap(indices[static_cast<std::size_t>(i)], indices[j]);
    }
    data::Dataset out;
    out.num_classes = full.num_classes;
    out.examples.reserve(static_cast<std::size_t>(keep));
    for (int i = 0; i < keep; ++i)
        out.examples.push_back(full.examples[indices[static_cast<std::size_t>(i)]]);
    return out;
}

struct RoundContext {
    std::vector<identity::VehicleId> active_ids;            // canonical order
    std::map<identity::VehicleId, std::size_t> vehicle_index;  // creation index
    std::map<identity::VehicleId, protocol::Role> roles;
    std::vector<identity::VehicleId> workers, validators, miners;  // canonical order
};

const Vehicle& vehicle_by_id(const SimulationState& state, const RoundContext& ctx,
                             const identity::VehicleId& id) {
    return state.vehicles[ctx.vehicle_index.at(id)];
}

RoundContext build_round_context(const SimulationState& state, const ExperimentConfig& cfg,
                                 int round) {
    RoundContext ctx;
    for (std::size_t i = 0; i < state.vehicles.size(); ++i) {
        const identity::VehicleId& id = state.vehicles[i].id();
        ctx.vehicle_index[id] = i;
        if (!state.blacklist.banned.contains(id)) ctx.active_ids.push_back(id);
    }
    std::sort(ctx.active_ids.begin(), ctx.active_ids.end());

    const protocol::RoleCounts counts = rescale_role_counts(
        cfg.role_counts, cfg.n_vehicles, static_cast<int>(ctx.active_ids.size()));
    auto roles = protocol::assign_roles(ctx.active_ids, counts, round,
                                        stream_seed(cfg, "roles"));

    // Fixed-role harness: pinned vehicles always work; each one swaps roles
    // with the first unpinned worker.
    for (int idx : cfg.force_worker_indices) {
        const identity::VehicleId& pinned = state.vehicles[static_cast<std::size_t>(idx)].id();
        if (!roles.contains(pinned) || roles[pinned] == protocol::Role::Worker) continue;
        for (const identity::VehicleId& candidate : ctx.active_ids) {
            if (roles[candidate] != protocol::Role::Worker) continue;
            const bool candidate_pinned =
                std::any_of(cfg.force_worker_indices.begin(), cfg.force_worker_indices.end(),
                            [&](int f) {
                                return state.vehicles[static_cast<std::size_t>(f)].id() == candidate;
                            });
            if (candidate_pinned) continue;
            std::swap(roles[pinned], roles[candidate]);
            break;
        }
    }

    for (const identity::VehicleId& id : ctx.active_ids) {
        switch (roles.at(id)) {
            case protocol::Role::Worker: ctx.workers.push_back(id); break;
            case protocol::Role::Validator: ctx.validators.push_back(id); break;
            case protocol::Role::Miner: ctx.miners.push_back(id); break;
        }
    }
    ctx.roles = std::move(roles);
    return ctx;
}

// Local training for one worker, including any malicious distortion.
learner::ModelParams produce_local_update(const SimulationState& state,
                                          const ExperimentConfig& cfg, const RoundContext& ctx,
                                          const identity::VehicleId& worker,
                                          const data::DatasetView& shard, int round) {
    const Vehicle& v = vehicle_by_id(state, ctx, worker);
    const auto vidx = static_cast<std::uint64_t>(ctx.vehicle_index.at(worker));
    const std::uint64_t train_seed =
        derive_seed(stream_seed(cfg, "train"), "worker", static_cast<std::uint64_t>(round), vidx);

    learner::ModelParams update;
    if (v.malicious && cfg.adversary.label_flip_fraction > 0.0) {
        const data::Dataset flipped = adversary::flip_labels(
            shard, cfg.adversary.label_flip_fraction, state.train_data->num_classes,
            derive_seed(stream_seed(cfg, "adversary"), "flip", static_cast<std::uint64_t>(round),
                        vidx));
        update = learner::train_local(state.global_model, data::DatasetView::whole(flipped),
                                      cfg.train, train_seed);
    } else {
        update = learner::train_local(state.global_model, shard, cfg.train, train_seed);
    }
    if (v.malicious && cfg.adversary.noise_sigma > 0.0)
        update = adversary::corrupt_update(
            update, cfg.adversary.noise_sigma,
            derive_seed(stream_seed(cfg, "adversary"), "noise", static_cast<std::uint64_t>(round),
                        vidx));
    return update;
}

double global_accuracy(SimulationState& state) {
    if (!state.cached_global_accuracy) {
        state.cached_global_accuracy =
            learner::evaluate(state.global_model, data::DatasetView::whole(*state.test_data))
                .accuracy;
    }
    return *state.cached_global_accuracy;
}

std::pair<RoundMetrics, RoundArtifacts> run_round_protocol(SimulationState& state,
                                                           const ExperimentConfig& cfg) {
    const int round = state.round + 1;
    RoundMetrics metrics;
    RoundArtifacts art;
    metrics.round = round;

    const RoundContext ctx = build_round_context(state, cfg, round);
    art.roles = ctx.roles;

    const data::ShardAssignment shards =
        data::shard_round(*state.train_data, ctx.active_ids, round, stream_seed(cfg, "shard"));

    Rng latency_rng(
        derive_seed(stream_seed(cfg, "latency"), "round", static_cast<std::uint64_t>(round)));

    // Workers: local training and signed transactions.
    for (const identity::VehicleId& worker : ctx.workers) {
        data::DatasetView shard{state.train_data.get(), shards.shards.at(worker)};
        learner::ModelParams update = produce_local_update(state, cfg, ctx, worker, shard, round);
        const int samples = static_cast<int>(shard.size());
        const double claimed = static_cast<double>(samples) * cfg.train.epochs * cfg.protocol.r;
        art.worker_txs.push_back(
            protocol::make_worker_tx(vehicle_by_id(state, ctx, worker).key, round,
                                     std::move(update), samples, cfg.train.epochs, claimed));
        art.trace.push_back({TraceKind::WorkerTxSent, worker});
        (void)cfg.latency.draw(latency_rng);  // worker-tx latency is modeled but unused
    }

    // Validators share one test set, so the reference accuracy and each
    // worker's measured accuracy are computed once.
    const double a_v = global_accuracy(state);
    std::map<identity::VehicleId, double> a_w;
    std::vector<const protocol::WorkerTx*> verified_txs;
    for (const protocol::WorkerTx& tx : art.worker_txs) {
        if (!protocol::verify_worker_tx(tx)) continue;
        verified_txs.push_back(&tx);
        a_w[tx.worker] =
            learner::evaluate(tx.update, data::DatasetView::whole(*state.test_data)).accuracy;
    }

    for (const identity::VehicleId& validator : ctx.validators) {
        const Vehicle& v = vehicle_by_id(state, ctx, validator);
        for (const protocol::WorkerTx* tx : verified_txs) {
            protocol::Vote vote =
                protocol::validate_update(a_v, a_w.at(tx->worker), cfg.protocol.v_h);
            if (v.malicious && cfg.adversary.malicious_as_validator)
                vote.polarity = vote.polarity == protocol::Polarity::Positive
                                    ? protocol::Polarity::Negative
                                    : protocol::Polarity::Positive;
            art.validator_txs.push_back(protocol::make_validator_tx(
                v.key, tx->worker, round, vote, cfg.protocol.r, cfg.protocol.r));
            art.trace.push_back({TraceKind::ValidatorTxSent, validator});
            (void)cfg.latency.draw(latency_rng);
        }
    }

    // Miners: verify everything, tally, price the round, build blocks.
    std::map<identity::VehicleId, std::vector<protocol::ValidatorTx>> votes_by_worker;
    int verified_validator_txs = 0;
    for (const protocol::ValidatorTx& tx : art.validator_txs) {
        if (!protocol::verify_validator_tx(tx)) continue;
        ++verified_validator_txs;
        votes_by_worker[tx.worker].push_back(tx);
    }

    std::vector<protocol::VoteTally> tallies;
    std::vector<protocol::IncludedUpdate> included;
    for (const protocol::WorkerTx* tx : verified_txs) {
        const auto it = votes_by_worker.find(tx->worker);
        const protocol::VoteTally tally = it == votes_by_worker.end()
                                              ? protocol::VoteTally{tx->worker, 0, 0}
                                              : protocol::tally_votes(it->second);
        tallies.push_back(tally);
        if (protocol::decide_inclusion(tally))
            included.push_back({tx->worker, tx->update, tx->sample_count});
        if (protocol::flagged_malicious(tally)) metrics.malicious_flagged.insert(tx->worker);
    }

    std::vector<protocol::RewardRecord> rewards;
    for (std::size_t i = 0; i < verified_txs.size(); ++i) {
        const protocol::WorkerTx* tx = verified_txs[i];
        const double amount =
            protocol::worker_reward(tx->sample_count, tx->epochs, tallies[i], cfg.protocol.r);
        if (amount != tx->claimed_reward) ++metrics.reward_claim_mismatches;
        rewards.push_back({tx->worker, protocol::Role::Worker, amount});
    }
    for (const identity::VehicleId& validator : ctx.validators) {
        const int votes_cast = static_cast<int>(std::count_if(
            art.validator_txs.begin(), art.validator_txs.end(),
            [&](const protocol::ValidatorTx& tx) { return tx.validator == validator; }));
        rewards.push_back({validator, protocol::Role::Validator,
                           protocol::validator_reward(static_cast<int>(verified_txs.size()),
                                                      votes_cast, cfg.protocol.r)});
    }
    for (const identity::VehicleId& miner : ctx.miners)
        rewards.push_back({miner, protocol::Role::Miner,
                           protocol::miner_reward(verified_validator_txs, cfg.protocol.alpha)});

    const identity::Digest prev_digest =
        state.ledgers.at(state.vehicles.front().id()).tip().digest;
    for (const identity::VehicleId& miner : ctx.miners) {
        const Vehicle& m = vehicle_by_id(state, ctx, miner);
        chain::Block block =
            protocol::build_candidate_block(m.key, round, tallies, included, rewards, prev_digest,
                                            cfg.block_stores_full_updates);
        if (m.malicious && cfg.adversary.malicious_as_miner) {
            block.total_positive_votes += 1000;  // forged header, re-sealed
            block = chain::seal_block(std::move(block), m.key);
        }
        art.trace.push_back({TraceKind::CandidateBlockBuilt, miner});
        art.candidates.push_back(
            {std::make_shared<const chain::Block>(std::move(block)), cfg.latency.draw(latency_rng)});
    }

    art.winning = protocol::select_winning_block(art.candidates, cfg.protocol.propagation_cutoff,
                                                 state.blacklist.banned);
    metrics.tallies = tallies;
    metrics.excluded_update_count =
        static_cast<int>(verified_txs.size()) - static_cast<int>(included.size());

    if (!art.winning) {
        // Every candidate was late or banned: the round is skipped.
        metrics.round_failed = true;
        metrics.blacklist_size = static_cast<int>(state.blacklist.banned.size());
        metrics.global_accuracy = global_accuracy(state);
        state.round = round;
        return {std::move(metrics), std::move(art)};
    }
    art.trace.push_back({TraceKind::BlockSelected, art.winning->miner});
    metrics.winning_miner = art.winning->miner;
    art.rewards = rewards;

    // Every active vehicle verifies and appends the winning block.
    for (const identity::VehicleId& id : ctx.active_ids) {
        if (const auto err = chain::append(state.ledgers.at(id), art.winning,
                                           state.blacklist.banned))
            throw protocol::ProtocolError("append rejected for vehicle " + id.short_hex() + ": " +
                                          chain::to_string(*err));
    }

    if (included.empty()) {
        metrics.round_failed = true;  // nothing to aggregate; the model carries over
    } else {
        std::vector<std::pair<learner::ModelParams, int>> inputs;
        inputs.reserve(included.size());
        for (protocol::IncludedUpdate& u : included)
            inputs.emplace_back(std::move(u.update), u.sample_count);
        state.global_model = learner::fedavg(inputs, cfg.fedavg_weighting);
        state.cached_global_accuracy.reset();
    }

    const std::set<identity::VehicleId> worker_set(ctx.workers.begin(), ctx.workers.end());
    state.blacklist = protocol::update_blacklist(state.blacklist, metrics.malicious_flagged,
                                                 worker_set, cfg.protocol.blacklist_threshold);
    for (const protocol::RewardRecord& r : rewards) state.cumulative_rewards[r.vehicle] += r.amount;

    metrics.blacklist_size = static_cast<int>(state.blacklist.banned.size());
    metrics.global_accuracy = global_accuracy(state);
    state.round = round;
    return {std::move(metrics), std::move(art)};
}

std::pair<RoundMetrics, RoundArtifacts> run_round_vanilla(SimulationState& state,
                                                          const ExperimentConfig& cfg) {
    const int round = state.round + 1;
    RoundMetrics metrics;
    RoundArtifacts art;
    metrics.round = round;

    const RoundContext ctx = build_round_context(state, cfg, round);
    art.roles = ctx.roles;
    const data::ShardAssignment shards =
        data::shard_round(*state.train_data, ctx.active_ids, round, stream_seed(cfg, "shard"));

    std::vector<std::pair<learner::ModelParams, int>> inputs;
    for (const identity::VehicleId& worker : ctx.workers) {
        data::DatasetView shard{state.train_data.get(), shards.shards.at(worker)};
        inputs.emplace_back(produce_local_update(state, cfg, ctx, worker, shard, round),
                            static_cast<int>(shard.size()));
    }
    state.global_model = learner::fedavg(inputs, cfg.fedavg_weighting);
    state.cached_global_accuracy.reset();

    metrics.global_accuracy = global_accuracy(state);
    state.round = round;
    return {std::move(metrics), std::move(art)};
}

}  // namespace

double LatencyModel::draw(Rng& rng) const {
    switch (kind) {
        case Kind::Constant: return constant;
        case Kind::Uniform: return rng.uniform(lo, hi);
    }
    return 0.0;
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.n_vehicles < 3) throw ConfigError("n_vehicles: need at least 3 vehicles");
    if (cfg.role_counts.workers < 1 || cfg.role_counts.validators < 1 ||
        cfg.role_counts.miners < 1)
        throw ConfigError("role_counts: each role needs at least one vehicle");
    if (cfg.role_counts.total() != cfg.n_vehicles)
        throw ConfigError("role_counts: workers+validators+miners = " +
                          std::to_string(cfg.role_counts.total()) + " but n_vehicles = " +
                          std::to_string(cfg.n_vehicles));
    for (int idx : cfg.malicious_indices)
        if (idx < 0 || idx >= cfg.n_vehicles)
            throw ConfigError("malicious: vehicle index " + std::to_string(idx) +
                              " out of range");
    for (int idx : cfg.force_worker_indices)
        if (idx < 0 || idx >= cfg.n_vehicles)
            throw ConfigError("force_worker: vehicle index " + std::to_string(idx) +
                              " out of range");
    if (cfg.rounds < 0) throw ConfigError("rounds: must be >= 0");
    if (cfg.train.epochs < 1) throw ConfigError("train.epochs: must be >= 1");
    if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (cfg.train.learning_rate < 0.0) throw ConfigError("train.learning_rate: must be >= 0");
    if (cfg.protocol.v_h < 0.0 || cfg.protocol.v_h > 1.0)
        throw ConfigError("protocol.v_h: must be in [0, 1]");
    if (cfg.protocol.r <= 0.0) throw ConfigError("protocol.r: must be > 0");
    if (cfg.protocol.alpha <= 0.0) throw ConfigError("protocol.alpha: must be > 0");
    if (cfg.protocol.blacklist_threshold < 1)
        throw ConfigError("protocol.blacklist_k: must be >= 1");
    if (cfg.protocol.propagation_cutoff < 0.0)
        throw ConfigError("protocol.propagation_cutoff: must be >= 0");
    if (cfg.adversary.noise_sigma < 0.0) throw ConfigError("adversary.noise_sigma: must be >= 0");
    if (cfg.adversary.label_flip_fraction < 0.0 || cfg.adversary.label_flip_fraction > 1.0)
        throw ConfigError("adversary.label_flip_fraction: must be in [0, 1]");
    if (cfg.latency.kind == LatencyModel::Kind::Uniform &&
        (cfg.latency.lo < 0.0 || cfg.latency.hi < cfg.latency.lo))
        throw ConfigError("latency: need 0 <= lo <= hi");
    if (cfg.latency.kind == LatencyModel::Kind::Constant && cfg.latency.constant < 0.0)
        throw ConfigError("latency: constant delay must be >= 0");
}

std::uint64_t stream_seed(const ExperimentConfig& cfg, const std::string& stream) {
    const auto it = cfg.seed_overrides.find(stream);
    return it == cfg.seed_overrides.end() ? cfg.master_seed : it->second;
}

protocol::RoleCounts rescale_role_counts(const protocol::RoleCounts& configured,
                                         int configured_total, int active) {
    if (active == configured_total) return configured;
    if (active < 3) throw ConfigError("fewer than 3 unbanned vehicles remain");
    protocol::RoleCounts out;
    out.validators = std::max(1, configured.validators * active / configured_total);
    out.miners = std::max(1, configured.miners * active / configured_total);
    out.workers = active - out.validators - out.miners;
    if (out.workers < 1) throw ConfigError("role rescaling left no workers");
    return out;
}

SimulationState make_initial_state(const ExperimentConfig& cfg) {
    validate(cfg);

    SimulationState state;
    data::Dataset train, test;
    if (cfg.dataset.source == DatasetConfig::Source::Idx) {
        train = data::load_idx_pair(
            idx_path(cfg.dataset, cfg.dataset.train_images, "train-images-idx3-ubyte"),
            idx_path(cfg.dataset, cfg.dataset.train_labels, "train-labels-idx1-ubyte"));
        test = data::load_idx_pair(
            idx_path(cfg.dataset, cfg.dataset.test_images, "t10k-images-idx3-ubyte"),
            idx_path(cfg.dataset, cfg.dataset.test_labels, "t10k-labels-idx1-ubyte"));
        const int classes = std::max(train.num_classes, test.num_classes);
        train.num_classes = test.num_classes = classes;
    } else {
        train = data::synthetic_dataset(cfg.dataset.classes, cfg.dataset.dim,
                                        cfg.dataset.train_per_class, cfg.dataset.spread,
                                        stream_seed(cfg, "synthetic-train"));
        test = data::synthetic_dataset(cfg.dataset.classes, cfg.dataset.dim,
                                       cfg.dataset.test_per_class, cfg.dataset.spread,
                                       stream_seed(cfg, "synthetic-test"));
    }
    train = subsample(train, cfg.dataset.train_subsample,
                      derive_seed(stream_seed(cfg, "subsample"), "train"));
    test = subsample(test, cfg.dataset.test_subsample,
                     derive_seed(stream_seed(cfg, "subsample"), "test"));
    if (train.feature_dim() != static_cast<std::size_t>(cfg.arch.input_dim))
        throw ConfigError("arch.input_dim = " + std::to_string(cfg.arch.input_dim) +
                          " but the dataset has dimension " + std::to_string(train.feature_dim()));
    if (train.num_classes > cfg.arch.num_classes)
        throw ConfigError("arch.num_classes = " + std::to_string(cfg.arch.num_classes) +
                          " but the dataset has " + std::to_string(train.num_classes) +
                          " classes");
    state.train_data = std::make_shared<const data::Dataset>(std::move(train));
    state.test_data = std::make_shared<const data::Dataset>(std::move(test));

    for (int i = 0; i < cfg.n_vehicles; ++i) {
        Vehicle v;
        v.key = identity::generate_keypair(
            derive_seed(stream_seed(cfg, "vehicle-key"), "vehicle", static_cast<std::uint64_t>(i)));
        v.malicious = cfg.malicious_indices.contains(i);
        state.vehicles.push_back(std::move(v));
    }

    state.global_model = learner::init_params(cfg.arch, stream_seed(cfg, "model-init"));
    reset_initial_model(state, state.global_model);
    return state;
}

void reset_initial_model(SimulationState& state, learner::ModelParams model) {
    state.global_model = std::move(model);
    state.cached_global_accuracy.reset();
    Encoder enc;
    learner::encode(enc, state.global_model);
    const chain::Block g = chain::genesis(identity::digest(enc.bytes()));
    const auto genesis_ptr = std::make_shared<const chain::Block>(g);
    state.ledgers.clear();
    for (const Vehicle& v : state.vehicles) state.ledgers[v.id()] = chain::Ledger{{genesis_ptr}};
}

std::pair<RoundMetrics, RoundArtifacts> run_round(SimulationState& state,
                                                  const ExperimentConfig& cfg) {
    return cfg.mode == Mode::Protocol ? run_round_protocol(state, cfg)
                                      : run_round_vanilla(state, cfg);
}

std::vector<RoundMetrics> run_rounds(SimulationState& state, const ExperimentConfig& cfg,
                                     const RoundSink& sink) {
    std::vector<RoundMetrics> all;
    all.reserve(static_cast<std::size_t>(cfg.rounds));
    for (int i = 0; i < cfg.rounds; ++i) {
        auto [metrics, artifacts] = run_round(state, cfg);
        if (sink) sink(metrics, artifacts);
        all.push_back(std::move(metrics));
    }
    return all;
}

std::vector<RoundMetrics> run_experiment(const ExperimentConfig& cfg, const RoundSink& sink) {
    SimulationState state = make_initial_state(cfg);
    return run_rounds(state, cfg, sink);
}

std::vector<RoundMetrics> run_vanilla_fl(const ExperimentConfig& cfg, const RoundSink& sink) {
    if (cfg.mode != Mode::VanillaFL)
        throw ConfigError("run_vanilla_fl requires mode = vanilla");
    return run_experiment(cfg, sink);
}

std::vector<learner::ModelParams> rebuild_models_from_chain(const chain::Ledger& ledger,
                                                            const learner::ModelParams& initial,
                                                            learner::Weighting weighting) {
    std::vector<learner::ModelParams> models;
    learner::ModelParams current = initial;
    for (std::size_t i = 1; i < ledger.blocks.size(); ++i) {
        const protocol::BlockPayload payload = protocol::decode_payload(ledger.blocks[i]->payload);
        if (!payload.full_updates)
            throw protocol::ProtocolError("chain stores update digests only; cannot rebuild");
        if (!payload.updates.empty()) {
            std::vector<std::pair<learner::ModelParams, int>> inputs;
            inputs.reserve(payload.updates.size());
            for (const protocol::IncludedUpdate& u : payload.updates)
                inputs.emplace_back(u.update, u.sample_count);
            current = learner::fedavg(inputs, weighting);
        }
        models.push_back(current);
    }
    return models;
}

}  // namespace vfl::sim
