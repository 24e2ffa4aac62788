#include "vfl/config.hpp"

#include <fstream>
#include <set>

namespace vfl::cli {

namespace {

using nlohmann::json;
using sim::ConfigError;

const std::set<std::string> kKnownStreams = {
    "vehicle-key", "model-init", "roles",     "shard",           "train",
    "adversary",   "latency",    "subsample", "synthetic-train", "synthetic-test"};

// Every key in `value` must exist in the schema produced from the defaults.
// seed_overrides carries substream names instead of fixed keys.
void reject_unknown_keys(const json& value, const json& schema, const std::string& prefix) {
    if (!value.is_object()) return;
    if (prefix == "seed_overrides") {
        for (const auto& [key, child] : value.items()) {
            (void)child;
            if (!kKnownStreams.contains(key))
                throw ConfigError("seed_overrides: unknown substream \"" + key + "\"");
        }
        return;
    }
    for (const auto& [key, child] : value.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!schema.is_object() || !schema.contains(key))
            throw ConfigError("unknown config key: " + path);
        reject_unknown_keys(child, schema.at(key), path);
    }
}

template <typename T>
T field(const json& j, const std::string& key, const std::string& path) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key " + path + ": " + e.what());
    }
}

json merge(json base, const json& patch, const std::string& prefix) {
    if (!patch.is_object()) return patch;
    for (const auto& [key, child] : patch.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (base.contains(key) && base.at(key).is_object() && child.is_object() &&
            key != "seed_overrides")
            base[key] = merge(base.at(key), child, path);
        else
            base[key] = child;
    }
    return base;
}

json parse_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override \"" + assignment + "\" is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // plain strings may be given unquoted
    }
    // build nested object from the dotted path
    json out = value;
    std::string rest = key;
    std::vector<std::string> parts;
    std::size_t pos;
    while ((pos = rest.find('.')) != std::string::npos) {
        parts.push_back(rest.substr(0, pos));
        rest = rest.substr(pos + 1);
    }
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) out = json{{*it, out}};
    return out;
}

}  // namespace

sim::ExperimentConfig default_config() { return sim::ExperimentConfig{}; }

json config_to_json(const sim::ExperimentConfig& cfg) {
    json arch = {
        {"kind", cfg.arch.kind == learner::ArchKind::Mlp ? "mlp" : "cnn"},
        {"input_dim", cfg.arch.input_dim},
        {"num_classes", cfg.arch.num_classes},
        {"hidden", cfg.arch.hidden},
        {"image_h", cfg.arch.image_h},
        {"image_w", cfg.arch.image_w},
        {"conv1_channels", cfg.arch.conv1_channels},
        {"conv2_channels", cfg.arch.conv2_channels},
    };
    json dataset = {
        {"source", cfg.dataset.source == sim::DatasetConfig::Source::Idx ? "idx" : "synthetic"},
        {"dir", cfg.dataset.dir},
        {"train_images", cfg.dataset.train_images},
        {"train_labels", cfg.dataset.train_labels},
        {"test_images", cfg.dataset.test_images},
        {"test_labels", cfg.dataset.test_labels},
        {"train_subsample", cfg.dataset.train_subsample},
        {"test_subsample", cfg.dataset.test_subsample},
        {"classes", cfg.dataset.classes},
        {"dim", cfg.dataset.dim},
        {"train_per_class", cfg.dataset.train_per_class},
        {"test_per_class", cfg.dataset.test_per_class},
        {"spread", cfg.dataset.spread},
    };
    json latency = {
        {"distribution",
         cfg.latency.kind == sim::LatencyModel::Kind::Constant ? "constant" : "uniform"},
        {"value", cfg.latency.constant},
        {"lo", cfg.latency.lo},
        {"hi", cfg.latency.hi},
    };
    return json{
        {"vehicles", cfg.n_vehicles},
        {"malicious", cfg.malicious_indices},
        {"role_counts",
         {{"workers", cfg.role_counts.workers},
          {"validators", cfg.role_counts.validators},
          {"miners", cfg.role_counts.miners}}},
        {"rounds", cfg.rounds},
        {"train",
         {{"epochs", cfg.train.epochs},
          {"learning_rate", cfg.train.learning_rate},
          {"batch_size", cfg.train.batch_size}}},
        {"protocol",
         {{"v_h", cfg.protocol.v_h},
          {"r", cfg.protocol.r},
          {"alpha", cfg.protocol.alpha},
          {"blacklist_k", cfg.protocol.blacklist_threshold},
          {"propagation_cutoff", cfg.protocol.propagation_cutoff}}},
        {"arch", arch},
        {"dataset", dataset},
        {"adversary",
         {{"noise_sigma", cfg.adversary.noise_sigma},
          {"label_flip_fraction", cfg.adversary.label_flip_fraction},
          {"malicious_as_validator", cfg.adversary.malicious_as_validator},
          {"malicious_as_miner", cfg.adversary.malicious_as_miner}}},
        {"latency", latency},
        {"fedavg_weighting",
         cfg.fedavg_weighting == learner::Weighting::BySamples ? "samples" : "uniform"},
        {"block_stores_full_updates", cfg.block_stores_full_updates},
        {"force_worker", cfg.force_worker_indices},
        {"master_seed", cfg.master_seed},
        {"seed_overrides", cfg.seed_overrides},
        {"mode", cfg.mode == sim::Mode::Protocol ? "protocol" : "vanilla"},
    };
}

sim::ExperimentConfig config_from_json(const json& input,
                                       const std::vector<std::string>& overrides) {
    const json schema = config_to_json(default_config());
    if (!input.is_object() && !input.is_null())
        throw ConfigError("config root must be a JSON object");

    json merged = schema;
    if (input.is_object()) {
        reject_unknown_keys(input, schema, "");
        merged = merge(merged, input, "");
    }
    for (const std::string& assignment : overrides) {
        const json patch = parse_override(assignment);
        reject_unknown_keys(patch, schema, "");
        merged = merge(merged, patch, "");
    }

    sim::ExperimentConfig cfg;
    cfg.n_vehicles = field<int>(merged, "vehicles", "vehicles");
    for (int idx : field<std::vector<int>>(merged, "malicious", "malicious"))
        cfg.malicious_indices.insert(idx);
    const json& rc = merged.at("role_counts");
    cfg.role_counts.workers = field<int>(rc, "workers", "role_counts.workers");
    cfg.role_counts.validators = field<int>(rc, "validators", "role_counts.validators");
    cfg.role_counts.miners = field<int>(rc, "miners", "role_counts.miners");
    cfg.rounds = field<int>(merged, "rounds", "rounds");
    const json& tr = merged.at("train");
    cfg.train.epochs = field<int>(tr, "epochs", "train.epochs");
    cfg.train.learning_rate = field<double>(tr, "learning_rate", "train.learning_rate");
    cfg.train.batch_size = field<int>(tr, "batch_size", "train.batch_size");
    const json& pr = merged.at("protocol");
    cfg.protocol.v_h = field<double>(pr, "v_h", "protocol.v_h");
    cfg.protocol.r = field<double>(pr, "r", "protocol.r");
    cfg.protocol.alpha = field<double>(pr, "alpha", "protocol.alpha");
    cfg.protocol.blacklist_threshold = field<int>(pr, "blacklist_k", "protocol.blacklist_k");
    cfg.protocol.propagation_cutoff =
        field<double>(pr, "propagation_cutoff", "protocol.propagation_cutoff");

    const json& ar = merged.at("arch");
    const std::string kind = field<std::string>(ar, "kind", "arch.kind");
    const int num_classes = field<int>(ar, "num_classes", "arch.num_classes");
    try {
        if (kind == "mlp") {
            cfg.arch = learner::Architecture::mlp(field<int>(ar, "input_dim", "arch.input_dim"),
                                                  field<std::vector<int>>(ar, "hidden", "arch.hidden"),
                                                  num_classes);
        } else if (kind == "cnn") {
            cfg.arch = learner::Architecture::cnn(field<int>(ar, "image_h", "arch.image_h"),
                                                  field<int>(ar, "image_w", "arch.image_w"),
                                                  num_classes);
            cfg.arch.conv1_channels = field<int>(ar, "conv1_channels", "arch.conv1_channels");
            cfg.arch.conv2_channels = field<int>(ar, "conv2_channels", "arch.conv2_channels");
        } else {
            throw ConfigError("arch.kind must be \"mlp\" or \"cnn\"");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("arch: ") + e.what());
    }

    const json& ds = merged.at("dataset");
    const std::string source = field<std::string>(ds, "source", "dataset.source");
    if (source == "idx" || source == "mnist")
        cfg.dataset.source = sim::DatasetConfig::Source::Idx;
    else if (source == "synthetic")
        cfg.dataset.source = sim::DatasetConfig::Source::Synthetic;
    else
        throw ConfigError("dataset.source must be \"idx\", \"mnist\", or \"synthetic\"");
    cfg.dataset.dir = field<std::string>(ds, "dir", "dataset.dir");
    cfg.dataset.train_images = field<std::string>(ds, "train_images", "dataset.train_images");
    cfg.dataset.train_labels = field<std::string>(ds, "train_labels", "dataset.train_labels");
    cfg.dataset.test_images = field<std::string>(ds, "test_images", "dataset.test_images");
    cfg.dataset.test_labels = field<std::string>(ds, "test_labels", "dataset.test_labels");
    cfg.dataset.train_subsample = field<int>(ds, "train_subsample", "dataset.train_subsample");
    cfg.dataset.test_subsample = field<int>(ds, "test_subsample", "dataset.test_subsample");
    cfg.dataset.classes = field<int>(ds, "classes", "dataset.classes");
    cfg.dataset.dim = field<int>(ds, "dim", "dataset.dim");
    cfg.dataset.train_per_class = field<int>(ds, "train_per_class", "dataset.train_per_class");
    cfg.dataset.test_per_class = field<int>(ds, "test_per_class", "dataset.test_per_class");
    cfg.dataset.spread = field<double>(ds, "spread", "dataset.spread");

    const json& ad = merged.at("adversary");
    cfg.adversary.noise_sigma = field<double>(ad, "noise_sigma", "adversary.noise_sigma");
    cfg.adversary.label_flip_fraction =
        field<double>(ad, "label_flip_fraction", "adversary.label_flip_fraction");
    cfg.adversary.malicious_as_validator =
        field<bool>(ad, "malicious_as_validator", "adversary.malicious_as_validator");
    cfg.adversary.malicious_as_miner =
        field<bool>(ad, "malicious_as_miner", "adversary.malicious_as_miner");

    const json& lat = merged.at("latency");
    const std::string dist = field<std::string>(lat, "distribution", "latency.distribution");
    if (dist == "constant")
        cfg.latency.kind = sim::LatencyModel::Kind::Constant;
    else if (dist == "uniform")
        cfg.latency.kind = sim::LatencyModel::Kind::Uniform;
    else
        throw ConfigError("latency.distribution must be \"constant\" or \"uniform\"");
    cfg.latency.constant = field<double>(lat, "value", "latency.value");
    cfg.latency.lo = field<double>(lat, "lo", "latency.lo");
    cfg.latency.hi = field<double>(lat, "hi", "latency.hi");

    const std::string weighting =
        field<std::string>(merged, "fedavg_weighting", "fedavg_weighting");
    if (weighting == "samples")
        cfg.fedavg_weighting = learner::Weighting::BySamples;
    else if (weighting == "uniform")
        cfg.fedavg_weighting = learner::Weighting::Uniform;
    else
        throw ConfigError("fedavg_weighting must be \"samples\" or \"uniform\"");

    cfg.block_stores_full_updates =
        field<bool>(merged, "block_stores_full_updates", "block_stores_full_updates");
    cfg.force_worker_indices = field<std::vector<int>>(merged, "force_worker", "force_worker");
    cfg.master_seed = field<std::uint64_t>(merged, "master_seed", "master_seed");
    for (const auto& [key, value] : merged.at("seed_overrides").items()) {
        if (!kKnownStreams.contains(key))
            throw ConfigError("seed_overrides: unknown substream \"" + key + "\"");
        cfg.seed_overrides[key] = value.get<std::uint64_t>();
    }
    const std::string mode = field<std::string>(merged, "mode", "mode");
    if (mode == "protocol")
        cfg.mode = sim::Mode::Protocol;
    else if (mode == "vanilla")
        cfg.mode = sim::Mode::VanillaFL;
    else
        throw ConfigError("mode must be \"protocol\" or \"vanilla\"");

    sim::validate(cfg);
    return cfg;
}

sim::ExperimentConfig parse_config(const std::string& path,
                                   const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    json parsed = json::object();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
        try {
            parsed = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
        }
    }
    return config_from_json(parsed, overrides);
}

}  // namespace vfl::cli
