#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vfl/identity.hpp"

namespace vfl::data {

struct LabeledExample {
    std::vector<double> features;  // all in [0, 1]
    int label = 0;                 // in [0, num_classes)
};

struct Dataset {
    std::vector<LabeledExample> examples;
    int num_classes = 0;

    std::size_t size() const { return examples.size(); }
    std::size_t feature_dim() const { return examples.empty() ? 0 : examples[0].features.size(); }
};

// A non-owning slice of a Dataset through an index list.
struct DatasetView {
    const Dataset* base = nullptr;
    std::vector<std::uint32_t> indices;

    static DatasetView whole(const Dataset& d);

    std::size_t size() const { return indices.size(); }
    const LabeledExample& example(std::size_t i) const {
        return base->examples[indices[i]];
    }
    int num_classes() const { return base->num_classes; }
};

struct ShardAssignment {
    int round = 0;
    std::map<identity::VehicleId, std::vector<std::uint32_t>> shards;
};

class DatasetError : public std::runtime_error {
  public:
    enum class Kind { BadMagic, Truncated, CountMismatch, Io };

    DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}

    Kind kind;
};

// Reads an IDX image/label file pair (big-endian, image magic 2051, label
// magic 2049). Pixel bytes are scaled to [0,1] by division by 255.
Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path);

// Writes a dataset back out as an IDX pair; features are quantized to bytes
// by round(v * 255). Image files use rows x cols dimensions.
void save_idx_pair(const Dataset& d, int rows, int cols, const std::string& images_path,
                   const std::string& labels_path);

std::vector<double> one_hot(int label, int num_classes);

// Splits a fresh uniform permutation of the training indices into
// |vehicle_ids| near-equal disjoint shards; reshuffled every round.
ShardAssignment shard_round(const Dataset& train,
                            const std::vector<identity::VehicleId>& vehicle_ids, int round,
                            std::uint64_t rng_seed);

// Gaussian blobs, one mean per class on the unit simplex corners, clipped to
// [0,1]^dim. Fast test substitute for file-backed data.
Dataset synthetic_dataset(int num_classes, int dim, int per_class, double spread,
                          std::uint64_t seed);

}  // namespace vfl::data
