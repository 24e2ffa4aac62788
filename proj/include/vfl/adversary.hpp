#pragma once

#include <cstdint>

#include "vfl/dataset.hpp"
#include "vfl/learner.hpp"

namespace vfl::adversary {

// Behaviors a malicious vehicle may exhibit per role. With an all-zero/false
// profile the vehicle is indistinguishable from an honest one.
struct MaliciousProfile {
    double noise_sigma = 0.0;           // additive Gaussian parameter noise
    double label_flip_fraction = 0.0;   // fraction of shard labels replaced
    bool malicious_as_validator = false;  // vote inversion
    bool malicious_as_miner = false;      // inflate own block's vote header
};

// Adds independent Gaussian(0, sigma^2) noise to each parameter.
learner::ModelParams corrupt_update(const learner::ModelParams& update, double sigma,
                                    std::uint64_t seed);

// Replaces floor(fraction * n) uniformly chosen labels with a uniform
// different class; features are untouched.
data::Dataset flip_labels(const data::DatasetView& shard, double fraction, int num_classes,
                          std::uint64_t seed);

}  // namespace vfl::adversary
