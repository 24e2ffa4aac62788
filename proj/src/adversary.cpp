#include "vfl/adversary.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vfl/rng.hpp"

namespace vfl::adversary {

learner::ModelParams corrupt_update(const learner::ModelParams& update, double sigma,
                                    std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("corrupt_update: sigma must be >= 0");
    learner::ModelParams out = update;
    if (sigma == 0.0) return out;
    Rng rng(derive_seed(seed, "corrupt"));
    for (double& v : out.values) v += rng.normal(0.0, sigma);
    return out;
}

data::Dataset flip_labels(const data::DatasetView& shard, double fraction, int num_classes,
                          std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("flip_labels: fraction must be in [0, 1]");

    data::Dataset out;
    out.num_classes = num_classes;
    out.examples.reserve(shard.size());
    for (std::size_t i = 0; i < shard.size(); ++i) out.examples.push_back(shard.example(i));

    const auto flip_count =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(shard.size())));
    if (flip_count == 0) return out;

    Rng rng(derive_seed(seed, "label-flip"));
    std::vector<std::uint32_t> order(out.examples.size());
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = 0; i < flip_count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(order.size() - i));
        std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < flip_count; ++i) {
        data::LabeledExample& ex = out.examples[order[i]];
        // uniform over the other num_classes - 1 labels
        const auto shift =
            1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(num_classes - 1)));
        ex.label = (ex.label + shift) % num_classes;
    }
    return out;
}

}  // namespace vfl::adversary
