#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vfl/dataset.hpp"
#include "vfl/encode.hpp"

namespace vfl::learner {

enum class ArchKind : std::uint8_t { Mlp = 0, Cnn = 1 };

// MLP: dense+ReLU stacks ending in a softmax readout; an empty hidden list
// is a plain linear classifier. CNN: conv(k2,s1) -> ReLU -> maxpool(2,s2),
// twice, then a dense softmax readout.
struct Architecture {
    ArchKind kind = ArchKind::Mlp;
    int input_dim = 784;
    int num_classes = 10;
    std::vector<int> hidden = {128};  // MLP only

    // CNN shape; input_dim must equal image_h * image_w.
    int image_h = 28;
    int image_w = 28;
    int conv1_channels = 16;
    int conv2_channels = 32;

    bool operator==(const Architecture&) const = default;

    static Architecture mlp(int input_dim, std::vector<int> hidden, int num_classes);
    static Architecture cnn(int image_h, int image_w, int num_classes);
};

std::size_t param_count(const Architecture& arch);

void encode(Encoder& enc, const Architecture& arch);
Architecture decode_architecture(Decoder& dec);

// Flat parameter vector in canonical layer order (per layer: weights
// row-major, then biases).
struct ModelParams {
    Architecture arch;
    std::vector<double> values;

    bool operator==(const ModelParams&) const = default;
};

void encode(Encoder& enc, const ModelParams& params);
ModelParams decode_model_params(Decoder& dec);

struct TrainConfig {
    int epochs = 5;
    double learning_rate = 0.01;
    int batch_size = 10;
};

struct EvalResult {
    double accuracy = 0.0;
    int num_correct = 0;
    int num_total = 0;
};

class TrainingError : public std::runtime_error {
  public:
    TrainingError(int epoch, int batch, const std::string& what)
        : std::runtime_error(what), epoch(epoch), batch(batch) {}

    int epoch;
    int batch;
};

// Scaled-uniform fan-in weights, zero biases; deterministic per seed.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

// Mini-batch SGD with cross-entropy loss and per-epoch shuffling from seed.
// The starting params are not mutated. Throws TrainingError on divergence.
ModelParams train_local(const ModelParams& start, const data::DatasetView& shard,
                        const TrainConfig& cfg, std::uint64_t seed);

// Argmax-of-softmax prediction; ties break toward the lowest class index.
EvalResult evaluate(const ModelParams& params, const data::DatasetView& test);

double mean_loss(const ModelParams& params, const data::DatasetView& over);

// Softmax output for one example; exposed for property checks.
std::vector<double> predict_probabilities(const ModelParams& params,
                                          const std::vector<double>& features);

enum class Weighting { BySamples, Uniform };

// Element-wise weighted mean, weight_i = n_i / sum(n). Inputs are combined
// in a canonical order so the result is independent of list order.
ModelParams fedavg(const std::vector<std::pair<ModelParams, int>>& updates,
                   Weighting weighting = Weighting::BySamples);

// Compares backprop gradients against central finite differences over a
// seed-fixed subset of at least 200 parameters; returns max relative error.
double grad_check(const Architecture& arch, double eps, std::uint64_t seed);

}  // namespace vfl::learner
