#include <doctest.h>

#include <cmath>

#include "vfl/learner.hpp"
#include "vfl/rng.hpp"

using namespace vfl;
using namespace vfl::learner;
using vfl::data::Dataset;
using vfl::data::DatasetView;

namespace {

Dataset balanced_dataset(int classes, int dim, int per_class, double spread, std::uint64_t seed) {
    return data::synthetic_dataset(classes, dim, per_class, spread, seed);
}

}  // namespace

TEST_CASE("mlp 784-128-10 has 101770 parameters") {
    const std::size_t expected = 784 * 128 + 128 + 128 * 10 + 10;  // arithmetic oracle
    CHECK(param_count(Architecture::mlp(784, {128}, 10)) == expected);
    CHECK(expected == 101770);
}

TEST_CASE("init_params is deterministic with zero biases") {
    const Architecture arch = Architecture::mlp(20, {8}, 4);
    const ModelParams a = init_params(arch, 3);
    const ModelParams b = init_params(arch, 3);
    CHECK(a.values == b.values);
    const ModelParams c = init_params(arch, 4);
    CHECK(a.values != c.values);

    // canonical layout: W1 (20*8), b1 (8), W2 (8*4), b2 (4)
    for (int i = 0; i < 8; ++i) CHECK(a.values[20 * 8 + i] == 0.0);
    for (int i = 0; i < 4; ++i) CHECK(a.values[20 * 8 + 8 + 8 * 4 + i] == 0.0);

    const double limit = std::sqrt(6.0 / 20);
    for (int i = 0; i < 20 * 8; ++i) CHECK(std::fabs(a.values[i]) <= limit);
}

TEST_CASE("cnn init also zeroes biases and respects the layout") {
    Architecture arch = Architecture::cnn(10, 10, 3);
    arch.conv1_channels = 4;
    arch.conv2_channels = 6;
    const ModelParams p = init_params(arch, 7);
    CHECK(p.values.size() == param_count(arch));
    // conv1 biases live right after the 4*1*2*2 kernel block
    for (int i = 0; i < 4; ++i) CHECK(p.values[16 + i] == 0.0);
}

TEST_CASE("train_local with zero learning rate returns the start bit-exactly") {
    const Architecture arch = Architecture::mlp(6, {5}, 3);
    const ModelParams start = init_params(arch, 11);
    const Dataset d = balanced_dataset(3, 6, 10, 0.3, 21);
    const ModelParams out = train_local(start, DatasetView::whole(d),
                                        {.epochs = 3, .learning_rate = 0.0, .batch_size = 4}, 9);
    CHECK(out.values == start.values);
}

TEST_CASE("train_local overfits a single example") {
    const Architecture arch = Architecture::mlp(8, {16}, 4);
    const ModelParams start = init_params(arch, 2);
    Dataset one;
    one.num_classes = 4;
    one.examples.push_back({{0.9, 0.1, 0.4, 0.0, 0.7, 0.2, 0.5, 1.0}, 2});
    const ModelParams out = train_local(start, DatasetView::whole(one),
                                        {.epochs = 200, .learning_rate = 0.1, .batch_size = 1}, 5);
    CHECK(evaluate(out, DatasetView::whole(one)).accuracy == 1.0);
}

TEST_CASE("one epoch of sgd reduces the loss on a 100-example shard") {
    const Architecture arch = Architecture::mlp(12, {10}, 4);
    const ModelParams start = init_params(arch, 4);
    const Dataset d = balanced_dataset(4, 12, 25, 0.3, 33);
    const double loss_before = mean_loss(start, DatasetView::whole(d));
    const ModelParams out = train_local(start, DatasetView::whole(d),
                                        {.epochs = 1, .learning_rate = 0.05, .batch_size = 10}, 6);
    const double loss_after = mean_loss(out, DatasetView::whole(d));
    CHECK(loss_after < loss_before);
}

TEST_CASE("train_local is deterministic and does not mutate its input") {
    const Architecture arch = Architecture::mlp(10, {6}, 3);
    const ModelParams start = init_params(arch, 8);
    const std::vector<double> start_copy = start.values;
    const Dataset d = balanced_dataset(3, 10, 15, 0.4, 44);
    const TrainConfig cfg{.epochs = 2, .learning_rate = 0.05, .batch_size = 7};
    const ModelParams a = train_local(start, DatasetView::whole(d), cfg, 123);
    const ModelParams b = train_local(start, DatasetView::whole(d), cfg, 123);
    CHECK(a.values == b.values);
    CHECK(start.values == start_copy);
    const ModelParams c = train_local(start, DatasetView::whole(d), cfg, 124);
    CHECK(a.values != c.values);
}

TEST_CASE("train_local reports divergence with the epoch and batch index") {
    const Architecture arch = Architecture::mlp(6, {4}, 2);
    ModelParams start = init_params(arch, 1);
    // finite start whose first forward pass overflows: a huge first hidden
    // row meets mixed-sign readout weights, so the logits become inf - inf
    for (int i = 0; i < 6; ++i) start.values[static_cast<std::size_t>(i)] = 1e308;
    const std::size_t w2_off = 6 * 4 + 4;
    start.values[w2_off + 0] = 1.0;   // class 0 <- hidden 0
    start.values[w2_off + 4] = -1.0;  // class 1 <- hidden 0

    Dataset ones;
    ones.num_classes = 2;
    for (int i = 0; i < 8; ++i) ones.examples.push_back({{1, 1, 1, 1, 1, 1}, 1});

    try {
        train_local(start, DatasetView::whole(ones),
                    {.epochs = 2, .learning_rate = 0.1, .batch_size = 4}, 3);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(e.epoch == 0);
        CHECK(e.batch == 0);
    }
}

TEST_CASE("evaluate forced predictions and tie-breaking") {
    const Architecture arch = Architecture::mlp(4, {}, 10);
    ModelParams zero;
    zero.arch = arch;
    zero.values.assign(param_count(arch), 0.0);  // all logits equal -> class 0

    Dataset all_zero;
    all_zero.num_classes = 10;
    for (int i = 0; i < 7; ++i) all_zero.examples.push_back({{0.1, 0.2, 0.3, 0.4}, 0});
    CHECK(evaluate(zero, DatasetView::whole(all_zero)).accuracy == 1.0);

    Dataset balanced;
    balanced.num_classes = 10;
    for (int c = 0; c < 10; ++c)
        for (int i = 0; i < 3; ++i)
            balanced.examples.push_back({{0.5, 0.5, 0.5, 0.5}, c});
    const EvalResult r = evaluate(zero, DatasetView::whole(balanced));
    CHECK(r.accuracy == doctest::Approx(0.1));
    CHECK(r.num_correct == 3);
    CHECK(r.num_total == 30);
}

TEST_CASE("evaluate rejects mismatched feature lengths and empty sets") {
    const Architecture arch = Architecture::mlp(4, {}, 2);
    ModelParams p = init_params(arch, 1);
    Dataset wrong;
    wrong.num_classes = 2;
    wrong.examples.push_back({{0.1, 0.2, 0.3}, 0});
    CHECK_THROWS_AS(evaluate(p, DatasetView::whole(wrong)), std::invalid_argument);
    Dataset empty;
    CHECK_THROWS_AS(evaluate(p, DatasetView::whole(empty)), std::invalid_argument);
}

TEST_CASE("softmax outputs sum to one within 1e-12") {
    Rng rng(55);
    const Architecture mlp = Architecture::mlp(9, {7}, 5);
    Architecture cnn = Architecture::cnn(10, 10, 4);
    cnn.conv1_channels = 3;
    cnn.conv2_channels = 5;
    for (const Architecture& arch : {mlp, cnn}) {
        const ModelParams p = init_params(arch, rng.next_u64());
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> x(static_cast<std::size_t>(arch.input_dim));
            for (double& v : x) v = rng.uniform01();
            const std::vector<double> probs = predict_probabilities(p, x);
            double sum = 0.0;
            for (double q : probs) {
                CHECK(q >= 0.0);
                sum += q;
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-12);
        }
    }
}

namespace {

ModelParams tiny_params(std::initializer_list<double> values) {
    // mlp(1, {}, 1) carries exactly two parameters (one weight, one bias)
    ModelParams p;
    p.arch = Architecture::mlp(1, {}, 1);
    p.values = values;
    return p;
}

}  // namespace

TEST_CASE("fedavg equal-weight mean, identity, and weighted oracle") {
    const ModelParams mean =
        fedavg({{tiny_params({0.0, 0.0}), 5}, {tiny_params({2.0, 2.0}), 5}});
    CHECK(mean.values == std::vector<double>{1.0, 1.0});

    const ModelParams single = fedavg({{tiny_params({0.25, -3.5}), 4}});
    CHECK(single.values == std::vector<double>{0.25, -3.5});

    // (1*0 + 3*3) / 4 = 2.25
    const ModelParams weighted =
        fedavg({{tiny_params({0.0, 0.0}), 1}, {tiny_params({3.0, 3.0}), 3}});
    CHECK(weighted.values[0] == doctest::Approx(2.25).epsilon(1e-15));
    CHECK(weighted.values[1] == doctest::Approx(2.25).epsilon(1e-15));
}

TEST_CASE("fedavg rejects empty lists, bad counts, and mixed architectures") {
    CHECK_THROWS_AS(fedavg({}), std::invalid_argument);
    CHECK_THROWS_AS(fedavg({{tiny_params({1, 1}), 0}}), std::invalid_argument);
    ModelParams other;
    other.arch = Architecture::mlp(1, {}, 2);
    other.values = {1, 1, 1, 1};
    CHECK_THROWS_AS(fedavg({{tiny_params({1, 1}), 1}, {other, 1}}), std::invalid_argument);
}

TEST_CASE("fedavg is exactly permutation-invariant and exact on equal inputs") {
    Rng rng(66);
    const Architecture arch = Architecture::mlp(5, {4}, 3);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::pair<ModelParams, int>> updates;
        const int k = 2 + static_cast<int>(rng.uniform_below(6));
        for (int i = 0; i < k; ++i)
            updates.emplace_back(init_params(arch, rng.next_u64()),
                                 1 + static_cast<int>(rng.uniform_below(50)));
        const ModelParams forward = fedavg(updates);

        std::vector<std::pair<ModelParams, int>> shuffled = updates;
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.uniform_below(i)]);
        CHECK(fedavg(shuffled).values == forward.values);
    }

    const ModelParams same = init_params(arch, 5);
    const ModelParams avg = fedavg({{same, 3}, {same, 3}, {same, 3}});
    CHECK(avg.values == same.values);  // exact, not approximate
}

TEST_CASE("fedavg matches an independently coded weighted-mean oracle") {
    Rng rng(77);
    const Architecture arch = Architecture::mlp(6, {5}, 3);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<std::pair<ModelParams, int>> updates;
        const int k = 1 + static_cast<int>(rng.uniform_below(8));
        for (int i = 0; i < k; ++i)
            updates.emplace_back(init_params(arch, rng.next_u64()),
                                 1 + static_cast<int>(rng.uniform_below(100)));

        // oracle: numerator/denominator form in long double, input order
        long double total = 0.0L;
        for (const auto& [p, n] : updates) total += n;
        const ModelParams result = fedavg(updates);
        for (std::size_t j = 0; j < result.values.size(); ++j) {
            long double acc = 0.0L;
            for (const auto& [p, n] : updates)
                acc += static_cast<long double>(n) * static_cast<long double>(p.values[j]);
            CHECK(std::fabs(result.values[j] - static_cast<double>(acc / total)) <= 1e-12);
        }
    }
}

TEST_CASE("uniform weighting ignores sample counts") {
    const ModelParams mean = fedavg({{tiny_params({0.0, 0.0}), 1}, {tiny_params({3.0, 3.0}), 99}},
                                    Weighting::Uniform);
    CHECK(mean.values[0] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("gradcheck stays under 1e-4 for mlp and cnn at unit scale") {
    const Architecture mlp = Architecture::mlp(20, {16}, 5);
    CHECK(grad_check(mlp, 1e-5, 42) < 1e-4);

    Architecture cnn = Architecture::cnn(10, 10, 4);
    cnn.conv1_channels = 4;
    cnn.conv2_channels = 6;
    CHECK(grad_check(cnn, 1e-5, 42) < 1e-4);

    // the bound holds regardless of which seed-fixed subset is probed
    CHECK(grad_check(mlp, 1e-5, 43) < 1e-4);
    CHECK_THROWS_AS(grad_check(mlp, 0.0, 1), std::invalid_argument);
}

TEST_CASE("model params encode/decode roundtrip is bit-exact") {
    const Architecture arch = Architecture::mlp(7, {5}, 3);
    const ModelParams p = init_params(arch, 19);
    Encoder enc;
    encode(enc, p);
    Decoder dec(enc.bytes());
    const ModelParams back = decode_model_params(dec);
    CHECK(back.arch == p.arch);
    CHECK(back.values == p.values);
    CHECK(dec.exhausted());
}
