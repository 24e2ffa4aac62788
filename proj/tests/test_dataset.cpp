#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "vfl/dataset.hpp"
#include "vfl/learner.hpp"
#include "vfl/rng.hpp"

using namespace vfl;
using namespace vfl::data;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "vfl-dataset-tests";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void put_be32(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const fs::path& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

// Hand-built IDX fixture, independent of the module's writer.
struct RawFixture {
    Bytes image_bytes, label_bytes;
    std::vector<std::vector<std::uint8_t>> pixels;  // per example
    std::vector<int> labels;
};

RawFixture make_fixture(int count, int rows, int cols, std::uint64_t seed,
                        std::uint32_t image_magic = 2051, std::uint32_t label_magic = 2049) {
    RawFixture f;
    Rng rng(seed);
    put_be32(f.image_bytes, image_magic);
    put_be32(f.image_bytes, static_cast<std::uint32_t>(count));
    put_be32(f.image_bytes, static_cast<std::uint32_t>(rows));
    put_be32(f.image_bytes, static_cast<std::uint32_t>(cols));
    put_be32(f.label_bytes, label_magic);
    put_be32(f.label_bytes, static_cast<std::uint32_t>(count));
    for (int i = 0; i < count; ++i) {
        std::vector<std::uint8_t> img(static_cast<std::size_t>(rows * cols));
        for (auto& b : img) b = static_cast<std::uint8_t>(rng.uniform_below(256));
        f.image_bytes.insert(f.image_bytes.end(), img.begin(), img.end());
        const int label = static_cast<int>(rng.uniform_below(10));
        f.label_bytes.push_back(static_cast<std::uint8_t>(label));
        f.pixels.push_back(std::move(img));
        f.labels.push_back(label);
    }
    return f;
}

// Minimal reference reader: raw ifstream byte walk, no shared code with the
// loader under test.
struct RefExample {
    std::vector<std::uint8_t> pixels;
    int label;
};

std::vector<RefExample> reference_read(const fs::path& images, const fs::path& labels,
                                       std::size_t limit) {
    std::ifstream img(images, std::ios::binary), lab(labels, std::ios::binary);
    auto rd32 = [](std::ifstream& in) {
        int a = in.get(), b = in.get(), c = in.get(), d = in.get();
        return (std::uint32_t(a) << 24) | (std::uint32_t(b) << 16) | (std::uint32_t(c) << 8) |
               std::uint32_t(d);
    };
    REQUIRE(rd32(img) == 2051u);
    const std::uint32_t n = rd32(img);
    const std::uint32_t rows = rd32(img), cols = rd32(img);
    REQUIRE(rd32(lab) == 2049u);
    REQUIRE(rd32(lab) == n);
    std::vector<RefExample> out;
    for (std::size_t i = 0; i < std::min<std::size_t>(n, limit); ++i) {
        RefExample ex;
        ex.pixels.resize(std::size_t(rows) * cols);
        for (auto& p : ex.pixels) p = static_cast<std::uint8_t>(img.get());
        ex.label = lab.get();
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

TEST_CASE("idx loader accepts magic 2051/2049 and scales pixels by 255") {
    RawFixture f = make_fixture(6, 4, 3, 11);
    f.image_bytes[16] = 255;  // first pixel of first image
    f.image_bytes[17] = 0;
    const fs::path imgs = temp_dir() / "ok-images", labs = temp_dir() / "ok-labels";
    write_bytes(imgs, f.image_bytes);
    write_bytes(labs, f.label_bytes);

    const Dataset d = load_idx_pair(imgs.string(), labs.string());
    CHECK(d.size() == 6);
    CHECK(d.feature_dim() == 12);
    CHECK(d.examples[0].features[0] == 1.0);
    CHECK(d.examples[0].features[1] == 0.0);
    for (const auto& ex : d.examples)
        for (double v : ex.features) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("idx loader rejects a wrong image magic and names the file") {
    const RawFixture f = make_fixture(3, 2, 2, 12, /*image_magic=*/2052);
    const fs::path imgs = temp_dir() / "badmagic-images", labs = temp_dir() / "badmagic-labels";
    write_bytes(imgs, f.image_bytes);
    write_bytes(labs, f.label_bytes);
    try {
        load_idx_pair(imgs.string(), labs.string());
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(e.kind == DatasetError::Kind::BadMagic);
        CHECK(std::string(e.what()).find("badmagic-images") != std::string::npos);
    }
}

TEST_CASE("idx loader reports count mismatches and truncation distinctly") {
    RawFixture f = make_fixture(5, 2, 2, 13);
    // label header claims 6
    f.label_bytes[7] = 6;
    f.label_bytes.push_back(0);
    const fs::path imgs = temp_dir() / "mismatch-images", labs = temp_dir() / "mismatch-labels";
    write_bytes(imgs, f.image_bytes);
    write_bytes(labs, f.label_bytes);
    try {
        load_idx_pair(imgs.string(), labs.string());
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(e.kind == DatasetError::Kind::CountMismatch);
    }

    RawFixture t = make_fixture(5, 2, 2, 14);
    t.image_bytes.resize(t.image_bytes.size() - 3);
    const fs::path timgs = temp_dir() / "trunc-images", tlabs = temp_dir() / "trunc-labels";
    write_bytes(timgs, t.image_bytes);
    write_bytes(tlabs, t.label_bytes);
    try {
        load_idx_pair(timgs.string(), tlabs.string());
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(e.kind == DatasetError::Kind::Truncated);
        CHECK(std::string(e.what()).find("trunc-images") != std::string::npos);
    }
}

TEST_CASE("idx loader agrees with an independent byte-level reader on a 100-image prefix") {
    const RawFixture f = make_fixture(120, 5, 4, 15);
    const fs::path imgs = temp_dir() / "ref-images", labs = temp_dir() / "ref-labels";
    write_bytes(imgs, f.image_bytes);
    write_bytes(labs, f.label_bytes);

    const Dataset d = load_idx_pair(imgs.string(), labs.string());
    const std::vector<RefExample> ref = reference_read(imgs, labs, 100);
    REQUIRE(d.size() >= 100);
    REQUIRE(ref.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(d.examples[i].label == ref[i].label);
        for (std::size_t p = 0; p < ref[i].pixels.size(); ++p)
            CHECK(d.examples[i].features[p] == ref[i].pixels[p] / 255.0);
    }
}

TEST_CASE("mnist train/test files hold 60000/10000 examples when present") {
    const char* dir = std::getenv("MNIST_DIR");
    if (!dir || !*dir) {
        MESSAGE("MNIST_DIR not set; skipping real-file check");
        return;
    }
    const fs::path root(dir);
    const Dataset train = load_idx_pair((root / "train-images-idx3-ubyte").string(),
                                        (root / "train-labels-idx1-ubyte").string());
    const Dataset test = load_idx_pair((root / "t10k-images-idx3-ubyte").string(),
                                       (root / "t10k-labels-idx1-ubyte").string());
    CHECK(train.size() == 60000);
    CHECK(test.size() == 10000);
    CHECK(train.feature_dim() == 784);
}

TEST_CASE("save/load roundtrip preserves labels and quantized features") {
    const Dataset d = synthetic_dataset(3, 6, 4, 0.4, 99);
    const fs::path imgs = temp_dir() / "rt-images", labs = temp_dir() / "rt-labels";
    save_idx_pair(d, 2, 3, imgs.string(), labs.string());
    const Dataset back = load_idx_pair(imgs.string(), labs.string());
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back.examples[i].label == d.examples[i].label);
        for (std::size_t p = 0; p < d.feature_dim(); ++p)
            CHECK(std::abs(back.examples[i].features[p] - d.examples[i].features[p]) <=
                  0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("one_hot definition and properties") {
    CHECK(one_hot(3, 10) == std::vector<double>{0, 0, 0, 1, 0, 0, 0, 0, 0, 0});
    CHECK(one_hot(0, 2) == std::vector<double>{1, 0});
    CHECK_THROWS_AS(one_hot(5, 5), std::invalid_argument);
    CHECK_THROWS_AS(one_hot(-1, 5), std::invalid_argument);

    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_below(20));
        const int l = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(c)));
        const std::vector<double> v = one_hot(l, c);
        double sum = 0.0;
        int nonzero = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            sum += v[i];
            if (v[i] != 0.0) {
                ++nonzero;
                CHECK(i == static_cast<std::size_t>(l));
            }
        }
        CHECK(sum == 1.0);
        CHECK(nonzero == 1);
    }
}

namespace {
std::vector<identity::VehicleId> synthetic_ids(int n) {
    std::vector<identity::VehicleId> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)].bytes[0] = static_cast<std::uint8_t>(i);
    return ids;
}

Dataset tiny_dataset(std::size_t n) {
    Dataset d;
    d.num_classes = 2;
    d.examples.resize(n);
    for (auto& ex : d.examples) ex.features = {0.0};
    return d;
}
}  // namespace

TEST_CASE("shard_round splits 60000 over 20 vehicles into shards of 3000") {
    const Dataset d = tiny_dataset(60000);
    const auto ids = synthetic_ids(20);
    const ShardAssignment a = shard_round(d, ids, 1, 5);
    REQUIRE(a.shards.size() == 20);
    for (const auto& [id, shard] : a.shards) CHECK(shard.size() == 3000);
}

TEST_CASE("shard_round with a single vehicle returns the full index set") {
    const Dataset d = tiny_dataset(17);
    const auto ids = synthetic_ids(1);
    const ShardAssignment a = shard_round(d, ids, 3, 5);
    REQUIRE(a.shards.size() == 1);
    std::set<std::uint32_t> seen(a.shards.begin()->second.begin(),
                                 a.shards.begin()->second.end());
    CHECK(seen.size() == 17);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 16);
}

TEST_CASE("shard_round is deterministic per (round, seed) and reshuffles per round") {
    const Dataset d = tiny_dataset(100);
    const auto ids = synthetic_ids(4);
    const ShardAssignment a = shard_round(d, ids, 2, 77);
    const ShardAssignment b = shard_round(d, ids, 2, 77);
    CHECK(a.shards == b.shards);
    const ShardAssignment c = shard_round(d, ids, 3, 77);
    CHECK(a.shards != c.shards);
}

TEST_CASE("shard_round rejects an empty dataset") {
    Dataset empty;
    empty.num_classes = 2;
    CHECK_THROWS_AS(shard_round(empty, synthetic_ids(2), 1, 1), std::invalid_argument);
}

TEST_CASE("property: shards are disjoint, cover everything, sizes within 1") {
    Rng rng(31337);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 1 + rng.uniform_below(500);
        const int k = 1 + static_cast<int>(rng.uniform_below(12));
        const Dataset d = tiny_dataset(n);
        const ShardAssignment a =
            shard_round(d, synthetic_ids(k), static_cast<int>(rng.uniform_below(50)),
                        rng.next_u64());

        std::set<std::uint32_t> all;
        std::size_t min_size = n + 1, max_size = 0, total = 0;
        for (const auto& [id, shard] : a.shards) {
            for (std::uint32_t idx : shard) CHECK(all.insert(idx).second);  // disjoint
            min_size = std::min(min_size, shard.size());
            max_size = std::max(max_size, shard.size());
            total += shard.size();
        }
        CHECK(total == n);                 // coverage
        CHECK(max_size - min_size <= 1);   // near-equal
        CHECK(all.size() == n);
        if (!all.empty()) CHECK(*all.rbegin() == n - 1);
    }
}

TEST_CASE("synthetic dataset: counts, clipping, and determinism") {
    const Dataset d = synthetic_dataset(3, 8, 5, 0.5, 123);
    CHECK(d.size() == 15);
    CHECK(d.num_classes == 3);
    for (const auto& ex : d.examples)
        for (double v : ex.features) CHECK((v >= 0.0 && v <= 1.0));

    const Dataset d2 = synthetic_dataset(3, 8, 5, 0.5, 123);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.examples[i].label == d2.examples[i].label);
        CHECK(d.examples[i].features == d2.examples[i].features);
    }
    CHECK_THROWS_AS(synthetic_dataset(3, 8, 5, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(synthetic_dataset(0, 8, 5, 0.1, 1), std::invalid_argument);
}

TEST_CASE("synthetic dataset in the spread->0 limit is linearly separable") {
    // oracle: a linear classifier trained on near-zero-spread blobs is exact
    const Dataset train = synthetic_dataset(4, 12, 30, 1e-4, 5);
    const Dataset test = synthetic_dataset(4, 12, 10, 1e-4, 6);
    const auto arch = learner::Architecture::mlp(12, {}, 4);
    learner::ModelParams params = learner::init_params(arch, 1);
    params = learner::train_local(params, DatasetView::whole(train),
                                  {.epochs = 40, .learning_rate = 0.5, .batch_size = 10}, 2);
    CHECK(learner::evaluate(params, DatasetView::whole(test)).accuracy == 1.0);
}
