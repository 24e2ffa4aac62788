#include "vfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vfl/rng.hpp"

namespace vfl::data {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
    std::uint8_t raw[4];
    if (!in.read(reinterpret_cast<char*>(raw), 4))
        throw DatasetError(DatasetError::Kind::Truncated, "truncated IDX header in " + path);
    return (std::uint32_t(raw[0]) << 24) | (std::uint32_t(raw[1]) << 16) |
           (std::uint32_t(raw[2]) << 8) | std::uint32_t(raw[3]);
}

void write_u32_be(std::ofstream& out, std::uint32_t v) {
    const std::uint8_t raw[4] = {static_cast<std::uint8_t>(v >> 24),
                                 static_cast<std::uint8_t>(v >> 16),
                                 static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(raw), 4);
}

}  // namespace

DatasetView DatasetView::whole(const Dataset& d) {
    DatasetView v;
    v.base = &d;
    v.indices.resize(d.size());
    std::iota(v.indices.begin(), v.indices.end(), 0u);
    return v;
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DatasetError(DatasetError::Kind::Io, "cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DatasetError(DatasetError::Kind::Io, "cannot open " + labels_path);

    const std::uint32_t img_magic = read_u32_be(img, images_path);
    if (img_magic != kImageMagic)
        throw DatasetError(DatasetError::Kind::BadMagic,
                           "bad image magic " + std::to_string(img_magic) + " in " + images_path);
    const std::uint32_t lab_magic = read_u32_be(lab, labels_path);
    if (lab_magic != kLabelMagic)
        throw DatasetError(DatasetError::Kind::BadMagic,
                           "bad label magic " + std::to_string(lab_magic) + " in " + labels_path);

    const std::uint32_t n_images = read_u32_be(img, images_path);
    const std::uint32_t rows = read_u32_be(img, images_path);
    const std::uint32_t cols = read_u32_be(img, images_path);
    const std::uint32_t n_labels = read_u32_be(lab, labels_path);
    if (n_images != n_labels)
        throw DatasetError(DatasetError::Kind::CountMismatch,
                           images_path + " holds " + std::to_string(n_images) + " images but " +
                               labels_path + " holds " + std::to_string(n_labels) + " labels");

    const std::size_t dim = std::size_t(rows) * cols;
    std::vector<std::uint8_t> pixel_buf(dim);

    Dataset out;
    out.examples.resize(n_images);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_buf.data()),
                      static_cast<std::streamsize>(dim)))
            throw DatasetError(DatasetError::Kind::Truncated,
                               "truncated image data in " + images_path);
        char label_byte;
        if (!lab.get(label_byte))
            throw DatasetError(DatasetError::Kind::Truncated,
                               "truncated label data in " + labels_path);

        LabeledExample& ex = out.examples[i];
        ex.features.resize(dim);
        for (std::size_t p = 0; p < dim; ++p) ex.features[p] = pixel_buf[p] / 255.0;
        ex.label = static_cast<std::uint8_t>(label_byte);
        max_label = std::max(max_label, ex.label);
    }
    out.num_classes = max_label + 1;
    return out;
}

void save_idx_pair(const Dataset& d, int rows, int cols, const std::string& images_path,
                   const std::string& labels_path) {
    if (d.feature_dim() != std::size_t(rows) * std::size_t(cols))
        throw DatasetError(DatasetError::Kind::CountMismatch,
                           "feature dim does not match rows*cols for " + images_path);

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw DatasetError(DatasetError::Kind::Io, "cannot write " + images_path);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw DatasetError(DatasetError::Kind::Io, "cannot write " + labels_path);

    write_u32_be(img, kImageMagic);
    write_u32_be(img, static_cast<std::uint32_t>(d.size()));
    write_u32_be(img, static_cast<std::uint32_t>(rows));
    write_u32_be(img, static_cast<std::uint32_t>(cols));
    write_u32_be(lab, kLabelMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(d.size()));

    std::vector<std::uint8_t> pixel_buf(d.feature_dim());
    for (const LabeledExample& ex : d.examples) {
        for (std::size_t p = 0; p < pixel_buf.size(); ++p)
            pixel_buf[p] = static_cast<std::uint8_t>(std::lround(ex.features[p] * 255.0));
        img.write(reinterpret_cast<const char*>(pixel_buf.data()),
                  static_cast<std::streamsize>(pixel_buf.size()));
        lab.put(static_cast<char>(ex.label));
    }
}

std::vector<double> one_hot(int label, int num_classes) {
    if (label < 0 || label >= num_classes)
        throw std::invalid_argument("one_hot: label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
    std::vector<double> v(static_cast<std::size_t>(num_classes), 0.0);
    v[static_cast<std::size_t>(label)] = 1.0;
    return v;
}

ShardAssignment shard_round(const Dataset& train, const std::vector<identity::VehicleId>& vehicle_ids,
                            int round, std::uint64_t rng_seed) {
    if (train.size() == 0) throw std::invalid_argument("shard_round: empty dataset");
    if (vehicle_ids.empty()) throw std::invalid_argument("shard_round: no vehicles");

    std::vector<std::uint32_t> perm(train.size());
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng(derive_seed(rng_seed, "shard", static_cast<std::uint64_t>(round)));
    rng.shuffle(std::span<std::uint32_t>(perm));

    const std::size_t k = vehicle_ids.size();
    const std::size_t base = train.size() / k;
    const std::size_t extra = train.size() % k;

    ShardAssignment out;
    out.round = round;
    std::size_t pos = 0;
    for (std::size_t v = 0; v < k; ++v) {
        const std::size_t take = base + (v < extra ? 1 : 0);
        out.shards[vehicle_ids[v]] =
            std::vector<std::uint32_t>(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                                       perm.begin() + static_cast<std::ptrdiff_t>(pos + take));
        pos += take;
    }
    return out;
}

Dataset synthetic_dataset(int num_classes, int dim, int per_class, double spread,
                          std::uint64_t seed) {
    if (num_classes < 1 || dim < 1 || per_class < 1)
        throw std::invalid_argument("synthetic_dataset: all sizes must be >= 1");
    if (spread <= 0.0) throw std::invalid_argument("synthetic_dataset: spread must be > 0");

    Rng rng(derive_seed(seed, "synthetic"));
    Dataset out;
    out.num_classes = num_classes;
    out.examples.reserve(std::size_t(num_classes) * std::size_t(per_class));
    for (int c = 0; c < num_classes; ++c) {
        const std::size_t hot = std::size_t(c) % std::size_t(dim);
        for (int i = 0; i < per_class; ++i) {
            LabeledExample ex;
            ex.label = c;
            ex.features.resize(static_cast<std::size_t>(dim));
            for (std::size_t p = 0; p < ex.features.size(); ++p) {
                const double mean = (p == hot) ? 1.0 : 0.0;
                ex.features[p] = std::clamp(mean + rng.normal(0.0, spread), 0.0, 1.0);
            }
            out.examples.push_back(std::move(ex));
        }
    }
    return out;
}

}  // namespace vfl::data
