#include "vfl/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "vfl/rng.hpp"

namespace vfl::learner {

namespace {

struct MlpPlan {
    std::vector<int> dims;             // layer widths, input first
    std::vector<std::size_t> w_off;    // per weight layer
    std::vector<std::size_t> b_off;
    std::size_t total = 0;
};

MlpPlan make_mlp_plan(const Architecture& arch) {
    MlpPlan plan;
    plan.dims.push_back(arch.input_dim);
    for (int h : arch.hidden) plan.dims.push_back(h);
    plan.dims.push_back(arch.num_classes);
    for (int d : plan.dims)
        if (d < 1) throw std::invalid_argument("mlp: layer widths must be >= 1");

    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < plan.dims.size(); ++l) {
        const auto in = static_cast<std::size_t>(plan.dims[l]);
        const auto out = static_cast<std::size_t>(plan.dims[l + 1]);
        plan.w_off.push_back(off);
        off += in * out;
        plan.b_off.push_back(off);
        off += out;
    }
    plan.total = off;
    return plan;
}

struct CnnPlan {
    int in_h, in_w;
    int ch1, c1h, c1w, p1h, p1w;
    int ch2, c2h, c2w, p2h, p2w;
    int fc_in, fc_out;
    std::size_t off_c1w, off_c1b, off_c2w, off_c2b, off_fcw, off_fcb;
    std::size_t total;
};

CnnPlan make_cnn_plan(const Architecture& arch) {
    CnnPlan p{};
    p.in_h = arch.image_h;
    p.in_w = arch.image_w;
    if (arch.input_dim != p.in_h * p.in_w)
        throw std::invalid_argument("cnn: input_dim must equal image_h * image_w");
    p.ch1 = arch.conv1_channels;
    p.c1h = p.in_h - 1;  // kernel 2, stride 1
    p.c1w = p.in_w - 1;
    p.p1h = p.c1h / 2;  // pool 2, stride 2
    p.p1w = p.c1w / 2;
    p.ch2 = arch.conv2_channels;
    p.c2h = p.p1h - 1;
    p.c2w = p.p1w - 1;
    p.p2h = p.c2h / 2;
    p.p2w = p.c2w / 2;
    if (p.ch1 < 1 || p.ch2 < 1 || p.p2h < 1 || p.p2w < 1)
        throw std::invalid_argument("cnn: image too small for conv/pool stack");
    p.fc_in = p.ch2 * p.p2h * p.p2w;
    p.fc_out = arch.num_classes;

    std::size_t off = 0;
    p.off_c1w = off;
    off += std::size_t(p.ch1) * 1 * 2 * 2;
    p.off_c1b = off;
    off += std::size_t(p.ch1);
    p.off_c2w = off;
    off += std::size_t(p.ch2) * std::size_t(p.ch1) * 2 * 2;
    p.off_c2b = off;
    off += std::size_t(p.ch2);
    p.off_fcw = off;
    off += std::size_t(p.fc_out) * std::size_t(p.fc_in);
    p.off_fcb = off;
    off += std::size_t(p.fc_out);
    p.total = off;
    return p;
}

// Stable softmax over logits; fills probs, returns cross-entropy for label.
double softmax_loss(const double* logits, int n, int label, double* probs) {
    double m = logits[0];
    for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - m);
        sum += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= sum;
    return std::log(sum) - (logits[label] - m);
}

int argmax_lowest(const double* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Interprets a flat parameter vector for one architecture; owns the forward
// and backward scratch so per-example calls never allocate.
class Net {
  public:
    explicit Net(const Architecture& arch) : arch_(arch) {
        if (arch.kind == ArchKind::Mlp) {
            mlp_ = make_mlp_plan(arch);
            const std::size_t layers = mlp_.w_off.size();
            acts_.resize(layers);
            zs_.resize(layers);
            deltas_.resize(layers);
            for (std::size_t l = 0; l < layers; ++l) {
                const auto out = static_cast<std::size_t>(mlp_.dims[l + 1]);
                acts_[l].resize(out);
                zs_[l].resize(out);
                deltas_[l].resize(out);
            }
        } else {
            cnn_ = make_cnn_plan(arch);
            conv1_z_.resize(std::size_t(cnn_.ch1) * cnn_.c1h * cnn_.c1w);
            conv1_a_.resize(conv1_z_.size());
            pool1_.resize(std::size_t(cnn_.ch1) * cnn_.p1h * cnn_.p1w);
            pool1_arg_.resize(pool1_.size());
            conv2_z_.resize(std::size_t(cnn_.ch2) * cnn_.c2h * cnn_.c2w);
            conv2_a_.resize(conv2_z_.size());
            pool2_.resize(std::size_t(cnn_.ch2) * cnn_.p2h * cnn_.p2w);
            pool2_arg_.resize(pool2_.size());
            d_pool2_.resize(pool2_.size());
            d_conv2_.resize(conv2_z_.size());
            d_pool1_.resize(pool1_.size());
            d_conv1_.resize(conv1_z_.size());
        }
        logits_.resize(static_cast<std::size_t>(arch.num_classes));
        probs_.resize(logits_.size());
    }

    std::size_t total_params() const {
        return arch_.kind == ArchKind::Mlp ? mlp_.total : cnn_.total;
    }

    // Cross-entropy loss for one example; when grad is non-null the
    // per-example gradient is accumulated into it (summed, not averaged).
    double example_loss(const double* p, const double* x, int label, double* grad) {
        if (arch_.kind == ArchKind::Mlp) return mlp_loss(p, x, label, grad);
        return cnn_loss(p, x, label, grad);
    }

    void forward_probs(const double* p, const double* x, double* out) {
        forward_logits(p, x);
        softmax_loss(logits_.data(), arch_.num_classes, 0, out);
    }

    int predict(const double* p, const double* x) {
        forward_logits(p, x);
        return argmax_lowest(logits_.data(), arch_.num_classes);
    }

  private:
    void forward_logits(const double* p, const double* x) {
        if (arch_.kind == ArchKind::Mlp)
            mlp_forward(p, x);
        else
            cnn_forward(p, x);
    }

    void mlp_forward(const double* p, const double* x) {
        const std::size_t layers = mlp_.w_off.size();
        const double* in = x;
        for (std::size_t l = 0; l < layers; ++l) {
            const int n_in = mlp_.dims[l];
            const int n_out = mlp_.dims[l + 1];
            const double* w = p + mlp_.w_off[l];
            const double* b = p + mlp_.b_off[l];
            double* z = zs_[l].data();
            for (int o = 0; o < n_out; ++o) {
                const double* row = w + std::size_t(o) * n_in;
                double acc = b[o];
                for (int i = 0; i < n_in; ++i) acc += row[i] * in[i];
                z[o] = acc;
            }
            if (l + 1 < layers) {
                double* a = acts_[l].data();
                for (int o = 0; o < n_out; ++o) a[o] = z[o] > 0.0 ? z[o] : 0.0;
                in = a;
            } else {
                std::copy(z, z + n_out, logits_.begin());
            }
        }
    }

    double mlp_loss(const double* p, const double* x, int label, double* grad) {
        mlp_forward(p, x);
        const double loss = softmax_loss(logits_.data(), arch_.num_classes, label, probs_.data());
        if (!grad) return loss;

        const std::size_t layers = mlp_.w_off.size();
        {
            double* d = deltas_[layers - 1].data();
            std::copy(probs_.begin(), probs_.end(), d);
            d[label] -= 1.0;
        }
        for (std::size_t l = layers; l-- > 0;) {
            const int n_in = mlp_.dims[l];
            const int n_out = mlp_.dims[l + 1];
            const double* in = l == 0 ? x : acts_[l - 1].data();
            const double* d = deltas_[l].data();
            double* gw = grad + mlp_.w_off[l];
            double* gb = grad + mlp_.b_off[l];
            for (int o = 0; o < n_out; ++o) {
                const double dv = d[o];
                double* grow = gw + std::size_t(o) * n_in;
                for (int i = 0; i < n_in; ++i) grow[i] += dv * in[i];
                gb[o] += dv;
            }
            if (l > 0) {
                const double* w = p + mlp_.w_off[l];
                double* dprev = deltas_[l - 1].data();
                std::fill(dprev, dprev + n_in, 0.0);
                for (int o = 0; o < n_out; ++o) {
                    const double dv = d[o];
                    const double* row = w + std::size_t(o) * n_in;
                    for (int i = 0; i < n_in; ++i) dprev[i] += dv * row[i];
                }
                const double* z = zs_[l - 1].data();
                for (int i = 0; i < n_in; ++i)
                    if (z[i] <= 0.0) dprev[i] = 0.0;
            }
        }
        return loss;
    }

    void conv_forward(const double* in, int in_ch, int in_h, int in_w, const double* w,
                      const double* b, int out_ch, double* z) {
        const int out_h = in_h - 1;
        const int out_w = in_w - 1;
        for (int oc = 0; oc < out_ch; ++oc) {
            double* zp = z + std::size_t(oc) * out_h * out_w;
            for (int i = 0; i < out_h * out_w; ++i) zp[i] = b[oc];
            for (int ic = 0; ic < in_ch; ++ic) {
                const double* ip = in + std::size_t(ic) * in_h * in_w;
                const double* k = w + (std::size_t(oc) * in_ch + ic) * 4;
                for (int y = 0; y < out_h; ++y) {
                    const double* r0 = ip + std::size_t(y) * in_w;
                    const double* r1 = r0 + in_w;
                    double* zr = zp + std::size_t(y) * out_w;
                    for (int xw = 0; xw < out_w; ++xw)
                        zr[xw] += k[0] * r0[xw] + k[1] * r0[xw + 1] + k[2] * r1[xw] +
                                  k[3] * r1[xw + 1];
                }
            }
        }
    }

    static void pool_forward(const double* a, int ch, int in_h, int in_w, int out_h, int out_w,
                             double* out, std::uint32_t* arg) {
        for (int c = 0; c < ch; ++c) {
            const double* ap = a + std::size_t(c) * in_h * in_w;
            double* op = out + std::size_t(c) * out_h * out_w;
            std::uint32_t* gp = arg + std::size_t(c) * out_h * out_w;
            for (int y = 0; y < out_h; ++y) {
                for (int x = 0; x < out_w; ++x) {
                    const int base = 2 * y * in_w + 2 * x;
                    int best = base;
                    if (ap[base + 1] > ap[best]) best = base + 1;
                    if (ap[base + in_w] > ap[best]) best = base + in_w;
                    if (ap[base + in_w + 1] > ap[best]) best = base + in_w + 1;
                    op[std::size_t(y) * out_w + x] = ap[best];
                    gp[std::size_t(y) * out_w + x] =
                        static_cast<std::uint32_t>(std::size_t(c) * in_h * in_w + best);
                }
            }
        }
    }

    void cnn_forward(const double* p, const double* x) {
        const CnnPlan& c = cnn_;
        conv_forward(x, 1, c.in_h, c.in_w, p + c.off_c1w, p + c.off_c1b, c.ch1, conv1_z_.data());
        for (std::size_t i = 0; i < conv1_z_.size(); ++i)
            conv1_a_[i] = conv1_z_[i] > 0.0 ? conv1_z_[i] : 0.0;
        pool_forward(conv1_a_.data(), c.ch1, c.c1h, c.c1w, c.p1h, c.p1w, pool1_.data(),
                     pool1_arg_.data());
        conv_forward(pool1_.data(), c.ch1, c.p1h, c.p1w, p + c.off_c2w, p + c.off_c2b, c.ch2,
                     conv2_z_.data());
        for (std::size_t i = 0; i < conv2_z_.size(); ++i)
            conv2_a_[i] = conv2_z_[i] > 0.0 ? conv2_z_[i] : 0.0;
        pool_forward(conv2_a_.data(), c.ch2, c.c2h, c.c2w, c.p2h, c.p2w, pool2_.data(),
                     pool2_arg_.data());
        const double* fcw = p + c.off_fcw;
        const double* fcb = p + c.off_fcb;
        for (int k = 0; k < c.fc_out; ++k) {
            const double* row = fcw + std::size_t(k) * c.fc_in;
            double acc = fcb[k];
            for (int j = 0; j < c.fc_in; ++j) acc += row[j] * pool2_[std::size_t(j)];
            logits_[std::size_t(k)] = acc;
        }
    }

    double cnn_loss(const double* p, const double* x, int label, double* grad) {
        cnn_forward(p, x);
        const double loss = softmax_loss(logits_.data(), arch_.num_classes, label, probs_.data());
        if (!grad) return loss;

        const CnnPlan& c = cnn_;
        // dense readout
        std::copy(probs_.begin(), probs_.end(), logits_.begin());  // reuse as dlogits
        logits_[std::size_t(label)] -= 1.0;
        const double* fcw = p + c.off_fcw;
        double* g_fcw = grad + c.off_fcw;
        double* g_fcb = grad + c.off_fcb;
        std::fill(d_pool2_.begin(), d_pool2_.end(), 0.0);
        for (int k = 0; k < c.fc_out; ++k) {
            const double dv = logits_[std::size_t(k)];
            const double* row = fcw + std::size_t(k) * c.fc_in;
            double* grow = g_fcw + std::size_t(k) * c.fc_in;
            for (int j = 0; j < c.fc_in; ++j) {
                grow[j] += dv * pool2_[std::size_t(j)];
                d_pool2_[std::size_t(j)] += dv * row[j];
            }
            g_fcb[k] += dv;
        }

        // unpool + ReLU gate back into conv2
        std::fill(d_conv2_.begin(), d_conv2_.end(), 0.0);
        for (std::size_t j = 0; j < d_pool2_.size(); ++j) d_conv2_[pool2_arg_[j]] += d_pool2_[j];
        for (std::size_t i = 0; i < d_conv2_.size(); ++i)
            if (conv2_z_[i] <= 0.0) d_conv2_[i] = 0.0;

        // conv2 backward
        std::fill(d_pool1_.begin(), d_pool1_.end(), 0.0);
        conv_backward(pool1_.data(), c.ch1, c.p1h, c.p1w, p + c.off_c2w, c.ch2, d_conv2_.data(),
                      grad + c.off_c2w, grad + c.off_c2b, d_pool1_.data());

        // unpool + ReLU gate back into conv1
        std::fill(d_conv1_.begin(), d_conv1_.end(), 0.0);
        for (std::size_t j = 0; j < d_pool1_.size(); ++j) d_conv1_[pool1_arg_[j]] += d_pool1_[j];
        for (std::size_t i = 0; i < d_conv1_.size(); ++i)
            if (conv1_z_[i] <= 0.0) d_conv1_[i] = 0.0;

        // conv1 backward; input gradient is not needed
        conv_backward(x, 1, c.in_h, c.in_w, p + c.off_c1w, c.ch1, d_conv1_.data(),
                      grad + c.off_c1w, grad + c.off_c1b, nullptr);
        return loss;
    }

    static void conv_backward(const double* in, int in_ch, int in_h, int in_w, const double* w,
                              int out_ch, const double* dz, double* gw, double* gb, double* din) {
        const int out_h = in_h - 1;
        const int out_w = in_w - 1;
        for (int oc = 0; oc < out_ch; ++oc) {
            const double* dzp = dz + std::size_t(oc) * out_h * out_w;
            double acc_b = 0.0;
            for (int i = 0; i < out_h * out_w; ++i) acc_b += dzp[i];
            gb[oc] += acc_b;
            for (int ic = 0; ic < in_ch; ++ic) {
                const double* ip = in + std::size_t(ic) * in_h * in_w;
                const double* k = w + (std::size_t(oc) * in_ch + ic) * 4;
                double* gk = gw + (std::size_t(oc) * in_ch + ic) * 4;
                double g0 = 0.0, g1 = 0.0, g2 = 0.0, g3 = 0.0;
                for (int y = 0; y < out_h; ++y) {
                    const double* r0 = ip + std::size_t(y) * in_w;
                    const double* r1 = r0 + in_w;
                    const double* dzr = dzp + std::size_t(y) * out_w;
                    for (int xw = 0; xw < out_w; ++xw) {
                        const double dv = dzr[xw];
                        g0 += dv * r0[xw];
                        g1 += dv * r0[xw + 1];
                        g2 += dv * r1[xw];
                        g3 += dv * r1[xw + 1];
                    }
                }
                gk[0] += g0;
                gk[1] += g1;
                gk[2] += g2;
                gk[3] += g3;
                if (din) {
                    double* dp = din + std::size_t(ic) * in_h * in_w;
                    for (int y = 0; y < out_h; ++y) {
                        double* d0 = dp + std::size_t(y) * in_w;
                        double* d1 = d0 + in_w;
                        const double* dzr = dzp + std::size_t(y) * out_w;
                        for (int xw = 0; xw < out_w; ++xw) {
                            const double dv = dzr[xw];
                            d0[xw] += dv * k[0];
                            d0[xw + 1] += dv * k[1];
                            d1[xw] += dv * k[2];
                            d1[xw + 1] += dv * k[3];
                        }
                    }
                }
            }
        }
    }

    Architecture arch_;
    MlpPlan mlp_;
    CnnPlan cnn_{};

    // MLP scratch
    std::vector<std::vector<double>> acts_, zs_, deltas_;

    // CNN scratch
    std::vector<double> conv1_z_, conv1_a_, pool1_, conv2_z_, conv2_a_, pool2_;
    std::vector<std::uint32_t> pool1_arg_, pool2_arg_;
    std::vector<double> d_pool2_, d_conv2_, d_pool1_, d_conv1_;

    std::vector<double> logits_, probs_;
};

void check_features(const Architecture& arch, const data::DatasetView& view,
                    const char* who) {
    for (std::size_t i = 0; i < view.size(); ++i) {
        if (view.example(i).features.size() != static_cast<std::size_t>(arch.input_dim))
            throw std::invalid_argument(std::string(who) + ": feature length " +
                                        std::to_string(view.example(i).features.size()) +
                                        " does not match input_dim " +
                                        std::to_string(arch.input_dim));
        // one mismatch check per view is enough when lengths are uniform
        if (i == 0 && view.size() > 1) i = view.size() - 2;
    }
}

}  // namespace

Architecture Architecture::mlp(int input_dim, std::vector<int> hidden, int num_classes) {
    Architecture a;
    a.kind = ArchKind::Mlp;
    a.input_dim = input_dim;
    a.num_classes = num_classes;
    a.hidden = std::move(hidden);
    make_mlp_plan(a);  // validate
    return a;
}

Architecture Architecture::cnn(int image_h, int image_w, int num_classes) {
    Architecture a;
    a.kind = ArchKind::Cnn;
    a.image_h = image_h;
    a.image_w = image_w;
    a.input_dim = image_h * image_w;
    a.num_classes = num_classes;
    a.hidden.clear();
    make_cnn_plan(a);  // validate
    return a;
}

std::size_t param_count(const Architecture& arch) {
    return arch.kind == ArchKind::Mlp ? make_mlp_plan(arch).total : make_cnn_plan(arch).total;
}

void encode(Encoder& enc, const Architecture& arch) {
    enc.put_u8(static_cast<std::uint8_t>(arch.kind));
    enc.put_u32(static_cast<std::uint32_t>(arch.input_dim));
    enc.put_u32(static_cast<std::uint32_t>(arch.num_classes));
    enc.put_u32(static_cast<std::uint32_t>(arch.hidden.size()));
    for (int h : arch.hidden) enc.put_u32(static_cast<std::uint32_t>(h));
    enc.put_u32(static_cast<std::uint32_t>(arch.image_h));
    enc.put_u32(static_cast<std::uint32_t>(arch.image_w));
    enc.put_u32(static_cast<std::uint32_t>(arch.conv1_channels));
    enc.put_u32(static_cast<std::uint32_t>(arch.conv2_channels));
}

Architecture decode_architecture(Decoder& dec) {
    Architecture arch;
    const std::uint8_t kind = dec.get_u8();
    if (kind > 1) throw DecodeError("bad architecture kind");
    arch.kind = static_cast<ArchKind>(kind);
    arch.input_dim = static_cast<int>(dec.get_u32());
    arch.num_classes = static_cast<int>(dec.get_u32());
    arch.hidden.resize(dec.get_u32());
    for (int& h : arch.hidden) h = static_cast<int>(dec.get_u32());
    arch.image_h = static_cast<int>(dec.get_u32());
    arch.image_w = static_cast<int>(dec.get_u32());
    arch.conv1_channels = static_cast<int>(dec.get_u32());
    arch.conv2_channels = static_cast<int>(dec.get_u32());
    return arch;
}

void encode(Encoder& enc, const ModelParams& params) {
    encode(enc, params.arch);
    enc.put_u32(static_cast<std::uint32_t>(params.values.size()));
    for (double v : params.values) enc.put_f64(v);
}

ModelParams decode_model_params(Decoder& dec) {
    ModelParams p;
    p.arch = decode_architecture(dec);
    p.values.resize(dec.get_u32());
    for (double& v : p.values) v = dec.get_f64();
    if (p.values.size() != param_count(p.arch))
        throw DecodeError("model parameter count does not match architecture");
    return p;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
    ModelParams out;
    out.arch = arch;
    out.values.assign(param_count(arch), 0.0);
    Rng rng(derive_seed(seed, "init"));

    auto fill_uniform = [&](std::size_t off, std::size_t n, int fan_in) {
        const double limit = std::sqrt(6.0 / fan_in);
        for (std::size_t i = 0; i < n; ++i) out.values[off + i] = rng.uniform(-limit, limit);
    };

    if (arch.kind == ArchKind::Mlp) {
        const MlpPlan plan = make_mlp_plan(arch);
        for (std::size_t l = 0; l < plan.w_off.size(); ++l)
            fill_uniform(plan.w_off[l],
                         std::size_t(plan.dims[l]) * std::size_t(plan.dims[l + 1]), plan.dims[l]);
    } else {
        const CnnPlan plan = make_cnn_plan(arch);
        fill_uniform(plan.off_c1w, std::size_t(plan.ch1) * 4, 4);
        fill_uniform(plan.off_c2w, std::size_t(plan.ch2) * plan.ch1 * 4, plan.ch1 * 4);
        fill_uniform(plan.off_fcw, std::size_t(plan.fc_out) * plan.fc_in, plan.fc_in);
    }
    return out;
}

ModelParams train_local(const ModelParams& start, const data::DatasetView& shard,
                        const TrainConfig& cfg, std::uint64_t seed) {
    if (shard.size() == 0) throw std::invalid_argument("train_local: empty shard");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate < 0.0)
        throw std::invalid_argument("train_local: bad train config");
    if (start.values.size() != param_count(start.arch))
        throw std::invalid_argument("train_local: parameter count mismatch");
    check_features(start.arch, shard, "train_local");
    for (double v : start.values)
        if (!std::isfinite(v)) throw std::invalid_argument("train_local: non-finite start params");

    ModelParams out = start;
    if (cfg.learning_rate == 0.0) return out;  // zero-step identity

    Net net(start.arch);
    std::vector<double> grad(out.values.size());
    std::vector<std::uint32_t> order(shard.size());
    std::iota(order.begin(), order.end(), 0u);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng(derive_seed(seed, "train-epoch", static_cast<std::uint64_t>(epoch)));
        erng.shuffle(std::span<std::uint32_t>(order));
        int batch_index = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const data::LabeledExample& ex = shard.example(order[i]);
                batch_loss += net.example_loss(out.values.data(), ex.features.data(), ex.label,
                                               grad.data());
            }
            if (!std::isfinite(batch_loss))
                throw TrainingError(epoch, batch_index,
                                    "train_local: non-finite loss at epoch " +
                                        std::to_string(epoch) + " batch " +
                                        std::to_string(batch_index));
            const double scale = cfg.learning_rate / static_cast<double>(end - begin);
            for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] -= scale * grad[j];
        }
    }
    return out;
}

EvalResult evaluate(const ModelParams& params, const data::DatasetView& test) {
    if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    check_features(params.arch, test, "evaluate");

    Net net(params.arch);
    EvalResult r;
    r.num_total = static_cast<int>(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const data::LabeledExample& ex = test.example(i);
        if (net.predict(params.values.data(), ex.features.data()) == ex.label) ++r.num_correct;
    }
    r.accuracy = static_cast<double>(r.num_correct) / static_cast<double>(r.num_total);
    return r;
}

double mean_loss(const ModelParams& params, const data::DatasetView& over) {
    if (over.size() == 0) throw std::invalid_argument("mean_loss: empty dataset");
    check_features(params.arch, over, "mean_loss");
    Net net(params.arch);
    double total = 0.0;
    for (std::size_t i = 0; i < over.size(); ++i) {
        const data::LabeledExample& ex = over.example(i);
        total += net.example_loss(params.values.data(), ex.features.data(), ex.label, nullptr);
    }
    return total / static_cast<double>(over.size());
}

std::vector<double> predict_probabilities(const ModelParams& params,
                                          const std::vector<double>& features) {
    Net net(params.arch);
    std::vector<double> probs(static_cast<std::size_t>(params.arch.num_classes));
    net.forward_probs(params.values.data(), features.data(), probs.data());
    return probs;
}

ModelParams fedavg(const std::vector<std::pair<ModelParams, int>>& updates, Weighting weighting) {
    if (updates.empty()) throw std::invalid_argument("fedavg: empty update list");
    const Architecture& arch = updates[0].first.arch;
    const std::size_t n = updates[0].first.values.size();
    for (const auto& [params, count] : updates) {
        if (!(params.arch == arch)) throw std::invalid_argument("fedavg: architecture mismatch");
        if (params.values.size() != n) throw std::invalid_argument("fedavg: length mismatch");
        if (count < 1) throw std::invalid_argument("fedavg: sample_count must be >= 1");
    }

    // Identical inputs average to themselves exactly.
    bool all_equal = true;
    for (std::size_t i = 1; i < updates.size() && all_equal; ++i)
        all_equal = std::memcmp(updates[i].first.values.data(), updates[0].first.values.data(),
                                n * sizeof(double)) == 0;
    if (all_equal) return updates[0].first;

    // Canonical combination order, independent of the caller's list order.
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const int c = std::memcmp(updates[a].first.values.data(), updates[b].first.values.data(),
                                  n * sizeof(double));
        if (c != 0) return c < 0;
        return updates[a].second < updates[b].second;
    });

    double total_samples = 0.0;
    for (const auto& [params, count] : updates) total_samples += count;

    ModelParams out;
    out.arch = arch;
    out.values.assign(n, 0.0);
    for (std::size_t idx : order) {
        const auto& [params, count] = updates[idx];
        const double w = weighting == Weighting::BySamples
                             ? static_cast<double>(count) / total_samples
                             : 1.0 / static_cast<double>(updates.size());
        for (std::size_t j = 0; j < n; ++j) out.values[j] += w * params.values[j];
    }
    return out;
}

double grad_check(const Architecture& arch, double eps, std::uint64_t seed) {
    if (!(eps > 0.0) || eps > 1e-2) throw std::invalid_argument("grad_check: eps out of (0, 1e-2]");

    ModelParams params = init_params(arch, seed);
    Net net(arch);

    // Random probe batch.
    Rng drng(derive_seed(seed, "gradcheck-data"));
    constexpr int kBatch = 8;
    std::vector<std::vector<double>> xs(kBatch);
    std::vector<int> labels(kBatch);
    for (int i = 0; i < kBatch; ++i) {
        xs[std::size_t(i)].resize(static_cast<std::size_t>(arch.input_dim));
        for (double& v : xs[std::size_t(i)]) v = drng.uniform01();
        labels[std::size_t(i)] =
            static_cast<int>(drng.uniform_below(static_cast<std::uint64_t>(arch.num_classes)));
    }

    const auto batch_loss = [&]() {
        double total = 0.0;
        for (int i = 0; i < kBatch; ++i)
            total += net.example_loss(params.values.data(), xs[std::size_t(i)].data(),
                                      labels[std::size_t(i)], nullptr);
        return total / kBatch;
    };

    std::vector<double> grad(params.values.size(), 0.0);
    for (int i = 0; i < kBatch; ++i)
        net.example_loss(params.values.data(), xs[std::size_t(i)].data(), labels[std::size_t(i)],
                         grad.data());
    for (double& g : grad) g /= kBatch;

    // Seed-fixed probe subset of at least 200 parameters.
    const std::size_t total = params.values.size();
    const std::size_t probes = std::min<std::size_t>(total, 200);
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng irng(derive_seed(seed, "gradcheck-idx"));
    for (std::size_t i = 0; i < probes; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(irng.uniform_below(total - i));
        std::swap(all[i], all[j]);
    }

    double max_rel = 0.0;
    for (std::size_t i = 0; i < probes; ++i) {
        const std::size_t idx = all[i];
        const double saved = params.values[idx];
        params.values[idx] = saved + eps;
        const double up = batch_loss();
        params.values[idx] = saved - eps;
        const double down = batch_loss();
        params.values[idx] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = grad[idx];
        const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
        max_rel = std::max(max_rel, std::fabs(numeric - analytic) / denom);
    }
    return max_rel;
}

}  // namespace vfl::learner
