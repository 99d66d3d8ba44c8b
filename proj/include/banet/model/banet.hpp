#pragma once

// BA-Net: shared encoder, boundary decoder, segmentation decoder.
//
// Encoder: N blocks of 2x(conv + instance norm + leaky ReLU); a strided
// conv unit between blocks halves resolution and moves to the next width.
// Decoders: N-1 mirrored blocks (transposed conv upsampling, encoder skip
// concatenation, 2 conv units, 1x1x1 softmax head). The segmentation decoder
// multiplies each upsampled feature map by (1 + boundary probability) before
// the skip concatenation; information flows boundary -> segmentation only.

#include <functional>
#include <random>
#include <vector>

#include "banet/model/config.hpp"
#include "banet/model/ops.hpp"

namespace banet {

/// Channel of the boundary softmax used as the attention scalar.
constexpr std::int64_t kBoundaryClassChannel = 1;

template <typename T>
struct ConvUnit {
    ConvGeom geom;
    Var<T> w, b, gamma, beta;
};

template <typename T>
struct UpConv {
    std::int64_t in_ch = 0, out_ch = 0;
    Var<T> w, b;
};

template <typename T>
struct HeadConv {
    ConvGeom geom;  // 1x1x1
    Var<T> w, b;
};

template <typename T>
struct DecoderBlock {
    UpConv<T> up;
    ConvUnit<T> conv1, conv2;
    HeadConv<T> head;
};

template <typename T>
struct ForwardOutput {
    // Coarse to fine. Training mode fills all N-1 entries of both lists;
    // inference mode fills boundary maps (the segmentation path consumes
    // them) but only the final segmentation map.
    std::vector<Var<T>> seg_probs;
    std::vector<Var<T>> boundary_probs;

    const Var<T>& final_seg() const { return seg_probs.back(); }
};

struct ForwardOptions {
    bool train_mode = true;
    bool enhancement_enabled = true;  // setting false ablates Eq-1 (a := 0)
};

template <typename T>
class BANet {
public:
    BANet() = default;

    static BANet build(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        BANet net;
        net.cfg_ = cfg;
        std::mt19937_64 rng(seed);
        const int N = cfg.num_stages;
        for (int k = 0; k < N; ++k) {
            const int wk = cfg.width(k);
            const int in0 = k == 0 ? 1 : wk;
            net.enc_blocks_.push_back(
                {net.make_conv_unit(in0, wk, 1, rng),
                 net.make_conv_unit(wk, wk, 1, rng)});
            if (k + 1 < N)
                net.downs_.push_back(
                    net.make_conv_unit(wk, cfg.width(k + 1), 2, rng));
        }
        net.boundary_dec_ = net.make_decoder(cfg.boundary_channels, rng);
        net.seg_dec_ = net.make_decoder(cfg.num_classes, rng);
        return net;
    }

    const ModelConfig& config() const { return cfg_; }

    /// Widths of all encoder stages, index = stage.
    std::vector<int> encoder_widths() const {
        std::vector<int> w;
        for (int k = 0; k < cfg_.num_stages; ++k) w.push_back(cfg_.width(k));
        return w;
    }

    std::vector<Var<T>> encode(Tape<T>* tape, const Var<T>& x) const {
        check_input(x.value());
        std::vector<Var<T>> feats;
        Var<T> a = x;
        for (int k = 0; k < cfg_.num_stages; ++k) {
            if (k > 0) a = run_unit(tape, downs_[static_cast<std::size_t>(k - 1)], a);
            a = run_unit(tape, enc_blocks_[static_cast<std::size_t>(k)].first, a);
            a = run_unit(tape, enc_blocks_[static_cast<std::size_t>(k)].second, a);
            feats.push_back(a);
        }
        return feats;
    }

    /// Boundary decoder: N-1 probability maps, coarse to fine.
    std::vector<Var<T>> decode_boundary(Tape<T>* tape,
                                        const std::vector<Var<T>>& feats) const {
        std::vector<Var<T>> probs;
        Var<T> f = feats.back();
        for (std::size_t j = 0; j < boundary_dec_.size(); ++j) {
            const auto& blk = boundary_dec_[j];
            Var<T> up = tconv2x(tape, f, blk.up.w, blk.up.b, blk.up.in_ch,
                                blk.up.out_ch);
            Var<T> cat = concat_channels(
                tape, up, feats[feats.size() - 2 - j]);
            f = run_unit(tape, blk.conv1, cat);
            f = run_unit(tape, blk.conv2, f);
            probs.push_back(softmax_channels(
                tape, conv3d(tape, f, blk.head.w, blk.head.b, blk.head.geom)));
        }
        return probs;
    }

    /// Segmentation decoder, consuming the boundary maps as attention.
    std::vector<Var<T>> decode_segmentation(
        Tape<T>* tape, const std::vector<Var<T>>& feats,
        const std::vector<Var<T>>& boundary_probs,
        const ForwardOptions& opt) const {
        std::vector<Var<T>> probs;
        Var<T> f = feats.back();
        for (std::size_t j = 0; j < seg_dec_.size(); ++j) {
            const auto& blk = seg_dec_[j];
            Var<T> up = tconv2x(tape, f, blk.up.w, blk.up.b, blk.up.in_ch,
                                blk.up.out_ch);
            if (opt.enhancement_enabled)
                up = enhance(tape, up, boundary_probs[j], kBoundaryClassChannel);
            Var<T> cat = concat_channels(tape, up, feats[feats.size() - 2 - j]);
            f = run_unit(tape, blk.conv1, cat);
            f = run_unit(tape, blk.conv2, f);
            const bool last = j + 1 == seg_dec_.size();
            if (opt.train_mode || last)
                probs.push_back(softmax_channels(
                    tape,
                    conv3d(tape, f, blk.head.w, blk.head.b, blk.head.geom)));
        }
        return probs;
    }

    ForwardOutput<T> forward(Tape<T>* tape, const Var<T>& x,
                             const ForwardOptions& opt = {}) const {
        ForwardOutput<T> out;
        auto feats = encode(tape, x);
        out.boundary_probs = decode_boundary(tape, feats);
        out.seg_probs = decode_segmentation(tape, feats, out.boundary_probs, opt);
        return out;
    }

    /// Inference convenience: final-scale class probabilities only.
    Tensor<T> predict(const Tensor<T>& x,
                      bool enhancement_enabled = true) const {
        Var<T> in(x, /*requires=*/false);
        ForwardOptions opt;
        opt.train_mode = false;
        opt.enhancement_enabled = enhancement_enabled;
        auto out = forward(nullptr, in, opt);
        return out.final_seg().value();
    }

    /// Visits every parameter in a fixed order (the checkpoint layout).
    void visit_params(
        const std::function<void(const std::string&, Var<T>&)>& fn) {
        for (std::size_t k = 0; k < enc_blocks_.size(); ++k) {
            visit_unit(fn, "enc" + std::to_string(k) + ".conv1",
                       enc_blocks_[k].first);
            visit_unit(fn, "enc" + std::to_string(k) + ".conv2",
                       enc_blocks_[k].second);
            if (k < downs_.size())
                visit_unit(fn, "down" + std::to_string(k), downs_[k]);
        }
        visit_decoder(fn, "bnd", boundary_dec_);
        visit_decoder(fn, "seg", seg_dec_);
    }

    void zero_grads() {
        visit_params([](const std::string&, Var<T>& v) { v.zero_grad(); });
    }

    /// FNV-1a over all parameter bytes in visit order.
    std::uint64_t parameter_checksum() {
        std::uint64_t h = 0xcbf29ce484222325ull;
        visit_params([&](const std::string& name, Var<T>& v) {
            h = fnv1a64(name.data(), name.size(), h);
            h = fnv1a64(v.value().ptr(),
                        sizeof(T) * static_cast<std::size_t>(v.value().numel()),
                        h);
        });
        return h;
    }

private:
    using EncBlock = std::pair<ConvUnit<T>, ConvUnit<T>>;

    ModelConfig cfg_;
    std::vector<EncBlock> enc_blocks_;    // N
    std::vector<ConvUnit<T>> downs_;      // N-1, stride 2
    std::vector<DecoderBlock<T>> boundary_dec_;  // N-1, coarse to fine
    std::vector<DecoderBlock<T>> seg_dec_;

    void check_input(const Tensor<T>& x) const {
        if (x.n() < 1 || x.c() != 1)
            throw Error("expected (N,1,D,H,W) input, got " + x.shape_str());
        cfg_.check_patch(Shape3{x.d(), x.h(), x.w()});
    }

    static Tensor<T> randn(std::int64_t n, std::int64_t c, double stdev,
                           std::mt19937_64& rng) {
        Tensor<T> t(n, c, 1, 1, 1);
        std::normal_distribution<double> nd(0.0, stdev);
        for (auto& v : t.data) v = static_cast<T>(nd(rng));
        return t;
    }

    ConvUnit<T> make_conv_unit(std::int64_t in_ch, std::int64_t out_ch,
                               std::int64_t stride, std::mt19937_64& rng) {
        ConvUnit<T> u;
        const std::int64_t k = cfg_.conv_kernel;
        u.geom = ConvGeom{in_ch, out_ch, k, stride, k / 2};
        // He fan-in initialization; normalization layers start at identity.
        const double stdev = std::sqrt(2.0 / double(in_ch * k * k * k));
        u.w = Var<T>(randn(out_ch, in_ch * k * k * k, stdev, rng));
        u.b = Var<T>(Tensor<T>(out_ch, 1, 1, 1, 1));
        Tensor<T> g(out_ch, 1, 1, 1, 1);
        g.fill(T(1));
        u.gamma = Var<T>(std::move(g));
        u.beta = Var<T>(Tensor<T>(out_ch, 1, 1, 1, 1));
        return u;
    }

    UpConv<T> make_upconv(std::int64_t in_ch, std::int64_t out_ch,
                          std::mt19937_64& rng) {
        UpConv<T> u;
        u.in_ch = in_ch;
        u.out_ch = out_ch;
        const double stdev = std::sqrt(2.0 / double(in_ch * 8));
        u.w = Var<T>(randn(in_ch, out_ch * 8, stdev, rng));
        u.b = Var<T>(Tensor<T>(out_ch, 1, 1, 1, 1));
        return u;
    }

    HeadConv<T> make_head(std::int64_t in_ch, std::int64_t out_ch,
                          std::mt19937_64& rng) {
        HeadConv<T> h;
        h.geom = ConvGeom{in_ch, out_ch, 1, 1, 0};
        const double stdev = std::sqrt(2.0 / double(in_ch));
        h.w = Var<T>(randn(out_ch, in_ch, stdev, rng));
        h.b = Var<T>(Tensor<T>(out_ch, 1, 1, 1, 1));
        return h;
    }

    std::vector<DecoderBlock<T>> make_decoder(int head_channels,
                                              std::mt19937_64& rng) {
        std::vector<DecoderBlock<T>> dec;
        const int N = cfg_.num_stages;
        for (int j = 0; j < N - 1; ++j) {
            // Block i = j+1 upsamples from stage N-1-j width to stage N-2-j.
            const int from = cfg_.width(N - 1 - j);
            const int to = cfg_.width(N - 2 - j);
            DecoderBlock<T> blk;
            blk.up = make_upconv(from, to, rng);
            blk.conv1 = make_conv_unit(2 * to, to, 1, rng);
            blk.conv2 = make_conv_unit(to, to, 1, rng);
            blk.head = make_head(to, head_channels, rng);
            dec.push_back(std::move(blk));
        }
        return dec;
    }

    Var<T> run_unit(Tape<T>* tape, const ConvUnit<T>& u, const Var<T>& x) const {
        Var<T> y = conv3d(tape, x, u.w, u.b, u.geom);
        y = instance_norm(tape, y, u.gamma, u.beta, cfg_.norm_eps);
        return leaky_relu(tape, y, cfg_.leaky_slope);
    }

    void visit_unit(const std::function<void(const std::string&, Var<T>&)>& fn,
                    const std::string& prefix, ConvUnit<T>& u) {
        fn(prefix + ".w", u.w);
        fn(prefix + ".b", u.b);
        fn(prefix + ".gamma", u.gamma);
        fn(prefix + ".beta", u.beta);
    }

    void visit_decoder(const std::function<void(const std::string&, Var<T>&)>& fn,
                       const std::string& name,
                       std::vector<DecoderBlock<T>>& dec) {
        for (std::size_t j = 0; j < dec.size(); ++j) {
            const std::string p = name + std::to_string(j);
            fn(p + ".up.w", dec[j].up.w);
            fn(p + ".up.b", dec[j].up.b);
            visit_unit(fn, p + ".conv1", dec[j].conv1);
            visit_unit(fn, p + ".conv2", dec[j].conv2);
            fn(p + ".head.w", dec[j].head.w);
            fn(p + ".head.b", dec[j].head.b);
        }
    }
};

}  // namespace banet
