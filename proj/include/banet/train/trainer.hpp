#pragma once

// Optimization loop: SGD with momentum and polynomial lr decay, patch-based
// epochs (a fixed iteration count, not dataset passes), deep supervision over
// both decoders, per-epoch validation DSC and checkpointing (last + best).
//
// Determinism: every random draw derives from (seed, step, slot), so a fixed
// seed with single-worker loading reproduces loss traces bitwise.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "banet/boundary/boundary.hpp"
#include "banet/core/labels.hpp"
#include "banet/infer/sliding_window.hpp"
#include "banet/loss/loss.hpp"
#include "banet/metrics/metrics.hpp"
#include "banet/model/banet.hpp"
#include "banet/model/checkpoint.hpp"
#include "banet/preprocess/augment.hpp"
#include "banet/preprocess/patch.hpp"
#include "banet/train/folds.hpp"
#include "banet/train/schedule.hpp"

namespace banet {

struct TrainConfig {
    double lr0 = 0.01;
    int max_epochs = 200;  // T
    int iterations_per_epoch = 250;
    int batch_size = 2;
    double momentum = 0.99;
    double weight_decay = 3e-5;
    std::uint64_t seed = 0;
    int fold_index = 0;
    int num_folds = 4;
    bool augment_enabled = true;
    bool validate_each_epoch = true;

    void validate() const {
        if (lr0 <= 0) throw Error("lr0 must be > 0");
        if (max_epochs < 1) throw Error("max_epochs must be >= 1");
        if (iterations_per_epoch < 1)
            throw Error("iterations_per_epoch must be >= 1");
        if (batch_size < 1) throw Error("batch_size must be >= 1");
        if (momentum < 0 || momentum >= 1)
            throw Error("momentum must be in [0,1)");
        if (weight_decay < 0) throw Error("weight_decay must be >= 0");
        if (num_folds < 1) throw Error("num_folds must be >= 1");
        if (fold_index < 0 || fold_index >= num_folds)
            throw Error("fold_index out of range");
    }
};

struct TrainCase {
    std::string id;
    Volume image;
    LabelVolume labels;
};

// ---------------------------------------------------------------------------

template <typename T>
class SgdOptimizer {
public:
    SgdOptimizer(double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    /// v = m*v + (g + wd*w); w -= lr*v
    void step(BANet<T>& net, double lr) {
        std::size_t i = 0;
        net.visit_params([&](const std::string&, Var<T>& p) {
            if (i >= buffers_.size())
                buffers_.push_back(Tensor<T>::zeros_like(p.value()));
            Tensor<T>& v = buffers_[i++];
            Tensor<T>& w = p.value();
            const Tensor<T>* g = p.grad_if_any();
            const std::int64_t n = w.numel();
            const T m = static_cast<T>(momentum_);
            const T wd = static_cast<T>(weight_decay_);
            const T step_lr = static_cast<T>(lr);
            for (std::int64_t k = 0; k < n; ++k) {
                const auto u = static_cast<std::size_t>(k);
                const T gk = (g ? g->data[u] : T(0)) + wd * w.data[u];
                v.data[u] = m * v.data[u] + gk;
                w.data[u] -= step_lr * v.data[u];
            }
        });
    }

    std::map<std::string, Tensor<T>> state(BANet<T>& net) {
        std::map<std::string, Tensor<T>> out;
        std::size_t i = 0;
        net.visit_params([&](const std::string& name, Var<T>&) {
            if (i < buffers_.size()) out.emplace("momentum." + name, buffers_[i]);
            ++i;
        });
        return out;
    }

    void load_state(BANet<T>& net,
                    const std::map<std::string, Tensor<T>>& state) {
        buffers_.clear();
        net.visit_params([&](const std::string& name, Var<T>& p) {
            auto it = state.find("momentum." + name);
            buffers_.push_back(it != state.end()
                                   ? it->second
                                   : Tensor<T>::zeros_like(p.value()));
        });
    }

private:
    double momentum_;
    double weight_decay_;
    std::vector<Tensor<T>> buffers_;
};

// ---------------------------------------------------------------------------
// Batch assembly.

template <typename T>
Tensor<T> batch_images(const std::vector<Volume>& imgs) {
    if (imgs.empty()) throw Error("empty batch");
    const Shape3 s = imgs[0].shape;
    Tensor<T> x(static_cast<std::int64_t>(imgs.size()), 1, s.d, s.h, s.w);
    for (std::size_t b = 0; b < imgs.size(); ++b) {
        if (!(imgs[b].shape == s)) throw Error("batch shape mismatch");
        T* dst = x.at(static_cast<std::int64_t>(b), 0);
        for (std::int64_t i = 0; i < s.numel(); ++i)
            dst[i] = static_cast<T>(imgs[b].data[static_cast<std::size_t>(i)]);
    }
    return x;
}

/// One-hot segmentation + boundary targets at every supervision scale.
template <typename T>
SupervisionTargets<T> build_supervision_targets(
    const std::vector<LabelVolume>& labels, int num_stages,
    Connectivity conn = Connectivity::k6) {
    if (labels.empty()) throw Error("empty batch");
    const int scales = num_stages - 1;
    const int classes = labels[0].num_classes;
    const auto B = static_cast<std::int64_t>(labels.size());

    std::vector<std::vector<LabelVolume>> lab_pyr(labels.size());
    std::vector<std::vector<BoundaryVolume>> bnd_pyr(labels.size());
    for (std::size_t b = 0; b < labels.size(); ++b) {
        lab_pyr[b] = build_label_pyramid(labels[b], scales);
        bnd_pyr[b].reserve(static_cast<std::size_t>(scales));
        for (const auto& lv : lab_pyr[b])
            bnd_pyr[b].push_back(extract_boundary(lv, conn));
    }

    SupervisionTargets<T> gt;
    for (int i = 0; i < scales; ++i) {
        const Shape3 s = lab_pyr[0][static_cast<std::size_t>(i)].shape;
        auto seg = std::make_shared<Tensor<T>>(B, classes, s.d, s.h, s.w);
        auto bnd = std::make_shared<Tensor<T>>(B, 2, s.d, s.h, s.w);
        for (std::int64_t b = 0; b < B; ++b) {
            const auto& lv = lab_pyr[static_cast<std::size_t>(b)]
                                    [static_cast<std::size_t>(i)];
            const auto& bv = bnd_pyr[static_cast<std::size_t>(b)]
                                    [static_cast<std::size_t>(i)];
            for (std::int64_t v = 0; v < s.numel(); ++v) {
                seg->at(b, lv.data[static_cast<std::size_t>(v)])[v] = T(1);
                bnd->at(b, bv.data[static_cast<std::size_t>(v)])[v] = T(1);
            }
        }
        gt.seg.push_back(std::move(seg));
        gt.boundary.push_back(std::move(bnd));
    }
    return gt;
}

// ---------------------------------------------------------------------------

/// One SGD update against the deep-supervised loss. Throws (with a state
/// dump when `dump_path` is set) if the loss goes non-finite.
template <typename T>
LossReport train_step(BANet<T>& net, SgdOptimizer<T>& opt,
                      const Tensor<T>& batch, const SupervisionTargets<T>& gt,
                      double lr, const LossConfig& lcfg,
                      const std::string& dump_path = "") {
    net.zero_grads();
    Tape<T> tape;
    Var<T> x(batch, /*needs_grad=*/false);
    auto out = net.forward(&tape, x, ForwardOptions{});
    auto [loss, report] =
        deep_supervised_loss(&tape, out.seg_probs, out.boundary_probs, gt, lcfg);
    if (!std::isfinite(report.total)) {
        if (!dump_path.empty()) {
            nlohmann::json dump{{"error", "non-finite loss"},
                                {"lr", lr},
                                {"total", report.total},
                                {"seg_scale", report.seg_scale},
                                {"boundary_scale", report.boundary_scale}};
            std::ofstream(dump_path) << dump.dump(2) << "\n";
        }
        throw Error("non-finite training loss (diagnostic dump: " +
                    (dump_path.empty() ? std::string("disabled") : dump_path) +
                    ")");
    }
    backward(tape, loss);
    opt.step(net, lr);
    return report;
}

// ---------------------------------------------------------------------------

struct FitResult {
    std::string last_checkpoint;
    std::string best_checkpoint;
    double best_val_dsc = -1.0;
    int epochs_run = 0;
};

/// Per-class mean foreground DSC of sliding-window predictions on a case set.
template <typename T>
std::vector<double> validation_dsc(const BANet<T>& net,
                                   const std::vector<const TrainCase*>& cases,
                                   Shape3 patch) {
    const int classes = net.config().num_classes;
    std::vector<double> sums(static_cast<std::size_t>(classes - 1), 0.0);
    if (cases.empty()) return sums;
    for (const auto* tc : cases) {
        auto plan = make_window_plan(tc->image.shape, patch, 0.5,
                                     BlendMode::kGaussian);
        auto probs = sliding_window_predict(net, tc->image, plan);
        auto pred = argmax_labels(probs);
        pred.num_classes = classes;
        for (int c = 1; c < classes; ++c)
            sums[static_cast<std::size_t>(c - 1)] += dsc(pred, tc->labels, c);
    }
    for (auto& s : sums) s /= double(cases.size());
    return sums;
}

template <typename T>
class Trainer {
public:
    Trainer(std::vector<TrainCase> cases, TrainConfig tcfg, ModelConfig mcfg,
            LossConfig lcfg, PreprocessConfig pcfg, AugmentSpec aug,
            std::string run_dir)
        : cases_(std::move(cases)),
          tcfg_(tcfg),
          mcfg_(mcfg),
          lcfg_(lcfg),
          pcfg_(pcfg),
          aug_(aug),
          run_dir_(std::move(run_dir)) {
        tcfg_.validate();
        mcfg_.validate();
        lcfg_.validate();
        pcfg_.validate();
        mcfg_.check_patch(pcfg_.patch_shape);
        if (cases_.empty()) throw Error("no training cases");
        std::vector<std::string> ids;
        for (const auto& c : cases_) ids.push_back(c.id);
        if (static_cast<int>(ids.size()) >= tcfg_.num_folds && tcfg_.num_folds > 1) {
            split_ = make_folds(ids, tcfg_.num_folds, tcfg_.seed);
            for (const auto& c : cases_) {
                if (split_.assignment.at(c.id) == tcfg_.fold_index)
                    val_.push_back(&c);
                else
                    train_.push_back(&c);
            }
        } else {
            for (const auto& c : cases_) train_.push_back(&c);
        }
        if (train_.empty()) throw Error("fold split left no training cases");
    }

    const std::vector<const TrainCase*>& training_set() const { return train_; }
    const std::vector<const TrainCase*>& validation_set() const { return val_; }

    FitResult fit(bool resume = false) {
        namespace fs = std::filesystem;
        fs::create_directories(fs::path(run_dir_) / "checkpoints");
        const std::string last_path =
            (fs::path(run_dir_) / "checkpoints" / "last.ckpt").string();
        const std::string best_path =
            (fs::path(run_dir_) / "checkpoints" / "best.ckpt").string();
        const std::string log_path = (fs::path(run_dir_) / "log.csv").string();

        BANet<T> net;
        SgdOptimizer<T> opt(tcfg_.momentum, tcfg_.weight_decay);
        int start_epoch = 0;
        double best_dsc = -1.0;
        if (resume && fs::exists(last_path)) {
            auto [loaded, meta] = load_checkpoint<T>(last_path);
            net = std::move(loaded);
            opt.load_state(net, meta.opt_state);
            start_epoch = meta.epoch + 1;
            best_dsc = meta.extra.value("best_val_dsc", -1.0);
        } else {
            net = BANet<T>::build(mcfg_, tcfg_.seed);
        }

        std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
        if (!log) throw Error("cannot write training log: " + log_path);
        if (!resume) {
            log << "epoch,step,lr,total";
            for (int i = 1; i < mcfg_.num_stages; ++i) log << ",seg_l" << i;
            for (int i = 1; i < mcfg_.num_stages; ++i) log << ",bnd_l" << i;
            log << ",cases";
            for (int c = 1; c < mcfg_.num_classes; ++c)
                log << ",val_dsc_" << kipa_class_name(c);
            log << ",val_dsc_mean\n";
        }

        FitResult result;
        const std::string dump_path =
            (fs::path(run_dir_) / "abort_dump.json").string();
        for (int epoch = start_epoch; epoch < tcfg_.max_epochs; ++epoch) {
            const double lr = lr_schedule(epoch, tcfg_.lr0, tcfg_.max_epochs);
            for (int it = 0; it < tcfg_.iterations_per_epoch; ++it) {
                const std::uint64_t gstep =
                    std::uint64_t(epoch) *
                        std::uint64_t(tcfg_.iterations_per_epoch) +
                    std::uint64_t(it);
                std::vector<Volume> imgs;
                std::vector<LabelVolume> labs;
                std::string case_list;
                for (int b = 0; b < tcfg_.batch_size; ++b) {
                    std::mt19937_64 rng(mix_seed(tcfg_.seed, gstep, 1000 + b));
                    const auto& tc = *train_[rng() % train_.size()];
                    auto [pv, pl] = sample_patch(
                        tc.image, tc.labels, pcfg_,
                        mix_seed(tcfg_.seed, gstep, 2000 + b));
                    if (tcfg_.augment_enabled) {
                        AugmentSpec spec = aug_;
                        spec.seed = mix_seed(tcfg_.seed, gstep, 3000 + b);
                        std::tie(pv, pl) = augment(pv, pl, spec);
                    }
                    imgs.push_back(std::move(pv));
                    labs.push_back(std::move(pl));
                    case_list += (b ? "|" : "") + tc.id;
                }
                auto x = batch_images<T>(imgs);
                auto gt = build_supervision_targets<T>(labs, mcfg_.num_stages);
                auto report =
                    train_step(net, opt, x, gt, lr, lcfg_, dump_path);

                log << epoch << ',' << it << ',' << std::setprecision(10) << lr
                    << ',' << std::setprecision(10) << report.total;
                for (double v : report.seg_scale) log << ',' << v;
                for (double v : report.boundary_scale) log << ',' << v;
                log << ',' << case_list;
                const bool last_it = it + 1 == tcfg_.iterations_per_epoch;
                if (last_it && tcfg_.validate_each_epoch && !val_.empty()) {
                    auto per_class =
                        validation_dsc(net, val_, pcfg_.patch_shape);
                    double mean = 0;
                    for (double v : per_class) {
                        log << ',' << v;
                        mean += v;
                    }
                    mean /= double(per_class.size());
                    log << ',' << mean << '\n';
                    if (mean > best_dsc) {
                        best_dsc = mean;
                        save_checkpoint(best_path, net, epoch, opt.state(net),
                                        {{"best_val_dsc", best_dsc}});
                    }
                } else {
                    for (int c = 0; c < mcfg_.num_classes; ++c) log << ',';
                    log << '\n';
                }
            }
            save_checkpoint(last_path, net, epoch, opt.state(net),
                            {{"best_val_dsc", best_dsc}});
            result.epochs_run = epoch - start_epoch + 1;
        }
        log.flush();
        result.last_checkpoint = last_path;
        result.best_checkpoint = fs::exists(best_path) ? best_path : last_path;
        result.best_val_dsc = best_dsc;
        return result;
    }

private:
    std::vector<TrainCase> cases_;
    TrainConfig tcfg_;
    ModelConfig mcfg_;
    LossConfig lcfg_;
    PreprocessConfig pcfg_;
    AugmentSpec aug_;
    std::string run_dir_;
    FoldSplit split_;
    std::vector<const TrainCase*> train_;
    std::vector<const TrainCase*> val_;
};

}  // namespace banet
