#pragma once

// Per-scale joint loss (soft Dice + cross-entropy on softmax outputs) and the
// deep-supervised total over both decoders.
//
// Dice denominator: the smooth term is written inside the per-voxel sum, so
// it contributes V*epsilon with V the voxel count of one channel.
// Cross-entropy is multi-class NLL on one-hot targets; on 2-channel inputs in
// sum mode it reduces to the binary form -sum(y log p + (1-y) log(1-p)).

#include <cmath>
#include <vector>

#include "banet/model/autograd.hpp"
#include "banet/model/ops.hpp"
#include "banet/model/tensor.hpp"

namespace banet {

enum class CeReduction { kSum, kVoxelMean };
enum class DiceClassSet { kForegroundOnly, kAll };

constexpr double kCeClamp = 1e-7;

struct LossConfig {
    double epsilon = 1e-5;
    CeReduction ce_reduction = CeReduction::kVoxelMean;
    DiceClassSet dice_class_set = DiceClassSet::kForegroundOnly;
    // Per-scale deep supervision weights, coarse to fine. Empty selects the
    // 2^(i-1) rule normalized to sum 1.
    std::vector<double> ds_weights;

    void validate() const {
        if (epsilon <= 0) throw Error("loss epsilon must be > 0");
        if (!ds_weights.empty()) {
            double s = 0;
            for (double w : ds_weights) {
                if (w < 0) throw Error("ds_weights must be non-negative");
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw Error("ds_weights must sum to 1");
        }
    }
};

struct LossReport {
    double total = 0;
    std::vector<double> seg_scale;       // L_i^s, coarse to fine
    std::vector<double> boundary_scale;  // L_i^b
};

/// Deep supervision weights for an N-stage model: N-1 weights proportional
/// to 2^(i-1), coarse to fine, normalized to sum 1.
inline std::vector<double> ds_weights(int num_stages) {
    if (num_stages < 2) throw Error("ds_weights requires N >= 2");
    const int n = num_stages - 1;
    const double denom = double((std::int64_t(1) << n) - 1);
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        w[static_cast<std::size_t>(j)] = double(std::int64_t(1) << j) / denom;
    return w;
}

namespace detail {

inline std::int64_t first_dice_class(DiceClassSet set) {
    return set == DiceClassSet::kForegroundOnly ? 1 : 0;
}

}  // namespace detail

template <typename T>
double soft_dice_value(const Tensor<T>& p, const Tensor<T>& y, double eps,
                       DiceClassSet set) {
    if (!p.same_shape(y))
        throw Error("soft_dice: shape mismatch " + p.shape_str() + " vs " +
                    y.shape_str());
    const std::int64_t N = p.n(), C = p.c(), S = p.spatial();
    const std::int64_t c0 = detail::first_dice_class(set);
    if (c0 >= C) throw Error("soft_dice: no classes in the chosen set");
    const double V = double(N * S);
    double acc = 0;
    for (std::int64_t c = c0; c < C; ++c) {
        double num = 0, den = 0;
        for (std::int64_t n = 0; n < N; ++n) {
            const T* pp = p.at(n, c);
            const T* yp = y.at(n, c);
            for (std::int64_t i = 0; i < S; ++i) {
                num += double(pp[i]) * double(yp[i]);
                den += double(pp[i]) + double(yp[i]);
            }
        }
        acc += 2.0 * num / (den + V * eps);
    }
    return 1.0 - acc / double(C - c0);
}

template <typename T>
double cross_entropy_value(const Tensor<T>& p, const Tensor<T>& y,
                           CeReduction reduction) {
    if (!p.same_shape(y))
        throw Error("cross_entropy: shape mismatch " + p.shape_str() + " vs " +
                    y.shape_str());
    const std::int64_t total = p.numel();
    double acc = 0;
    for (std::int64_t i = 0; i < total; ++i) {
        const double yv = double(y.data[static_cast<std::size_t>(i)]);
        if (yv == 0) continue;
        double pv = double(p.data[static_cast<std::size_t>(i)]);
        pv = std::min(std::max(pv, kCeClamp), 1.0 - kCeClamp);
        acc -= yv * std::log(pv);
    }
    if (reduction == CeReduction::kVoxelMean) acc /= double(p.n() * p.spatial());
    return acc;
}

template <typename T>
double joint_scale_loss_value(const Tensor<T>& p, const Tensor<T>& y,
                              const LossConfig& cfg) {
    return soft_dice_value(p, y, cfg.epsilon, cfg.dice_class_set) +
           cross_entropy_value(p, y, cfg.ce_reduction);
}

// ---------------------------------------------------------------------------
// Autograd versions. Targets are plain tensors (no gradient).

template <typename T>
Var<T> soft_dice_loss(Tape<T>* tape, const Var<T>& p,
                      std::shared_ptr<const Tensor<T>> y, double eps,
                      DiceClassSet set) {
    const Tensor<T>& pv = p.value();
    const std::int64_t N = pv.n(), C = pv.c(), S = pv.spatial();
    const std::int64_t c0 = detail::first_dice_class(set);
    if (c0 >= C) throw Error("soft_dice: no classes in the chosen set");
    const double V = double(N * S);
    // Keep per-class sums for the backward pass.
    auto nums = std::make_shared<std::vector<double>>();
    auto dens = std::make_shared<std::vector<double>>();
    double acc = 0;
    for (std::int64_t c = c0; c < C; ++c) {
        double num = 0, den = 0;
        for (std::int64_t n = 0; n < N; ++n) {
            const T* pp = pv.at(n, c);
            const T* yp = y->at(n, c);
            for (std::int64_t i = 0; i < S; ++i) {
                num += double(pp[i]) * double(yp[i]);
                den += double(pp[i]) + double(yp[i]);
            }
        }
        nums->push_back(2.0 * num);
        dens->push_back(den + V * eps);
        acc += nums->back() / dens->back();
    }
    Tensor<T> out(1, 1, 1, 1, 1);
    out.data[0] = static_cast<T>(1.0 - acc / double(C - c0));
    Var<T> loss(std::move(out), p.requires_grad());
    if (tape && loss.requires_grad()) {
        auto ps = p, ls = loss;
        tape->push([ps, ls, y, nums, dens, c0]() mutable {
            const Tensor<T>* dl = ls.grad_if_any();
            if (!dl) return;
            const double d = double(dl->data[0]);
            const Tensor<T>& pv = ps.value();
            const std::int64_t N = pv.n(), C = pv.c(), S = pv.spatial();
            const double scale = -d / double(C - c0);
            Tensor<T>& dp = ps.grad();
            for (std::int64_t c = c0; c < C; ++c) {
                const double num = (*nums)[static_cast<std::size_t>(c - c0)];
                const double den = (*dens)[static_cast<std::size_t>(c - c0)];
                const double inv_den = 1.0 / den;
                const double num_over_den2 = num * inv_den * inv_den;
                for (std::int64_t n = 0; n < N; ++n) {
                    const T* yp = y->at(n, c);
                    T* dpp = dp.at(n, c);
                    for (std::int64_t i = 0; i < S; ++i)
                        dpp[i] += static_cast<T>(
                            scale *
                            (2.0 * double(yp[i]) * inv_den - num_over_den2));
                }
            }
        });
    }
    return loss;
}

template <typename T>
Var<T> cross_entropy_loss(Tape<T>* tape, const Var<T>& p,
                          std::shared_ptr<const Tensor<T>> y,
                          CeReduction reduction) {
    double value = cross_entropy_value(p.value(), *y, reduction);
    Tensor<T> out(1, 1, 1, 1, 1);
    out.data[0] = static_cast<T>(value);
    Var<T> loss(std::move(out), p.requires_grad());
    if (tape && loss.requires_grad()) {
        auto ps = p, ls = loss;
        tape->push([ps, ls, y, reduction]() mutable {
            const Tensor<T>* dl = ls.grad_if_any();
            if (!dl) return;
            const Tensor<T>& pv = ps.value();
            const double scale =
                reduction == CeReduction::kVoxelMean
                    ? double(dl->data[0]) / double(pv.n() * pv.spatial())
                    : double(dl->data[0]);
            Tensor<T>& dp = ps.grad();
            const std::int64_t total = pv.numel();
            for (std::int64_t i = 0; i < total; ++i) {
                const auto k = static_cast<std::size_t>(i);
                const double yv = double(y->data[k]);
                if (yv == 0) continue;
                const double praw = double(pv.data[k]);
                if (praw <= kCeClamp || praw >= 1.0 - kCeClamp) continue;
                dp.data[k] -= static_cast<T>(scale * yv / praw);
            }
        });
    }
    return loss;
}

template <typename T>
Var<T> joint_scale_loss(Tape<T>* tape, const Var<T>& p,
                        std::shared_ptr<const Tensor<T>> y,
                        const LossConfig& cfg) {
    cfg.validate();
    auto dice = soft_dice_loss(tape, p, y, cfg.epsilon, cfg.dice_class_set);
    auto ce = cross_entropy_loss(tape, p, y, cfg.ce_reduction);
    return weighted_sum(tape, std::vector<Var<T>>{dice, ce}, {1.0, 1.0});
}

/// One-hot supervision targets per scale, coarse to fine.
template <typename T>
struct SupervisionTargets {
    std::vector<std::shared_ptr<const Tensor<T>>> seg;
    std::vector<std::shared_ptr<const Tensor<T>>> boundary;
};

/// Eq-3 combination: total = sum_i w_i * (L_i^s + L_i^b).
template <typename T>
std::pair<Var<T>, LossReport> deep_supervised_loss(
    Tape<T>* tape, const std::vector<Var<T>>& seg_probs,
    const std::vector<Var<T>>& boundary_probs,
    const SupervisionTargets<T>& gt, const LossConfig& cfg) {
    cfg.validate();
    const std::size_t scales = seg_probs.size();
    if (boundary_probs.size() != scales || gt.seg.size() != scales ||
        gt.boundary.size() != scales)
        throw Error("deep_supervised_loss: scale count mismatch");
    std::vector<double> w = cfg.ds_weights;
    if (w.empty()) w = ds_weights(static_cast<int>(scales) + 1);
    if (w.size() != scales)
        throw Error("deep_supervised_loss: " + std::to_string(w.size()) +
                    " weights for " + std::to_string(scales) + " scales");

    LossReport report;
    std::vector<Var<T>> terms;
    std::vector<double> weights;
    for (std::size_t i = 0; i < scales; ++i) {
        auto ls = joint_scale_loss(tape, seg_probs[i], gt.seg[i], cfg);
        auto lb = joint_scale_loss(tape, boundary_probs[i], gt.boundary[i], cfg);
        report.seg_scale.push_back(double(ls.value().data[0]));
        report.boundary_scale.push_back(double(lb.value().data[0]));
        terms.push_back(ls);
        terms.push_back(lb);
        weights.push_back(w[i]);
        weights.push_back(w[i]);
    }
    auto total = weighted_sum(tape, terms, weights);
    report.total = double(total.value().data[0]);
    return {total, report};
}

}  // namespace banet
