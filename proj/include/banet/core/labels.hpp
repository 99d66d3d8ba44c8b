#pragma once

#include "banet/core/volume.hpp"

namespace banet {

/// One-hot encoding: channel c is 1 exactly where label == c.
inline ProbabilityVolume one_hot(const LabelVolume& labels) {
    labels.validate();
    ProbabilityVolume p(labels.num_classes, labels.shape, labels.spacing);
    const std::int64_t sp = labels.shape.numel();
    for (std::int64_t v = 0; v < sp; ++v)
        p.data[static_cast<std::size_t>(labels.data[v] * sp + v)] = 1.f;
    return p;
}

/// Per-voxel argmax over channels. Ties break toward the lower class index,
/// so outputs are deterministic.
inline LabelVolume argmax_labels(const ProbabilityVolume& p) {
    LabelVolume l(p.shape, p.spacing, static_cast<int>(std::max<std::int64_t>(p.channels, 2)));
    const std::int64_t sp = p.shape.numel();
    for (std::int64_t v = 0; v < sp; ++v) {
        int best = 0;
        float best_p = p.data[static_cast<std::size_t>(v)];
        for (std::int64_t c = 1; c < p.channels; ++c) {
            float pc = p.data[static_cast<std::size_t>(c * sp + v)];
            if (pc > best_p) {
                best_p = pc;
                best = static_cast<int>(c);
            }
        }
        l.data[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(best);
    }
    return l;
}

}  // namespace banet
