#pragma once

#include <algorithm>
#include <string>

#include <json.hpp>

#include "banet/core/types.hpp"

namespace banet {

struct ModelConfig {
    int num_stages = 5;        // N encoder blocks
    int base_filters = 32;
    int max_filters = 320;
    int num_classes = 5;       // segmentation softmax channels (incl. bg)
    int boundary_channels = 2; // boundary softmax channels
    int conv_kernel = 3;
    double leaky_slope = 0.01;
    double norm_eps = 1e-5;

    /// Encoder width at stage k: base doubled per stage, capped.
    int width(int stage) const {
        const std::int64_t w = std::int64_t(base_filters) << stage;
        return static_cast<int>(std::min<std::int64_t>(w, max_filters));
    }

    std::int64_t total_downsampling() const {
        return std::int64_t(1) << (num_stages - 1);
    }

    void validate() const {
        if (num_stages < 2) throw Error("num_stages must be >= 2");
        if (base_filters < 1) throw Error("base_filters must be >= 1");
        if (max_filters < base_filters)
            throw Error("max_filters must be >= base_filters");
        if (num_classes < 2) throw Error("num_classes must be >= 2");
        if (boundary_channels < 2)
            throw Error("boundary_channels must be >= 2");
        if (conv_kernel < 1 || conv_kernel % 2 == 0)
            throw Error("conv_kernel must be odd");
        if (leaky_slope < 0) throw Error("leaky_slope must be >= 0");
        if (norm_eps <= 0) throw Error("norm_eps must be > 0");
    }

    /// Patch dims must divide by 2^(N-1) so every stride-2 step is exact.
    void check_patch(Shape3 patch) const {
        const std::int64_t f = total_downsampling();
        if (patch.d % f || patch.h % f || patch.w % f || patch.d < f ||
            patch.h < f || patch.w < f)
            throw Error("patch " + patch.str() + " not divisible by 2^(N-1)=" +
                        std::to_string(f));
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"num_stages", c.num_stages},
                       {"base_filters", c.base_filters},
                       {"max_filters", c.max_filters},
                       {"num_classes", c.num_classes},
                       {"boundary_channels", c.boundary_channels},
                       {"conv_kernel", c.conv_kernel},
                       {"leaky_slope", c.leaky_slope},
                       {"norm_eps", c.norm_eps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.num_stages = j.value("num_stages", c.num_stages);
    c.base_filters = j.value("base_filters", c.base_filters);
    c.max_filters = j.value("max_filters", c.max_filters);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.boundary_channels = j.value("boundary_channels", c.boundary_channels);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.norm_eps = j.value("norm_eps", c.norm_eps);
}

/// Fingerprint used to pair checkpoints with configs.
inline std::uint64_t model_config_hash(const ModelConfig& c) {
    nlohmann::json j = c;
    return fnv1a64(j.dump());
}

}  // namespace banet
