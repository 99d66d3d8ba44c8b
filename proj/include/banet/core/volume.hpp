#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "banet/core/types.hpp"

namespace banet {

/// Scalar intensity grid (a CT image or one derived from it).
/// Data is contiguous, W fastest: index = (z*H + y)*W + x.
struct Volume {
    std::vector<float> data;
    Shape3 shape;
    Spacing spacing;

    Volume() = default;
    Volume(Shape3 s, Spacing sp, float fill = 0.f)
        : data(static_cast<std::size_t>(s.numel()), fill), shape(s), spacing(sp) {
        check_spacing(sp);
        if (s.d < 1 || s.h < 1 || s.w < 1)
            throw Error("volume shape dims must be >= 1, got " + s.str());
    }

    float& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((z * shape.h + y) * shape.w + x)];
    }
    float at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((z * shape.h + y) * shape.w + x)];
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Integer class labels over {0..num_classes-1}; 0 is background.
struct LabelVolume {
    std::vector<std::uint8_t> data;
    Shape3 shape;
    Spacing spacing;
    int num_classes = 2;

    LabelVolume() = default;
    LabelVolume(Shape3 s, Spacing sp, int classes, std::uint8_t fill = 0)
        : data(static_cast<std::size_t>(s.numel()), fill),
          shape(s),
          spacing(sp),
          num_classes(classes) {
        check_spacing(sp);
        if (classes < 2) throw Error("num_classes must be >= 2");
        if (s.d < 1 || s.h < 1 || s.w < 1)
            throw Error("label volume shape dims must be >= 1, got " + s.str());
    }

    std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((z * shape.h + y) * shape.w + x)];
    }
    std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((z * shape.h + y) * shape.w + x)];
    }

    /// Throws on any voxel outside [0, num_classes-1].
    void validate() const {
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data[i] >= num_classes)
                throw Error("label value " + std::to_string(int(data[i])) +
                            " at linear index " + std::to_string(i) +
                            " outside [0, " + std::to_string(num_classes - 1) +
                            "]");
    }
};

/// Per-voxel class probability stack, layout (C, D, H, W), C slowest.
/// Channels sum to 1 per voxel (within 1e-5).
struct ProbabilityVolume {
    std::vector<float> data;
    std::int64_t channels = 0;
    Shape3 shape;
    Spacing spacing;

    ProbabilityVolume() = default;
    ProbabilityVolume(std::int64_t c, Shape3 s, Spacing sp)
        : data(static_cast<std::size_t>(c * s.numel()), 0.f),
          channels(c),
          shape(s),
          spacing(sp) {
        check_spacing(sp);
        if (c < 1) throw Error("probability volume needs >= 1 channel");
    }

    float& at(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>(
            ((c * shape.d + z) * shape.h + y) * shape.w + x)];
    }
    float at(std::int64_t c, std::int64_t z, std::int64_t y,
             std::int64_t x) const {
        return data[static_cast<std::size_t>(
            ((c * shape.d + z) * shape.h + y) * shape.w + x)];
    }

    const float* channel_ptr(std::int64_t c) const {
        return data.data() + c * shape.numel();
    }
    float* channel_ptr(std::int64_t c) {
        return data.data() + c * shape.numel();
    }

    /// Max per-voxel deviation of the channel sum from 1.
    double max_sum_error() const {
        const std::int64_t sp = shape.numel();
        double worst = 0.0;
        for (std::int64_t v = 0; v < sp; ++v) {
            double s = 0.0;
            for (std::int64_t c = 0; c < channels; ++c)
                s += data[static_cast<std::size_t>(c * sp + v)];
            worst = std::max(worst, std::abs(s - 1.0));
        }
        return worst;
    }

    void validate(double tol = 1e-5) const {
        for (float v : data)
            if (!(v >= -1e-6f && v <= 1.f + 1e-6f))
                throw Error("probability outside [0,1]: " + std::to_string(v));
        double e = max_sum_error();
        if (e > tol)
            throw Error("probability channels do not sum to 1 (max error " +
                        std::to_string(e) + ")");
    }
};

}  // namespace banet
