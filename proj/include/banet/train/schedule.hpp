#pragma once

#include <cmath>

#include "banet/core/types.hpp"

namespace banet {

/// Polynomial decay: lr = lr0 * (1 - t/T)^0.9 for epoch t in [0, T].
inline double lr_schedule(int epoch, double lr0, int max_epochs) {
    if (max_epochs < 1) throw Error("max_epochs must be >= 1");
    if (epoch < 0 || epoch > max_epochs)
        throw Error("epoch " + std::to_string(epoch) + " outside [0, " +
                    std::to_string(max_epochs) + "]");
    return lr0 * std::pow(1.0 - double(epoch) / double(max_epochs), 0.9);
}

}  // namespace banet
