#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "banet/core/types.hpp"

namespace banet {

/// Cross-validation fold assignment: a partition of case ids with fold sizes
/// differing by at most one.
struct FoldSplit {
    std::map<std::string, int> assignment;
    int num_folds = 0;

    std::vector<std::string> cases_in(int fold, bool invert = false) const {
        std::vector<std::string> out;
        for (const auto& [id, f] : assignment)
            if ((f == fold) != invert) out.push_back(id);
        return out;
    }
    std::vector<std::string> validation_cases(int fold) const {
        return cases_in(fold, false);
    }
    std::vector<std::string> training_cases(int fold) const {
        return cases_in(fold, true);
    }
};

/// Seeded shuffle followed by round-robin assignment; deterministic.
inline FoldSplit make_folds(std::vector<std::string> case_ids, int k,
                            std::uint64_t seed) {
    if (k < 1) throw Error("fold count must be >= 1");
    if (static_cast<int>(case_ids.size()) < k)
        throw Error("fewer cases (" + std::to_string(case_ids.size()) +
                    ") than folds (" + std::to_string(k) + ")");
    std::sort(case_ids.begin(), case_ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(case_ids.begin(), case_ids.end(), rng);
    FoldSplit split;
    split.num_folds = k;
    for (std::size_t i = 0; i < case_ids.size(); ++i)
        split.assignment[case_ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return split;
}

}  // namespace banet
