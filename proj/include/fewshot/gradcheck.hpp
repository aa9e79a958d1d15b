#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fewshot {

struct GradCheckEntry {
    std::string op;
    double max_relative_error;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double worst() const;
    /// True when every op's error is strictly below the threshold.
    bool passed(double threshold = 1e-5) const;
};

/// Runs every differentiable op on several random small tensors per shape
/// family and compares backward gradients against central finite differences
/// (h = 1e-5) of a random linear projection of the output. The projection
/// makes the check sensitive to misplaced gradient entries, not just wrong
/// totals.
GradCheckReport run_gradient_checks(std::uint64_t seed);

}  // namespace fewshot
