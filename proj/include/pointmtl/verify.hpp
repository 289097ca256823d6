#pragma once

#include <string>
#include <vector>

namespace pointmtl {

struct CheckResult {
    std::string name;
    double max_error = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool all_pass() const;
};

// Gradient checks for every differentiable operation, the Chamfer
// oracle sweep, k-NN against the brute-force double loop, encoder permutation
// invariance, determinism, and the epoch-wise centroid discipline.
VerifyReport run_verification(uint64_t seed = 0xA11CE5);

std::string format_report(const VerifyReport& report);

}  // namespace pointmtl
