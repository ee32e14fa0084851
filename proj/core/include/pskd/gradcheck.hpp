#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pskd/tensor.hpp"

namespace pskd {

// A differentiable scalar objective over a parameter list: `loss`
// evaluates it, `grad` returns the analytic gradient per parameter.
struct GradProblem {
    std::function<Scalar(const std::vector<Tensor>&)> loss;
    std::function<std::vector<Tensor>(const std::vector<Tensor>&)> grad;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool pass = false;
    // Coordinates checked, and where the worst error sat.
    std::int64_t coords = 0;
    int worst_param = -1;
    std::int64_t worst_index = -1;
};

// Central differences per coordinate against the analytic gradient.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
// Never throws: failures live in the report.
GradCheckReport finite_diff_check(const GradProblem& problem, std::vector<Tensor> params,
                                  double h, double tol);

}  // namespace pskd
