#include "pskd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace pskd {

GradCheckReport finite_diff_check(const GradProblem& problem, std::vector<Tensor> params,
                                  double h, double tol) {
    GradCheckReport report;
    const std::vector<Tensor> analytic = problem.grad(params);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::size_t j = 0; j < params[pi].data.size(); ++j) {
            const Scalar saved = params[pi].data[j];
            params[pi].data[j] = saved + h;
            const Scalar lp = problem.loss(params);
            params[pi].data[j] = saved - h;
            const Scalar lm = problem.loss(params);
            params[pi].data[j] = saved;

            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[pi].data[j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++report.coords;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = static_cast<int>(pi);
                report.worst_index = static_cast<std::int64_t>(j);
            }
        }
    }
    report.pass = report.max_rel_error < tol && std::isfinite(report.max_rel_error);
    return report;
}

}  // namespace pskd
