#pragma once

#include <functional>
#include <vector>

namespace scope {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

using LossFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Compares the analytic gradient of a scalar loss against central finite
// differences at every coordinate of x0. Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8). Throws CheckError when the
// forward value is non-finite.
GradCheckReport grad_check(const LossFn& loss, const GradFn& grad,
                           const std::vector<double>& x0, double eps);

}  // namespace scope
