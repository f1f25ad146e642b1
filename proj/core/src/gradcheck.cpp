#include "scope/gradcheck.hpp"

#include <cmath>

#include "scope/errors.hpp"

namespace scope {

GradCheckReport grad_check(const LossFn& loss, const GradFn& grad,
                           const std::vector<double>& x0, double eps) {
    if (eps <= 0.0) throw CheckError("grad_check: eps must be positive");
    const double f0 = loss(x0);
    if (!std::isfinite(f0)) throw CheckError("grad_check: non-finite forward value");

    const std::vector<double> analytic = grad(x0);
    if (analytic.size() != x0.size()) throw CheckError("grad_check: gradient size mismatch");

    GradCheckReport rep;
    std::vector<double> x = x0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double fp = loss(x);
        x[i] = orig - eps;
        const double fm = loss(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw CheckError("grad_check: non-finite perturbed value");

        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[i];
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(a - numeric) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
            rep.analytic_at_worst = a;
            rep.numeric_at_worst = numeric;
        }
    }
    return rep;
}

}  // namespace scope
