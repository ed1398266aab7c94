#pragma once

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeattn/parameter.hpp"

namespace treeattn {

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    double max_abs_diff = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    double worst_rel_err = 0.0;
    bool all_pass = true;
};

// Central finite-difference check of analytic gradients.
//
// loss(with_grad) must be deterministic (dropout disabled) and, when
// with_grad is true, accumulate gradients into the given parameters.
// An entry passes if |g - fd| <= absolute_floor or the relative error
// |g - fd| / max(|g|, |fd|) is below tolerance.
inline GradCheckReport finite_difference_check(const std::function<double(bool)>& loss,
                                               const std::vector<Parameter*>& params, double step,
                                               double tolerance, double absolute_floor = 1e-7) {
    if (step < 1e-6 || step > 1e-4)
        throw std::invalid_argument("finite_difference_check: step " + std::to_string(step) +
                                    " outside [1e-6, 1e-4]");
    zero_grads(params);
    const double l0 = loss(true);
    const double l0_again = loss(false);
    if (l0 != l0_again)
        throw std::runtime_error("finite_difference_check: loss is not deterministic across identical calls");

    GradCheckReport report;
    for (Parameter* p : params) {
        GradCheckEntry entry;
        entry.param = p->name;
        for (int i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + step;
            const double lp = loss(false);
            p->value[i] = saved - step;
            const double lm = loss(false);
            p->value[i] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            const double g = p->grad[i];
            const double diff = std::fabs(g - fd);
            entry.max_abs_diff = std::max(entry.max_abs_diff, diff);
            if (diff <= absolute_floor) continue;
            const double rel = diff / std::max(std::fabs(g), std::fabs(fd));
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            if (rel >= tolerance) entry.pass = false;
        }
        report.worst_rel_err = std::max(report.worst_rel_err, entry.max_rel_err);
        report.all_pass = report.all_pass && entry.pass;
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

}  // namespace treeattn
