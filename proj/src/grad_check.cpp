#include "cbgln/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace cbgln {

namespace {

double forward_value(const std::function<Var(Tape&)>& build) {
    Tape tape;
    Var loss = build(tape);
    double v = loss.value().at(0, 0);
    tape.clear();
    return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(Tape&)>& build,
                           const std::vector<Parameter*>& params, double epsilon) {
    if (epsilon <= 0.0) {
        throw ContractError("grad_check: epsilon must be positive");
    }
    for (Parameter* p : params) p->reset_grad();
    {
        Tape tape;
        Var loss = build(tape);
        tape.backward(loss);
    }
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            double saved = p.value.data()[k];
            p.value.data()[k] = saved + epsilon;
            double up = forward_value(build);
            p.value.data()[k] = saved - epsilon;
            double down = forward_value(build);
            p.value.data()[k] = saved;

            double numeric = (up - down) / (2.0 * epsilon);
            double a = analytic[pi].data()[k];
            double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_parameter = p.name;
                report.worst_entry = k;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace cbgln
