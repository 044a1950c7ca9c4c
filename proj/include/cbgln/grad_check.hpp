#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cbgln/tape.hpp"

namespace cbgln {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_entry = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` must construct the full forward pass on the given tape and return
/// the scalar loss; it is called once for the analytic pass and twice per
/// parameter entry for the numeric one, so it must be deterministic. The
/// relative error of entry e is |analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-8); the report carries the maximum over all entries.
GradCheckReport grad_check(const std::function<Var(Tape&)>& build,
                           const std::vector<Parameter*>& params, double epsilon);

}  // namespace cbgln
