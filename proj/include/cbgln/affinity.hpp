#pragma once

#include <optional>

#include "cbgln/matrix.hpp"
#include "cbgln/tape.hpp"

namespace cbgln {

struct AffinityStats {
    double density = 0.0;  // fraction of strictly positive entries
    double min = 0.0;
    double max = 0.0;
};

/// ReLU(F F^T) with F = x * transform (+ optional row bias): the parameterized
/// kernel producing the dense temporal dependency matrix. Output is exactly
/// symmetric (upper triangle mirrored) and nonnegative.
Var build_affinity(Var x, Var transform, std::optional<Var> bias = std::nullopt);

/// Untaped variant for inspection paths (e.g. segmenting with a fixed kernel).
Matrix build_affinity(const Matrix& x, const Matrix& transform,
                      const Matrix* bias = nullptr);

AffinityStats affinity_stats(const Matrix& a);

/// ReLU of the Gram matrix of f's rows; the fused primitive behind
/// build_affinity. Exposed for reuse and testing.
Var gram_relu(Var f);

}  // namespace cbgln
