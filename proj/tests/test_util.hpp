#pragma once

#include <cmath>

#include "cbgln/matrix.hpp"
#include "cbgln/rng.hpp"

namespace cbgln::test {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(lo, hi);
    return m;
}

inline Matrix random_symmetric_nonneg(Rng& rng, std::size_t n, double hi = 1.0) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double v = rng.uniform(0.0, hi);
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    }
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return 1e300;
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d = std::max(d, std::fabs(a.data()[k] - b.data()[k]));
    return d;
}

}  // namespace cbgln::test
