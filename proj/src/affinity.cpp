#include "cbgln/affinity.hpp"

namespace cbgln {

namespace {

Matrix relu_gram(const Matrix& f) {
    const std::size_t n = f.rows();
    const std::size_t m = f.cols();
    Matrix y(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < m; ++k) dot += f.at(i, k) * f.at(j, k);
            double v = dot > 0.0 ? dot : 0.0;
            y.at(i, j) = v;
            y.at(j, i) = v;
        }
    }
    return y;
}

}  // namespace

Var gram_relu(Var f) {
    Tape& t = f.tape();
    Matrix y = relu_gram(f.value());
    Matrix yc = y;
    // Y = relu(F F^T); with Ghat = G .* [Y > 0], dF = (Ghat + Ghat^T) F.
    return t.record(std::move(y), {f}, [f, yc](Tape& t2, const Matrix& g) {
        Matrix masked(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j)
                masked.at(i, j) = yc.at(i, j) > 0.0 ? g.at(i, j) : 0.0;
        Matrix sym = add(masked, transpose(masked));
        t2.accumulate_grad(f, matmul(sym, t2.value(f)));
    });
}

Var build_affinity(Var x, Var transform, std::optional<Var> bias) {
    if (x.value().cols() != transform.value().rows()) {
        throw DimensionError("build_affinity", x.value().rows(), x.value().cols(),
                             transform.value().rows(), transform.value().cols());
    }
    Var f = matmul(x, transform);
    if (bias) f = add_row(f, *bias);
    return gram_relu(f);
}

Matrix build_affinity(const Matrix& x, const Matrix& transform, const Matrix* bias) {
    if (x.cols() != transform.rows()) {
        throw DimensionError("build_affinity", x.rows(), x.cols(), transform.rows(),
                             transform.cols());
    }
    Matrix f = matmul(x, transform);
    if (bias != nullptr) {
        for (std::size_t i = 0; i < f.rows(); ++i)
            for (std::size_t j = 0; j < f.cols(); ++j) f.at(i, j) += bias->at(0, j);
    }
    return relu_gram(f);
}

AffinityStats affinity_stats(const Matrix& a) {
    AffinityStats s;
    if (a.empty()) return s;
    s.min = a.data()[0];
    s.max = a.data()[0];
    std::size_t positive = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double v = a.data()[k];
        if (v > 0.0) ++positive;
        if (v < s.min) s.min = v;
        if (v > s.max) s.max = v;
    }
    s.density = static_cast<double>(positive) / static_cast<double>(a.size());
    return s;
}

}  // namespace cbgln
