#include "cbgln/tape.hpp"

#include <cmath>

namespace cbgln {

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::leaf(Parameter& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    return push(std::move(n));
}

Var Tape::record(Matrix value, std::vector<Var> parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.parents.reserve(parents.size());
    for (const Var& p : parents) {
        if (&p.tape() != this) {
            throw ContractError("Tape::record: operand belongs to a different tape");
        }
        n.parents.push_back(p.id());
    }
    n.backward = std::move(backward);
    return push(std::move(n));
}

void Tape::accumulate_grad(const Var& v, const Matrix& g) {
    Node& n = nodes_[v.id()];
    if (!n.value.same_shape(g)) {
        throw DimensionError("accumulate_grad", n.value.rows(), n.value.cols(), g.rows(),
                             g.cols());
    }
    if (n.grad.empty()) {
        n.grad = g;
    } else {
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.grad.data()[k] += g.data()[k];
    }
}

void Tape::backward(const Var& loss) {
    if (&loss.tape() != this) {
        throw ContractError("backward: loss from a different tape");
    }
    const Node& top = nodes_[loss.id()];
    if (top.value.rows() != 1 || top.value.cols() != 1) {
        throw ContractError("backward: loss must be scalar, got " +
                            std::to_string(top.value.rows()) + "x" +
                            std::to_string(top.value.cols()));
    }
    nodes_[loss.id()].grad = Matrix(1, 1, 1.0);

    for (std::size_t k = nodes_.size(); k-- > 0;) {
        Node& n = nodes_[k];
        if (n.grad.empty()) continue;  // not on the path to the loss
        if (n.backward) n.backward(*this, n.grad);
        if (n.param != nullptr) {
            Matrix& pg = n.param->grad;
            for (std::size_t i = 0; i < pg.size(); ++i) pg.data()[i] += n.grad.data()[i];
        }
    }
    clear();
}

void Tape::clear() { nodes_.clear(); }

namespace {

void require_same_tape(const Var& a, const Var& b, const char* op) {
    if (&a.tape() != &b.tape()) {
        throw ContractError(std::string(op) + ": operands from different tapes");
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    Tape& t = a.tape();
    Matrix y = matmul(a.value(), b.value());
    return t.record(std::move(y), {a, b}, [a, b](Tape& t2, const Matrix& g) {
        t2.accumulate_grad(a, matmul(g, transpose(t2.value(b))));
        t2.accumulate_grad(b, matmul(transpose(t2.value(a)), g));
    });
}

Var transpose(Var a) {
    Tape& t = a.tape();
    return t.record(transpose(a.value()), {a}, [a](Tape& t2, const Matrix& g) {
        t2.accumulate_grad(a, transpose(g));
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    Tape& t = a.tape();
    return t.record(add(a.value(), b.value()), {a, b}, [a, b](Tape& t2, const Matrix& g) {
        t2.accumulate_grad(a, g);
        t2.accumulate_grad(b, g);
    });
}

Var add_row(Var a, Var row) {
    require_same_tape(a, row, "add_row");
    const Matrix& av = a.value();
    const Matrix& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != av.cols()) {
        throw DimensionError("add_row", av.rows(), av.cols(), rv.rows(), rv.cols());
    }
    Matrix y = av;
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += rv.at(0, j);
    Tape& t = a.tape();
    return t.record(std::move(y), {a, row}, [a, row](Tape& t2, const Matrix& g) {
        t2.accumulate_grad(a, g);
        Matrix rg(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) rg.at(0, j) += g.at(i, j);
        t2.accumulate_grad(row, rg);
    });
}

Var add_const(Var a, const Matrix& c) {
    if (!a.value().same_shape(c)) {
        throw DimensionError("add_const", a.value().rows(), a.value().cols(), c.rows(),
                             c.cols());
    }
    Tape& t = a.tape();
    return t.record(add(a.value(), c), {a},
                    [a](Tape& t2, const Matrix& g) { t2.accumulate_grad(a, g); });
}

Var scale(Var a, double c) {
    Tape& t = a.tape();
    return t.record(scale(a.value(), c), {a}, [a, c](Tape& t2, const Matrix& g) {
        t2.accumulate_grad(a, scale(g, c));
    });
}

Var hadamard(Var a, Var b) {
    require_same_tape(a, b, "hadamard");
    Tape& t = a.tape();
    return t.record(hadamard(a.value(), b.value()), {a, b}, [a, b](Tape& t2, const Matrix& g) {
        t2.accumulate_grad(a, hadamard(g, t2.value(b)));
        t2.accumulate_grad(b, hadamard(g, t2.value(a)));
    });
}

Var hadamard_const(Var a, const Matrix& mask) {
    if (!a.value().same_shape(mask)) {
        throw DimensionError("hadamard_const", a.value().rows(), a.value().cols(), mask.rows(),
                             mask.cols());
    }
    Tape& t = a.tape();
    Matrix m = mask;  // the mask is captured as a constant; no gradient through it
    return t.record(hadamard(a.value(), mask), {a}, [a, m](Tape& t2, const Matrix& g) {
        t2.accumulate_grad(a, hadamard(g, m));
    });
}

Var mul_row(Var a, Var row) {
    require_same_tape(a, row, "mul_row");
    const Matrix& av = a.value();
    const Matrix& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != av.cols()) {
        throw DimensionError("mul_row", av.rows(), av.cols(), rv.rows(), rv.cols());
    }
    Matrix y = av;
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) *= rv.at(0, j);
    Tape& t = a.tape();
    return t.record(std::move(y), {a, row}, [a, row](Tape& t2, const Matrix& g) {
        const Matrix& av2 = t2.value(a);
        const Matrix& rv2 = t2.value(row);
        Matrix ag = g;
        for (std::size_t i = 0; i < ag.rows(); ++i)
            for (std::size_t j = 0; j < ag.cols(); ++j) ag.at(i, j) *= rv2.at(0, j);
        t2.accumulate_grad(a, ag);
        Matrix rg(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) rg.at(0, j) += g.at(i, j) * av2.at(i, j);
        t2.accumulate_grad(row, rg);
    });
}

Var relu(Var a) {
    Tape& t = a.tape();
    Matrix y = a.value();
    for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] = y.data()[k] > 0.0 ? y.data()[k] : 0.0;
    return t.record(std::move(y), {a}, [a](Tape& t2, const Matrix& g) {
        const Matrix& av = t2.value(a);
        Matrix ag = g;
        for (std::size_t k = 0; k < ag.size(); ++k)
            if (av.data()[k] <= 0.0) ag.data()[k] = 0.0;
        t2.accumulate_grad(a, ag);
    });
}

Var abs(Var a) {
    Tape& t = a.tape();
    Matrix y = a.value();
    for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] = std::fabs(y.data()[k]);
    return t.record(std::move(y), {a}, [a](Tape& t2, const Matrix& g) {
        const Matrix& av = t2.value(a);
        Matrix ag = g;
        for (std::size_t k = 0; k < ag.size(); ++k) {
            double x = av.data()[k];
            ag.data()[k] *= (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        }
        t2.accumulate_grad(a, ag);
    });
}

Var tanh(Var a) {
    Tape& t = a.tape();
    Matrix y = a.value();
    for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] = std::tanh(y.data()[k]);
    Matrix yc = y;
    return t.record(std::move(y), {a}, [a, yc](Tape& t2, const Matrix& g) {
        Matrix ag = g;
        for (std::size_t k = 0; k < ag.size(); ++k)
            ag.data()[k] *= 1.0 - yc.data()[k] * yc.data()[k];
        t2.accumulate_grad(a, ag);
    });
}

Var sigmoid(Var a) {
    Tape& t = a.tape();
    Matrix y = a.value();
    for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] = 1.0 / (1.0 + std::exp(-y.data()[k]));
    Matrix yc = y;
    return t.record(std::move(y), {a}, [a, yc](Tape& t2, const Matrix& g) {
        Matrix ag = g;
        for (std::size_t k = 0; k < ag.size(); ++k)
            ag.data()[k] *= yc.data()[k] * (1.0 - yc.data()[k]);
        t2.accumulate_grad(a, ag);
    });
}

Var row_normalize(Var a) {
    const Matrix& av = a.value();
    Matrix y = av;
    std::vector<double> sums(av.rows(), 0.0);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) s += av.at(i, j);
        if (s == 0.0) {
            throw ContractError("row_normalize: zero row sum at row " + std::to_string(i));
        }
        sums[i] = s;
        for (std::size_t j = 0; j < av.cols(); ++j) y.at(i, j) /= s;
    }
    Tape& t = a.tape();
    Matrix yc = y;
    // y_ij = x_ij / s_i  =>  dx_ij = (g_ij - sum_k g_ik y_ik) / s_i
    return t.record(std::move(y), {a}, [a, yc, sums](Tape& t2, const Matrix& g) {
        Matrix ag(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * yc.at(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j)
                ag.at(i, j) = (g.at(i, j) - dot) / sums[i];
        }
        t2.accumulate_grad(a, ag);
    });
}

Var layer_norm_rows(Var a, double epsilon) {
    const Matrix& av = a.value();
    const std::size_t n = av.cols();
    Matrix y(av.rows(), n);
    std::vector<double> inv_std(av.rows());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += av.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double d = av.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double inv = 1.0 / std::sqrt(var + epsilon);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < n; ++j) y.at(i, j) = (av.at(i, j) - mean) * inv;
    }
    Tape& t = a.tape();
    Matrix yc = y;
    // dx_i = inv_std_i * (g_i - mean(g_i) - y_i * mean(g_i . y_i))
    return t.record(std::move(y), {a}, [a, yc, inv_std, n](Tape& t2, const Matrix& g) {
        Matrix ag(g.rows(), g.cols());
        double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double gmean = 0.0;
            double gydot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                gmean += g.at(i, j);
                gydot += g.at(i, j) * yc.at(i, j);
            }
            gmean *= inv_n;
            gydot *= inv_n;
            for (std::size_t j = 0; j < n; ++j)
                ag.at(i, j) = inv_std[i] * (g.at(i, j) - gmean - yc.at(i, j) * gydot);
        }
        t2.accumulate_grad(a, ag);
    });
}

Var mean_rows(Var a) {
    const Matrix& av = a.value();
    Matrix y(1, av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) y.at(0, j) += av.at(i, j);
    double inv = 1.0 / static_cast<double>(av.rows());
    for (std::size_t j = 0; j < av.cols(); ++j) y.at(0, j) *= inv;
    Tape& t = a.tape();
    return t.record(std::move(y), {a}, [a, inv](Tape& t2, const Matrix& g) {
        const Matrix& av2 = t2.value(a);
        Matrix ag(av2.rows(), av2.cols());
        for (std::size_t i = 0; i < ag.rows(); ++i)
            for (std::size_t j = 0; j < ag.cols(); ++j) ag.at(i, j) = g.at(0, j) * inv;
        t2.accumulate_grad(a, ag);
    });
}

Var sum_all(Var a) {
    const Matrix& av = a.value();
    double s = 0.0;
    for (std::size_t k = 0; k < av.size(); ++k) s += av.data()[k];
    Tape& t = a.tape();
    return t.record(Matrix(1, 1, s), {a}, [a](Tape& t2, const Matrix& g) {
        const Matrix& av2 = t2.value(a);
        Matrix ag(av2.rows(), av2.cols(), g.at(0, 0));
        t2.accumulate_grad(a, ag);
    });
}

Var slice_rows(Var a, std::size_t start, std::size_t end) {
    const Matrix& av = a.value();
    if (start >= end || end > av.rows()) {
        throw DimensionError("slice_rows: [" + std::to_string(start) + "," +
                             std::to_string(end) + ") out of " + std::to_string(av.rows()) +
                             " rows");
    }
    Matrix y(end - start, av.cols());
    for (std::size_t i = start; i < end; ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) y.at(i - start, j) = av.at(i, j);
    Tape& t = a.tape();
    return t.record(std::move(y), {a}, [a, start, end](Tape& t2, const Matrix& g) {
        const Matrix& av2 = t2.value(a);
        Matrix ag(av2.rows(), av2.cols());
        for (std::size_t i = start; i < end; ++i)
            for (std::size_t j = 0; j < ag.cols(); ++j) ag.at(i, j) = g.at(i - start, j);
        t2.accumulate_grad(a, ag);
    });
}

}  // namespace cbgln
