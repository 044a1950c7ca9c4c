#include <doctest.h>

#include <cmath>

#include "cbgln/grad_check.hpp"
#include "cbgln/tape.hpp"
#include "test_util.hpp"

using namespace cbgln;

TEST_CASE("sum of W x has broadcast gradient") {
    // loss = sum(W x) with x fixed: dW has x^T in every row.
    Parameter w("w", Matrix{{1, 2, 3}, {4, 5, 6}});
    Matrix x{{0.5}, {-1.0}, {2.0}};
    Tape tape;
    Var loss = sum_all(matmul(tape.leaf(w), tape.constant(x)));
    tape.backward(loss);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(w.grad.at(i, j) == x.at(j, 0));
}

TEST_CASE("dead relu region has zero gradient") {
    // loss = sum(relu(-|W|)) is identically zero with zero slope everywhere.
    Parameter w("w", Matrix{{0.3, -0.7}, {0.0, 1.5}});
    Tape tape;
    Var loss = sum_all(relu(scale(abs(tape.leaf(w)), -1.0)));
    CHECK(loss.value().at(0, 0) == 0.0);
    tape.backward(loss);
    for (std::size_t k = 0; k < w.grad.size(); ++k) CHECK(w.grad.data()[k] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Parameter w("w", Matrix(2, 2, 1.0));
    Tape tape;
    Var v = relu(tape.leaf(w));
    CHECK_THROWS_AS(tape.backward(v), ContractError);
}

TEST_CASE("gradients accumulate additively across backward passes") {
    Parameter w("w", Matrix{{1.0, -2.0}});
    auto run = [&]() {
        Tape tape;
        Var loss = sum_all(hadamard(tape.leaf(w), tape.leaf(w)));
        tape.backward(loss);
    };
    run();
    Matrix once = w.grad;
    run();
    for (std::size_t k = 0; k < w.grad.size(); ++k)
        CHECK(w.grad.data()[k] == 2.0 * once.data()[k]);
}

TEST_CASE("forward values are deterministic") {
    Rng rng(7);
    Matrix a = test::random_matrix(rng, 5, 4);
    Parameter w("w", test::random_matrix(rng, 4, 3));
    auto value = [&]() {
        Tape tape;
        Var v = sum_all(tanh(matmul(tape.constant(a), tape.leaf(w))));
        return v.value().at(0, 0);
    };
    CHECK(value() == value());
}

namespace {

// Finite-difference validation of one primitive applied to parameter leaves.
double primitive_error(const std::function<Var(Tape&, std::vector<Parameter*>&)>& op,
                       std::vector<Parameter*> params) {
    auto build = [&](Tape& tape) { return sum_all(op(tape, params)); };
    return grad_check(build, params, 1e-5).max_rel_error;
}

}  // namespace

TEST_CASE("every primitive matches finite differences") {
    Rng rng(11);
    Parameter a("a", test::random_matrix(rng, 4, 3));
    Parameter b("b", test::random_matrix(rng, 4, 3));
    Parameter c("c", test::random_matrix(rng, 3, 5));
    Parameter row("row", test::random_matrix(rng, 1, 3));
    Matrix mask(4, 3);
    for (std::size_t k = 0; k < mask.size(); ++k) mask.data()[k] = (k % 3 == 0) ? 1.0 : 0.0;
    Matrix constant = test::random_matrix(rng, 4, 3);

    // Positive row sums keep row_normalize well away from its singularity.
    Parameter pos("pos", test::random_matrix(rng, 4, 3, 0.2, 1.0));

    auto check = [&](const char* name, auto op, std::vector<Parameter*> params) {
        CAPTURE(name);
        CHECK(primitive_error(op, params) < 1e-6);
    };

    check("matmul", [&](Tape& t, auto&) { return matmul(t.leaf(a), t.leaf(c)); }, {&a, &c});
    check("transpose", [&](Tape& t, auto&) { return transpose(t.leaf(a)); }, {&a});
    check("add", [&](Tape& t, auto&) { return add(t.leaf(a), t.leaf(b)); }, {&a, &b});
    check("add_row", [&](Tape& t, auto&) { return add_row(t.leaf(a), t.leaf(row)); },
          {&a, &row});
    check("add_const", [&](Tape& t, auto&) { return add_const(t.leaf(a), constant); }, {&a});
    check("scale", [&](Tape& t, auto&) { return scale(t.leaf(a), -1.7); }, {&a});
    check("hadamard", [&](Tape& t, auto&) { return hadamard(t.leaf(a), t.leaf(b)); },
          {&a, &b});
    check("hadamard_const", [&](Tape& t, auto&) { return hadamard_const(t.leaf(a), mask); },
          {&a});
    check("mul_row", [&](Tape& t, auto&) { return mul_row(t.leaf(a), t.leaf(row)); },
          {&a, &row});
    check("relu", [&](Tape& t, auto&) { return relu(t.leaf(a)); }, {&a});
    check("abs", [&](Tape& t, auto&) { return abs(t.leaf(a)); }, {&a});
    check("tanh", [&](Tape& t, auto&) { return tanh(t.leaf(a)); }, {&a});
    check("sigmoid", [&](Tape& t, auto&) { return sigmoid(t.leaf(a)); }, {&a});
    // The plain sum of a normalized output is constant (zero gradient), so
    // weight and square it to get a well-conditioned functional.
    Matrix weights = test::random_matrix(rng, 4, 3, 0.5, 1.5);
    check("row_normalize",
          [&](Tape& t, auto&) {
              Var y = hadamard_const(row_normalize(t.leaf(pos)), weights);
              return hadamard(y, y);
          },
          {&pos});
    check("layer_norm_rows",
          [&](Tape& t, auto&) {
              Var y = hadamard_const(layer_norm_rows(t.leaf(a), 1e-5), weights);
              return hadamard(y, y);
          },
          {&a});
    check("mean_rows", [&](Tape& t, auto&) { return mean_rows(t.leaf(a)); }, {&a});
    check("slice_rows", [&](Tape& t, auto&) { return slice_rows(t.leaf(a), 1, 3); }, {&a});
}

TEST_CASE("grad_check is near-exact on a quadratic") {
    Parameter w("w", Matrix{{0.7, -0.4}, {1.3, 0.2}});
    auto build = [&](Tape& tape) {
        Var v = tape.leaf(w);
        return sum_all(hadamard(v, v));
    };
    CHECK(grad_check(build, {&w}, 1e-4).max_rel_error < 1e-9);
}

TEST_CASE("grad_check flags an intentionally broken gradient") {
    Parameter w("w", Matrix{{0.9, 0.4}});
    auto build = [&](Tape& tape) {
        Var v = tape.leaf(w);
        // Forward computes v*v but claims d/dv = v instead of 2v.
        Matrix y = hadamard(v.value(), v.value());
        Var sq = tape.record(std::move(y), {v}, [v](Tape& t2, const Matrix& g) {
            t2.accumulate_grad(v, hadamard(g, t2.value(v)));
        });
        return sum_all(sq);
    };
    CHECK(grad_check(build, {&w}, 1e-4).max_rel_error > 1e-1);
}

TEST_CASE("grad_check rejects non-positive epsilon") {
    Parameter w("w", Matrix(1, 1, 1.0));
    auto build = [&](Tape& tape) { return sum_all(tape.leaf(w)); };
    CHECK_THROWS_AS(grad_check(build, {&w}, 0.0), ContractError);
}

TEST_CASE("operations from different tapes are rejected") {
    Parameter w("w", Matrix(1, 1, 1.0));
    Tape t1;
    Tape t2;
    Var a = t1.leaf(w);
    Var b = t2.leaf(w);
    CHECK_THROWS_AS(add(a, b), ContractError);
}
