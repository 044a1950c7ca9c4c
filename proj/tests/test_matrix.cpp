#include <doctest.h>

#include "cbgln/matrix.hpp"
#include "cbgln/rng.hpp"
#include "test_util.hpp"

using namespace cbgln;

namespace {

// Independent oracle: textbook triple loop.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j)
            for (std::size_t k = 0; k < a.cols(); ++k)
                out.at(i, j) += a.at(i, k) * b.at(k, j);
    return out;
}

}  // namespace

TEST_CASE("matmul identity") {
    Matrix m{{1, 2}, {3, 4}};
    CHECK(matmul(Matrix::identity(2), m) == m);
}

TEST_CASE("matmul orthogonal vectors") {
    Matrix a{{1, 0}};
    Matrix b{{0}, {1}};
    Matrix p = matmul(a, b);
    CHECK(p.rows() == 1);
    CHECK(p.cols() == 1);
    CHECK(p.at(0, 0) == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(42);
    Matrix a = test::random_matrix(rng, 3, 4);
    Matrix b = test::random_matrix(rng, 4, 2);
    CHECK(test::max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);

    Matrix big_a = test::random_matrix(rng, 17, 31);
    Matrix big_b = test::random_matrix(rng, 31, 9);
    CHECK(test::max_abs_diff(matmul(big_a, big_b), matmul_oracle(big_a, big_b)) < 1e-12);
}

TEST_CASE("matmul shape mismatch carries both shapes") {
    Matrix a(2, 3);
    Matrix b(2, 3);
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
    }
}

TEST_CASE("transpose and add") {
    Matrix a{{1, 2, 3}, {4, 5, 6}};
    Matrix t = transpose(a);
    CHECK(t.rows() == 3);
    CHECK(t.at(0, 1) == 4.0);
    CHECK(test::max_abs_diff(transpose(t), a) == 0.0);

    CHECK_THROWS_AS(add(a, t), DimensionError);
    Matrix s = add(a, a);
    CHECK(s.at(1, 2) == 12.0);
}

TEST_CASE("hadamard and scale") {
    Matrix a{{1, -2}, {3, 0}};
    Matrix h = hadamard(a, a);
    CHECK(h.at(0, 1) == 4.0);
    Matrix c = scale(a, -0.5);
    CHECK(c.at(1, 0) == -1.5);
    CHECK_THROWS_AS(hadamard(a, Matrix(1, 2)), DimensionError);
}

TEST_CASE("construction validates value count") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0, 2.0}), DimensionError);
    CHECK_THROWS_AS(Matrix({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("finiteness check") {
    Matrix a(2, 2, 1.0);
    CHECK(a.all_finite());
    a.at(0, 1) = std::nan("");
    CHECK_FALSE(a.all_finite());
    CHECK_THROWS_AS(a.require_finite("test"), ContractError);
}
