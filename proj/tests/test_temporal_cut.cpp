#include <doctest.h>

#include <cmath>
#include <limits>
#include <optional>

#include "cbgln/temporal_cut.hpp"
#include "test_util.hpp"

using namespace cbgln;

namespace {

// Independent oracle: evaluates the two-term normalized-cut objective with
// plain double loops at every candidate and recurses with the same stop
// rules. No prefix sums anywhere.
double oracle_ncut(const Matrix& a, std::size_t s, std::size_t e, std::size_t t) {
    double cut = 0.0;
    for (std::size_t i = s; i < t; ++i)
        for (std::size_t j = t; j < e; ++j) cut += a.at(i, j);
    double assoc1 = 0.0;
    for (std::size_t i = s; i < t; ++i)
        for (std::size_t v = s; v < e; ++v) assoc1 += a.at(i, v);
    double assoc2 = 0.0;
    for (std::size_t i = t; i < e; ++i)
        for (std::size_t v = s; v < e; ++v) assoc2 += a.at(i, v);
    if (assoc1 == 0.0 || assoc2 == 0.0) return std::numeric_limits<double>::infinity();
    return cut / assoc1 + cut / assoc2;
}

std::optional<std::pair<std::size_t, double>> oracle_best(const Matrix& a, std::size_t s,
                                                          std::size_t e) {
    std::optional<std::pair<std::size_t, double>> best;
    for (std::size_t t = s + 1; t < e; ++t) {
        double v = oracle_ncut(a, s, e, t);
        if (!std::isinf(v) && (!best || v < best->second)) best = {t, v};
    }
    return best;
}

void oracle_recurse(const Matrix& a, std::size_t s, std::size_t e, std::size_t depth,
                    std::size_t min_len, std::size_t max_depth, double threshold,
                    std::vector<Segment>& leaves) {
    if (e - s > min_len && depth < max_depth) {
        auto best = oracle_best(a, s, e);
        if (best && best->second < threshold) {
            oracle_recurse(a, s, best->first, depth + 1, min_len, max_depth, threshold, leaves);
            oracle_recurse(a, best->first, e, depth + 1, min_len, max_depth, threshold, leaves);
            return;
        }
    }
    leaves.push_back(Segment{s, e});
}

std::vector<Segment> oracle_cut(const Matrix& a, std::size_t min_len, std::size_t max_depth,
                                double threshold) {
    std::vector<Segment> leaves;
    oracle_recurse(a, 0, a.rows(), 0, min_len, max_depth, threshold, leaves);
    return leaves;
}

Matrix block_affinity(const std::vector<std::size_t>& sizes, double inside, double outside) {
    std::size_t n = 0;
    for (std::size_t s : sizes) n += s;
    Matrix a(n, n, outside);
    std::size_t base = 0;
    for (std::size_t s : sizes) {
        for (std::size_t i = base; i < base + s; ++i)
            for (std::size_t j = base; j < base + s; ++j) a.at(i, j) = inside;
        base += s;
    }
    return a;
}

Matrix reversed(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) r.at(i, j) = a.at(n - 1 - i, n - 1 - j);
    return r;
}

}  // namespace

TEST_CASE("ncut of a connected pair is 2") {
    Matrix a{{0, 1}, {1, 0}};
    CHECK(ncut_value(a, Segment{0, 2}, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ncut four-node example") {
    // w(1,2)=w(3,4)=1, w(2,3)=0.1 on a zero diagonal.
    Matrix a(4, 4);
    a.at(0, 1) = a.at(1, 0) = 1.0;
    a.at(2, 3) = a.at(3, 2) = 1.0;
    a.at(1, 2) = a.at(2, 1) = 0.1;
    CHECK(ncut_value(a, Segment{0, 4}, 2) == doctest::Approx(0.2 / 2.1).epsilon(1e-12));
    CHECK(ncut_value(a, Segment{0, 4}, 1) == doctest::Approx(1.3125).epsilon(1e-12));
    CHECK(ncut_value(a, Segment{0, 4}, 2) ==
          doctest::Approx(oracle_ncut(a, 0, 4, 2)).epsilon(1e-12));

    auto best = best_split(a, Segment{0, 4});
    REQUIRE(best.has_value());
    CHECK(best->split == 2);
    CHECK(best->value == doctest::Approx(0.2 / 2.1).epsilon(1e-12));
}

TEST_CASE("ncut vanishes between disconnected halves") {
    Matrix a = block_affinity({2, 2}, 1.0, 0.0);
    CHECK(ncut_value(a, Segment{0, 4}, 2) == 0.0);
}

TEST_CASE("zero assoc yields infinity") {
    Matrix a(3, 3);
    a.at(2, 2) = 1.0;  // row 0 fully disconnected
    CHECK(std::isinf(ncut_value(a, Segment{0, 3}, 1)));
}

TEST_CASE("uniform affinity ties resolve to the smallest split index") {
    // Every split of a complete uniform graph scores the same (1 with
    // self-affinities, L/(L-1) without), so the tie rule picks the first.
    Matrix with_diag(4, 4, 1.0);
    auto best = best_split(with_diag, Segment{0, 4});
    REQUIRE(best.has_value());
    CHECK(best->split == 1);
    CHECK(best->value == doctest::Approx(1.0).epsilon(1e-12));

    Matrix no_diag(4, 4, 1.0);
    for (std::size_t i = 0; i < 4; ++i) no_diag.at(i, i) = 0.0;
    auto best2 = best_split(no_diag, Segment{0, 4});
    REQUIRE(best2.has_value());
    CHECK(best2->split == 1);
    CHECK(best2->value == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("length-2 segment has a single candidate") {
    Rng rng(3);
    Matrix a = test::random_symmetric_nonneg(rng, 5);
    auto best = best_split(a, Segment{2, 4});
    REQUIRE(best.has_value());
    CHECK(best->split == 3);
}

TEST_CASE("all-zero affinity reports no cut") {
    Matrix a(6, 6);
    CHECK_FALSE(best_split(a, Segment{0, 6}).has_value());
}

TEST_CASE("best_split matches the naive oracle on random inputs") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 2 + rng.index(31);
        Matrix a = test::random_symmetric_nonneg(rng, n);
        auto mine = best_split(a, Segment{0, n});
        auto oracle = oracle_best(a, 0, n);
        REQUIRE(mine.has_value() == oracle.has_value());
        if (mine) {
            CHECK(mine->split == oracle->first);
            CHECK(std::fabs(mine->value - oracle->second) < 1e-9);
        }
    }
}

TEST_CASE("recursion depth follows floor(log2 sqrt n)") {
    CHECK(recursion_depth(300) == 4);
    CHECK(recursion_depth(4) == 1);
    CHECK(recursion_depth(1) == 0);
    CHECK(recursion_depth(3) == 0);
    CHECK(recursion_depth(15) == 1);
    CHECK(recursion_depth(16) == 2);
    CHECK(recursion_depth(64) == 3);
    CHECK_THROWS_AS(recursion_depth(0), ContractError);
}

TEST_CASE("single frame yields a single leaf") {
    Matrix a(1, 1, 1.0);
    PartitionTree tree = recursive_cut(a, 1, 4);
    CHECK(tree.leaf_count() == 1);
    CHECK(tree.leaves()[0] == Segment{0, 1});
}

TEST_CASE("zero depth budget yields a single leaf") {
    Rng rng(5);
    Matrix a = test::random_symmetric_nonneg(rng, 8);
    PartitionTree tree = recursive_cut(a, 1, 0);
    CHECK(tree.leaf_count() == 1);
}

TEST_CASE("four clean blocks are recovered exactly") {
    Matrix a = block_affinity({4, 4, 4, 4}, 1.0, 0.0);
    // All three block boundaries tie at Ncut 0, so the first split lands on
    // the leftmost one; a depth budget of 3 covers the unbalanced chain.
    PartitionTree tree = recursive_cut(a, 2, 3);
    auto leaves = tree.leaves();
    REQUIRE(leaves.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(leaves[k].start == 4 * k);
        CHECK(leaves[k].end == 4 * (k + 1));
    }
    auto oracle = oracle_cut(a, 2, 3, kDefaultNoCutThreshold);
    REQUIRE(oracle.size() == leaves.size());
    for (std::size_t k = 0; k < leaves.size(); ++k) CHECK(leaves[k] == oracle[k]);

    // With a budget of 2 the smallest-index tie rule leaves the tail block
    // pair unsplit; the oracle agrees.
    auto shallow = recursive_cut(a, 2, 2).leaves();
    auto shallow_oracle = oracle_cut(a, 2, 2, kDefaultNoCutThreshold);
    REQUIRE(shallow.size() == shallow_oracle.size());
    for (std::size_t k = 0; k < shallow.size(); ++k) CHECK(shallow[k] == shallow_oracle[k]);
    CHECK(shallow.size() == 3);
}

TEST_CASE("recursive_cut equals the brute-force oracle on random matrices") {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        std::size_t n = 2 + rng.index(31);
        Matrix a = test::random_symmetric_nonneg(rng, n);
        std::size_t min_len = 1 + rng.index(3);
        std::size_t max_depth = rng.index(5);
        PartitionTree tree = recursive_cut(a, min_len, max_depth);
        auto leaves = tree.leaves();
        auto oracle = oracle_cut(a, min_len, max_depth, kDefaultNoCutThreshold);
        REQUIRE(leaves.size() == oracle.size());
        for (std::size_t k = 0; k < leaves.size(); ++k) CHECK(leaves[k] == oracle[k]);
    }
}

TEST_CASE("partition invariants hold on random inputs") {
    Rng rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 1 + rng.index(24);
        Matrix a = test::random_symmetric_nonneg(rng, n);
        std::size_t min_len = 1 + rng.index(4);
        std::size_t max_depth = rng.index(5);
        PartitionTree tree = recursive_cut(a, min_len, max_depth);

        // Leaves tile [0, n) in order.
        auto leaves = tree.leaves();
        std::size_t cursor = 0;
        for (const Segment& leaf : leaves) {
            CHECK(leaf.start == cursor);
            CHECK(leaf.length() >= 1);
            cursor = leaf.end;
        }
        CHECK(cursor == n);
        CHECK(tree.depth() <= max_depth);

        // Children tile their parent, and split segments were long enough.
        for (const PartitionNode& node : tree.nodes()) {
            if (node.is_leaf()) continue;
            CHECK(node.seg.length() > min_len);
            const PartitionNode& l = tree.nodes()[static_cast<std::size_t>(node.left)];
            const PartitionNode& r = tree.nodes()[static_cast<std::size_t>(node.right)];
            CHECK(l.seg.start == node.seg.start);
            CHECK(l.seg.end == r.seg.start);
            CHECK(r.seg.end == node.seg.end);
        }
    }
}

TEST_CASE("deeper budgets refine shallower ones") {
    Rng rng(321);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 4 + rng.index(28);
        Matrix a = test::random_symmetric_nonneg(rng, n);
        for (std::size_t d = 0; d < 3; ++d) {
            auto coarse = recursive_cut(a, 1, d).leaves();
            auto fine = recursive_cut(a, 1, d + 1).leaves();
            // Every fine leaf sits inside exactly one coarse leaf.
            for (const Segment& leaf : fine) {
                bool inside = false;
                for (const Segment& c : coarse)
                    inside |= c.start <= leaf.start && leaf.end <= c.end;
                CHECK(inside);
            }
            // Every coarse boundary survives in the fine partition.
            for (const Segment& c : coarse) {
                bool found = false;
                for (const Segment& leaf : fine) found |= leaf.start == c.start;
                CHECK(found);
            }
        }
    }
}

TEST_CASE("reversing the frame order mirrors the partition") {
    Rng rng(555);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + rng.index(20);
        Matrix a = test::random_symmetric_nonneg(rng, n);
        auto forward = recursive_cut(a, 1, 3).leaves();
        auto backward = recursive_cut(reversed(a), 1, 3).leaves();
        REQUIRE(forward.size() == backward.size());
        for (std::size_t k = 0; k < forward.size(); ++k) {
            const Segment& f = forward[k];
            const Segment& b = backward[backward.size() - 1 - k];
            CHECK(b.start == n - f.end);
            CHECK(b.end == n - f.start);
        }
    }
}

TEST_CASE("apply_mask keeps only within-leaf entries") {
    Rng rng(777);
    Matrix a = test::random_symmetric_nonneg(rng, 4);

    PartitionTree single = PartitionTree::single_leaf(4);
    CHECK(test::max_abs_diff(apply_mask(a, single), a) == 0.0);

    PartitionTree two = recursive_cut(block_affinity({2, 2}, 1.0, 0.0), 1, 1);
    REQUIRE(two.leaf_count() == 2);
    Matrix cut = apply_mask(a, two);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            bool same_leaf = (i < 2) == (j < 2);
            CHECK(cut.at(i, j) == (same_leaf ? a.at(i, j) : 0.0));
        }

    CHECK_THROWS_AS(apply_mask(test::random_symmetric_nonneg(rng, 5), two), DimensionError);
}

TEST_CASE("cut masks are symmetric block-diagonal membership matrices") {
    Rng rng(888);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 1 + rng.index(20);
        Matrix a = test::random_symmetric_nonneg(rng, n);
        PartitionTree tree = recursive_cut(a, 1, 3);
        Matrix mask = tree.keep_mask();
        auto owner = tree.leaf_of();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(mask.at(i, j) == mask.at(j, i));
                CHECK(mask.at(i, j) == (owner[i] == owner[j] ? 1.0 : 0.0));
            }
    }
}
