#include "cbgln/temporal_cut.hpp"

#include <algorithm>
#include <limits>

namespace cbgln {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_square(const Matrix& a, const char* op) {
    if (a.rows() != a.cols()) {
        throw DimensionError(std::string(op) + ": affinity must be square, got " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    }
}

}  // namespace

PartitionTree PartitionTree::single_leaf(std::size_t n_frames) {
    PartitionTree t;
    t.nodes_.push_back(PartitionNode{Segment{0, n_frames}, 0, -1, -1});
    return t;
}

std::size_t PartitionTree::depth() const {
    std::size_t d = 0;
    for (const PartitionNode& n : nodes_) d = std::max(d, n.depth);
    return d;
}

std::vector<Segment> PartitionTree::leaves() const {
    std::vector<Segment> out;
    for (const PartitionNode& n : nodes_) {
        if (n.is_leaf()) out.push_back(n.seg);
    }
    return out;  // preorder storage makes this temporal order
}

std::size_t PartitionTree::leaf_count() const {
    std::size_t k = 0;
    for (const PartitionNode& n : nodes_)
        if (n.is_leaf()) ++k;
    return k;
}

std::vector<std::size_t> PartitionTree::leaf_of() const {
    std::vector<std::size_t> map(frame_count());
    std::size_t leaf = 0;
    for (const PartitionNode& n : nodes_) {
        if (!n.is_leaf()) continue;
        for (std::size_t i = n.seg.start; i < n.seg.end; ++i) map[i] = leaf;
        ++leaf;
    }
    return map;
}

Matrix PartitionTree::keep_mask() const {
    const std::size_t n = frame_count();
    std::vector<std::size_t> owner = leaf_of();
    Matrix mask(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) mask.at(i, j) = owner[i] == owner[j] ? 1.0 : 0.0;
    return mask;
}

double ncut_value(const Matrix& a, Segment seg, std::size_t split) {
    require_square(a, "ncut_value");
    if (!(seg.start < split && split < seg.end) || seg.end > a.rows()) {
        throw ContractError("ncut_value: split " + std::to_string(split) +
                            " not inside segment [" + std::to_string(seg.start) + "," +
                            std::to_string(seg.end) + ")");
    }
    double cut = 0.0;
    for (std::size_t i = seg.start; i < split; ++i)
        for (std::size_t j = split; j < seg.end; ++j) cut += a.at(i, j);
    double assoc1 = 0.0;
    for (std::size_t i = seg.start; i < split; ++i)
        for (std::size_t v = seg.start; v < seg.end; ++v) assoc1 += a.at(i, v);
    double assoc2 = 0.0;
    for (std::size_t i = split; i < seg.end; ++i)
        for (std::size_t v = seg.start; v < seg.end; ++v) assoc2 += a.at(i, v);
    if (assoc1 == 0.0 || assoc2 == 0.0) return kInf;
    return cut / assoc1 + cut / assoc2;
}

std::optional<SplitResult> best_split(const Matrix& a, Segment seg) {
    require_square(a, "best_split");
    if (seg.length() < 2 || seg.end > a.rows()) {
        throw ContractError("best_split: segment [" + std::to_string(seg.start) + "," +
                            std::to_string(seg.end) + ") needs length >= 2");
    }
    const std::size_t s = seg.start;
    const std::size_t e = seg.end;

    // Row sums restricted to the segment universe.
    std::vector<double> row_sum(e - s, 0.0);
    double total = 0.0;
    for (std::size_t i = s; i < e; ++i) {
        double r = 0.0;
        for (std::size_t v = s; v < e; ++v) r += a.at(i, v);
        row_sum[i - s] = r;
        total += r;
    }

    // cut(t) maintained incrementally while the boundary sweeps right:
    // moving node t from the right part to the left removes its edges to the
    // left and adds its edges to the remaining right.
    double cut = 0.0;
    for (std::size_t j = s + 1; j < e; ++j) cut += a.at(s, j);
    double assoc1 = row_sum[0];

    bool found = false;
    SplitResult best{0, kInf};
    for (std::size_t t = s + 1; t < e; ++t) {
        double assoc2 = total - assoc1;
        double value = (assoc1 == 0.0 || assoc2 == 0.0) ? kInf : cut / assoc1 + cut / assoc2;
        if (value < best.value) {
            best = SplitResult{t, value};
            found = true;
        }
        if (t + 1 < e) {
            double to_left = 0.0;
            for (std::size_t i = s; i < t; ++i) to_left += a.at(i, t);
            double to_right = 0.0;
            for (std::size_t j = t + 1; j < e; ++j) to_right += a.at(t, j);
            cut += to_right - to_left;
            assoc1 += row_sum[t - s];
        }
    }
    if (!found) return std::nullopt;
    return best;
}

std::size_t recursion_depth(std::size_t n) {
    if (n == 0) {
        throw ContractError("recursion_depth: n must be >= 1");
    }
    // floor(log2(sqrt(n))) == floor(log4(n)), exact in integers.
    std::size_t depth = 0;
    std::size_t cap = 1;
    while (cap <= n / 4) {
        cap *= 4;
        ++depth;
    }
    return depth;
}

namespace {

void cut_recurse(const Matrix& a, Segment seg, std::size_t depth, std::size_t min_len,
                 std::size_t max_depth, double threshold, std::vector<PartitionNode>& nodes) {
    const std::size_t self = nodes.size();
    nodes.push_back(PartitionNode{seg, depth, -1, -1});
    if (seg.length() <= min_len || depth >= max_depth) return;
    std::optional<SplitResult> split = best_split(a, seg);
    if (!split || split->value >= threshold) return;
    nodes[self].left = static_cast<int>(nodes.size());
    cut_recurse(a, Segment{seg.start, split->split}, depth + 1, min_len, max_depth, threshold,
                nodes);
    nodes[self].right = static_cast<int>(nodes.size());
    cut_recurse(a, Segment{split->split, seg.end}, depth + 1, min_len, max_depth, threshold,
                nodes);
}

}  // namespace

PartitionTree recursive_cut(const Matrix& a, std::size_t min_len, std::size_t max_depth,
                            double no_cut_threshold) {
    require_square(a, "recursive_cut");
    if (min_len < 1) {
        throw ContractError("recursive_cut: min_len must be >= 1");
    }
    const std::size_t n = a.rows();
    if (n == 0) {
        throw ContractError("recursive_cut: empty affinity");
    }
    PartitionTree tree;
    cut_recurse(a, Segment{0, n}, 0, min_len, max_depth, no_cut_threshold, tree.nodes_);
    return tree;
}

Matrix apply_mask(const Matrix& a, const PartitionTree& tree) {
    require_square(a, "apply_mask");
    if (tree.frame_count() != a.rows()) {
        throw DimensionError("apply_mask", a.rows(), a.cols(), tree.frame_count(),
                             tree.frame_count());
    }
    return hadamard(a, tree.keep_mask());
}

Var apply_mask(Var affinity, const PartitionTree& tree) {
    const Matrix& av = affinity.value();
    require_square(av, "apply_mask");
    if (tree.frame_count() != av.rows()) {
        throw DimensionError("apply_mask", av.rows(), av.cols(), tree.frame_count(),
                             tree.frame_count());
    }
    return hadamard_const(affinity, tree.keep_mask());
}

}  // namespace cbgln
