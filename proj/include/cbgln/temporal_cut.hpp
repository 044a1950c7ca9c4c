#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cbgln/matrix.hpp"
#include "cbgln/tape.hpp"

namespace cbgln {

/// Contiguous frame range [start, end).
struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start; }
    bool operator==(const Segment&) const = default;
};

struct SplitResult {
    std::size_t split = 0;  // boundary index: left part [start, split), right [split, end)
    double value = 0.0;     // Ncut at that boundary
};

struct PartitionNode {
    Segment seg;
    std::size_t depth = 0;
    int left = -1;  // indices into nodes(), -1 on leaves
    int right = -1;

    bool is_leaf() const { return left < 0; }
};

/// Binary hierarchy of contiguous segments produced by the recursive temporal
/// cut. Nodes are stored in depth-first preorder, so leaves() come out in
/// temporal order.
class PartitionTree {
public:
    PartitionTree() = default;

    static PartitionTree single_leaf(std::size_t n_frames);

    const std::vector<PartitionNode>& nodes() const { return nodes_; }
    std::size_t frame_count() const { return nodes_.empty() ? 0 : nodes_[0].seg.end; }
    std::size_t depth() const;

    std::vector<Segment> leaves() const;
    std::size_t leaf_count() const;

    /// Per-frame index into leaves(), temporal order.
    std::vector<std::size_t> leaf_of() const;

    /// NxN 0/1 matrix; 1 where both frames share a leaf.
    Matrix keep_mask() const;

private:
    friend PartitionTree recursive_cut(const Matrix&, std::size_t, std::size_t, double);
    std::vector<PartitionNode> nodes_;
};

/// Two-way normalized-cut cost of splitting `seg` at `split`, with the
/// association universe restricted to the segment itself. Self-affinities on
/// the diagonal count toward assoc. A zero assoc denominator yields +infinity.
double ncut_value(const Matrix& affinity, Segment seg, std::size_t split);

/// Minimizing split over all length-1 candidates, evaluated with incremental
/// prefix accumulation (O(len^2) for the whole scan). Exact ties go to the
/// smallest index. Returns nullopt when every candidate is infinite.
std::optional<SplitResult> best_split(const Matrix& affinity, Segment seg);

/// Cut budget for a sequence of n frames: floor(log2(sqrt(n))), evaluated in
/// integer arithmetic.
std::size_t recursion_depth(std::size_t n);

inline constexpr double kDefaultNoCutThreshold = 0.9;
inline constexpr std::size_t kDefaultMinLen = 3;

/// Recursive temporally constrained bisection. A segment stays a leaf when
/// its length is at most min_len, its depth reached max_depth, best_split
/// found no finite candidate, or the best Ncut value is at or above
/// no_cut_threshold (a homogeneous segment scores ~1 at every split, a real
/// boundary scores near 0).
PartitionTree recursive_cut(const Matrix& affinity, std::size_t min_len, std::size_t max_depth,
                            double no_cut_threshold = kDefaultNoCutThreshold);

/// A_cut = A .* keep_mask(tree); the mask is a constant on the tape, so
/// gradients flow only through surviving entries.
Var apply_mask(Var affinity, const PartitionTree& tree);
Matrix apply_mask(const Matrix& affinity, const PartitionTree& tree);

}  // namespace cbgln
