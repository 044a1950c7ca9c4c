#include "cbgln/propagation.hpp"

#include <cmath>

namespace cbgln {

namespace {

void require_tree_rows(const Matrix& h, const PartitionTree& tree, const char* op) {
    if (tree.frame_count() != h.rows()) {
        throw DimensionError(std::string(op) + ": tree covers " +
                             std::to_string(tree.frame_count()) + " frames but matrix has " +
                             std::to_string(h.rows()) + " rows");
    }
}

}  // namespace

Var message(Var x, Var a_cut, Var message_map) {
    const Matrix& av = a_cut.value();
    if (av.rows() != av.cols() || av.rows() != x.value().rows()) {
        throw DimensionError("message", av.rows(), av.cols(), x.value().rows(),
                             x.value().cols());
    }
    Var with_loops = add_const(a_cut, Matrix::identity(av.rows()));
    Var normalized = row_normalize(with_loops);
    return matmul(matmul(normalized, x), message_map);
}

Var update(Var x, Var m, const UpdateWeights& w, bool use_residual, bool use_layer_norm) {
    if (!x.value().same_shape(m.value())) {
        throw DimensionError("update", x.value().rows(), x.value().cols(), m.value().rows(),
                             m.value().cols());
    }
    Var left = tanh(matmul(x, w.bilinear_left));
    Var right = tanh(matmul(m, w.bilinear_right));
    Var fused = hadamard(left, right);
    Var u = add_row(matmul(fused, w.output_map), w.output_bias);
    Var pre = use_residual ? add(x, u) : u;
    if (!use_layer_norm) return pre;
    Var normalized = layer_norm_rows(pre, kLayerNormEpsilon);
    return add_row(mul_row(normalized, w.norm_gain), w.norm_bias);
}

Var segment_mean(Var h, const PartitionTree& tree) {
    const Matrix& hv = h.value();
    require_tree_rows(hv, tree, "segment_mean");
    std::vector<Segment> leaves = tree.leaves();
    Matrix pooled(leaves.size(), hv.cols());
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        const Segment& seg = leaves[k];
        double inv = 1.0 / static_cast<double>(seg.length());
        for (std::size_t i = seg.start; i < seg.end; ++i)
            for (std::size_t j = 0; j < hv.cols(); ++j) pooled.at(k, j) += hv.at(i, j) * inv;
    }
    Tape& t = h.tape();
    return t.record(std::move(pooled), {h}, [h, leaves](Tape& t2, const Matrix& g) {
        const Matrix& hv2 = t2.value(h);
        Matrix hg(hv2.rows(), hv2.cols());
        for (std::size_t k = 0; k < leaves.size(); ++k) {
            double inv = 1.0 / static_cast<double>(leaves[k].length());
            for (std::size_t i = leaves[k].start; i < leaves[k].end; ++i)
                for (std::size_t j = 0; j < hg.cols(); ++j) hg.at(i, j) = g.at(k, j) * inv;
        }
        t2.accumulate_grad(h, hg);
    });
}

Var segment_softmax(Var scores, const PartitionTree& tree) {
    const Matrix& sv = scores.value();
    if (sv.cols() != 1) {
        throw DimensionError("segment_softmax: scores must be a column, got " +
                             std::to_string(sv.rows()) + "x" + std::to_string(sv.cols()));
    }
    require_tree_rows(sv, tree, "segment_softmax");
    std::vector<Segment> leaves = tree.leaves();
    Matrix w(sv.rows(), 1);
    for (const Segment& seg : leaves) {
        double max_score = sv.at(seg.start, 0);
        for (std::size_t i = seg.start; i < seg.end; ++i)
            max_score = std::max(max_score, sv.at(i, 0));
        double z = 0.0;
        for (std::size_t i = seg.start; i < seg.end; ++i) {
            double e = std::exp(sv.at(i, 0) - max_score);
            w.at(i, 0) = e;
            z += e;
        }
        for (std::size_t i = seg.start; i < seg.end; ++i) w.at(i, 0) /= z;
    }
    Tape& t = scores.tape();
    Matrix wc = w;
    // Per leaf: ds = w .* (g - sum(g .* w))
    return t.record(std::move(w), {scores}, [scores, wc, leaves](Tape& t2, const Matrix& g) {
        Matrix sg(g.rows(), 1);
        for (const Segment& seg : leaves) {
            double dot = 0.0;
            for (std::size_t i = seg.start; i < seg.end; ++i) dot += g.at(i, 0) * wc.at(i, 0);
            for (std::size_t i = seg.start; i < seg.end; ++i)
                sg.at(i, 0) = wc.at(i, 0) * (g.at(i, 0) - dot);
        }
        t2.accumulate_grad(scores, sg);
    });
}

Var segment_weighted_sum(Var h, Var weights, const PartitionTree& tree) {
    const Matrix& hv = h.value();
    const Matrix& wv = weights.value();
    require_tree_rows(hv, tree, "segment_weighted_sum");
    if (wv.cols() != 1 || wv.rows() != hv.rows()) {
        throw DimensionError("segment_weighted_sum", hv.rows(), hv.cols(), wv.rows(),
                             wv.cols());
    }
    std::vector<Segment> leaves = tree.leaves();
    Matrix pooled(leaves.size(), hv.cols());
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        for (std::size_t i = leaves[k].start; i < leaves[k].end; ++i)
            for (std::size_t j = 0; j < hv.cols(); ++j)
                pooled.at(k, j) += wv.at(i, 0) * hv.at(i, j);
    }
    Tape& t = h.tape();
    return t.record(std::move(pooled), {h, weights},
                    [h, weights, leaves](Tape& t2, const Matrix& g) {
                        const Matrix& hv2 = t2.value(h);
                        const Matrix& wv2 = t2.value(weights);
                        Matrix hg(hv2.rows(), hv2.cols());
                        Matrix wg(wv2.rows(), 1);
                        for (std::size_t k = 0; k < leaves.size(); ++k) {
                            for (std::size_t i = leaves[k].start; i < leaves[k].end; ++i) {
                                double dot = 0.0;
                                for (std::size_t j = 0; j < hg.cols(); ++j) {
                                    hg.at(i, j) = wv2.at(i, 0) * g.at(k, j);
                                    dot += hv2.at(i, j) * g.at(k, j);
                                }
                                wg.at(i, 0) = dot;
                            }
                        }
                        t2.accumulate_grad(h, hg);
                        t2.accumulate_grad(weights, wg);
                    });
}

AttentivePool attentive_pool_segments(Var h, const PartitionTree& tree, Var query,
                                      Var attention_map) {
    const Matrix& qv = query.value();
    const Matrix& mv = attention_map.value();
    if (qv.cols() != 1 || mv.cols() != qv.rows()) {
        throw DimensionError("attentive_pool_segments", mv.rows(), mv.cols(), qv.rows(),
                             qv.cols());
    }
    Var direction = matmul(attention_map, query);  // m x 1
    Var scores = matmul(h, direction);             // N x 1
    Var weights = segment_softmax(scores, tree);
    Var pooled = segment_weighted_sum(h, weights, tree);
    return AttentivePool{pooled, weights};
}

}  // namespace cbgln
