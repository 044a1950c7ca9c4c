#pragma once

#include "cbgln/tape.hpp"
#include "cbgln/temporal_cut.hpp"

namespace cbgln {

inline constexpr double kLayerNormEpsilon = 1e-5;

/// M = D^-1 (A_cut + I) X W_M. Unit self-loops keep every degree >= 1, so the
/// normalized rows always sum to exactly 1.
Var message(Var x, Var a_cut, Var message_map);

/// One layer's update weights; see update().
struct UpdateWeights {
    Var bilinear_left;   // m x d (U)
    Var bilinear_right;  // m x d (V)
    Var output_map;      // d x m
    Var output_bias;     // 1 x m
    Var norm_gain;       // 1 x m
    Var norm_bias;       // 1 x m
};

/// Per position: b = tanh(x U) .* tanh(m V); u = b W_o + bias;
/// H = LayerNorm(x + u) * gain + shift. The residual and the normalization
/// can be ablated independently.
Var update(Var x, Var m, const UpdateWeights& w, bool use_residual = true,
           bool use_layer_norm = true);

/// Mean of h's rows within each leaf, leaves in temporal order (K x m).
Var segment_mean(Var h, const PartitionTree& tree);

/// Softmax of a score column within each leaf (max-subtracted).
Var segment_softmax(Var scores, const PartitionTree& tree);

/// pooled_k = sum over leaf k of weights_i * h_i.
Var segment_weighted_sum(Var h, Var weights, const PartitionTree& tree);

struct AttentivePool {
    Var pooled;   // K x m
    Var weights;  // N x 1, a probability distribution within each leaf
};

/// Query-conditioned pooling: score_i = h_i . (attention_map query), weights
/// are the per-leaf softmax of the scores.
AttentivePool attentive_pool_segments(Var h, const PartitionTree& tree, Var query,
                                      Var attention_map);

}  // namespace cbgln
