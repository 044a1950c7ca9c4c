#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbgln/affinity.hpp"
#include "cbgln/propagation.hpp"
#include "cbgln/tape.hpp"
#include "cbgln/temporal_cut.hpp"

namespace cbgln {

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t feature_width = 16;  // m
    std::size_t bilinear_rank = 0;   // d; 0 means feature_width
    std::size_t min_len = kDefaultMinLen;
    double ncut_threshold = kDefaultNoCutThreshold;

    enum class Head : std::uint8_t { kMultilabel = 0, kChoice = 1 };
    Head head = Head::kMultilabel;
    std::size_t class_count = 4;  // classes (multilabel) or candidates (choice)

    bool query_mode = false;
    std::size_t query_width = 0;  // q; 0 means feature_width

    // Ablations: (a) layer normalization, (b/c) residual connection,
    // (d) graph-cut applied only for pooling, after dense message passing.
    bool use_layer_norm = true;
    bool use_residual = true;
    bool cut_before_update = true;

    bool kernel_bias = false;
    std::uint64_t seed = 1;

    std::size_t rank() const { return bilinear_rank ? bilinear_rank : feature_width; }
    std::size_t qwidth() const { return query_width ? query_width : feature_width; }
};

/// Learnable weights of one CB-GLN layer.
struct LayerParameters {
    Parameter kernel_transform;              // m x m, the kernel's f
    std::optional<Parameter> kernel_bias;    // 1 x m
    Parameter message_map;                   // m x m (W_M)
    Parameter bilinear_left;                 // m x d (U)
    Parameter bilinear_right;                // m x d (V)
    Parameter output_map;                    // d x m
    Parameter output_bias;                   // 1 x m
    Parameter norm_gain;                     // 1 x m
    Parameter norm_bias;                     // 1 x m
    std::optional<Parameter> attention_map;  // m x q, query mode only
};

struct LevelTrace {
    Matrix affinity;  // dense kernel output at this level
    PartitionTree partition;
    std::optional<std::vector<double>> attention;  // per-row within-leaf weights
};

struct ModelOutput {
    Matrix h;       // 1 x m final representation
    Matrix logits;  // multilabel: 1 x C sigmoid probabilities; empty in choice mode
    std::vector<LevelTrace> per_level;
    std::optional<std::vector<double>> final_attention;  // over the last level's rows
};

/// Taped handles from one forward pass, for building losses on top.
struct ForwardPass {
    Var h;       // 1 x m
    Var logits;  // only valid in multilabel mode
    ModelOutput trace;
};

class Model {
public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    /// Stacked structure learning + representation learning. `query` must be
    /// a q x 1 column iff the model is in query mode. Non-const because the
    /// tape binds parameter gradient buffers.
    ForwardPass forward(Tape& tape, const Matrix& x, const Matrix* query = nullptr);

    /// Forward on a throwaway tape; no gradients, parameters untouched.
    ModelOutput run(const Matrix& x, const Matrix* query = nullptr);

    /// Scalar score per candidate representation (rows of h_stack) through
    /// the choice head.
    Var score_choices(Tape& tape, Var h_stack);

    /// Stable parameter order (used by the optimizer and the checkpoint).
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

    void save_checkpoint(const std::string& path) const;
    static Model load_checkpoint(const std::string& path);

private:
    ModelConfig cfg_;
    std::vector<LayerParameters> layers_;
    std::optional<Parameter> final_attention_map_;  // m x q, query mode
    Parameter head_weight_;                         // C x m or 1 x m (choice)
    Parameter head_bias_;                           // 1 x C or 1 x 1
};

/// sigmoid(W h + b) per class; h is 1 x m, weight C x m, bias 1 x C.
Var classify_multilabel(Var h, Var weight, Var bias);

/// Linear score per row of h_stack (K x m): h_stack w + b.
Var score_choices(Var h_stack, Var weight, Var bias);

/// Per-original-frame product of attention weights down the level hierarchy,
/// including the final pooling stage; sums to 1. Requires a query-mode output.
std::vector<double> cumulative_attention(const ModelOutput& out);

/// Argmax with lowest-index tie break.
std::size_t argmax_lowest(const Matrix& column);

}  // namespace cbgln
