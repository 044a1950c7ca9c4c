#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cbgln/data_io.hpp"
#include "cbgln/model.hpp"

namespace cbgln {

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double clip_norm = 5.0;       // global gradient norm bound
    std::size_t eval_interval = 1;  // epochs between validation passes
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

struct EvalReport {
    double loss = 0.0;
    double accuracy = 0.0;  // top-1 or choice accuracy; meaningful for single-label data
    double gap = 0.0;       // Global Average Precision (multilabel mode)
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    EvalReport validation;
};

struct TrainResult {
    EvalReport best_validation;
    std::size_t best_epoch = 0;
    std::vector<EpochStats> history;
};

/// Mean over classes of the binary cross-entropy between probabilities
/// (clamped to [1e-12, 1-1e-12]) and a constant multi-hot target row.
Var bce_multilabel(Var probabilities, const Matrix& targets);

/// -log softmax(scores)[correct] for a K x 1 score column.
Var softmax_cross_entropy(Var scores, std::size_t correct);

/// One sequence's scored predictions: (class, confidence) pairs.
using ScoredClasses = std::vector<std::pair<std::size_t, double>>;

/// Pools all (sequence, class, confidence) triples, sorts by confidence
/// descending (stable in sequence-then-class order on ties) and averages
/// precision at every correct hit over the total positive count. Returns 0
/// with a warning when there are no positives.
double gap_metric(const std::vector<ScoredClasses>& predictions,
                  const std::vector<std::vector<std::size_t>>& positives);

/// Top-k classes by probability (ties to the lowest class index).
ScoredClasses top_k_classes(const Matrix& probabilities, std::size_t k);

inline constexpr std::size_t kGapTopK = 20;

/// Per-class candidate queries for choice mode (class_count x q); each
/// candidate is fused by running forward with its row as the query.
struct ChoiceContext {
    Matrix candidate_queries;
};

EvalReport evaluate(Model& model, const std::vector<SequenceRecord>& dataset,
                    const ChoiceContext* choice = nullptr);

/// Adam with global-norm clipping over mini-batches; seed-deterministic batch
/// order. Keeps the best-validation parameters (selection metric: accuracy
/// when every record carries one label, GAP otherwise) and restores them
/// before returning. `metrics_log` (optional) receives one line per eval:
/// epoch<TAB>split<TAB>loss<TAB>metric.
TrainResult train(Model& model, const std::vector<SequenceRecord>& train_split,
                  const std::vector<SequenceRecord>& validation_split, const TrainConfig& cfg,
                  const ChoiceContext* choice = nullptr, std::ostream* metrics_log = nullptr);

}  // namespace cbgln
