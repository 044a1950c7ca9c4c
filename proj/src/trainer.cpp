#include "cbgln/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <thread>

#include "cbgln/rng.hpp"

namespace cbgln {

namespace {

constexpr double kProbClamp = 1e-12;

Matrix multihot(const std::vector<std::size_t>& labels, std::size_t classes) {
    Matrix t(1, classes);
    for (std::size_t c : labels) {
        if (c >= classes) {
            throw ContractError("label index " + std::to_string(c) + " out of " +
                                std::to_string(classes) + " classes");
        }
        t.at(0, c) = 1.0;
    }
    return t;
}

}  // namespace

Var bce_multilabel(Var probabilities, const Matrix& targets) {
    const Matrix& pv = probabilities.value();
    if (!pv.same_shape(targets)) {
        throw DimensionError("bce_multilabel", pv.rows(), pv.cols(), targets.rows(),
                             targets.cols());
    }
    const std::size_t n = pv.size();
    double loss = 0.0;
    Matrix clamped = pv;
    for (std::size_t k = 0; k < n; ++k) {
        double p = std::clamp(pv.data()[k], kProbClamp, 1.0 - kProbClamp);
        clamped.data()[k] = p;
        double t = targets.data()[k];
        loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    loss /= static_cast<double>(n);
    Tape& tape = probabilities.tape();
    Matrix tc = targets;
    Matrix cc = clamped;
    return tape.record(Matrix(1, 1, loss), {probabilities},
                       [probabilities, tc, cc, n](Tape& t2, const Matrix& g) {
                           const Matrix& pv2 = t2.value(probabilities);
                           Matrix pg(pv2.rows(), pv2.cols());
                           double scale = g.at(0, 0) / static_cast<double>(n);
                           for (std::size_t k = 0; k < n; ++k) {
                               double p = cc.data()[k];
                               // zero slope outside the clamp window
                               if (pv2.data()[k] != p) continue;
                               pg.data()[k] =
                                   scale * (p - tc.data()[k]) / (p * (1.0 - p));
                           }
                           t2.accumulate_grad(probabilities, pg);
                       });
}

Var softmax_cross_entropy(Var scores, std::size_t correct) {
    const Matrix& sv = scores.value();
    if (sv.cols() != 1 || correct >= sv.rows()) {
        throw ContractError("softmax_cross_entropy: need a Kx1 column with correct < K");
    }
    double max_score = sv.at(0, 0);
    for (std::size_t i = 1; i < sv.rows(); ++i) max_score = std::max(max_score, sv.at(i, 0));
    double z = 0.0;
    Matrix softmax(sv.rows(), 1);
    for (std::size_t i = 0; i < sv.rows(); ++i) {
        double e = std::exp(sv.at(i, 0) - max_score);
        softmax.at(i, 0) = e;
        z += e;
    }
    for (std::size_t i = 0; i < sv.rows(); ++i) softmax.at(i, 0) /= z;
    double loss = -std::log(std::max(softmax.at(correct, 0), kProbClamp));
    Tape& tape = scores.tape();
    return tape.record(Matrix(1, 1, loss), {scores},
                       [scores, softmax, correct](Tape& t2, const Matrix& g) {
                           Matrix sg = softmax;
                           sg.at(correct, 0) -= 1.0;
                           for (std::size_t i = 0; i < sg.rows(); ++i) sg.at(i, 0) *= g.at(0, 0);
                           t2.accumulate_grad(scores, sg);
                       });
}

ScoredClasses top_k_classes(const Matrix& probabilities, std::size_t k) {
    ScoredClasses all;
    for (std::size_t c = 0; c < probabilities.cols(); ++c) {
        all.emplace_back(c, probabilities.at(0, c));
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (all.size() > k) all.resize(k);
    return all;
}

double gap_metric(const std::vector<ScoredClasses>& predictions,
                  const std::vector<std::vector<std::size_t>>& positives) {
    if (predictions.size() != positives.size()) {
        throw ContractError("gap_metric: predictions and positives differ in length");
    }
    struct Entry {
        std::size_t sequence;
        std::size_t cls;
        double confidence;
    };
    std::vector<Entry> pool;
    std::size_t total_positives = 0;
    for (std::size_t s = 0; s < predictions.size(); ++s) {
        for (const auto& [cls, conf] : predictions[s]) pool.push_back({s, cls, conf});
        total_positives += positives[s].size();
    }
    if (total_positives == 0) {
        std::cerr << "warning: gap_metric with zero positives\n";
        return 0.0;
    }
    // Pool is already in (sequence, class) order; a stable sort keeps that
    // order among equal confidences.
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Entry& a, const Entry& b) { return a.confidence > b.confidence; });
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const Entry& e = pool[i];
        const std::vector<std::size_t>& pos = positives[e.sequence];
        if (std::find(pos.begin(), pos.end(), e.cls) != pos.end()) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(total_positives);
}

namespace {

struct SequenceEval {
    double loss = 0.0;
    bool correct = false;
    ScoredClasses top_k;
};

SequenceEval eval_sequence(Model& model, const SequenceRecord& rec,
                           const ChoiceContext* choice) {
    SequenceEval out;
    const ModelConfig& cfg = model.config();
    if (cfg.head == ModelConfig::Head::kChoice) {
        if (choice == nullptr) {
            throw ContractError("choice mode needs a ChoiceContext");
        }
        if (rec.labels.size() != 1) {
            throw ContractError("choice mode records need exactly one label");
        }
        Tape tape;
        Matrix h_stack(choice->candidate_queries.rows(), cfg.feature_width);
        std::vector<Var> hs;
        for (std::size_t c = 0; c < choice->candidate_queries.rows(); ++c) {
            Matrix query(cfg.qwidth(), 1);
            for (std::size_t j = 0; j < cfg.qwidth(); ++j)
                query.at(j, 0) = choice->candidate_queries.at(c, j);
            ForwardPass pass = model.forward(tape, rec.features, &query);
            hs.push_back(pass.h);
        }
        // Stack the per-candidate h rows through taped slicing-free concat:
        // score each h then gather. Scores are 1x1 each; gather via sum of
        // scaled unit rows is avoidable by scoring a stacked matrix, so build
        // the stack as a record over all hs.
        std::vector<Var> parents = hs;
        for (std::size_t c = 0; c < hs.size(); ++c)
            for (std::size_t j = 0; j < cfg.feature_width; ++j)
                h_stack.at(c, j) = hs[c].value().at(0, j);
        Var stacked = tape.record(
            h_stack, parents, [hs](Tape& t2, const Matrix& g) {
                for (std::size_t c = 0; c < hs.size(); ++c) {
                    Matrix row(1, g.cols());
                    for (std::size_t j = 0; j < g.cols(); ++j) row.at(0, j) = g.at(c, j);
                    t2.accumulate_grad(hs[c], row);
                }
            });
        Var scores = model.score_choices(tape, stacked);
        out.correct = argmax_lowest(scores.value()) == rec.labels[0];
        Var loss = softmax_cross_entropy(scores, rec.labels[0]);
        out.loss = loss.value().at(0, 0);
        tape.clear();
        return out;
    }

    ModelOutput mo = model.run(rec.features);
    Matrix targets = multihot(rec.labels, cfg.class_count);
    double loss = 0.0;
    for (std::size_t c = 0; c < cfg.class_count; ++c) {
        double p = std::clamp(mo.logits.at(0, c), kProbClamp, 1.0 - kProbClamp);
        double t = targets.at(0, c);
        loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    out.loss = loss / static_cast<double>(cfg.class_count);
    Matrix col(cfg.class_count, 1);
    for (std::size_t c = 0; c < cfg.class_count; ++c) col.at(c, 0) = mo.logits.at(0, c);
    out.correct = rec.labels.size() == 1 && argmax_lowest(col) == rec.labels[0];
    out.top_k = top_k_classes(mo.logits, kGapTopK);
    return out;
}

}  // namespace

EvalReport evaluate(Model& model, const std::vector<SequenceRecord>& dataset,
                    const ChoiceContext* choice) {
    if (dataset.empty()) {
        throw ContractError("evaluate: empty dataset");
    }
    EvalReport report;
    std::vector<ScoredClasses> predictions;
    std::vector<std::vector<std::size_t>> positives;
    std::size_t correct = 0;
    for (const SequenceRecord& rec : dataset) {
        SequenceEval ev = eval_sequence(model, rec, choice);
        report.loss += ev.loss;
        if (ev.correct) ++correct;
        if (model.config().head == ModelConfig::Head::kMultilabel) {
            predictions.push_back(std::move(ev.top_k));
            positives.push_back(rec.labels);
        }
    }
    report.loss /= static_cast<double>(dataset.size());
    report.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    if (model.config().head == ModelConfig::Head::kMultilabel) {
        report.gap = gap_metric(predictions, positives);
    }
    return report;
}

namespace {

class AdamState {
public:
    AdamState(const std::vector<Parameter*>& params, const TrainConfig& cfg) : cfg_(cfg) {
        for (Parameter* p : params) {
            m_.emplace_back(p->value.rows(), p->value.cols());
            v_.emplace_back(p->value.rows(), p->value.cols());
        }
    }

    void step(const std::vector<Parameter*>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter& p = *params[i];
            for (std::size_t k = 0; k < p.value.size(); ++k) {
                double g = p.grad.data()[k];
                double& m = m_[i].data()[k];
                double& v = v_[i].data()[k];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
                double mhat = m / bc1;
                double vhat = v / bc2;
                p.value.data()[k] -=
                    cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_epsilon);
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::size_t t_ = 0;
};

void clip_global_norm(const std::vector<Parameter*>& params, double clip) {
    if (clip <= 0.0) return;
    double sq = 0.0;
    for (Parameter* p : params)
        for (std::size_t k = 0; k < p->grad.size(); ++k)
            sq += p->grad.data()[k] * p->grad.data()[k];
    double norm = std::sqrt(sq);
    if (norm <= clip) return;
    double factor = clip / norm;
    for (Parameter* p : params)
        for (std::size_t k = 0; k < p->grad.size(); ++k) p->grad.data()[k] *= factor;
}

double sequence_loss_and_grads(Model& model, const SequenceRecord& rec,
                               const ChoiceContext* choice) {
    const ModelConfig& mc = model.config();
    Tape tape;
    Var loss;
    if (mc.head == ModelConfig::Head::kChoice) {
        if (choice == nullptr) throw ContractError("choice mode needs a ChoiceContext");
        std::vector<Var> hs;
        for (std::size_t c = 0; c < choice->candidate_queries.rows(); ++c) {
            Matrix query(mc.qwidth(), 1);
            for (std::size_t j = 0; j < mc.qwidth(); ++j)
                query.at(j, 0) = choice->candidate_queries.at(c, j);
            hs.push_back(model.forward(tape, rec.features, &query).h);
        }
        Matrix h_stack(hs.size(), mc.feature_width);
        for (std::size_t c = 0; c < hs.size(); ++c)
            for (std::size_t j = 0; j < mc.feature_width; ++j)
                h_stack.at(c, j) = hs[c].value().at(0, j);
        Var stacked =
            tape.record(h_stack, hs, [hs](Tape& t2, const Matrix& g) {
                for (std::size_t c = 0; c < hs.size(); ++c) {
                    Matrix row(1, g.cols());
                    for (std::size_t j = 0; j < g.cols(); ++j) row.at(0, j) = g.at(c, j);
                    t2.accumulate_grad(hs[c], row);
                }
            });
        loss = softmax_cross_entropy(model.score_choices(tape, stacked), rec.labels.at(0));
    } else {
        ForwardPass pass = model.forward(tape, rec.features);
        loss = bce_multilabel(pass.logits, multihot(rec.labels, mc.class_count));
    }
    double value = loss.value().at(0, 0);
    tape.backward(loss);
    return value;
}

std::string format_metric_line(std::size_t epoch, const char* split, double loss,
                               double metric) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu\t%s\t%.6f\t%.6f", epoch, split, loss, metric);
    return buf;
}

}  // namespace

TrainResult train(Model& model, const std::vector<SequenceRecord>& train_split,
                  const std::vector<SequenceRecord>& validation_split, const TrainConfig& cfg,
                  const ChoiceContext* choice, std::ostream* metrics_log) {
    if (train_split.empty()) {
        throw ContractError("train: empty train split");
    }
    if (cfg.learning_rate < 0.0 || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
        cfg.beta2 >= 1.0) {
        throw ContractError("train: invalid optimizer configuration");
    }
    std::vector<Parameter*> params = model.parameters();
    AdamState adam(params, cfg);
    Rng rng(cfg.seed);

    // Selection metric: accuracy when every record has exactly one label,
    // otherwise GAP.
    bool all_single = true;
    for (const SequenceRecord& r : train_split) all_single &= r.labels.size() == 1;
    for (const SequenceRecord& r : validation_split) all_single &= r.labels.size() == 1;
    const bool choice_mode = model.config().head == ModelConfig::Head::kChoice;

    auto selection = [&](const EvalReport& r) {
        return (all_single || choice_mode) ? r.accuracy : r.gap;
    };

    TrainResult result;
    double best_score = -1.0;
    std::vector<Matrix> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (Parameter* p : params) best_params.push_back(p->value);
    };

    auto run_validation = [&](std::size_t epoch, double train_loss) {
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss;
        if (!validation_split.empty()) {
            stats.validation = evaluate(model, validation_split, choice);
            if (metrics_log) {
                *metrics_log << format_metric_line(epoch, "validation", stats.validation.loss,
                                                   selection(stats.validation))
                             << '\n';
            }
            if (selection(stats.validation) > best_score) {
                best_score = selection(stats.validation);
                result.best_validation = stats.validation;
                result.best_epoch = epoch;
                snapshot();
            }
        }
        if (metrics_log) {
            *metrics_log << format_metric_line(epoch, "train", train_loss, 0.0) << '\n';
        }
        result.history.push_back(stats);
    };

    std::vector<std::size_t> order(train_split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    // Epoch 0 report: the untrained model.
    run_validation(0, 0.0);

    const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += batch) {
            const std::size_t end = std::min(order.size(), begin + batch);
            for (Parameter* p : params) p->reset_grad();

            double batch_loss = 0.0;
            const std::size_t count = end - begin;
            const std::size_t threads =
                std::min<std::size_t>(std::max<std::size_t>(cfg.threads, 1), count);
            if (threads <= 1) {
                for (std::size_t i = begin; i < end; ++i) {
                    batch_loss += sequence_loss_and_grads(model, train_split[order[i]], choice);
                }
            } else {
                // Independent model replicas per thread; gradients merge in
                // thread order so the result matches the single-threaded sum.
                std::vector<Model> replicas(threads, model);
                std::vector<double> losses(threads, 0.0);
                std::vector<std::thread> pool;
                for (std::size_t t = 0; t < threads; ++t) {
                    pool.emplace_back([&, t]() {
                        std::vector<Parameter*> local = replicas[t].parameters();
                        for (Parameter* p : local) p->reset_grad();
                        for (std::size_t i = begin + t; i < end; i += threads) {
                            losses[t] += sequence_loss_and_grads(replicas[t],
                                                                 train_split[order[i]], choice);
                        }
                    });
                }
                for (std::thread& th : pool) th.join();
                for (std::size_t t = 0; t < threads; ++t) {
                    batch_loss += losses[t];
                    std::vector<Parameter*> local = replicas[t].parameters();
                    for (std::size_t pi = 0; pi < params.size(); ++pi) {
                        for (std::size_t k = 0; k < params[pi]->grad.size(); ++k)
                            params[pi]->grad.data()[k] += local[pi]->grad.data()[k];
                    }
                }
            }

            if (!std::isfinite(batch_loss)) {
                double pnorm = 0.0;
                for (Parameter* p : params) pnorm += frobenius_norm(p->value);
                throw ContractError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(begin / batch) +
                                    ", parameter norm sum " + std::to_string(pnorm));
            }

            const double inv = 1.0 / static_cast<double>(count);
            for (Parameter* p : params)
                for (std::size_t k = 0; k < p->grad.size(); ++k) p->grad.data()[k] *= inv;
            clip_global_norm(params, cfg.clip_norm);
            adam.step(params);

            epoch_loss += batch_loss;
            seen += count;
        }
        epoch_loss /= static_cast<double>(seen);

        if (epoch % std::max<std::size_t>(1, cfg.eval_interval) == 0 || epoch == cfg.epochs) {
            run_validation(epoch, epoch_loss);
        }
    }

    if (!best_params.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    }
    return result;
}

}  // namespace cbgln
