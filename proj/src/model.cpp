#include "cbgln/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "cbgln/rng.hpp"

namespace cbgln {

namespace {

Matrix identity_plus_noise(std::size_t n, Rng& rng, double stddev) {
    Matrix m = Matrix::identity(n);
    for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] += rng.gaussian() * stddev;
    return m;
}

LayerParameters make_layer(const ModelConfig& cfg, std::size_t index, Rng& rng) {
    const std::size_t m = cfg.feature_width;
    const std::size_t d = cfg.rank();
    const std::string prefix = "layer" + std::to_string(index) + ".";
    double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    LayerParameters p{
        Parameter(prefix + "kernel_transform", identity_plus_noise(m, rng, 0.05)),
        std::nullopt,
        Parameter(prefix + "message_map", identity_plus_noise(m, rng, 0.05)),
        Parameter(prefix + "bilinear_left", rng.gaussian_matrix(m, d, inv_sqrt_m)),
        Parameter(prefix + "bilinear_right", rng.gaussian_matrix(m, d, inv_sqrt_m)),
        Parameter(prefix + "output_map", rng.gaussian_matrix(d, m, inv_sqrt_d)),
        Parameter(prefix + "output_bias", Matrix(1, m)),
        Parameter(prefix + "norm_gain", Matrix(1, m, 1.0)),
        Parameter(prefix + "norm_bias", Matrix(1, m)),
        std::nullopt,
    };
    if (cfg.kernel_bias) {
        p.kernel_bias = Parameter(prefix + "kernel_bias", Matrix(1, m));
    }
    if (cfg.query_mode) {
        p.attention_map =
            Parameter(prefix + "attention_map", rng.gaussian_matrix(m, cfg.qwidth(), inv_sqrt_m));
    }
    return p;
}

}  // namespace

Model::Model(const ModelConfig& cfg)
    : cfg_(cfg),
      head_weight_("head.weight", Matrix(0, 0)),
      head_bias_("head.bias", Matrix(0, 0)) {
    if (cfg.layers < 1 || cfg.feature_width < 1 || cfg.class_count < 1) {
        throw ContractError("ModelConfig: layers, feature_width and class_count must be >= 1");
    }
    Rng rng(cfg.seed);
    layers_.reserve(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) layers_.push_back(make_layer(cfg, l, rng));

    const std::size_t m = cfg.feature_width;
    double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
    if (cfg.query_mode) {
        final_attention_map_ =
            Parameter("final.attention_map", rng.gaussian_matrix(m, cfg.qwidth(), inv_sqrt_m));
    }
    if (cfg.head == ModelConfig::Head::kMultilabel) {
        head_weight_ = Parameter("head.weight",
                                 rng.gaussian_matrix(cfg.class_count, m, inv_sqrt_m));
        head_bias_ = Parameter("head.bias", Matrix(1, cfg.class_count));
    } else {
        head_weight_ = Parameter("head.weight", rng.gaussian_matrix(m, 1, inv_sqrt_m));
        head_bias_ = Parameter("head.bias", Matrix(1, 1));
    }
}

ForwardPass Model::forward(Tape& tape, const Matrix& x, const Matrix* query) {
    if (x.cols() != cfg_.feature_width) {
        throw DimensionError("forward: input width " + std::to_string(x.cols()) +
                             " != configured " + std::to_string(cfg_.feature_width));
    }
    if (x.rows() < 1) {
        throw ContractError("forward: input needs at least one frame");
    }
    if (cfg_.query_mode != (query != nullptr)) {
        throw ContractError(cfg_.query_mode ? "forward: query mode needs a query vector"
                                            : "forward: query given to a non-query model");
    }
    if (query != nullptr && (query->cols() != 1 || query->rows() != cfg_.qwidth())) {
        throw DimensionError("forward: query must be " + std::to_string(cfg_.qwidth()) +
                             "x1, got " + std::to_string(query->rows()) + "x" +
                             std::to_string(query->cols()));
    }
    ForwardPass out;
    Var query_var;
    if (query != nullptr) query_var = tape.constant(*query);

    Var cur = tape.constant(x);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        LayerParameters& lp = layers_[l];
        std::optional<Var> bias;
        if (lp.kernel_bias) bias = tape.leaf(*lp.kernel_bias);
        Var aff = build_affinity(cur, tape.leaf(lp.kernel_transform), bias);

        const std::size_t n = cur.rows();
        PartitionTree tree =
            recursive_cut(aff.value(), cfg_.min_len, recursion_depth(n), cfg_.ncut_threshold);

        Var a_used = cfg_.cut_before_update ? apply_mask(aff, tree) : aff;
        Var msg = message(cur, a_used, tape.leaf(lp.message_map));
        UpdateWeights uw{tape.leaf(lp.bilinear_left),  tape.leaf(lp.bilinear_right),
                         tape.leaf(lp.output_map),     tape.leaf(lp.output_bias),
                         tape.leaf(lp.norm_gain),      tape.leaf(lp.norm_bias)};
        Var updated = update(cur, msg, uw, cfg_.use_residual, cfg_.use_layer_norm);

        LevelTrace trace;
        trace.affinity = aff.value();
        trace.partition = tree;
        if (cfg_.query_mode) {
            AttentivePool pool = attentive_pool_segments(updated, tree, query_var,
                                                         tape.leaf(*lp.attention_map));
            trace.attention = pool.weights.value().values();
            cur = pool.pooled;
        } else {
            cur = segment_mean(updated, tree);
        }
        out.trace.per_level.push_back(std::move(trace));
    }

    // Final pooling of the remaining rows to the sequence-level vector.
    if (cfg_.query_mode) {
        PartitionTree whole = PartitionTree::single_leaf(cur.rows());
        AttentivePool pool = attentive_pool_segments(cur, whole, query_var,
                                                     tape.leaf(*final_attention_map_));
        out.trace.final_attention = pool.weights.value().values();
        out.h = pool.pooled;
    } else {
        out.h = mean_rows(cur);
    }
    out.trace.h = out.h.value();

    if (cfg_.head == ModelConfig::Head::kMultilabel) {
        out.logits = classify_multilabel(out.h, tape.leaf(head_weight_),
                                         tape.leaf(head_bias_));
        out.trace.logits = out.logits.value();
    }
    return out;
}

ModelOutput Model::run(const Matrix& x, const Matrix* query) {
    Tape tape;
    ForwardPass pass = forward(tape, x, query);
    ModelOutput result = std::move(pass.trace);
    tape.clear();
    return result;
}

Var Model::score_choices(Tape& tape, Var h_stack) {
    if (cfg_.head != ModelConfig::Head::kChoice) {
        throw ContractError("score_choices: model head is not in choice mode");
    }
    return cbgln::score_choices(h_stack, tape.leaf(head_weight_), tape.leaf(head_bias_));
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    for (LayerParameters& lp : layers_) {
        out.push_back(&lp.kernel_transform);
        if (lp.kernel_bias) out.push_back(&*lp.kernel_bias);
        out.push_back(&lp.message_map);
        out.push_back(&lp.bilinear_left);
        out.push_back(&lp.bilinear_right);
        out.push_back(&lp.output_map);
        out.push_back(&lp.output_bias);
        out.push_back(&lp.norm_gain);
        out.push_back(&lp.norm_bias);
        if (lp.attention_map) out.push_back(&*lp.attention_map);
    }
    if (final_attention_map_) out.push_back(&*final_attention_map_);
    out.push_back(&head_weight_);
    out.push_back(&head_bias_);
    return out;
}

std::vector<const Parameter*> Model::parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
    return out;
}

namespace {

constexpr char kMagic[4] = {'C', 'B', 'G', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint8_t get_u8(std::istream& is) {
    char c = 0;
    is.read(&c, 1);
    return static_cast<std::uint8_t>(c);
}

double get_f64(std::istream& is) {
    std::uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void Model::save_checkpoint(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw ParseError("save_checkpoint: cannot open " + tmp);
        }
        os.write(kMagic, 4);
        put_u32(os, kFormatVersion);
        put_u32(os, static_cast<std::uint32_t>(cfg_.layers));
        put_u64(os, cfg_.feature_width);
        put_u64(os, cfg_.bilinear_rank);
        put_u64(os, cfg_.min_len);
        put_f64(os, cfg_.ncut_threshold);
        put_u8(os, static_cast<std::uint8_t>(cfg_.head));
        put_u64(os, cfg_.class_count);
        put_u8(os, cfg_.query_mode ? 1 : 0);
        put_u64(os, cfg_.query_width);
        put_u8(os, cfg_.use_layer_norm ? 1 : 0);
        put_u8(os, cfg_.use_residual ? 1 : 0);
        put_u8(os, cfg_.cut_before_update ? 1 : 0);
        put_u8(os, cfg_.kernel_bias ? 1 : 0);
        put_u64(os, cfg_.seed);

        std::vector<const Parameter*> params = parameters();
        put_u64(os, params.size());
        for (const Parameter* p : params) {
            put_u32(os, static_cast<std::uint32_t>(p->name.size()));
            os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
            put_u64(os, p->value.rows());
            put_u64(os, p->value.cols());
            for (std::size_t k = 0; k < p->value.size(); ++k) put_f64(os, p->value.data()[k]);
        }
        if (!os) {
            throw ParseError("save_checkpoint: write failed on " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw ParseError("save_checkpoint: cannot move " + tmp + " to " + path);
    }
}

Model Model::load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ParseError("load_checkpoint: cannot open " + path);
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError(path, 0, "bad checkpoint magic");
    }
    std::uint32_t version = get_u32(is);
    if (version != kFormatVersion) {
        throw ParseError(path, 4, "unsupported checkpoint version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.layers = get_u32(is);
    cfg.feature_width = get_u64(is);
    cfg.bilinear_rank = get_u64(is);
    cfg.min_len = get_u64(is);
    cfg.ncut_threshold = get_f64(is);
    cfg.head = static_cast<ModelConfig::Head>(get_u8(is));
    cfg.class_count = get_u64(is);
    cfg.query_mode = get_u8(is) != 0;
    cfg.query_width = get_u64(is);
    cfg.use_layer_norm = get_u8(is) != 0;
    cfg.use_residual = get_u8(is) != 0;
    cfg.cut_before_update = get_u8(is) != 0;
    cfg.kernel_bias = get_u8(is) != 0;
    cfg.seed = get_u64(is);
    if (!is) {
        throw ParseError(path, static_cast<std::size_t>(is.tellg()), "truncated config block");
    }

    Model model(cfg);
    std::vector<Parameter*> params = model.parameters();
    std::uint64_t count = get_u64(is);
    if (count != params.size()) {
        throw ParseError(path, static_cast<std::size_t>(is.tellg()),
                         "checkpoint has " + std::to_string(count) + " parameters, config needs " +
                             std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        std::uint64_t rows = get_u64(is);
        std::uint64_t cols = get_u64(is);
        if (!is) {
            throw ParseError(path, static_cast<std::size_t>(is.tellg()),
                             "truncated parameter record");
        }
        if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
            throw ParseError(path, static_cast<std::size_t>(is.tellg()),
                             "parameter mismatch: got " + name + " " + std::to_string(rows) +
                                 "x" + std::to_string(cols) + ", config expects " + p->name +
                                 " " + std::to_string(p->value.rows()) + "x" +
                                 std::to_string(p->value.cols()));
        }
        for (std::size_t k = 0; k < p->value.size(); ++k) p->value.data()[k] = get_f64(is);
    }
    if (!is) {
        throw ParseError(path, static_cast<std::size_t>(is.tellg()), "truncated parameter data");
    }
    return model;
}

Var classify_multilabel(Var h, Var weight, Var bias) {
    if (h.cols() != weight.cols()) {
        throw DimensionError("classify_multilabel", h.rows(), h.cols(), weight.rows(),
                             weight.cols());
    }
    return sigmoid(add_row(matmul(h, transpose(weight)), bias));
}

Var score_choices(Var h_stack, Var weight, Var bias) {
    if (h_stack.cols() != weight.rows() || weight.cols() != 1) {
        throw DimensionError("score_choices", h_stack.rows(), h_stack.cols(), weight.rows(),
                             weight.cols());
    }
    return add_row(matmul(h_stack, weight), bias);
}

std::vector<double> cumulative_attention(const ModelOutput& out) {
    if (!out.final_attention) {
        throw ContractError("cumulative_attention: output carries no final attention");
    }
    for (const LevelTrace& level : out.per_level) {
        if (!level.attention) {
            throw ContractError("cumulative_attention: a level carries no attention");
        }
    }
    const std::size_t n = out.per_level.front().partition.frame_count();
    std::vector<double> weights(n, 1.0);
    std::vector<std::size_t> row(n);
    for (std::size_t i = 0; i < n; ++i) row[i] = i;

    for (const LevelTrace& level : out.per_level) {
        const std::vector<double>& att = *level.attention;
        std::vector<std::size_t> owner = level.partition.leaf_of();
        for (std::size_t i = 0; i < n; ++i) {
            weights[i] *= att[row[i]];
            row[i] = owner[row[i]];
        }
    }
    const std::vector<double>& final_att = *out.final_attention;
    for (std::size_t i = 0; i < n; ++i) weights[i] *= final_att[row[i]];
    return weights;
}

std::size_t argmax_lowest(const Matrix& column) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < column.rows(); ++i) {
        if (column.at(i, 0) > column.at(best, 0)) best = i;
    }
    return best;
}

}  // namespace cbgln
