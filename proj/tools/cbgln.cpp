#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cbgln/config.hpp"
#include "cbgln/data_io.hpp"
#include "cbgln/exports.hpp"
#include "cbgln/model.hpp"
#include "cbgln/trainer.hpp"

namespace fs = std::filesystem;
using namespace cbgln;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = ".";
    std::size_t threads = 1;
    std::uint64_t seed = 0;  // 0 = no override
};

ConfigReader load_config(const CommonArgs& args) {
    ConfigReader reader;
    if (!args.config_path.empty()) {
        reader = ConfigReader::from_file(args.config_path);
    }
    for (const std::string& kv : args.overrides) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ParseError("--set expects key=value, got '" + kv + "'");
        }
        reader.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return reader;
}

/// Exit code 2 when the configuration has schema problems; prints all of them.
int check_config(const ConfigReader& reader) {
    std::vector<std::string> errors = reader.finish();
    if (errors.empty()) return 0;
    for (const std::string& e : errors) std::cerr << "config error: " << e << '\n';
    return 2;
}

SyntheticSpec read_synthetic(ConfigReader& cfg, std::uint64_t seed_override) {
    SyntheticSpec spec;
    spec.n_sequences = cfg.get_size("gen.n_sequences", 100);
    spec.n_frames = cfg.get_size("gen.n_frames", 64);
    spec.feature_width = cfg.get_size("gen.feature_width", 16);
    spec.n_classes = cfg.get_size("gen.n_classes", 4);
    spec.n_motifs = cfg.get_size("gen.n_motifs", 4);
    spec.min_segment_len = cfg.get_size("gen.min_segment_len", 8);
    spec.max_segment_len = cfg.get_size("gen.max_segment_len", 24);
    spec.noise_std = cfg.get_real("gen.noise_std", 0.05);
    spec.scene_strength = cfg.get_real("gen.scene_strength", 1.0);
    spec.seed = cfg.get_u64("gen.seed", 1);
    if (seed_override) spec.seed = seed_override;
    return spec;
}

ModelConfig read_model(ConfigReader& cfg, std::uint64_t seed_override) {
    ModelConfig mc;
    mc.layers = cfg.get_size("model.layers", 2);
    mc.feature_width = cfg.get_size("model.feature_width", 16);
    mc.bilinear_rank = cfg.get_size("model.bilinear_rank", 0);
    mc.min_len = cfg.get_size("model.min_len", kDefaultMinLen);
    mc.ncut_threshold = cfg.get_real("model.ncut_threshold", kDefaultNoCutThreshold);
    std::string head = cfg.get_string("model.head", "multilabel");
    if (head == "multilabel") {
        mc.head = ModelConfig::Head::kMultilabel;
    } else if (head == "choice") {
        mc.head = ModelConfig::Head::kChoice;
    } else {
        throw ParseError("model.head must be multilabel or choice, got '" + head + "'");
    }
    mc.class_count = cfg.get_size("model.classes", 4);
    mc.query_mode = cfg.get_bool("model.query_mode", false);
    mc.query_width = cfg.get_size("model.query_width", 0);
    mc.use_layer_norm = cfg.get_bool("model.use_layer_norm", true);
    mc.use_residual = cfg.get_bool("model.use_residual", true);
    mc.cut_before_update = cfg.get_bool("model.cut_before_update", true);
    mc.kernel_bias = cfg.get_bool("model.kernel_bias", false);
    mc.seed = cfg.get_u64("model.seed", 1);
    if (seed_override) mc.seed = seed_override;
    return mc;
}

TrainConfig read_trainer(ConfigReader& cfg, const CommonArgs& args) {
    TrainConfig tc;
    tc.epochs = cfg.get_size("trainer.epochs", 200);
    tc.batch_size = cfg.get_size("trainer.batch_size", 16);
    tc.learning_rate = cfg.get_real("trainer.learning_rate", 1e-3);
    tc.beta1 = cfg.get_real("trainer.beta1", 0.9);
    tc.beta2 = cfg.get_real("trainer.beta2", 0.999);
    tc.adam_epsilon = cfg.get_real("trainer.adam_epsilon", 1e-8);
    tc.clip_norm = cfg.get_real("trainer.clip_norm", 5.0);
    tc.eval_interval = cfg.get_size("trainer.eval_interval", 1);
    tc.seed = cfg.get_u64("trainer.seed", 1);
    if (args.seed) tc.seed = args.seed;
    tc.threads = args.threads;
    return tc;
}

std::vector<SequenceRecord> read_dataset(ConfigReader& cfg, const std::string& role) {
    std::string path = cfg.get_string(role + ".path", "");
    if (path.empty()) {
        throw ParseError(role + ".path is required");
    }
    DataFormat format = parse_format(cfg.get_string(role + ".format", "binary"));
    return load_dataset(path, format);
}

int cmd_gen(const CommonArgs& args) {
    ConfigReader cfg = load_config(args);
    SyntheticSpec spec = read_synthetic(cfg, args.seed);
    std::string format_name = cfg.get_string("gen.format", "binary");
    DataFormat format = parse_format(format_name);
    if (int rc = check_config(cfg)) return rc;

    PlantedDataset dataset = generate_planted(spec);
    fs::create_directories(args.out_dir);
    save_dataset(args.out_dir, dataset.records, format);

    // Ground-truth sidecar for inspection and boundary checks.
    std::ostringstream truth;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        truth << dataset.records[i].id << '\t';
        const PlantedSequenceInfo& info = dataset.truth[i];
        for (std::size_t k = 0; k < info.boundaries.size(); ++k) {
            if (k) truth << ',';
            truth << info.boundaries[k];
        }
        truth << '\t';
        for (std::size_t k = 0; k < info.motifs.size(); ++k) {
            if (k) truth << ',';
            truth << info.motifs[k];
        }
        truth << '\n';
    }
    write_file((fs::path(args.out_dir) / "truth.tsv").string(), truth.str());
    std::cout << "generated " << dataset.records.size() << " sequences in " << args.out_dir
              << '\n';
    return 0;
}

int cmd_train(const CommonArgs& args) {
    ConfigReader cfg = load_config(args);
    ModelConfig mc = read_model(cfg, args.seed);
    TrainConfig tc = read_trainer(cfg, args);
    double train_fraction = cfg.get_real("dataset.train_fraction", 0.8);
    double val_fraction = cfg.get_real("dataset.validation_fraction", 0.2);
    std::uint64_t split_seed = cfg.get_u64("dataset.split_seed", 7);
    std::string dataset_path = cfg.get_string("dataset.path", "");
    std::string dataset_format = cfg.get_string("dataset.format", "binary");
    if (dataset_path.empty()) {
        std::cerr << "config error: dataset.path is required\n";
        return 2;
    }
    if (int rc = check_config(cfg)) return rc;

    std::vector<SequenceRecord> records = load_dataset(dataset_path, parse_format(dataset_format));
    DatasetSplit splits = split(records, train_fraction, val_fraction, split_seed);

    Model model(mc);
    fs::create_directories(args.out_dir);
    const std::string metrics_path = (fs::path(args.out_dir) / "metrics.tsv").string();
    std::ostringstream metrics;
    TrainResult result = train(model, splits.train, splits.validation, tc, nullptr, &metrics);
    write_file(metrics_path, metrics.str());
    model.save_checkpoint((fs::path(args.out_dir) / "checkpoint.cbgl").string());

    std::cout << "best validation: epoch " << result.best_epoch << " loss "
              << result.best_validation.loss << " accuracy " << result.best_validation.accuracy
              << " gap " << result.best_validation.gap << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    ConfigReader cfg = load_config(args);
    std::string checkpoint = cfg.get_string("eval.checkpoint", "");
    std::string dataset_path = cfg.get_string("dataset.path", "");
    std::string dataset_format = cfg.get_string("dataset.format", "binary");
    if (checkpoint.empty() || dataset_path.empty()) {
        std::cerr << "config error: eval.checkpoint and dataset.path are required\n";
        return 2;
    }
    if (int rc = check_config(cfg)) return rc;
    if (!fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint " << checkpoint << " does not exist\n";
        return 2;
    }

    Model model = Model::load_checkpoint(checkpoint);
    std::vector<SequenceRecord> records = load_dataset(dataset_path, parse_format(dataset_format));
    EvalReport report = evaluate(model, records);
    std::cout << "loss " << report.loss << " accuracy " << report.accuracy << " gap "
              << report.gap << '\n';
    return 0;
}

int cmd_segment(const CommonArgs& args) {
    ConfigReader cfg = load_config(args);
    std::string features_path = cfg.get_string("segment.features", "");
    std::string checkpoint = cfg.get_string("segment.checkpoint", "");
    std::string format_name = cfg.get_string("segment.format", "binary");
    std::size_t min_len = cfg.get_size("segment.min_len", kDefaultMinLen);
    double threshold = cfg.get_real("segment.ncut_threshold", kDefaultNoCutThreshold);
    if (features_path.empty()) {
        std::cerr << "config error: segment.features is required\n";
        return 2;
    }
    if (int rc = check_config(cfg)) return rc;
    if (!fs::exists(features_path)) {
        std::cerr << "error: feature file " << features_path << " does not exist\n";
        return 2;
    }
    if (!checkpoint.empty() && !fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint " << checkpoint << " does not exist\n";
        return 2;
    }

    Matrix features = load_features(features_path, parse_format(format_name));
    fs::create_directories(args.out_dir);
    fs::path out(args.out_dir);

    auto dump_level = [&](std::size_t level, const Matrix& affinity,
                          const PartitionTree& tree) {
        std::string tag = "level" + std::to_string(level);
        write_pgm(affinity, (out / (tag + ".affinity.pgm")).string());
        write_pgm(apply_mask(affinity, tree), (out / (tag + ".cut.pgm")).string());
        write_partition(tree, (out / (tag + ".partition.txt")).string());
    };

    if (checkpoint.empty()) {
        // No trained kernel: structure from the identity kernel, one level.
        Matrix affinity =
            build_affinity(features, Matrix::identity(features.cols()), nullptr);
        PartitionTree tree =
            recursive_cut(affinity, min_len, recursion_depth(features.rows()), threshold);
        dump_level(0, affinity, tree);
    } else {
        Model model = Model::load_checkpoint(checkpoint);
        if (model.config().query_mode) {
            std::cerr << "error: segment does not take query-mode checkpoints; use export\n";
            return 2;
        }
        ModelOutput outp = model.run(features);
        for (std::size_t l = 0; l < outp.per_level.size(); ++l) {
            dump_level(l, outp.per_level[l].affinity, outp.per_level[l].partition);
        }
    }
    return 0;
}

int cmd_export(const CommonArgs& args) {
    ConfigReader cfg = load_config(args);
    std::string checkpoint = cfg.get_string("export.checkpoint", "");
    std::string features_path = cfg.get_string("export.features", "");
    std::string format_name = cfg.get_string("export.format", "binary");
    std::string query_path = cfg.get_string("export.query", "");
    if (checkpoint.empty() || features_path.empty()) {
        std::cerr << "config error: export.checkpoint and export.features are required\n";
        return 2;
    }
    if (int rc = check_config(cfg)) return rc;
    if (!fs::exists(checkpoint) || !fs::exists(features_path)) {
        std::cerr << "error: missing checkpoint or feature file\n";
        return 2;
    }

    Model model = Model::load_checkpoint(checkpoint);
    DataFormat format = parse_format(format_name);
    Matrix features = load_features(features_path, format);

    Matrix query;
    const Matrix* query_ptr = nullptr;
    if (model.config().query_mode) {
        if (query_path.empty()) {
            std::cerr << "error: query-mode checkpoint needs export.query (a 1-row feature "
                         "file)\n";
            return 2;
        }
        Matrix row = load_features(query_path, format);
        if (row.rows() < 1 || row.cols() != model.config().qwidth()) {
            std::cerr << "error: query file must have width " << model.config().qwidth()
                      << '\n';
            return 1;
        }
        query = Matrix(row.cols(), 1);
        for (std::size_t j = 0; j < row.cols(); ++j) query.at(j, 0) = row.at(0, j);
        query_ptr = &query;
    }

    ModelOutput outp = model.run(features, query_ptr);
    fs::create_directories(args.out_dir);
    fs::path out(args.out_dir);
    for (std::size_t l = 0; l < outp.per_level.size(); ++l) {
        std::string tag = "level" + std::to_string(l);
        write_pgm(outp.per_level[l].affinity, (out / (tag + ".affinity.pgm")).string());
        write_pgm(apply_mask(outp.per_level[l].affinity, outp.per_level[l].partition),
                  (out / (tag + ".cut.pgm")).string());
        write_partition(outp.per_level[l].partition, (out / (tag + ".partition.txt")).string());
        if (outp.per_level[l].attention) {
            write_attention(*outp.per_level[l].attention,
                            (out / (tag + ".attention.txt")).string());
        }
    }
    if (model.config().query_mode) {
        write_attention(*outp.final_attention, (out / "final.attention.txt").string());
        write_attention(cumulative_attention(outp), (out / "cumulative.attention.txt").string());
    } else {
        std::cout << "notice: non-query checkpoint, attention files skipped\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cut-based graph learning networks over feature sequences"};
    app.require_subcommand(1);

    CommonArgs args;
    app.add_option("--config", args.config_path, "Config file (sectioned key = value)");
    app.add_option("--set", args.overrides, "Override config entries as section.key=value");
    app.add_option("--out-dir", args.out_dir, "Output directory");
    app.add_option("--threads", args.threads, "Worker threads for batch gradients");
    app.add_option("--seed", args.seed, "Override the command's primary seed");

    CLI::App* gen = app.add_subcommand("gen", "Generate a planted synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "Train a model from a config");
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    CLI::App* segment = app.add_subcommand("segment", "Segment a sequence and export structure");
    CLI::App* exp = app.add_subcommand("export", "Export attention and hierarchy dumps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(args);
        if (train->parsed()) return cmd_train(args);
        if (eval->parsed()) return cmd_eval(args);
        if (segment->parsed()) return cmd_segment(args);
        if (exp->parsed()) return cmd_export(args);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
