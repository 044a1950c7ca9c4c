#include "cbgln/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cbgln/rng.hpp"

namespace fs = std::filesystem;

namespace cbgln {

namespace {

constexpr char kFeatureMagic[4] = {'C', 'B', 'G', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

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

void atomic_write(const std::string& path, const std::string& payload) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ParseError("cannot open " + tmp + " for writing");
        os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!os) throw ParseError("write failed on " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw ParseError("cannot move " + tmp + " to " + path);
    }
}

Matrix load_features_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kFeatureMagic, 4) != 0) {
        throw ParseError(path, 0, "bad feature-file magic");
    }
    std::uint32_t version = get_u32(is);
    if (version != kFeatureVersion) {
        throw ParseError(path, 4, "unsupported feature version " + std::to_string(version));
    }
    std::uint64_t n = get_u64(is);
    std::uint64_t m = get_u64(is);
    if (!is) throw ParseError(path, 8, "truncated header");
    Matrix features(n, m);
    for (std::size_t k = 0; k < features.size(); ++k) {
        std::uint64_t bits = get_u64(is);
        if (!is) {
            throw ParseError(path, 24 + 8 * k, "truncated feature data");
        }
        double v;
        std::memcpy(&v, &bits, 8);
        features.data()[k] = v;
    }
    return features;
}

void save_features_binary(const std::string& path, const Matrix& features) {
    std::ostringstream os;
    os.write(kFeatureMagic, 4);
    put_u32(os, kFeatureVersion);
    put_u64(os, features.rows());
    put_u64(os, features.cols());
    for (std::size_t k = 0; k < features.size(); ++k) {
        std::uint64_t bits;
        std::memcpy(&bits, &features.data()[k], 8);
        put_u64(os, bits);
    }
    atomic_write(path, os.str());
}

Matrix load_features_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open " + path);
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t row_cols = 0;
        const char* p = line.c_str();
        while (true) {
            char* end = nullptr;
            double v = std::strtod(p, &end);
            if (end == p) {
                throw ParseError(path, line_no, "expected a number, got '" + std::string(p) +
                                                    "'");
            }
            values.push_back(v);
            ++row_cols;
            p = end;
            while (*p == ' ') ++p;
            if (*p == ',') {
                ++p;
                continue;
            }
            if (*p == '\0' || *p == '\r') break;
            throw ParseError(path, line_no, std::string("unexpected character '") + *p + "'");
        }
        if (cols == 0) {
            cols = row_cols;
        } else if (row_cols != cols) {
            throw ParseError(path, line_no,
                             "row has " + std::to_string(row_cols) + " columns, expected " +
                                 std::to_string(cols));
        }
        ++rows;
    }
    return Matrix(rows, cols, std::move(values));
}

void save_features_csv(const std::string& path, const Matrix& features) {
    std::ostringstream os;
    char buf[64];
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (std::size_t j = 0; j < features.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", features.at(i, j));
            if (j) os << ',';
            os << buf;
        }
        os << '\n';
    }
    atomic_write(path, os.str());
}

std::string extension_of(DataFormat format) {
    return format == DataFormat::kBinary ? ".cbgf" : ".csv";
}

}  // namespace

DataFormat parse_format(const std::string& name) {
    if (name == "binary") return DataFormat::kBinary;
    if (name == "csv") return DataFormat::kCsv;
    throw ParseError("unknown dataset format '" + name + "' (expected binary or csv)");
}

Matrix load_features(const std::string& path, DataFormat format) {
    return format == DataFormat::kBinary ? load_features_binary(path)
                                         : load_features_csv(path);
}

void save_features(const std::string& path, const Matrix& features, DataFormat format) {
    if (format == DataFormat::kBinary) {
        save_features_binary(path, features);
    } else {
        save_features_csv(path, features);
    }
}

std::vector<SequenceRecord> load_dataset(const std::string& dir, DataFormat format) {
    const fs::path root(dir);
    const fs::path labels_path = root / "labels.tsv";
    if (!fs::exists(root)) {
        throw ParseError("dataset directory " + dir + " does not exist");
    }
    std::vector<SequenceRecord> records;
    if (!fs::exists(labels_path)) {
        return records;  // no labels file: empty dataset
    }
    std::ifstream is(labels_path);
    if (!is) throw ParseError("cannot open " + labels_path.string());
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(labels_path.string(), line_no, "missing tab separator");
        }
        SequenceRecord rec;
        rec.id = line.substr(0, tab);
        std::string rest = line.substr(tab + 1);
        std::stringstream ss(rest);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            try {
                rec.labels.push_back(std::stoul(item));
            } catch (const std::exception&) {
                throw ParseError(labels_path.string(), line_no,
                                 "bad class index '" + item + "'");
            }
        }
        const std::string feature_path = (root / (rec.id + extension_of(format))).string();
        rec.features = load_features(feature_path, format);
        if (width == 0 && rec.features.cols() > 0) {
            width = rec.features.cols();
        } else if (rec.features.cols() != width) {
            throw ParseError(labels_path.string(), line_no,
                             "feature width " + std::to_string(rec.features.cols()) +
                                 " differs from dataset width " + std::to_string(width));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void save_dataset(const std::string& dir, const std::vector<SequenceRecord>& records,
                  DataFormat format) {
    const fs::path root(dir);
    fs::create_directories(root);
    std::ostringstream labels;
    for (const SequenceRecord& rec : records) {
        save_features((root / (rec.id + extension_of(format))).string(), rec.features, format);
        labels << rec.id << '\t';
        for (std::size_t k = 0; k < rec.labels.size(); ++k) {
            if (k) labels << ',';
            labels << rec.labels[k];
        }
        labels << '\n';
    }
    atomic_write((root / "labels.tsv").string(), labels.str());
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t kLabelSalt = 0x63626c6e6c626c31ULL;  // fixed label-table salt

/// Deterministic per-class score of one scene bag, uniform in [0, 1).
double bag_score(std::size_t cls, std::size_t bag_code) {
    std::uint64_t h = fnv1a(fnv1a(fnv1a(1469598103934665603ULL, kLabelSalt), cls), bag_code);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::size_t bag_code_of(std::size_t a, std::size_t b, std::size_t n_motifs) {
    if (a > b) std::swap(a, b);
    return a * n_motifs + b;
}

std::vector<std::size_t> draw_segment_lengths(std::size_t total, std::size_t min_len,
                                              std::size_t max_len, Rng& rng) {
    std::vector<std::size_t> lengths;
    if (total <= max_len) {
        lengths.push_back(total);
        return lengths;
    }
    std::size_t remaining = total;
    while (remaining > max_len) {
        // Keep the remainder reachable: the next draw leaves at least min_len.
        std::size_t hi = std::min(max_len, remaining - min_len);
        std::size_t len = min_len + rng.index(hi - min_len + 1);
        lengths.push_back(len);
        remaining -= len;
    }
    lengths.push_back(remaining);
    return lengths;
}

std::vector<std::size_t> draw_motifs(std::size_t count, std::size_t n_motifs, Rng& rng) {
    std::vector<std::size_t> motifs(count);
    for (std::size_t k = 0; k < count; ++k) {
        if (k == 0 || n_motifs == 1) {
            motifs[k] = rng.index(n_motifs);
        } else {
            std::size_t draw = rng.index(n_motifs - 1);
            motifs[k] = draw + (draw >= motifs[k - 1] ? 1 : 0);
        }
    }
    return motifs;
}

}  // namespace

std::size_t label_of_motifs(const std::vector<std::size_t>& motifs, std::size_t n_motifs,
                            std::size_t n_classes) {
    if (motifs.empty()) {
        throw ContractError("label_of_motifs: empty motif sequence");
    }
    std::vector<std::size_t> bags;
    for (std::size_t k = 0; k + 1 < motifs.size(); k += 2) {
        bags.push_back(bag_code_of(motifs[k], motifs[k + 1], n_motifs));
    }
    if (motifs.size() % 2 == 1) {
        bags.push_back(n_motifs * n_motifs + motifs.back());  // leftover singleton
    }
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        double score = 0.0;
        for (std::size_t code : bags) score += bag_score(c, code);
        if (score > best_score) {
            best_score = score;
            best = c;
        }
    }
    return best;
}

PlantedDataset generate_planted(const SyntheticSpec& spec) {
    if (spec.n_sequences < 1 || spec.n_frames < 1 || spec.feature_width < 1 ||
        spec.n_classes < 1 || spec.n_motifs < 1 || spec.min_segment_len < 1 ||
        spec.min_segment_len > spec.max_segment_len || spec.noise_std < 0.0) {
        throw ContractError("generate_planted: invalid synthetic spec");
    }
    Rng rng(spec.seed);
    PlantedDataset out;

    out.prototypes = Matrix(spec.n_motifs, spec.feature_width);
    for (std::size_t p = 0; p < spec.n_motifs; ++p) {
        double norm = 0.0;
        for (std::size_t j = 0; j < spec.feature_width; ++j) {
            double v = rng.gaussian();
            out.prototypes.at(p, j) = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < spec.feature_width; ++j) out.prototypes.at(p, j) /= norm;
    }

    // Scene directions, one per consecutive segment pair; enough for the
    // shortest legal segments.
    const std::size_t max_scenes = spec.n_frames / spec.min_segment_len / 2 + 2;
    Matrix scenes(max_scenes, spec.feature_width);
    for (std::size_t s = 0; s < max_scenes; ++s) {
        double norm = 0.0;
        for (std::size_t j = 0; j < spec.feature_width; ++j) {
            double v = rng.gaussian();
            scenes.at(s, j) = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < spec.feature_width; ++j)
            scenes.at(s, j) *= spec.scene_strength / norm;
    }

    const std::size_t cap = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(1.1 * static_cast<double>(spec.n_sequences) /
                         static_cast<double>(spec.n_classes))));
    std::vector<std::size_t> class_counts(spec.n_classes, 0);

    for (std::size_t s = 0; s < spec.n_sequences; ++s) {
        std::vector<std::size_t> lengths;
        std::vector<std::size_t> motifs;
        std::size_t label = 0;
        for (int attempt = 0; attempt < 200; ++attempt) {
            lengths = draw_segment_lengths(spec.n_frames, spec.min_segment_len,
                                           spec.max_segment_len, rng);
            motifs = draw_motifs(lengths.size(), spec.n_motifs, rng);
            label = label_of_motifs(motifs, spec.n_motifs, spec.n_classes);
            if (class_counts[label] < cap) break;
        }
        ++class_counts[label];

        SequenceRecord rec;
        rec.id = "seq" + std::to_string(s);
        rec.labels.push_back(label);
        rec.features = Matrix(spec.n_frames, spec.feature_width);
        PlantedSequenceInfo info;
        info.motifs = motifs;

        std::size_t frame = 0;
        for (std::size_t seg = 0; seg < lengths.size(); ++seg) {
            const std::size_t scene = seg / 2;
            for (std::size_t k = 0; k < lengths[seg]; ++k, ++frame) {
                for (std::size_t j = 0; j < spec.feature_width; ++j) {
                    rec.features.at(frame, j) = out.prototypes.at(motifs[seg], j) +
                                                scenes.at(scene, j) +
                                                rng.gaussian() * spec.noise_std;
                }
            }
            if (seg + 1 < lengths.size()) info.boundaries.push_back(frame);
        }
        out.records.push_back(std::move(rec));
        out.truth.push_back(std::move(info));
    }
    return out;
}

DatasetSplit split(const std::vector<SequenceRecord>& dataset, double train_fraction,
                   double validation_fraction, std::uint64_t seed) {
    if (train_fraction <= 0.0 || validation_fraction < 0.0 ||
        train_fraction + validation_fraction > 1.0 + 1e-12) {
        throw ContractError("split: fractions must be positive and sum to at most 1");
    }
    DatasetSplit out;
    if (dataset.empty()) {
        std::cerr << "warning: splitting an empty dataset\n";
        return out;
    }
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n = dataset.size();
    const std::size_t train_n = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
    const std::size_t val_n =
        std::min(n - train_n,
                 static_cast<std::size_t>(validation_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < train_n; ++i) out.train.push_back(dataset[order[i]]);
    for (std::size_t i = 0; i < val_n; ++i) out.validation.push_back(dataset[order[train_n + i]]);
    return out;
}

}  // namespace cbgln
