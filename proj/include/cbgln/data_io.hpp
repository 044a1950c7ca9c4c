#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbgln/matrix.hpp"

namespace cbgln {

struct SequenceRecord {
    std::string id;
    Matrix features;                  // N x m
    std::vector<std::size_t> labels;  // class indices; single entry in choice mode
};

enum class DataFormat { kBinary, kCsv };

DataFormat parse_format(const std::string& name);

/// Per-sequence feature files. Binary: magic "CBGF", version u32, N u64,
/// m u64, N*m little-endian doubles row-major. CSV: one frame per line,
/// '.' decimal separator, 17 significant digits on write.
Matrix load_features(const std::string& path, DataFormat format);
void save_features(const std::string& path, const Matrix& features, DataFormat format);

/// A dataset is a directory with labels.tsv (`id<TAB>comma-separated class
/// indices`) plus one feature file per id. Records come back in labels.tsv
/// line order; widths must be uniform.
std::vector<SequenceRecord> load_dataset(const std::string& dir, DataFormat format);
void save_dataset(const std::string& dir, const std::vector<SequenceRecord>& records,
                  DataFormat format);

struct SyntheticSpec {
    std::size_t n_sequences = 1;
    std::size_t n_frames = 64;
    std::size_t feature_width = 16;
    std::size_t n_classes = 4;
    std::size_t n_motifs = 4;
    std::size_t min_segment_len = 8;
    std::size_t max_segment_len = 24;
    double noise_std = 0.05;
    /// Scale of the component shared by each consecutive pair of segments
    /// (a "scene"); gives the hierarchy a second level to discover.
    double scene_strength = 1.0;
    std::uint64_t seed = 1;
};

struct PlantedSequenceInfo {
    std::vector<std::size_t> boundaries;  // interior segment boundaries, ascending
    std::vector<std::size_t> motifs;      // motif id per segment
};

struct PlantedDataset {
    std::vector<SequenceRecord> records;
    std::vector<PlantedSequenceInfo> truth;  // parallel to records
    Matrix prototypes;                       // n_motifs x m, unit rows
};

/// Sequences are concatenations of motif segments (adjacent motifs always
/// differ) with Gaussian noise; consecutive segment pairs share a scene
/// component. The class label is decided by the ordered segment composition
/// through label_of_motifs, and rejection resampling keeps class counts
/// within ~10% of uniform.
PlantedDataset generate_planted(const SyntheticSpec& spec);

/// Label of a motif sequence: segments are grouped into consecutive disjoint
/// pairs ("scenes"); each pair's unordered motif bag is scored per class from
/// a seeded table; the label is the argmax of the summed scores (lowest index
/// on ties). Grouping two segments differently changes the label by
/// construction, while any reordering that keeps the bags intact does not.
std::size_t label_of_motifs(const std::vector<std::size_t>& motifs, std::size_t n_motifs,
                            std::size_t n_classes);

struct DatasetSplit {
    std::vector<SequenceRecord> train;
    std::vector<SequenceRecord> validation;
};

/// Seeded shuffle, then the first floor(train_fraction*n) records become the
/// train split and the next floor(validation_fraction*n) the validation one.
DatasetSplit split(const std::vector<SequenceRecord>& dataset, double train_fraction,
                   double validation_fraction, std::uint64_t seed);

}  // namespace cbgln
