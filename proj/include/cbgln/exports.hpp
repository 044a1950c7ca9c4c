#pragma once

#include <string>
#include <vector>

#include "cbgln/matrix.hpp"
#include "cbgln/temporal_cut.hpp"

namespace cbgln {

/// 8-bit binary PGM (P5); pixel = round(255 * v / max over all entries).
/// A max of 0 exports an all-black image.
std::string render_pgm(const Matrix& values);

/// `depth start end` per node, depth-first preorder.
std::string render_partition(const PartitionTree& tree);

/// `frame_index weight` per line.
std::string render_attention(const std::vector<double>& weights);

/// Atomic file write (temp file + rename).
void write_file(const std::string& path, const std::string& payload);

void write_pgm(const Matrix& values, const std::string& path);
void write_partition(const PartitionTree& tree, const std::string& path);
void write_attention(const std::vector<double>& weights, const std::string& path);

}  // namespace cbgln
