#include "cbgln/exports.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cbgln {

std::string render_pgm(const Matrix& values) {
    double max = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) max = std::max(max, values.data()[k]);
    std::ostringstream os;
    os << "P5\n" << values.cols() << ' ' << values.rows() << "\n255\n";
    std::string pixels(values.size(), '\0');
    if (max > 0.0) {
        for (std::size_t k = 0; k < values.size(); ++k) {
            double v = values.data()[k];
            long byte = v <= 0.0 ? 0 : std::lround(255.0 * v / max);
            pixels[k] = static_cast<char>(static_cast<unsigned char>(byte));
        }
    }
    os << pixels;
    return os.str();
}

std::string render_partition(const PartitionTree& tree) {
    std::ostringstream os;
    for (const PartitionNode& n : tree.nodes()) {
        os << n.depth << ' ' << n.seg.start << ' ' << n.seg.end << '\n';
    }
    return os.str();
}

std::string render_attention(const std::vector<double>& weights) {
    std::ostringstream os;
    char buf[48];
    for (std::size_t i = 0; i < weights.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu %.17g", i, weights[i]);
        os << buf << '\n';
    }
    return os.str();
}

void write_file(const std::string& path, const std::string& payload) {
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

void write_pgm(const Matrix& values, const std::string& path) {
    write_file(path, render_pgm(values));
}

void write_partition(const PartitionTree& tree, const std::string& path) {
    write_file(path, render_partition(tree));
}

void write_attention(const std::vector<double>& weights, const std::string& path) {
    write_file(path, render_attention(weights));
}

}  // namespace cbgln
