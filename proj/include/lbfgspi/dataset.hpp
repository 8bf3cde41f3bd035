#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "lbfgspi/common.hpp"

namespace lbfgspi {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803; // 3-D unsigned-byte
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801; // 1-D unsigned-byte

/// One parsed IDX file: either an image tensor (count x rows x cols) or a
/// label vector (count).
struct IdxData {
    std::uint32_t magic = 0;
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> payload;

    bool is_images() const { return magic == kIdxImageMagic; }
    bool is_labels() const { return magic == kIdxLabelMagic; }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw LoadError("idx: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace detail

/// Parse a big-endian IDX file (magic 0x803 for images, 0x801 for labels),
/// validating the declared sizes against the actual payload length.
inline IdxData load_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("idx: cannot open " + path);

    IdxData data;
    data.magic = detail::read_be32(in, path);
    std::size_t expected = 0;
    if (data.magic == kIdxImageMagic) {
        data.count = detail::read_be32(in, path);
        data.rows = detail::read_be32(in, path);
        data.cols = detail::read_be32(in, path);
        expected = std::size_t(data.count) * data.rows * data.cols;
    } else if (data.magic == kIdxLabelMagic) {
        data.count = detail::read_be32(in, path);
        expected = data.count;
    } else {
        throw LoadError("idx: bad magic in " + path);
    }

    data.payload.resize(expected);
    in.read(reinterpret_cast<char*>(data.payload.data()),
            static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(in.gcount()) != expected)
        throw LoadError("idx: truncated payload in " + path);
    // anything beyond the declared sizes is a malformed file too
    char extra;
    if (in.read(&extra, 1))
        throw LoadError("idx: trailing bytes in " + path);
    return data;
}

/// Raw image/label pairs. Pixels stay as bytes (0..255); scaling to [0,1]
/// happens when tasks are built.
struct Dataset {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> images; // count x rows x cols, row-major
    std::vector<std::uint8_t> labels; // count
    std::string source;

    std::size_t pixels() const { return std::size_t(rows) * cols; }
};

/// Pair an image file with its label file, enforcing matching counts.
inline Dataset load_dataset(const std::string& images_path, const std::string& labels_path) {
    IdxData images = load_idx(images_path);
    if (!images.is_images()) throw LoadError("idx: " + images_path + " is not an image file");
    IdxData labels = load_idx(labels_path);
    if (!labels.is_labels()) throw LoadError("idx: " + labels_path + " is not a label file");
    if (images.count != labels.count)
        throw LoadError("idx: image/label count mismatch (" + std::to_string(images.count) +
                        " vs " + std::to_string(labels.count) + ")");
    Dataset d;
    d.count = images.count;
    d.rows = images.rows;
    d.cols = images.cols;
    d.images = std::move(images.payload);
    d.labels = std::move(labels.payload);
    d.source = images_path;
    return d;
}

/// Block-average each image down to side x side (bytes, rounded to nearest).
/// Used for the desk-scale 8x8 configuration.
inline Dataset downsample(const Dataset& src, std::uint32_t side) {
    if (side == 0 || side > src.rows || side > src.cols)
        throw std::invalid_argument("downsample: bad target side");
    Dataset out;
    out.count = src.count;
    out.rows = side;
    out.cols = side;
    out.labels = src.labels;
    out.source = src.source;
    out.images.resize(std::size_t(src.count) * side * side);
    for (std::uint32_t n = 0; n < src.count; ++n) {
        const std::uint8_t* img = src.images.data() + std::size_t(n) * src.rows * src.cols;
        for (std::uint32_t r = 0; r < side; ++r) {
            const std::uint32_t r0 = r * src.rows / side;
            const std::uint32_t r1 = (r + 1) * src.rows / side;
            for (std::uint32_t c = 0; c < side; ++c) {
                const std::uint32_t c0 = c * src.cols / side;
                const std::uint32_t c1 = (c + 1) * src.cols / side;
                unsigned long acc = 0;
                for (std::uint32_t rr = r0; rr < r1; ++rr)
                    for (std::uint32_t cc = c0; cc < c1; ++cc)
                        acc += img[rr * src.cols + cc];
                const unsigned long cells = (r1 - r0) * (c1 - c0);
                out.images[(std::size_t(n) * side + r) * side + c] =
                    static_cast<std::uint8_t>((acc + cells / 2) / cells);
            }
        }
    }
    return out;
}

} // namespace lbfgspi
