#include "fedprop/idx.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace fedprop::harness {

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("idx: '" + path + "' is truncated in the header");
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open '" + path + "'");
    return in;
}

}  // namespace

std::vector<fedsim::Sample> load_idx(const std::string& images_path,
                                     const std::string& labels_path) {
    auto images = open_or_throw(images_path);
    if (auto magic = read_be32(images, images_path); magic != 0x00000803u) {
        throw std::runtime_error("idx: '" + images_path +
                                 "' is not an unsigned-byte image file (magic " +
                                 std::to_string(magic) + ")");
    }
    std::size_t count = read_be32(images, images_path);
    std::size_t rows = read_be32(images, images_path);
    std::size_t cols = read_be32(images, images_path);

    auto labels = open_or_throw(labels_path);
    if (auto magic = read_be32(labels, labels_path); magic != 0x00000801u) {
        throw std::runtime_error("idx: '" + labels_path +
                                 "' is not an unsigned-byte label file (magic " +
                                 std::to_string(magic) + ")");
    }
    std::size_t label_count = read_be32(labels, labels_path);
    if (label_count != count) {
        throw std::runtime_error("idx: " + std::to_string(count) + " images but " +
                                 std::to_string(label_count) + " labels");
    }

    std::size_t pixels = rows * cols;
    std::vector<unsigned char> image_buf(pixels);
    std::vector<fedsim::Sample> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!images.read(reinterpret_cast<char*>(image_buf.data()),
                         std::streamsize(pixels))) {
            throw std::runtime_error("idx: '" + images_path +
                                     "' is truncated at image " + std::to_string(i));
        }
        char label = 0;
        if (!labels.read(&label, 1)) {
            throw std::runtime_error("idx: '" + labels_path +
                                     "' is truncated at label " + std::to_string(i));
        }
        auto& s = out[i];
        s.features.resize(pixels);
        for (std::size_t p = 0; p < pixels; ++p) {
            s.features[p] = double(image_buf[p]) / 255.0;
        }
        s.label = int(static_cast<unsigned char>(label));
    }
    return out;
}

}  // namespace fedprop::harness
