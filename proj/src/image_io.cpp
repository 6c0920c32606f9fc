#include "liquid/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json_writer.hpp"
#include "liquid/cell_io.hpp"
#include "liquid/errors.hpp"

namespace liquid {

std::string encode_pgm(const Frame& frame) {
    if (frame.channels != 1) {
        throw DimensionError("PGM output needs a single-channel frame");
    }
    std::string out = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) +
                      "\n255\n";
    out.reserve(out.size() + frame.pixels.size());
    for (double v : frame.pixels) {
        const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
    }
    return out;
}

Frame decode_pgm(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    std::size_t width = 0, height = 0, maxval = 0;
    in >> magic >> width >> height >> maxval;
    if (!in || magic != "P5" || maxval != 255 || width == 0 || height == 0) {
        throw IoError("not an 8-bit binary PGM");
    }
    in.get(); // single whitespace after the header
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (bytes.size() < offset + width * height) {
        throw IoError("truncated PGM data");
    }
    Frame frame(1, height, width);
    for (std::size_t i = 0; i < width * height; ++i) {
        frame.pixels[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
    }
    return frame;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
    write_text_file(path, encode_pgm(frame));
}

Frame read_pgm(const std::filesystem::path& path) { return decode_pgm(read_text_file(path)); }

std::string frame_to_csv(const Frame& frame) {
    if (frame.channels != 1) {
        throw DimensionError("CSV output needs a single-channel frame");
    }
    std::string out;
    for (std::size_t y = 0; y < frame.height; ++y) {
        for (std::size_t x = 0; x < frame.width; ++x) {
            if (x > 0) {
                out.push_back(',');
            }
            detail::append_double(out, frame.at(0, y, x));
        }
        out.push_back('\n');
    }
    return out;
}

} // namespace liquid
