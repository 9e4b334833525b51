#include "advsteg/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "advsteg/errors.hpp"

namespace advsteg {

GrayImage::GrayImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width == 0 || height == 0) throw ArgumentError("image dimensions must be positive");
    if (pixels_.size() != width * height)
        throw ArgumentError("pixel count " + std::to_string(pixels_.size()) + " does not match " +
                            std::to_string(width) + "x" + std::to_string(height));
}

GrayImage::GrayImage(std::size_t width, std::size_t height, std::uint8_t fill)
    : GrayImage(width, height, std::vector<std::uint8_t>(width * height, fill)) {}

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    // Skips whitespace and '#' comments, then reads one token.
    std::string token() {
        for (;;) {
            while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
            if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
                continue;
            }
            break;
        }
        std::string tok;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#')
            tok.push_back(static_cast<char>(bytes_[pos_++]));
        if (tok.empty()) throw FormatError("PGM header ended early");
        return tok;
    }

    std::size_t number() {
        std::string tok = token();
        for (char c : tok)
            if (!std::isdigit(static_cast<unsigned char>(c)))
                throw FormatError("PGM header field '" + tok + "' is not a number");
        if (tok.size() > 9) throw FormatError("PGM header field '" + tok + "' out of range");
        return std::stoul(tok);
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
            throw FormatError("PGM header not terminated by whitespace");
        return pos_ + 1;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
    HeaderReader reader(bytes);
    if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("not a PGM file");
    std::string magic = reader.token();
    if (magic != "P5") throw FormatError("unsupported PGM magic '" + magic + "', only P5 is read");
    std::size_t width = reader.number();
    std::size_t height = reader.number();
    std::size_t maxval = reader.number();
    if (width == 0 || height == 0) throw FormatError("PGM has zero dimension");
    if (maxval != 255) throw UnsupportedError("PGM maxval " + std::to_string(maxval) + " unsupported");
    std::size_t offset = reader.raster_offset();
    std::size_t count = width * height;
    if (bytes.size() - offset < count)
        throw IoError("PGM raster truncated: expected " + std::to_string(count) + " bytes, got " +
                      std::to_string(bytes.size() - offset));
    auto first = bytes.begin() + static_cast<std::ptrdiff_t>(offset);
    return GrayImage(width, height, std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(count)));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
    std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

GrayImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pgm(bytes);
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
    auto bytes = encode_pgm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

GrayImage apply_flips(const GrayImage& img, std::span<const PixelFlip> flips) {
    std::vector<std::uint8_t> pixels(img.pixels().begin(), img.pixels().end());
    std::vector<bool> touched(pixels.size(), false);
    for (const auto& f : flips) {
        if (f.row >= img.height() || f.col >= img.width())
            throw BoundsError("flip position (" + std::to_string(f.row) + "," + std::to_string(f.col) +
                              ") outside image");
        if (f.direction != 1 && f.direction != -1) throw ArgumentError("flip direction must be +1 or -1");
        std::size_t idx = f.row * img.width() + f.col;
        if (touched[idx])
            throw ArgumentError("duplicate flip at (" + std::to_string(f.row) + "," + std::to_string(f.col) + ")");
        touched[idx] = true;
        int value = pixels[idx] + f.direction;
        if (value < 0 || value > 255)
            throw BoundsError("flip at (" + std::to_string(f.row) + "," + std::to_string(f.col) +
                              ") leaves [0,255]");
        pixels[idx] = static_cast<std::uint8_t>(value);
    }
    return GrayImage(img.width(), img.height(), std::move(pixels));
}

WetMask wet_mask(const GrayImage& img) {
    WetMask mask{img.width(), img.height(), std::vector<bool>(img.size())};
    for (std::size_t i = 0; i < img.size(); ++i) mask.flags[i] = is_wet(img[i]);
    return mask;
}

}  // namespace advsteg
