#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace advsteg {

/// 8-bit grayscale image, row-major. Immutable once constructed.
class GrayImage {
public:
    GrayImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels);
    GrayImage(std::size_t width, std::size_t height, std::uint8_t fill);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return pixels_.size(); }

    std::uint8_t at(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }
    std::uint8_t operator[](std::size_t index) const { return pixels_[index]; }
    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

    bool same_shape(const GrayImage& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    std::size_t width_;
    std::size_t height_;
    std::vector<std::uint8_t> pixels_;
};

struct PixelFlip {
    std::size_t row;
    std::size_t col;
    int direction;  // +1 or -1
};

/// True exactly where the pixel is 0 or 255, i.e. one of the two ±1 moves
/// would leave the 8-bit range.
struct WetMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<bool> flags;

    bool at(std::size_t row, std::size_t col) const { return flags[row * width + col]; }
};

inline bool is_wet(std::uint8_t value) noexcept { return value == 0 || value == 255; }

GrayImage load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

// In-memory codec used by the file functions.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);

GrayImage apply_flips(const GrayImage& img, std::span<const PixelFlip> flips);

WetMask wet_mask(const GrayImage& img);

}  // namespace advsteg
