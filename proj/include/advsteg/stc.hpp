#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace advsteg {

/// One bit per element, values 0 or 1.
using BitVector = std::vector<std::uint8_t>;

/// Single-layered syndrome-trellis code.
///
/// The parity-check matrix H (l x n) is a band of copies of the sub-matrix
/// Ĥ (h rows). Message bit g owns a run of consecutive cover positions whose
/// width alternates between floor(n/l) and ceil(n/l); the run's columns are
/// the first `width` columns of Ĥ placed with their top row on row g. Rows
/// past l are truncated.
///
/// A column pattern is an h-bit integer where bit k sets row offset k, so
/// bit 0 is the top row.
class StcCode {
public:
    StcCode(std::size_t n, std::size_t l, unsigned h, std::vector<std::uint32_t> hhat_columns);

    std::size_t n() const noexcept { return n_; }
    std::size_t l() const noexcept { return l_; }
    unsigned h() const noexcept { return h_; }
    const std::vector<std::uint32_t>& hhat_columns() const noexcept { return hhat_; }

    // Width of message bit g's run and the cover index it starts at.
    std::size_t width(std::size_t g) const { return starts_[g + 1] - starts_[g]; }
    std::size_t start(std::size_t g) const { return starts_[g]; }

    // Column of H at cover index j as a mask over rows group(j) .. group(j)+h-1,
    // already truncated at row l.
    std::size_t group_of(std::size_t j) const { return group_[j]; }
    std::uint32_t column(std::size_t j) const;

    friend bool operator==(const StcCode&, const StcCode&) = default;

private:
    std::size_t n_;
    std::size_t l_;
    unsigned h_;
    std::vector<std::uint32_t> hhat_;
    std::vector<std::size_t> starts_;  // l + 1 entries
    std::vector<std::size_t> group_;   // n entries
};

inline constexpr unsigned kDefaultStcHeight = 7;
inline constexpr std::uint64_t kDefaultStcSeed = 20180417;

/// Seeded code with a random Ĥ (top bit of every column set, first and last
/// columns all ones). Requires l <= n/2 and 1 <= h <= 10.
StcCode build_code(std::size_t n, std::size_t l, unsigned h = kDefaultStcHeight,
                   std::uint64_t seed = kDefaultStcSeed);

/// Message length for a payload rate in bits per pixel: round(alpha * n).
std::size_t message_length(double alpha, std::size_t n);

struct EmbedResult {
    BitVector stego_lsb;     // y
    BitVector flip_pattern;  // x xor y
    double total_cost = 0.0;
};

/// Viterbi search for the minimum-cost y with H y = m. Ties prefer fewer
/// flips, then the y_j = 0 branch.
EmbedResult stc_embed(std::span<const std::uint8_t> x, std::span<const std::uint8_t> m, std::span<const double> rho,
                      const StcCode& code);

/// H y over GF(2).
BitVector stc_extract(std::span<const std::uint8_t> y, const StcCode& code);

/// Exhaustive optimum over all 2^n vectors; n <= 20.
EmbedResult brute_force_embed(std::span<const std::uint8_t> x, std::span<const std::uint8_t> m,
                              std::span<const double> rho, const StcCode& code);

/// Sum of rho at set positions of the flip pattern, accumulated in index order.
double pattern_cost(std::span<const std::uint8_t> flips, std::span<const double> rho);

// Most-significant bit first within each byte.
BitVector bytes_to_bits(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> bits_to_bytes(std::span<const std::uint8_t> bits);

}  // namespace advsteg
