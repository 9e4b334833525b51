#include "advsteg/stc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "advsteg/errors.hpp"
#include "advsteg/util.hpp"

namespace advsteg {

StcCode::StcCode(std::size_t n, std::size_t l, unsigned h, std::vector<std::uint32_t> hhat_columns)
    : n_(n), l_(l), h_(h), hhat_(std::move(hhat_columns)) {
    if (n == 0 || l == 0 || l > n) throw ArgumentError("STC needs 1 <= l <= n");
    if (h == 0 || h > 16) throw ArgumentError("STC constraint height must be in [1,16]");
    std::size_t max_width = (n + l - 1) / l;
    if (hhat_.size() != max_width)
        throw ArgumentError("Ĥ must have ceil(n/l) = " + std::to_string(max_width) + " columns, got " +
                            std::to_string(hhat_.size()));
    for (auto c : hhat_) {
        if ((c & 1u) == 0) throw ArgumentError("every Ĥ column needs its top bit set");
        if (c >> h) throw ArgumentError("Ĥ column has bits beyond the constraint height");
    }
    starts_.resize(l + 1);
    for (std::size_t g = 0; g <= l; ++g) starts_[g] = g * n / l;
    group_.resize(n);
    for (std::size_t g = 0; g < l; ++g)
        for (std::size_t j = starts_[g]; j < starts_[g + 1]; ++j) group_[j] = g;
}

std::uint32_t StcCode::column(std::size_t j) const {
    std::size_t g = group_[j];
    std::uint32_t pattern = hhat_[j - starts_[g]];
    std::size_t rows_left = l_ - g;
    if (rows_left < h_) pattern &= (1u << rows_left) - 1u;
    return pattern;
}

StcCode build_code(std::size_t n, std::size_t l, unsigned h, std::uint64_t seed) {
    if (n == 0 || l == 0) throw ArgumentError("STC needs positive cover and message lengths");
    if (2 * l > n)
        throw PayloadError("payload " + std::to_string(l) + "/" + std::to_string(n) +
                           " exceeds 1/2 bit per pixel for single-layered STC");
    if (h == 0 || h > 10) throw ArgumentError("STC constraint height must be in [1,10]");
    std::size_t width = (n + l - 1) / l;
    Rng rng(mix_seed(seed, (static_cast<std::uint64_t>(h) << 32) ^ width));
    const std::uint32_t all = (1u << h) - 1u;
    // Top and bottom bits set, first column all ones, the rest pairwise
    // distinct whenever h leaves room (two equal columns act as one).
    const std::size_t room = h == 1 ? std::size_t{1} : std::size_t{1} << (h - 2);
    std::vector<std::uint32_t> cols{all};
    while (cols.size() < width) {
        std::uint32_t c = (static_cast<std::uint32_t>(rng()) & all) | 1u | (1u << (h - 1));
        if (width <= room && std::find(cols.begin(), cols.end(), c) != cols.end()) continue;
        cols.push_back(c);
    }
    return StcCode(n, l, h, std::move(cols));
}

std::size_t message_length(double alpha, std::size_t n) {
    if (!(alpha > 0.0) || alpha > 1.0) throw PayloadError("payload rate must lie in (0,1]");
    auto l = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(n)));
    return l == 0 ? 1 : l;
}

namespace {

void check_lengths(std::span<const std::uint8_t> x, std::span<const std::uint8_t> m, std::span<const double> rho,
                   const StcCode& code) {
    if (x.size() != code.n()) throw ArgumentError("cover LSB vector length does not match code");
    if (m.size() != code.l()) throw ArgumentError("message length does not match code");
    if (rho.size() != code.n()) throw ArgumentError("cost vector length does not match code");
    for (double r : rho)
        if (!(r >= 0.0) || !std::isfinite(r)) throw ArgumentError("costs must be finite and non-negative");
}

EmbedResult make_result(std::span<const std::uint8_t> x, BitVector y, std::span<const double> rho) {
    EmbedResult r;
    r.flip_pattern.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.flip_pattern[i] = static_cast<std::uint8_t>((x[i] ^ y[i]) & 1u);
    r.stego_lsb = std::move(y);
    r.total_cost = pattern_cost(r.flip_pattern, rho);
    return r;
}

}  // namespace

double pattern_cost(std::span<const std::uint8_t> flips, std::span<const double> rho) {
    double total = 0.0;
    for (std::size_t i = 0; i < flips.size(); ++i)
        if (flips[i]) total += rho[i];
    return total;
}

EmbedResult stc_embed(std::span<const std::uint8_t> x, std::span<const std::uint8_t> m, std::span<const double> rho,
                      const StcCode& code) {
    check_lengths(x, m, rho, code);
    const std::size_t n = code.n();
    const std::size_t states = std::size_t{1} << code.h();
    const std::size_t words = (states + 63) / 64;
    constexpr double inf = std::numeric_limits<double>::infinity();

    // State bit k is the running syndrome of row (current group + k).
    std::vector<double> cost(states, inf), next_cost(states);
    std::vector<std::uint32_t> flips(states, 0), next_flips(states);
    cost[0] = 0.0;
    std::vector<std::uint64_t> path(n * words, 0);  // chosen y_j per state

    for (std::size_t g = 0; g < code.l(); ++g) {
        for (std::size_t j = code.start(g); j < code.start(g + 1); ++j) {
            const std::uint32_t col = code.column(j);
            const double c0 = x[j] ? rho[j] : 0.0;
            const double c1 = x[j] ? 0.0 : rho[j];
            const std::uint32_t f0 = x[j] ? 1u : 0u;
            const std::uint32_t f1 = x[j] ? 0u : 1u;
            std::uint64_t* decisions = &path[j * words];
            for (std::size_t s = 0; s < states; ++s) {
                const std::size_t from1 = s ^ col;
                const double a = cost[s] + c0;
                const double b = cost[from1] + c1;
                const std::uint32_t fa = flips[s] + f0;
                const std::uint32_t fb = flips[from1] + f1;
                if (b < a || (b == a && fb < fa)) {
                    next_cost[s] = b;
                    next_flips[s] = fb;
                    decisions[s >> 6] |= std::uint64_t{1} << (s & 63);
                } else {
                    next_cost[s] = a;
                    next_flips[s] = fa;
                }
            }
            cost.swap(next_cost);
            flips.swap(next_flips);
        }
        // Row g is complete: keep states that match the message bit, then shift it out.
        const std::size_t want = m[g] & 1u;
        for (std::size_t s = 0; s < states / 2; ++s) {
            next_cost[s] = cost[(s << 1) | want];
            next_flips[s] = flips[(s << 1) | want];
        }
        for (std::size_t s = states / 2; s < states; ++s) {
            next_cost[s] = inf;
            next_flips[s] = 0;
        }
        cost.swap(next_cost);
        flips.swap(next_flips);
    }

    if (!std::isfinite(cost[0])) throw InternalError("syndrome trellis has no feasible path");

    BitVector y(n, 0);
    std::size_t state = 0;
    for (std::size_t g = code.l(); g-- > 0;) {
        state = (state << 1) | (m[g] & 1u);
        for (std::size_t j = code.start(g + 1); j-- > code.start(g);) {
            const bool bit = (path[j * words + (state >> 6)] >> (state & 63)) & 1u;
            y[j] = bit ? 1 : 0;
            if (bit) state ^= code.column(j);
        }
    }
    if (state != 0) throw InternalError("syndrome trellis backtrack did not return to the start state");
    return make_result(x, std::move(y), rho);
}

BitVector stc_extract(std::span<const std::uint8_t> y, const StcCode& code) {
    if (y.size() != code.n()) throw ArgumentError("stego LSB vector length does not match code");
    BitVector m(code.l(), 0);
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (!(y[j] & 1u)) continue;
        std::uint32_t col = code.column(j);
        for (std::size_t k = 0; col; ++k, col >>= 1)
            if (col & 1u) m[code.group_of(j) + k] ^= 1u;
    }
    return m;
}

EmbedResult brute_force_embed(std::span<const std::uint8_t> x, std::span<const std::uint8_t> m,
                              std::span<const double> rho, const StcCode& code) {
    if (code.n() > 20) throw SizeError("brute-force embedding is limited to n <= 20");
    check_lengths(x, m, rho, code);
    const std::size_t n = code.n();
    // Syndrome contribution of each cover position as a mask over all l rows.
    std::vector<std::uint32_t> syndrome(n);
    for (std::size_t j = 0; j < n; ++j) syndrome[j] = code.column(j) << code.group_of(j);
    std::uint32_t target = 0;
    for (std::size_t g = 0; g < code.l(); ++g) target |= static_cast<std::uint32_t>(m[g] & 1u) << g;

    std::uint32_t xmask = 0;
    for (std::size_t j = 0; j < n; ++j) xmask |= static_cast<std::uint32_t>(x[j] & 1u) << j;

    double best = std::numeric_limits<double>::infinity();
    int best_flips = std::numeric_limits<int>::max();
    std::uint32_t best_y = 0;
    bool found = false;
    for (std::uint32_t y = 0; y < (1u << n); ++y) {
        std::uint32_t s = 0;
        for (std::size_t j = 0; j < n; ++j)
            if ((y >> j) & 1u) s ^= syndrome[j];
        if (s != target) continue;
        std::uint32_t diff = y ^ xmask;
        double c = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if ((diff >> j) & 1u) c += rho[j];
        int nf = __builtin_popcount(diff);
        if (!found || c < best || (c == best && nf < best_flips)) {
            found = true;
            best = c;
            best_flips = nf;
            best_y = y;
        }
    }
    if (!found) throw InternalError("no vector satisfies the syndrome");
    BitVector y(n);
    for (std::size_t j = 0; j < n; ++j) y[j] = static_cast<std::uint8_t>((best_y >> j) & 1u);
    return make_result(x, std::move(y), rho);
}

BitVector bytes_to_bits(std::span<const std::uint8_t> bytes) {
    BitVector bits;
    bits.reserve(bytes.size() * 8);
    for (auto b : bytes)
        for (int k = 7; k >= 0; --k) bits.push_back(static_cast<std::uint8_t>((b >> k) & 1u));
    return bits;
}

std::vector<std::uint8_t> bits_to_bytes(std::span<const std::uint8_t> bits) {
    std::vector<std::uint8_t> bytes((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i] & 1u) bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    return bytes;
}

}  // namespace advsteg
