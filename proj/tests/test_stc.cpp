#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "advsteg/distortion.hpp"
#include "advsteg/errors.hpp"
#include "advsteg/stc.hpp"
#include "advsteg/util.hpp"

using namespace advsteg;

namespace {

// Dense H rebuilt from Ĥ and the run layout (starts at floor(g n / l)),
// independent of StcCode::column.
std::vector<BitVector> dense_h(const StcCode& code) {
    const std::size_t n = code.n(), l = code.l();
    std::vector<BitVector> H(l, BitVector(n, 0));
    for (std::size_t g = 0; g < l; ++g) {
        std::size_t begin = g * n / l, end = (g + 1) * n / l;
        for (std::size_t j = begin; j < end; ++j)
            for (unsigned k = 0; k < code.h(); ++k)
                if ((code.hhat_columns()[j - begin] >> k) & 1u)
                    if (g + k < l) H[g + k][j] = 1;
    }
    return H;
}

BitVector multiply(const std::vector<BitVector>& H, const BitVector& y) {
    BitVector m(H.size(), 0);
    for (std::size_t r = 0; r < H.size(); ++r)
        for (std::size_t j = 0; j < y.size(); ++j) m[r] ^= static_cast<std::uint8_t>(H[r][j] & y[j]);
    return m;
}

BitVector random_bits(Rng& rng, std::size_t n) {
    BitVector v(n);
    for (auto& b : v) b = static_cast<std::uint8_t>(rng() & 1u);
    return v;
}

std::vector<double> random_costs(Rng& rng, std::size_t n) {
    std::vector<double> c(n);
    for (auto& x : c) x = 1.0 - uniform01(rng);  // (0, 1]
    return c;
}

}  // namespace

TEST_CASE("explicit Ĥ tiles into the banded parity-check matrix") {
    // Columns "11" and "10" written top row first: bit 0 is the top row.
    StcCode code(8, 4, 2, {0b11, 0b01});
    std::vector<BitVector> expected = {
        {1, 1, 0, 0, 0, 0, 0, 0},
        {1, 0, 1, 1, 0, 0, 0, 0},
        {0, 0, 1, 0, 1, 1, 0, 0},
        {0, 0, 0, 0, 1, 0, 1, 1},
    };
    CHECK(dense_h(code) == expected);
    for (std::size_t j = 0; j < 8; ++j) {
        BitVector e(8, 0);
        e[j] = 1;
        CHECK(stc_extract(e, code) == multiply(expected, e));
    }
}

TEST_CASE("build_code") {
    CHECK(build_code(8, 4, 2, 9) == build_code(8, 4, 2, 9));
    CHECK_THROWS_AS(build_code(8, 5, 2, 9), PayloadError);
    CHECK_THROWS_AS(build_code(100, 10, 11, 9), ArgumentError);
    StcCode code = build_code(1000, 333, 7, 3);
    CHECK(code.hhat_columns().size() == 4);
    CHECK(code.hhat_columns().front() == 0x7F);
    for (auto c : code.hhat_columns()) CHECK((c & 0x41u) == 0x41u);
    auto cols = code.hhat_columns();
    std::sort(cols.begin(), cols.end());
    CHECK(std::adjacent_find(cols.begin(), cols.end()) == cols.end());
    std::size_t covered = 0;
    for (std::size_t g = 0; g < code.l(); ++g) {
        CHECK((code.width(g) == 3 || code.width(g) == 4));
        covered += code.width(g);
    }
    CHECK(covered == 1000);
    CHECK(build_code(1000, 333, 7, 3) != build_code(1000, 333, 7, 4));
}

TEST_CASE("message_length rounds alpha * n") {
    CHECK(message_length(0.4, 4096) == 1638);
    CHECK(message_length(0.05, 4096) == 205);
    CHECK(message_length(0.5, 8) == 4);
    CHECK_THROWS_AS(message_length(0.0, 10), PayloadError);
}

TEST_CASE("already-satisfied syndrome embeds with zero changes") {
    Rng rng(4);
    StcCode code = build_code(64, 20, 5, 1);
    BitVector x = random_bits(rng, 64);
    auto rho = random_costs(rng, 64);
    EmbedResult r = stc_embed(x, stc_extract(x, code), rho, code);
    CHECK(r.total_cost == 0.0);
    CHECK(r.stego_lsb == x);
    for (auto s : r.flip_pattern) CHECK(s == 0);
}

TEST_CASE("Viterbi equals the exhaustive optimum at n=8, l=4, h=2") {
    Rng rng(8);
    StcCode code(8, 4, 2, {0b11, 0b01});
    for (int t = 0; t < 200; ++t) {
        BitVector x = random_bits(rng, 8), m = random_bits(rng, 4);
        auto rho = random_costs(rng, 8);
        EmbedResult fast = stc_embed(x, m, rho, code);
        EmbedResult slow = brute_force_embed(x, m, rho, code);
        REQUIRE(fast.total_cost == slow.total_cost);
        REQUIRE(multiply(dense_h(code), fast.stego_lsb) == m);
    }
}

TEST_CASE("uniform costs give the minimum Hamming weight change") {
    Rng rng(10);
    for (int t = 0; t < 200; ++t) {
        StcCode code = build_code(12, 4 + uniform_index(rng, 3), 3, rng());
        BitVector x = random_bits(rng, 12), m = random_bits(rng, code.l());
        std::vector<double> rho(12, 1.0);
        EmbedResult fast = stc_embed(x, m, rho, code);
        EmbedResult slow = brute_force_embed(x, m, rho, code);
        REQUIRE(fast.total_cost == slow.total_cost);
        REQUIRE(std::count(fast.flip_pattern.begin(), fast.flip_pattern.end(), 1) == static_cast<long>(slow.total_cost));
    }
}

TEST_CASE("property: embedding satisfies H y = m and reports its own cost") {
    Rng rng(12);
    for (int t = 0; t < 300; ++t) {
        std::size_t n = 20 + uniform_index(rng, 300);
        std::size_t l = 1 + uniform_index(rng, n / 2);
        StcCode code = build_code(n, l, 1 + static_cast<unsigned>(uniform_index(rng, 10)), rng());
        BitVector x = random_bits(rng, n), m = random_bits(rng, l);
        auto rho = random_costs(rng, n);
        EmbedResult r = stc_embed(x, m, rho, code);
        REQUIRE(multiply(dense_h(code), r.stego_lsb) == m);
        REQUIRE(stc_extract(r.stego_lsb, code) == m);
        REQUIRE(r.total_cost == pattern_cost(r.flip_pattern, rho));
        for (std::size_t i = 0; i < n; ++i) REQUIRE(r.flip_pattern[i] == (x[i] ^ r.stego_lsb[i]));
    }
}

TEST_CASE("property: raising the cost of a flipped position never lowers the optimum") {
    Rng rng(13);
    for (int t = 0; t < 300; ++t) {
        StcCode code = build_code(64, 24, 6, rng());
        BitVector x = random_bits(rng, 64), m = random_bits(rng, 24);
        auto rho = random_costs(rng, 64);
        EmbedResult before = stc_embed(x, m, rho, code);
        auto it = std::find(before.flip_pattern.begin(), before.flip_pattern.end(), 1);
        if (it == before.flip_pattern.end()) continue;
        rho[static_cast<std::size_t>(it - before.flip_pattern.begin())] += uniform(rng, 0.0, 2.0);
        REQUIRE(stc_embed(x, m, rho, code).total_cost >= before.total_cost);
    }
}

TEST_CASE("property: a wet position is flipped only when every solution flips one") {
    Rng rng(16);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 16, l = 4 + uniform_index(rng, 5);
        StcCode code = build_code(n, l, 2 + static_cast<unsigned>(uniform_index(rng, 6)), rng());
        BitVector x = random_bits(rng, n), m = random_bits(rng, l);
        auto rho = random_costs(rng, n);
        for (std::size_t i = 0; i < 3; ++i) rho[uniform_index(rng, n)] = kWetCost;
        EmbedResult fast = stc_embed(x, m, rho, code);
        bool forced = brute_force_embed(x, m, rho, code).total_cost >= kWetCost;
        bool wet_flip = false;
        for (std::size_t i = 0; i < n; ++i) wet_flip |= rho[i] == kWetCost && fast.flip_pattern[i];
        REQUIRE(wet_flip == forced);
    }
}

TEST_CASE("property: sparse wet positions past the first group are never flipped") {
    // Row 0 is reachable only through group 0, so wet cells there can force a change.
    Rng rng(14);
    std::size_t wet_seen = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 256, l = 32 + uniform_index(rng, 54);
        StcCode code = build_code(n, l, 7, rng());
        BitVector x = random_bits(rng, n), m = random_bits(rng, l);
        auto rho = random_costs(rng, n);
        for (std::size_t i = 0; i < n / 10; ++i) {
            std::size_t j = uniform_index(rng, n);
            if (code.group_of(j) > 0) rho[j] = kWetCost;
        }
        EmbedResult r = stc_embed(x, m, rho, code);
        for (std::size_t i = 0; i < n; ++i) {
            wet_seen += rho[i] == kWetCost;
            if (rho[i] == kWetCost) REQUIRE(r.flip_pattern[i] == 0);
        }
    }
    CHECK(wet_seen > 0);
}

TEST_CASE("stc_extract") {
    StcCode code = build_code(40, 13, 4, 2);
    CHECK(stc_extract(BitVector(40, 0), code) == BitVector(13, 0));
    CHECK_THROWS_AS(stc_extract(BitVector(39, 0), code), ArgumentError);

    // Flipping y_j toggles exactly the rows covered by column j of the band.
    Rng rng(15);
    auto H = dense_h(code);
    BitVector y = random_bits(rng, 40);
    BitVector base = stc_extract(y, code);
    for (std::size_t j = 0; j < 40; ++j) {
        BitVector y2 = y;
        y2[j] ^= 1u;
        BitVector diff = stc_extract(y2, code);
        for (std::size_t r = 0; r < 13; ++r) REQUIRE((diff[r] ^ base[r]) == H[r][j]);
    }
}

TEST_CASE("length mismatches are argument errors") {
    StcCode code = build_code(16, 8, 3, 1);
    BitVector x(16, 0), m(8, 0);
    std::vector<double> rho(16, 1.0);
    CHECK_THROWS_AS(stc_embed(BitVector(15, 0), m, rho, code), ArgumentError);
    CHECK_THROWS_AS(stc_embed(x, BitVector(7, 0), rho, code), ArgumentError);
    CHECK_THROWS_AS(stc_embed(x, m, std::vector<double>(16, -1.0), code), ArgumentError);
}

TEST_CASE("brute_force_embed") {
    SUBCASE("size limit") {
        StcCode code = build_code(21, 10, 3, 1);
        CHECK_THROWS_AS(brute_force_embed(BitVector(21, 0), BitVector(10, 0), std::vector<double>(21, 1.0), code),
                        SizeError);
    }
    SUBCASE("satisfied syndrome costs nothing") {
        StcCode code = build_code(10, 5, 3, 1);
        BitVector x = {1, 0, 1, 1, 0, 0, 1, 0, 1, 1};
        CHECK(brute_force_embed(x, stc_extract(x, code), std::vector<double>(10, 0.5), code).total_cost == 0.0);
    }
    SUBCASE("square unit-triangular H has a unique solution") {
        StcCode code(6, 6, 3, {0b111});
        Rng rng(3);
        BitVector x = random_bits(rng, 6), m = random_bits(rng, 6);
        EmbedResult r = brute_force_embed(x, m, std::vector<double>(6, 1.0), code);
        CHECK(stc_extract(r.stego_lsb, code) == m);
        // H is lower unit-triangular; forward substitution gives the unique y.
        auto H = dense_h(code);
        BitVector y(6, 0);
        for (std::size_t r2 = 0; r2 < 6; ++r2) {
            std::uint8_t acc = m[r2];
            for (std::size_t j = 0; j < r2; ++j) acc ^= static_cast<std::uint8_t>(H[r2][j] & y[j]);
            y[r2] = acc;
        }
        CHECK(r.stego_lsb == y);
    }
}

TEST_CASE("message bytes map to bits most-significant first") {
    std::vector<std::uint8_t> bytes = {0xA5, 0x01};
    BitVector bits = bytes_to_bits(bytes);
    CHECK(bits == BitVector{1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 1});
    CHECK(bits_to_bytes(bits) == bytes);
    CHECK(bits_to_bytes(BitVector{1, 1, 1}) == std::vector<std::uint8_t>{0xE0});
}
