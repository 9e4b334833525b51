#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "advsteg/adversarial.hpp"
#include "advsteg/errors.hpp"
#include "advsteg/harness.hpp"
#include "gradcheck.hpp"

using namespace advsteg;

namespace {

// Textured image with a saturated strip at each end of the first row.
GrayImage test_cover(Rng& rng, std::size_t size) {
    std::vector<std::uint8_t> px(size * size);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            double v = 128.0 + 40.0 * std::sin(0.7 * static_cast<double>(r)) + uniform(rng, -30.0, 30.0);
            px[r * size + c] = static_cast<std::uint8_t>(std::clamp(v, 1.0, 254.0));
        }
    for (std::size_t c = 0; c < size / 4; ++c) {
        px[c] = 0;
        px[size - 1 - c] = 255;
    }
    return GrayImage(size, size, std::move(px));
}

BitVector random_message(Rng& rng, std::size_t bits) {
    BitVector m(bits);
    for (auto& b : m) b = static_cast<std::uint8_t>(rng() & 1u);
    return m;
}

std::size_t bits_for(std::size_t n, double alpha) { return message_length(alpha, n); }

}  // namespace

TEST_CASE("property: both generators round-trip the message") {
    Rng rng(1);
    CnnModel model = gradcheck::random_model(7, 16);
    for (double alpha : {0.05, 0.4}) {
        EmbedParams params;
        params.alpha = alpha;
        for (int t = 0; t < 100; ++t) {
            GrayImage cover = test_cover(rng, 16);
            BitVector m = random_message(rng, bits_for(256, alpha));
            auto plain = generate_plain_stego(cover, m, CostProfile::hill(), params, rng());
            auto adv = generate_adversarial_stego(cover, m, model, CostProfile::hill(), params);
            REQUIRE(extract_message(plain.stego, params) == m);
            REQUIRE(extract_message(adv.stego, params) == m);
        }
    }
}

TEST_CASE("round trip at every evaluated payload rate on 64x64 covers") {
    DatasetSpec spec;
    spec.corpus_size = 20;
    auto covers = synthesize_corpus(spec);
    CnnModel model = init_model(CnnArchitecture{}, 3);
    Rng rng(9);
    for (double alpha : spec.payload_rates) {
        EmbedParams params;
        params.alpha = alpha;
        for (const auto& cover : covers) {
            BitVector m = random_message(rng, bits_for(cover.size(), alpha));
            CostMap costs = compute_costs(cover, CostProfile::suniward());
            REQUIRE(extract_message(generate_plain_stego(cover, m, costs, params, rng()).stego, params) == m);
            REQUIRE(extract_message(generate_adversarial_stego(cover, m, model, costs, params).stego, params) == m);
        }
    }
}

TEST_CASE("property: plain and adversarial stegos change the same pixels") {
    Rng rng(2);
    CnnModel model = gradcheck::random_model(8, 16);
    EmbedParams params;
    for (int t = 0; t < 50; ++t) {
        GrayImage cover = test_cover(rng, 16);
        BitVector m = random_message(rng, bits_for(256, params.alpha));
        CostMap costs = compute_costs(cover, CostProfile::hill());
        auto plain = generate_plain_stego(cover, m, costs, params, 99);
        auto adv = generate_adversarial_stego(cover, m, model, costs, params);
        REQUIRE(plain.plan.positions == adv.plan.positions);
        std::size_t k = 0;
        for (std::size_t i = 0; i < cover.size(); ++i) {
            bool listed = k < adv.plan.positions.size() && adv.plan.positions[k] == i;
            int d_adv = int{adv.stego[i]} - int{cover[i]};
            int d_plain = int{plain.stego[i]} - int{cover[i]};
            if (listed) {
                REQUIRE(d_adv == adv.plan.directions[k]);
                REQUIRE(d_plain == plain.plan.directions[k]);
                ++k;
            } else {
                REQUIRE(d_adv == 0);
                REQUIRE(d_plain == 0);
            }
        }
    }
}

TEST_CASE("directions follow the cover-probability gradient, saturated pixels excepted") {
    Rng rng(3);
    CnnModel model = gradcheck::random_model(9, 16);
    EmbedParams params;
    std::size_t wet_changes = 0;
    for (int t = 0; t < 30; ++t) {
        GrayImage cover = test_cover(rng, 16);
        BitVector m = random_message(rng, bits_for(256, params.alpha));
        auto adv = generate_adversarial_stego(cover, m, model, CostProfile::hill(), params);
        SignMap signs = sign_map(input_gradient(model, cover, Label::Cover));
        for (std::size_t k = 0; k < adv.plan.positions.size(); ++k) {
            std::size_t i = adv.plan.positions[k];
            int expected = wet_direction(cover[i]) != 0 ? wet_direction(cover[i]) : int{signs.signs[i]};
            wet_changes += wet_direction(cover[i]) != 0;
            REQUIRE(adv.plan.directions[k] == expected);
        }
    }
    CHECK(wet_changes > 0);
}

TEST_CASE("cover label is forced even when the model calls the cover stego") {
    Rng rng(4);
    CnnModel model = gradcheck::random_model(10, 16);
    ParamLayout L = model.layout();
    model.params[L.fc_bias + 1] += 20.0;
    GrayImage cover = test_cover(rng, 16);
    REQUIRE(forward(model, cover).stego > forward(model, cover).cover);
    EmbedParams params;
    BitVector m = random_message(rng, bits_for(256, params.alpha));
    auto adv = generate_adversarial_stego(cover, m, model, CostProfile::hill(), params);
    SignMap toward_cover = sign_map(input_gradient(model, cover, Label::Cover));
    for (std::size_t k = 0; k < adv.plan.positions.size(); ++k) {
        std::size_t i = adv.plan.positions[k];
        if (wet_direction(cover[i]) == 0) REQUIRE(adv.plan.directions[k] == toward_cover.signs[i]);
    }
}

TEST_CASE("single-bit payload on 8x8: wet pixels move inward") {
    EmbedParams params;
    params.alpha = 1.0 / 64.0;
    CnnModel model = gradcheck::random_model(12, 8);
    std::vector<std::uint8_t> px(64, 100);
    px[5] = 255;
    px[9] = 0;
    GrayImage cover(8, 8, px);
    REQUIRE(code_for(64, params).l() == 1);
    // A single all-ones parity row: the message bit is the LSB parity.
    std::uint8_t parity = 0;
    for (auto v : lsb_vector(cover)) parity ^= v;

    SUBCASE("255 becomes 254") {
        CostMap costs{8, 8, std::vector<double>(64, 1.0), kWetCost};
        costs.costs[5] = 0.01;
        BitVector m{static_cast<std::uint8_t>(parity ^ 1u)};
        auto adv = generate_adversarial_stego(cover, m, model, costs, params);
        CHECK(adv.plan.positions == std::vector<std::size_t>{5});
        CHECK(adv.stego[5] == 254);
        CHECK(generate_plain_stego(cover, m, costs, params, 1).stego[5] == 254);
    }
    SUBCASE("0 becomes 1") {
        CostMap costs{8, 8, std::vector<double>(64, 1.0), kWetCost};
        costs.costs[9] = 0.01;
        BitVector m{static_cast<std::uint8_t>(parity ^ 1u)};
        auto adv = generate_adversarial_stego(cover, m, model, costs, params);
        CHECK(adv.stego[9] == 1);
        CHECK(generate_plain_stego(cover, m, costs, params, 1).stego[9] == 1);
    }
    SUBCASE("matching syndrome leaves the cover untouched") {
        BitVector m{parity};
        auto adv = generate_adversarial_stego(cover, m, model, CostProfile::hill(), params);
        CHECK(adv.stego == cover);
        CHECK(adv.plan.positions.empty());
    }
}

TEST_CASE("property: coin directions are balanced") {
    Rng rng(5);
    EmbedParams params;
    std::size_t up = 0, total = 0;
    for (int t = 0; total < 10000; ++t) {
        GrayImage cover = test_cover(rng, 32);
        BitVector m = random_message(rng, bits_for(1024, params.alpha));
        auto plain = generate_plain_stego(cover, m, CostProfile::hill(), params, static_cast<std::uint64_t>(t));
        for (std::size_t k = 0; k < plain.plan.positions.size(); ++k) {
            if (wet_direction(cover[plain.plan.positions[k]]) != 0) continue;
            up += plain.plan.directions[k] > 0;
            ++total;
        }
    }
    double share = static_cast<double>(up) / static_cast<double>(total);
    CHECK(share > 0.48);
    CHECK(share < 0.52);
}

TEST_CASE("coin directions are reproducible per seed") {
    Rng rng(6);
    GrayImage cover = test_cover(rng, 16);
    EmbedParams params;
    BitVector m = random_message(rng, bits_for(256, params.alpha));
    auto a = generate_plain_stego(cover, m, CostProfile::hill(), params, 42);
    auto b = generate_plain_stego(cover, m, CostProfile::hill(), params, 42);
    auto c = generate_plain_stego(cover, m, CostProfile::hill(), params, 43);
    CHECK(a.stego == b.stego);
    CHECK(a.plan.directions != c.plan.directions);
}

TEST_CASE("property: gradient-steered changes raise the cover probability more than coin flips") {
    Rng rng(7);
    CnnModel model = gradcheck::random_model(13, 16);
    EmbedParams params;
    double adv_sum = 0.0, plain_sum = 0.0;
    for (int t = 0; t < 40; ++t) {
        GrayImage cover = test_cover(rng, 16);
        BitVector m = random_message(rng, bits_for(256, params.alpha));
        CostMap costs = compute_costs(cover, CostProfile::hill());
        auto plain = generate_plain_stego(cover, m, costs, params, rng());
        auto adv = generate_adversarial_stego(cover, m, model, costs, params);
        AttackDelta d = attack_delta(model, cover, plain.stego, adv.stego);
        CHECK(d.cover == forward(model, cover).cover);
        adv_sum += d.adversarial - d.cover;
        plain_sum += d.stego - d.cover;
    }
    CHECK(adv_sum > plain_sum);
    CHECK(adv_sum > 0.0);
}

TEST_CASE("errors") {
    Rng rng(8);
    GrayImage cover = test_cover(rng, 16);
    CnnModel model = gradcheck::random_model(14, 16);
    EmbedParams params;
    BitVector m = random_message(rng, bits_for(256, params.alpha));
    CHECK_THROWS_AS(generate_plain_stego(cover, BitVector(5, 0), CostProfile::hill(), params, 1), PayloadError);
    EmbedParams too_much;
    too_much.alpha = 0.6;
    CHECK_THROWS_AS(generate_plain_stego(cover, m, CostProfile::hill(), too_much, 1), PayloadError);
    CostMap wrong{8, 8, std::vector<double>(64, 1.0), kWetCost};
    CHECK_THROWS_AS(generate_adversarial_stego(cover, m, model, wrong, params), ArgumentError);
    CHECK_THROWS_AS(generate_adversarial_stego(test_cover(rng, 32), BitVector(bits_for(1024, 0.4), 0), model,
                                               CostProfile::hill(), params),
                    ArgumentError);
}

TEST_CASE("plan JSON lists every change") {
    AdversarialPlan plan{{3, 17}, {1, -1}, 0.4, message_digest(BitVector{1, 0, 1})};
    auto j = nlohmann::json::parse(plan_to_json(plan, 16));
    CHECK(j["payload_rate"] == 0.4);
    CHECK(j["message_digest"] == plan.message_digest);
    REQUIRE(j["changes"].size() == 2);
    CHECK(j["changes"][1]["row"] == 1);
    CHECK(j["changes"][1]["col"] == 1);
    CHECK(j["changes"][1]["direction"] == -1);
    CHECK(message_digest(BitVector{1, 0, 1}) != message_digest(BitVector{1, 1, 1}));
}
