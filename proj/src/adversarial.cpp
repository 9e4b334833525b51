#include "advsteg/adversarial.hpp"

#include <json.hpp>

#include "advsteg/errors.hpp"
#include "advsteg/util.hpp"

namespace advsteg {

StcCode code_for(std::size_t n, const EmbedParams& params) {
    if (!(params.alpha > 0.0) || params.alpha > 0.5)
        throw PayloadError("payload rate must lie in (0, 0.5] for single-layered STC");
    return build_code(n, message_length(params.alpha, n), params.stc_height, params.stc_seed);
}

BitVector lsb_vector(const GrayImage& img) {
    BitVector x(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) x[i] = img[i] & 1u;
    return x;
}

int wet_direction(std::uint8_t value) {
    if (value == 0) return 1;
    if (value == 255) return -1;
    return 0;
}

std::vector<std::size_t> select_positions(const GrayImage& cover, const BitVector& message, const CostMap& costs,
                                          const EmbedParams& params) {
    if (costs.width != cover.width() || costs.height != cover.height())
        throw ArgumentError("cost map shape does not match the cover");
    StcCode code = code_for(cover.size(), params);
    if (message.size() != code.l())
        throw PayloadError("message has " + std::to_string(message.size()) + " bits but payload rate " +
                           std::to_string(params.alpha) + " on " + std::to_string(cover.size()) + " pixels needs " +
                           std::to_string(code.l()));
    EmbedResult r = stc_embed(lsb_vector(cover), message, costs.costs, code);
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < r.flip_pattern.size(); ++i)
        if (r.flip_pattern[i]) positions.push_back(i);
    return positions;
}

namespace {

template <class Chooser>
StegoResult realize(const GrayImage& cover, const BitVector& message, std::vector<std::size_t> positions,
                    const EmbedParams& params, Chooser&& choose) {
    StegoResult out{cover, {}};
    auto& plan = out.plan;
    plan.positions = std::move(positions);
    plan.directions.reserve(plan.positions.size());
    plan.payload_rate = params.alpha;
    plan.message_digest = message_digest(message);
    std::vector<PixelFlip> flips;
    flips.reserve(plan.positions.size());
    for (std::size_t idx : plan.positions) {
        int dir = wet_direction(cover[idx]);
        if (dir == 0) dir = choose(idx);
        plan.directions.push_back(static_cast<std::int8_t>(dir));
        flips.push_back({idx / cover.width(), idx % cover.width(), dir});
    }
    out.stego = apply_flips(cover, flips);
    return out;
}

}  // namespace

StegoResult generate_adversarial_stego(const GrayImage& cover, const BitVector& message, const CnnModel& model,
                                       const CostMap& costs, const EmbedParams& params) {
    auto positions = select_positions(cover, message, costs, params);
    // Gradient of p_c regardless of how the model currently labels the cover.
    SignMap signs = sign_map(input_gradient(model, cover, Label::Cover));
    return realize(cover, message, std::move(positions), params, [&](std::size_t idx) { return int{signs.signs[idx]}; });
}

StegoResult generate_adversarial_stego(const GrayImage& cover, const BitVector& message, const CnnModel& model,
                                       const CostProfile& profile, const EmbedParams& params) {
    return generate_adversarial_stego(cover, message, model, compute_costs(cover, profile), params);
}

StegoResult generate_plain_stego(const GrayImage& cover, const BitVector& message, const CostMap& costs,
                                 const EmbedParams& params, std::uint64_t direction_seed) {
    auto positions = select_positions(cover, message, costs, params);
    Rng rng(direction_seed);
    return realize(cover, message, std::move(positions), params,
                   [&](std::size_t) { return (rng() >> 63) ? 1 : -1; });
}

StegoResult generate_plain_stego(const GrayImage& cover, const BitVector& message, const CostProfile& profile,
                                 const EmbedParams& params, std::uint64_t direction_seed) {
    return generate_plain_stego(cover, message, compute_costs(cover, profile), params, direction_seed);
}

BitVector extract_message(const GrayImage& stego, const EmbedParams& params) {
    return stc_extract(lsb_vector(stego), code_for(stego.size(), params));
}

AttackDelta attack_delta(const CnnModel& model, const GrayImage& cover, const GrayImage& stego,
                         const GrayImage& adversarial) {
    return {forward(model, cover).cover, forward(model, stego).cover, forward(model, adversarial).cover};
}

std::string message_digest(const BitVector& message) {
    auto bytes = bits_to_bytes(message);
    std::uint32_t c = crc32(bytes);
    std::uint8_t b[4] = {static_cast<std::uint8_t>(c >> 24), static_cast<std::uint8_t>(c >> 16),
                         static_cast<std::uint8_t>(c >> 8), static_cast<std::uint8_t>(c)};
    return to_hex(b);
}

std::string plan_to_json(const AdversarialPlan& plan, std::size_t width) {
    nlohmann::json j;
    j["payload_rate"] = plan.payload_rate;
    j["message_digest"] = plan.message_digest;
    auto& changes = j["changes"] = nlohmann::json::array();
    for (std::size_t k = 0; k < plan.positions.size(); ++k)
        changes.push_back({{"row", plan.positions[k] / width},
                           {"col", plan.positions[k] % width},
                           {"direction", int{plan.directions[k]}}});
    return j.dump(2);
}

}  // namespace advsteg
