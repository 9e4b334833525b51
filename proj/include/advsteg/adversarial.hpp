#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "advsteg/cnn.hpp"
#include "advsteg/distortion.hpp"
#include "advsteg/image.hpp"
#include "advsteg/stc.hpp"

namespace advsteg {

struct EmbedParams {
    double alpha = 0.4;  // bits per pixel
    unsigned stc_height = kDefaultStcHeight;
    std::uint64_t stc_seed = kDefaultStcSeed;
};

/// Which pixels change and in which direction.
struct AdversarialPlan {
    std::vector<std::size_t> positions;  // row-major pixel indices, ascending
    std::vector<std::int8_t> directions; // +1 / -1, parallel to positions
    double payload_rate = 0.0;
    std::string message_digest;          // crc32 of the packed message bits, hex
};

struct StegoResult {
    GrayImage stego;
    AdversarialPlan plan;
};

/// The STC code used for an image with n pixels at params.alpha.
StcCode code_for(std::size_t n, const EmbedParams& params);

/// LSB plane in row-major order.
BitVector lsb_vector(const GrayImage& img);

/// Pixels the minimum-cost syndrome coder changes. Depends only on the cover
/// LSBs, the message and the costs.
std::vector<std::size_t> select_positions(const GrayImage& cover, const BitVector& message, const CostMap& costs,
                                          const EmbedParams& params);

/// Forced direction for saturated pixels (0 -> +1, 255 -> -1), 0 otherwise.
int wet_direction(std::uint8_t value);

/// Embeds the message, steering each ±1 change by the sign of the gradient
/// of the cover probability, evaluated once on the cover.
StegoResult generate_adversarial_stego(const GrayImage& cover, const BitVector& message, const CnnModel& model,
                                       const CostMap& costs, const EmbedParams& params);
StegoResult generate_adversarial_stego(const GrayImage& cover, const BitVector& message, const CnnModel& model,
                                       const CostProfile& profile, const EmbedParams& params);

/// Baseline: same positions, direction chosen by a seeded fair coin.
StegoResult generate_plain_stego(const GrayImage& cover, const BitVector& message, const CostMap& costs,
                                 const EmbedParams& params, std::uint64_t direction_seed);
StegoResult generate_plain_stego(const GrayImage& cover, const BitVector& message, const CostProfile& profile,
                                 const EmbedParams& params, std::uint64_t direction_seed);

/// Reads the message back from the stego LSBs.
BitVector extract_message(const GrayImage& stego, const EmbedParams& params);

struct AttackDelta {
    double cover = 0.0;
    double stego = 0.0;
    double adversarial = 0.0;
};

/// Cover-class probability of each of the three images.
AttackDelta attack_delta(const CnnModel& model, const GrayImage& cover, const GrayImage& stego,
                         const GrayImage& adversarial);

std::string message_digest(const BitVector& message);

/// JSON audit record: positions, directions, digest, payload rate.
std::string plan_to_json(const AdversarialPlan& plan, std::size_t width);

}  // namespace advsteg
