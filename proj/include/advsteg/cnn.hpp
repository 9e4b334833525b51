#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "advsteg/image.hpp"

namespace advsteg {

/// Compact residual-domain steganalyzer:
///
///   fixed 5x5 KV high-pass -> conv3x3(8) -> |.| -> norm -> tanh -> avgpool2
///                          -> conv3x3(16) -> norm -> tanh -> avgpool2
///                          -> conv3x3(32) -> norm -> relu -> global avg
///                          -> linear(2) -> softmax [cover, stego]
///
/// The high-pass stage uses mirror padding, the convolutions zero padding.
struct CnnArchitecture {
    std::size_t input_width = 64;
    std::size_t input_height = 64;
    std::array<std::size_t, 3> channels = {8, 16, 32};

    friend bool operator==(const CnnArchitecture&, const CnnArchitecture&) = default;
};

/// Offsets of each parameter block inside CnnModel::params.
struct ParamLayout {
    struct Conv {
        std::size_t in, out, weight, bias;
    };
    struct Norm {
        std::size_t channels, gamma, beta;
    };
    std::array<Conv, 3> conv;
    std::array<Norm, 3> norm;
    std::size_t fc_in, fc_weight, fc_bias;
    std::size_t total;

    explicit ParamLayout(const CnnArchitecture& arch);
};

struct CnnModel {
    CnnArchitecture arch;
    std::vector<double> params;   // trainable, ordered per ParamLayout
    std::vector<double> running;  // per normalization unit: means then variances

    ParamLayout layout() const { return ParamLayout(arch); }
    friend bool operator==(const CnnModel&, const CnnModel&) = default;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr double kNormEpsilon = 1e-5;

/// Seeded fan-in uniform initialization; normalization starts as identity.
CnnModel init_model(const CnnArchitecture& arch, std::uint64_t seed);

struct Probabilities {
    double cover = 0.5;
    double stego = 0.5;
};

enum class Label : int { Cover = 0, Stego = 1 };

/// Inference-mode classification.
Probabilities forward(const CnnModel& model, const GrayImage& img);
Probabilities forward(const CnnModel& model, std::span<const double> pixels);

struct GradientMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;

    double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

/// Gradient of the probability of `target` with respect to each input pixel,
/// in inference mode. The cover target yields ∇p_c; the stego target is its
/// negation.
GradientMap input_gradient(const CnnModel& model, const GrayImage& img, Label target = Label::Cover);
GradientMap input_gradient(const CnnModel& model, std::span<const double> pixels, std::size_t width,
                           std::size_t height, Label target = Label::Cover);

struct SignMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::int8_t> signs;

    int at(std::size_t row, std::size_t col) const { return signs[row * width + col]; }
};

/// +1 where the gradient is positive or exactly zero, -1 where negative.
SignMap sign_map(const GradientMap& grad);

/// Mean cross-entropy of a batch with batch-statistics normalization
/// (training mode) or running statistics (inference mode).
enum class NormMode { Batch, Running };
double batch_loss(const CnnModel& model, std::span<const std::vector<double>> images, std::span<const Label> labels,
                  NormMode mode);

/// Gradient of batch_loss with respect to CnnModel::params.
std::vector<double> param_gradient(const CnnModel& model, std::span<const std::vector<double>> images,
                                   std::span<const Label> labels, NormMode mode, double* loss = nullptr);

/// Signs of every input to the |.| and relu units. Two inputs with equal
/// signatures lie in the same piecewise-smooth region of the network.
std::vector<std::int8_t> kink_signature(const CnnModel& model, std::span<const double> pixels);
std::vector<std::int8_t> kink_signature(const CnnModel& model, std::span<const std::vector<double>> images,
                                       NormMode mode);

struct TrainConfig {
    double learning_rate = 0.02;
    double momentum = 0.9;
    std::size_t batch_size = 16;  // images per step, covers and stegos paired
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    double norm_momentum = 0.1;
};

struct ImagePair {
    GrayImage cover;
    GrayImage stego;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Momentum SGD on paired batches. Deterministic for a fixed seed. Running
/// normalization statistics are recomputed over the training set after the
/// final epoch.
CnnModel train(const TrainConfig& config, std::span<const ImagePair> pairs, const EpochCallback& on_epoch = {});

void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_model(const CnnModel& model);
CnnModel deserialize_model(std::span<const std::uint8_t> bytes);

/// Short identifier: crc32 of the serialized model in hex.
std::string model_id(const CnnModel& model);

}  // namespace advsteg
