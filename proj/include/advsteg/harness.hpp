#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "advsteg/adversarial.hpp"
#include "advsteg/cnn.hpp"
#include "advsteg/distortion.hpp"
#include "advsteg/image.hpp"

namespace advsteg {

struct DatasetSpec {
    std::size_t corpus_size = 500;
    std::size_t image_size = 64;
    std::vector<double> payload_rates = {0.05, 0.1, 0.2, 0.3, 0.4};
    std::uint64_t split_seed = 1;
    double train_fraction = 0.5;
    std::uint64_t corpus_seed = 7;
};

void validate(const DatasetSpec& spec);

/// Seeded synthetic covers: smooth illumination ramps with mild sensor noise,
/// band-limited texture patches and hard flat strips (some saturated).
std::vector<GrayImage> synthesize_corpus(const DatasetSpec& spec);

/// All *.pgm files in a directory, sorted by file name.
std::vector<GrayImage> load_corpus(const std::filesystem::path& dir);

struct Split {
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> test;   // ascending
};

/// Seeded train/test partition of n images, drawn afresh per payload rate.
Split split_corpus(std::size_t n, const DatasetSpec& spec, double alpha);

/// Cover / plain-stego pairs for the training half at params.alpha, with the
/// per-image messages and coin seeds run_protocol uses.
std::vector<ImagePair> training_pairs(const DatasetSpec& spec, const std::vector<GrayImage>& covers,
                                      const std::vector<CostMap>& costs, const EmbedParams& params);

struct DetectionCounts {
    std::size_t n_cover = 0;
    std::size_t n_stego = 0;
    std::size_t false_alarms = 0;  // covers called stego
    std::size_t missed = 0;        // stegos called cover
};

struct DetectionRates {
    double p_fa = 0.0;
    double p_md = 0.0;
    double p_e = 0.0;
};

/// Average detection error (P_FA + P_MD) / 2 from confusion counts.
DetectionRates detection_rates(const DetectionCounts& counts);

/// Returns true when the detector calls the image stego.
using Detector = std::function<bool(const GrayImage&)>;

DetectionCounts count_detections(const Detector& detector, const std::vector<GrayImage>& covers,
                                 const std::vector<GrayImage>& stegos);

/// Stego when p_s > p_c.
Detector cnn_detector(const CnnModel& model);

struct ReportRow {
    std::string algo;
    double alpha = 0.0;
    std::string set;  // "plain" or "adversarial"
    DetectionRates rates;
    std::size_t n_cover = 0;
    std::size_t n_stego = 0;
    std::uint64_t seed = 0;
};

struct RateDiagnostics {
    double alpha = 0.0;
    std::string model_id;
    double mean_pc_cover = 0.0;
    double mean_pc_plain = 0.0;
    double mean_pc_adversarial = 0.0;
    std::size_t wet_flips = 0;
    std::size_t wet_violations = 0;
    std::size_t decode_failures = 0;
    std::vector<double> epoch_losses;
};

struct DetectionReport {
    std::vector<ReportRow> rows;  // ordered by (algo, alpha, set)
    std::vector<RateDiagnostics> diagnostics;
};

struct ProtocolOptions {
    EmbedParams embed;  // alpha is overwritten per rate
    std::function<void(const std::string&)> log;
};

/// Per payload rate: split, embed the training half with the plain embedder,
/// train one CNN, then score cover/plain and cover/adversarial test sets
/// drawn from the held-out half. Adversarial images target that same model.
DetectionReport run_protocol(const DatasetSpec& spec, const TrainConfig& train_config, CostAlgorithm algo,
                             const std::vector<GrayImage>& covers, const ProtocolOptions& options = {});
DetectionReport run_protocol(const DatasetSpec& spec, const TrainConfig& train_config, CostAlgorithm algo,
                             const ProtocolOptions& options = {});

/// CSV header: algo,alpha,set,p_fa,p_md,p_e,n_cover,n_stego,seed
std::string report_csv(const DetectionReport& report);
void emit_report(const DetectionReport& report, const std::filesystem::path& path);
std::vector<ReportRow> read_report(const std::filesystem::path& path);

/// Evaluation job as read from JSON:
/// {corpus_size, image_size, payload_rates[], split_seed, train:{lr, momentum, batch, epochs, seed}, algo}
struct EvaluationSpec {
    DatasetSpec dataset;
    TrainConfig train;
    CostAlgorithm algo = CostAlgorithm::Hill;
    EmbedParams embed;
};

EvaluationSpec parse_evaluation_spec(const std::string& json_text);
EvaluationSpec load_evaluation_spec(const std::filesystem::path& path);

}  // namespace advsteg
