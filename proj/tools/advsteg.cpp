#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "advsteg/adversarial.hpp"
#include "advsteg/errors.hpp"
#include "advsteg/harness.hpp"
#include "advsteg/util.hpp"

using namespace advsteg;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmbedFlags {
    std::string cover, out, message_hex, message_file, algo = "hill", cost_dump, plan;
    double alpha = 0.4;
    unsigned stc_height = kDefaultStcHeight;
    std::uint64_t stc_seed = kDefaultStcSeed;
};

void add_code_flags(CLI::App* cmd, double& alpha, unsigned& height, std::uint64_t& seed) {
    cmd->add_option("--alpha", alpha, "payload rate in bits per pixel")
        ->check(CLI::Range(1e-9, 0.5))
        ->capture_default_str();
    cmd->add_option("--stc-height", height, "STC constraint height")->check(CLI::Range(1u, 10u))->capture_default_str();
    cmd->add_option("--stc-seed", seed, "seed of the STC submatrix")->capture_default_str();
}

void add_embed_flags(CLI::App* cmd, EmbedFlags& f) {
    cmd->add_option("--cover", f.cover, "cover image (binary PGM)")->required()->check(CLI::ExistingFile);
    auto* hex = cmd->add_option("--message", f.message_hex, "message as hex");
    auto* file = cmd->add_option("--message-file", f.message_file, "message as a raw byte file")->check(CLI::ExistingFile);
    hex->excludes(file);
    cmd->add_option("--algo", f.algo, "distortion function")
        ->check(CLI::IsMember({"hill", "suniward"}))
        ->capture_default_str();
    add_code_flags(cmd, f.alpha, f.stc_height, f.stc_seed);
    cmd->add_option("--out", f.out, "stego image output (PGM)")->required();
    cmd->add_option("--cost-dump", f.cost_dump, "write the cost map as a PGM heat image");
    cmd->add_option("--plan", f.plan, "write the change plan as JSON");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

// Message bits zero-padded to the payload the code carries.
BitVector message_bits(const EmbedFlags& f, std::size_t capacity) {
    if (f.message_hex.empty() && f.message_file.empty()) throw UsageError("one of --message or --message-file is required");
    std::vector<std::uint8_t> bytes;
    if (!f.message_file.empty()) {
        bytes = read_file(f.message_file);
    } else {
        try {
            bytes = from_hex(f.message_hex);
        } catch (const Error& e) {
            throw UsageError(std::string("--message: ") + e.what());
        }
    }
    BitVector bits = bytes_to_bits(bytes);
    if (bits.size() > capacity)
        throw PayloadError("message has " + std::to_string(bits.size()) + " bits but the cover carries " +
                           std::to_string(capacity) + " at this payload rate");
    bits.resize(capacity, 0);
    return bits;
}

EmbedParams embed_params(double alpha, unsigned height, std::uint64_t seed) {
    EmbedParams p;
    p.alpha = alpha;
    p.stc_height = height;
    p.stc_seed = seed;
    return p;
}

int run_embed(const EmbedFlags& f, const std::optional<std::string>& model_path, std::uint64_t direction_seed) {
    GrayImage cover = load_pgm(f.cover);
    EmbedParams params = embed_params(f.alpha, f.stc_height, f.stc_seed);
    CostProfile profile = parse_cost_algorithm(f.algo) == CostAlgorithm::Hill ? CostProfile::hill() : CostProfile::suniward();
    BitVector m = message_bits(f, code_for(cover.size(), params).l());
    CostMap costs = compute_costs(cover, profile);
    if (!f.cost_dump.empty()) save_pgm(cost_heatmap(costs), f.cost_dump);
    StegoResult r = model_path ? generate_adversarial_stego(cover, m, load_model(*model_path), costs, params)
                               : generate_plain_stego(cover, m, costs, params, direction_seed);
    save_pgm(r.stego, f.out);
    if (!f.plan.empty()) write_file(f.plan, plan_to_json(r.plan, cover.width()) + "\n");
    std::printf("embedded %zu bits with %zu changes, digest %s\n", m.size(), r.plan.positions.size(),
                r.plan.message_digest.c_str());
    return 0;
}

DatasetSpec dataset_or_default(const std::string& spec_path, EvaluationSpec& spec) {
    if (!spec_path.empty()) spec = load_evaluation_spec(spec_path);
    return spec.dataset;
}

std::vector<GrayImage> corpus_for(const DatasetSpec& dataset, const std::string& corpus_dir) {
    return corpus_dir.empty() ? synthesize_corpus(dataset) : load_corpus(corpus_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cost-based STC steganography with CNN-gradient-steered (adversarial) changes"};
    app.require_subcommand(1);
    unsigned jobs = 0;
    app.add_option("--jobs", jobs, "worker threads (0 = all cores)");

    EmbedFlags plain_flags;
    std::uint64_t direction_seed = 1;
    auto* embed = app.add_subcommand("embed", "plain embedding with coin-flip directions");
    add_embed_flags(embed, plain_flags);
    embed->add_option("--direction-seed", direction_seed, "seed of the ±1 coin")->capture_default_str();

    EmbedFlags adv_flags;
    std::string adv_model;
    auto* adv = app.add_subcommand("adv-embed", "embedding steered by the steganalyzer gradient");
    add_embed_flags(adv, adv_flags);
    adv->add_option("--model", adv_model, "trained steganalyzer")->required()->check(CLI::ExistingFile);

    std::string stego_path, extract_out;
    double ex_alpha = 0.4;
    unsigned ex_height = kDefaultStcHeight;
    std::uint64_t ex_seed = kDefaultStcSeed;
    std::size_t length = 0;
    auto* extract = app.add_subcommand("extract", "read a message back; prints hex");
    extract->add_option("--stego", stego_path, "stego image (PGM)")->required()->check(CLI::ExistingFile);
    add_code_flags(extract, ex_alpha, ex_height, ex_seed);
    extract->add_option("--length", length, "message length in bytes (default: full payload)");
    extract->add_option("--out", extract_out, "also write the raw message bytes here");

    std::string gm_model, gm_cover, gm_out;
    auto* gradmap = app.add_subcommand("gradmap", "sign of the cover-probability gradient as a PGM (255 = +1, 0 = -1)");
    gradmap->add_option("--model", gm_model, "trained steganalyzer")->required()->check(CLI::ExistingFile);
    gradmap->add_option("--cover", gm_cover, "input image (PGM)")->required()->check(CLI::ExistingFile);
    gradmap->add_option("--out", gm_out, "sign map output (PGM)")->required();

    std::string tr_spec, tr_corpus, tr_out, tr_algo;
    double tr_alpha = 0.4;
    std::optional<std::size_t> tr_epochs;
    auto* trainer = app.add_subcommand("train", "train a steganalyzer on plain stegos of the training split");
    trainer->add_option("--spec", tr_spec, "evaluation spec JSON for dataset and training settings")
        ->check(CLI::ExistingFile);
    trainer->add_option("--corpus-dir", tr_corpus, "directory of cover PGMs instead of the synthetic corpus")
        ->check(CLI::ExistingDirectory);
    trainer->add_option("--alpha", tr_alpha, "payload rate of the training stegos")
        ->check(CLI::Range(1e-9, 0.5))
        ->capture_default_str();
    trainer->add_option("--algo", tr_algo, "distortion function (overrides the spec)")
        ->check(CLI::IsMember({"hill", "suniward"}));
    trainer->add_option("--epochs", tr_epochs, "training epochs (overrides the spec)");
    trainer->add_option("--out", tr_out, "model output")->required();

    std::string ev_spec, ev_corpus, ev_out;
    bool verbose = false;
    auto* evaluate = app.add_subcommand("evaluate", "full detection protocol; writes a CSV report");
    evaluate->add_option("--spec", ev_spec, "evaluation spec JSON")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--corpus-dir", ev_corpus, "directory of cover PGMs instead of the synthetic corpus")
        ->check(CLI::ExistingDirectory);
    evaluate->add_option("--out", ev_out, "CSV report output")->required();
    evaluate->add_flag("-v,--verbose", verbose, "progress on stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        set_jobs(jobs);
        if (*embed) return run_embed(plain_flags, std::nullopt, direction_seed);
        if (*adv) return run_embed(adv_flags, adv_model, 0);

        if (*extract) {
            GrayImage stego = load_pgm(stego_path);
            auto bytes = bits_to_bytes(extract_message(stego, embed_params(ex_alpha, ex_height, ex_seed)));
            if (length > bytes.size())
                throw UsageError("--length " + std::to_string(length) + " exceeds the " + std::to_string(bytes.size()) +
                                 " bytes this payload carries");
            if (length) bytes.resize(length);
            if (!extract_out.empty()) write_file(extract_out, std::string(bytes.begin(), bytes.end()));
            std::printf("%s\n", to_hex(bytes).c_str());
            return 0;
        }

        if (*gradmap) {
            CnnModel model = load_model(gm_model);
            GrayImage cover = load_pgm(gm_cover);
            SignMap s = sign_map(input_gradient(model, cover, Label::Cover));
            std::vector<std::uint8_t> px(s.signs.size());
            for (std::size_t i = 0; i < px.size(); ++i) px[i] = s.signs[i] > 0 ? 255 : 0;
            save_pgm(GrayImage(s.width, s.height, std::move(px)), gm_out);
            Probabilities p = forward(model, cover);
            std::printf("p_cover %.6f p_stego %.6f\n", p.cover, p.stego);
            return 0;
        }

        if (*trainer) {
            EvaluationSpec spec;
            DatasetSpec dataset = dataset_or_default(tr_spec, spec);
            if (!tr_algo.empty()) spec.algo = parse_cost_algorithm(tr_algo);
            if (tr_epochs) spec.train.epochs = *tr_epochs;
            auto covers = corpus_for(dataset, tr_corpus);
            if (covers.size() < 4) throw ArgumentError("training needs at least four covers");
            const CostProfile profile = spec.algo == CostAlgorithm::Hill ? CostProfile::hill() : CostProfile::suniward();
            std::vector<CostMap> costs(covers.size());
            parallel_for(covers.size(), [&](std::size_t i) { costs[i] = compute_costs(covers[i], profile); });
            EmbedParams params = spec.embed;
            params.alpha = tr_alpha;
            auto pairs = training_pairs(dataset, covers, costs, params);
            double last = 0.0;
            CnnModel model = train(spec.train, pairs, [&](std::size_t, double loss) { last = loss; });
            save_model(model, tr_out);
            std::printf("model %s trained on %zu pairs, final loss %.6f\n", model_id(model).c_str(), pairs.size(), last);
            return 0;
        }

        if (*evaluate) {
            EvaluationSpec spec = load_evaluation_spec(ev_spec);
            ProtocolOptions options;
            options.embed = spec.embed;
            if (verbose) options.log = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
            auto covers = corpus_for(spec.dataset, ev_corpus);
            DetectionReport report = run_protocol(spec.dataset, spec.train, spec.algo, covers, options);
            emit_report(report, ev_out);
            for (const auto& d : report.diagnostics)
                if (d.wet_violations || d.decode_failures)
                    throw InternalError("payload rate " + std::to_string(d.alpha) + ": " +
                                        std::to_string(d.wet_violations) + " wet violations, " +
                                        std::to_string(d.decode_failures) + " decode failures");
            return 0;
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
