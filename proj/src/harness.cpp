#include "advsteg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "advsteg/errors.hpp"
#include "advsteg/util.hpp"

namespace advsteg {

void validate(const DatasetSpec& spec) {
    if (spec.corpus_size < 20) throw ArgumentError("corpus_size must be at least 20");
    if (spec.image_size < 8) throw ArgumentError("image_size must be at least 8");
    if (spec.payload_rates.empty()) throw ArgumentError("at least one payload rate is required");
    for (double a : spec.payload_rates)
        if (!(a > 0.0) || a > 0.5) throw ArgumentError("payload rates must lie in (0, 0.5]");
    if (!(spec.train_fraction > 0.0) || !(spec.train_fraction < 1.0))
        throw ArgumentError("train_fraction must lie strictly between 0 and 1");
}

namespace {

// Gaussian noise low-passed with a 3x3 box, rescaled to unit deviation.
std::vector<double> band_limited_noise(Rng& rng, std::size_t w, std::size_t h) {
    std::vector<double> raw(w * h);
    for (auto& v : raw) v = gaussian(rng);
    std::vector<double> out(w * h, 0.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            double acc = 0.0;
            int cnt = 0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    auto r = static_cast<std::ptrdiff_t>(i) + di, c = static_cast<std::ptrdiff_t>(j) + dj;
                    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) || c >= static_cast<std::ptrdiff_t>(w))
                        continue;
                    acc += raw[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
                    ++cnt;
                }
            out[i * w + j] = acc / cnt;
            sq += out[i * w + j] * out[i * w + j];
        }
    double sd = std::sqrt(sq / static_cast<double>(w * h));
    if (sd > 0)
        for (auto& v : out) v /= sd;
    return out;
}

GrayImage synthesize_one(std::size_t size, std::uint64_t seed) {
    Rng rng(seed);
    const double S = static_cast<double>(size);
    std::vector<double> img(size * size);

    const double mean = uniform(rng, 60, 190);
    const double gx = uniform(rng, -60, 60), gy = uniform(rng, -60, 60);
    const double amp = uniform(rng, 0, 25);
    const double fx = uniform(rng, 0.3, 1.5), fy = uniform(rng, 0.3, 1.5);
    const double phase = uniform(rng, 0, 6.283185307179586);
    const double sensor = uniform(rng, 0.0, 1.5);
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
            double x = static_cast<double>(j) / S, y = static_cast<double>(i) / S;
            img[i * size + j] = mean + gx * (x - 0.5) + gy * (y - 0.5) +
                                amp * std::sin(6.283185307179586 * (fx * x + fy * y) + phase) + sensor * gaussian(rng);
        }

    const std::size_t patches = 1 + uniform_index(rng, 4);
    for (std::size_t p = 0; p < patches; ++p) {
        std::size_t pw = std::max<std::size_t>(2, size / 8 + uniform_index(rng, size / 2 - size / 8 + 1));
        std::size_t ph = std::max<std::size_t>(2, size / 8 + uniform_index(rng, size / 2 - size / 8 + 1));
        std::size_t r0 = uniform_index(rng, size - ph + 1), c0 = uniform_index(rng, size - pw + 1);
        double a = uniform(rng, 8, 40);
        auto noise = band_limited_noise(rng, pw, ph);
        for (std::size_t i = 0; i < ph; ++i)
            for (std::size_t j = 0; j < pw; ++j) img[(r0 + i) * size + c0 + j] += a * noise[i * pw + j];
    }

    const std::size_t strips = 1 + uniform_index(rng, 2);
    for (std::size_t s = 0; s < strips; ++s) {
        bool horizontal = uniform01(rng) < 0.5;
        std::size_t thick = 2 + uniform_index(rng, std::max<std::size_t>(1, size / 8));
        std::size_t at = uniform_index(rng, size - std::min(thick, size) + 1);
        double u = uniform01(rng);
        double value = u < 0.25 ? 0.0 : (u < 0.5 ? 255.0 : std::round(uniform(rng, 20, 235)));
        for (std::size_t k = at; k < std::min(size, at + thick); ++k)
            for (std::size_t t = 0; t < size; ++t) img[horizontal ? k * size + t : t * size + k] = value;
    }

    std::vector<std::uint8_t> px(size * size);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(std::clamp(std::round(img[i]), 0.0, 255.0));
    return GrayImage(size, size, std::move(px));
}

std::uint64_t rate_tag(double alpha) { return static_cast<std::uint64_t>(std::llround(alpha * 1e6)); }

// Message and coin seed of image i at one payload rate.
BitVector image_message(const DatasetSpec& spec, double alpha, std::size_t bits, std::size_t i) {
    Rng rng(mix_seed(spec.split_seed ^ 0x3e55a9e, rate_tag(alpha) * 1000003 + i));
    BitVector m(bits);
    for (auto& b : m) b = static_cast<std::uint8_t>(rng() >> 63);
    return m;
}

std::uint64_t image_direction_seed(const DatasetSpec& spec, double alpha, std::size_t i) {
    return mix_seed(spec.split_seed ^ 0xd1ec7, rate_tag(alpha) * 1000003 + i);
}

}  // namespace

std::vector<GrayImage> synthesize_corpus(const DatasetSpec& spec) {
    validate(spec);
    std::vector<GrayImage> out;
    out.reserve(spec.corpus_size);
    for (std::size_t i = 0; i < spec.corpus_size; ++i)
        out.push_back(synthesize_one(spec.image_size, mix_seed(spec.corpus_seed, i)));
    return out;
}

std::vector<GrayImage> load_corpus(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<GrayImage> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(load_pgm(f));
    return out;
}

Split split_corpus(std::size_t n, const DatasetSpec& spec, double alpha) {
    if (n < 4) throw ArgumentError("a split needs at least four images");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(spec.split_seed, rate_tag(alpha)));
    shuffle(order, rng);
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 2, n - 2);
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<ImagePair> training_pairs(const DatasetSpec& spec, const std::vector<GrayImage>& covers,
                                      const std::vector<CostMap>& costs, const EmbedParams& params) {
    if (costs.size() != covers.size()) throw ArgumentError("one cost map per cover is required");
    const Split split = split_corpus(covers.size(), spec, params.alpha);
    const std::size_t l = message_length(params.alpha, covers.front().size());
    std::vector<ImagePair> pairs(split.train.size(), ImagePair{covers[0], covers[0]});
    parallel_for(split.train.size(), [&](std::size_t k) {
        std::size_t i = split.train[k];
        BitVector m = image_message(spec, params.alpha, l, i);
        pairs[k] = {covers[i],
                    generate_plain_stego(covers[i], m, costs[i], params, image_direction_seed(spec, params.alpha, i)).stego};
    });
    return pairs;
}

DetectionRates detection_rates(const DetectionCounts& c) {
    DetectionRates r;
    r.p_fa = c.n_cover ? static_cast<double>(c.false_alarms) / static_cast<double>(c.n_cover) : 0.0;
    r.p_md = c.n_stego ? static_cast<double>(c.missed) / static_cast<double>(c.n_stego) : 0.0;
    r.p_e = 0.5 * (r.p_fa + r.p_md);
    return r;
}

DetectionCounts count_detections(const Detector& detector, const std::vector<GrayImage>& covers,
                                 const std::vector<GrayImage>& stegos) {
    std::vector<std::uint8_t> cover_calls(covers.size()), stego_calls(stegos.size());
    parallel_for(covers.size(), [&](std::size_t i) { cover_calls[i] = detector(covers[i]) ? 1 : 0; });
    parallel_for(stegos.size(), [&](std::size_t i) { stego_calls[i] = detector(stegos[i]) ? 1 : 0; });
    DetectionCounts c{covers.size(), stegos.size(), 0, 0};
    for (auto v : cover_calls) c.false_alarms += v;
    for (auto v : stego_calls) c.missed += v ? 0 : 1;
    return c;
}

Detector cnn_detector(const CnnModel& model) {
    return [&model](const GrayImage& img) {
        Probabilities p = forward(model, img);
        return p.stego > p.cover;
    };
}

DetectionReport run_protocol(const DatasetSpec& spec, const TrainConfig& train_config, CostAlgorithm algo,
                             const std::vector<GrayImage>& covers, const ProtocolOptions& options) {
    validate(spec);
    if (covers.size() < 4) throw ArgumentError("protocol needs at least four covers");
    for (const auto& c : covers)
        if (!c.same_shape(covers.front())) throw ArgumentError("all covers must share one shape");
    auto log = [&](const std::string& s) {
        if (options.log) options.log(s);
    };

    const CostProfile profile = algo == CostAlgorithm::Hill ? CostProfile::hill() : CostProfile::suniward();
    std::vector<CostMap> costs(covers.size());
    parallel_for(covers.size(), [&](std::size_t i) { costs[i] = compute_costs(covers[i], profile); });

    std::vector<double> rates = spec.payload_rates;
    std::sort(rates.begin(), rates.end());

    DetectionReport report;
    for (std::size_t ri = 0; ri < rates.size(); ++ri) {
        const double alpha = rates[ri];
        EmbedParams params = options.embed;
        params.alpha = alpha;

        const Split split = split_corpus(covers.size(), spec, alpha);
        const auto& test_idx = split.test;
        const std::size_t l = message_length(alpha, covers.front().size());
        std::vector<ImagePair> pairs = training_pairs(spec, covers, costs, params);

        RateDiagnostics diag;
        diag.alpha = alpha;
        log("alpha " + std::to_string(alpha) + ": training on " + std::to_string(pairs.size()) + " pairs");
        CnnModel model;
        try {
            model = train(train_config, pairs, [&](std::size_t epoch, double loss) {
                diag.epoch_losses.push_back(loss);
                log("  epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
            });
        } catch (const NumericError& e) {
            throw NumericError("payload rate " + std::to_string(alpha) + ": " + e.what());
        }
        diag.model_id = model_id(model);

        const std::size_t nt = test_idx.size();
        std::vector<GrayImage> test_covers, plain, adversarial;
        test_covers.reserve(nt);
        for (std::size_t i : test_idx) test_covers.push_back(covers[i]);
        plain.assign(nt, covers[0]);
        adversarial.assign(nt, covers[0]);
        std::vector<std::size_t> wet_flips(nt, 0), wet_bad(nt, 0), decode_bad(nt, 0);
        parallel_for(nt, [&](std::size_t k) {
            std::size_t i = test_idx[k];
            BitVector m = image_message(spec, alpha, l, i);
            auto p = generate_plain_stego(covers[i], m, costs[i], params, image_direction_seed(spec, alpha, i));
            auto a = generate_adversarial_stego(covers[i], m, model, costs[i], params);
            for (std::size_t q = 0; q < a.plan.positions.size(); ++q) {
                std::uint8_t v = covers[i][a.plan.positions[q]];
                if (int forced = wet_direction(v); forced != 0) {
                    ++wet_flips[k];
                    if (a.plan.directions[q] != forced || p.plan.directions[q] != forced) ++wet_bad[k];
                }
            }
            if (extract_message(p.stego, params) != m || extract_message(a.stego, params) != m) ++decode_bad[k];
            plain[k] = std::move(p.stego);
            adversarial[k] = std::move(a.stego);
        });
        for (std::size_t k = 0; k < nt; ++k) {
            diag.wet_flips += wet_flips[k];
            diag.wet_violations += wet_bad[k];
            diag.decode_failures += decode_bad[k];
        }

        std::vector<double> pc_cover(nt), pc_plain(nt), pc_adv(nt);
        parallel_for(nt, [&](std::size_t k) {
            auto d = attack_delta(model, test_covers[k], plain[k], adversarial[k]);
            pc_cover[k] = d.cover;
            pc_plain[k] = d.stego;
            pc_adv[k] = d.adversarial;
        });
        // A test image is called stego when p_s > p_c, i.e. p_c < 1/2.
        DetectionCounts plain_counts{nt, nt, 0, 0}, adv_counts{nt, nt, 0, 0};
        for (std::size_t k = 0; k < nt; ++k) {
            bool fa = 1.0 - pc_cover[k] > pc_cover[k];
            plain_counts.false_alarms += fa;
            adv_counts.false_alarms += fa;
            plain_counts.missed += !(1.0 - pc_plain[k] > pc_plain[k]);
            adv_counts.missed += !(1.0 - pc_adv[k] > pc_adv[k]);
            diag.mean_pc_cover += pc_cover[k] / static_cast<double>(nt);
            diag.mean_pc_plain += pc_plain[k] / static_cast<double>(nt);
            diag.mean_pc_adversarial += pc_adv[k] / static_cast<double>(nt);
        }

        const std::string name = to_string(algo);
        report.rows.push_back({name, alpha, "adversarial", detection_rates(adv_counts), nt, nt, spec.split_seed});
        report.rows.push_back({name, alpha, "plain", detection_rates(plain_counts), nt, nt, spec.split_seed});
        log("alpha " + std::to_string(alpha) + ": P_E plain " + std::to_string(report.rows.back().rates.p_e) +
            ", adversarial " + std::to_string(report.rows[report.rows.size() - 2].rates.p_e));
        report.diagnostics.push_back(std::move(diag));
    }
    return report;
}

DetectionReport run_protocol(const DatasetSpec& spec, const TrainConfig& train_config, CostAlgorithm algo,
                             const ProtocolOptions& options) {
    return run_protocol(spec, train_config, algo, synthesize_corpus(spec), options);
}

std::string report_csv(const DetectionReport& report) {
    std::vector<ReportRow> rows = report.rows;
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.algo != b.algo) return a.algo < b.algo;
        if (a.alpha != b.alpha) return a.alpha < b.alpha;
        return a.set < b.set;
    });
    std::string out = "algo,alpha,set,p_fa,p_md,p_e,n_cover,n_stego,seed\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%s,%.6f,%.6f,%.6f,%zu,%zu,%llu\n", r.algo.c_str(), r.alpha, r.set.c_str(),
                      r.rates.p_fa, r.rates.p_md, r.rates.p_e, r.n_cover, r.n_stego,
                      static_cast<unsigned long long>(r.seed));
        out += buf;
    }
    return out;
}

void emit_report(const DetectionReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << report_csv(report);
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ReportRow> read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "algo,alpha,set,p_fa,p_md,p_e,n_cover,n_stego,seed")
        throw FormatError("report header not recognized");
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 9) throw FormatError("report row has " + std::to_string(f.size()) + " fields");
        ReportRow r;
        r.algo = f[0];
        r.alpha = std::stod(f[1]);
        r.set = f[2];
        r.rates = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5])};
        r.n_cover = std::stoul(f[6]);
        r.n_stego = std::stoul(f[7]);
        r.seed = std::stoull(f[8]);
        rows.push_back(std::move(r));
    }
    return rows;
}

EvaluationSpec parse_evaluation_spec(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("spec JSON: ") + e.what());
    }
    EvaluationSpec s;
    try {
        s.dataset.corpus_size = j.value("corpus_size", s.dataset.corpus_size);
        s.dataset.image_size = j.value("image_size", s.dataset.image_size);
        s.dataset.payload_rates = j.value("payload_rates", s.dataset.payload_rates);
        s.dataset.split_seed = j.value("split_seed", s.dataset.split_seed);
        s.dataset.train_fraction = j.value("train_fraction", s.dataset.train_fraction);
        s.dataset.corpus_seed = j.value("corpus_seed", s.dataset.corpus_seed);
        if (j.contains("train")) {
            const auto& t = j.at("train");
            s.train.learning_rate = t.value("lr", s.train.learning_rate);
            s.train.momentum = t.value("momentum", s.train.momentum);
            s.train.batch_size = t.value("batch", s.train.batch_size);
            s.train.epochs = t.value("epochs", s.train.epochs);
            s.train.seed = t.value("seed", s.train.seed);
            s.train.norm_momentum = t.value("norm_momentum", s.train.norm_momentum);
        }
        s.algo = parse_cost_algorithm(j.value("algo", std::string("hill")));
        s.embed.stc_height = j.value("stc_height", s.embed.stc_height);
        s.embed.stc_seed = j.value("stc_seed", s.embed.stc_seed);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("spec JSON: ") + e.what());
    }
    validate(s.dataset);
    return s;
}

EvaluationSpec load_evaluation_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_evaluation_spec(text);
}

}  // namespace advsteg
