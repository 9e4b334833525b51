#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "advsteg/cnn.hpp"
#include "advsteg/util.hpp"

namespace gradcheck {

using namespace advsteg;

inline constexpr double kStep = 1e-3;        // pixels, on a 0..255 scale
inline constexpr double kParamStep = 1e-6;   // weights multiply residuals of order 100
inline constexpr double kRelTol = 1e-4;

struct Summary {
    double max_rel_error = 0.0;
    double max_sum_residual = 0.0;   // |p_c + p_s - 1|
    double max_grad_residual = 0.0;  // max |∇p_c + ∇p_s|
    std::size_t checked = 0;
    std::size_t skipped = 0;  // central difference straddles a kink
};

// Entries below 1e-3 of the largest entry are judged against that floor.
inline double relative_error(double analytic, double numeric, double scale) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * scale});
    return denom == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
}

// Random model with non-trivial normalization parameters and statistics.
inline CnnModel random_model(std::uint64_t seed, std::size_t size) {
    CnnArchitecture arch;
    arch.input_width = size;
    arch.input_height = size;
    CnnModel model = init_model(arch, seed);
    Rng rng(mix_seed(seed, 99));
    ParamLayout L = model.layout();
    for (const auto& n : L.norm)
        for (std::size_t c = 0; c < n.channels; ++c) {
            model.params[n.gamma + c] = uniform(rng, 0.5, 1.5);
            model.params[n.beta + c] = uniform(rng, -0.3, 0.3);
        }
    for (double& r : model.running) r = uniform(rng, 0.5, 1.5);
    for (std::size_t i = L.fc_weight; i < L.total; ++i) model.params[i] *= 4.0;
    return model;
}

inline std::vector<double> random_pixels(Rng& rng, std::size_t count) {
    std::vector<double> px(count);
    for (double& p : px) p = static_cast<double>(uniform_index(rng, 256));
    return px;
}

inline void check_input_gradient(const CnnModel& model, const std::vector<double>& px, Summary& out) {
    const std::size_t w = model.arch.input_width, h = model.arch.input_height;
    Probabilities p = forward(model, px);
    out.max_sum_residual = std::max(out.max_sum_residual, std::abs(p.cover + p.stego - 1.0));
    GradientMap gc = input_gradient(model, px, w, h, Label::Cover);
    GradientMap gs = input_gradient(model, px, w, h, Label::Stego);
    double scale = 0.0;
    for (std::size_t i = 0; i < gc.values.size(); ++i) {
        out.max_grad_residual = std::max(out.max_grad_residual, std::abs(gc.values[i] + gs.values[i]));
        scale = std::max(scale, std::abs(gc.values[i]));
    }
    const auto base_sig = kink_signature(model, px);
    std::vector<double> xp = px, xm = px;
    for (std::size_t i = 0; i < px.size(); ++i) {
        xp[i] = px[i] + kStep;
        xm[i] = px[i] - kStep;
        if (kink_signature(model, xp) != base_sig || kink_signature(model, xm) != base_sig) {
            ++out.skipped;
        } else {
            double fd = (forward(model, xp).cover - forward(model, xm).cover) / (2.0 * kStep);
            out.max_rel_error = std::max(out.max_rel_error, relative_error(gc.values[i], fd, scale));
            ++out.checked;
        }
        xp[i] = xm[i] = px[i];
    }
}

// Up to `per_block` indices from every parameter block, always including
// the first and last entry of each.
inline std::vector<std::size_t> sample_params(const CnnModel& model, Rng& rng, std::size_t per_block) {
    ParamLayout L = model.layout();
    std::vector<std::size_t> bounds;
    for (std::size_t k = 0; k < 3; ++k) {
        bounds.push_back(L.conv[k].weight);
        bounds.push_back(L.conv[k].bias);
        bounds.push_back(L.norm[k].gamma);
        bounds.push_back(L.norm[k].beta);
    }
    bounds.push_back(L.fc_weight);
    bounds.push_back(L.fc_bias);
    bounds.push_back(L.total);
    std::sort(bounds.begin(), bounds.end());
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
        std::size_t lo = bounds[b], hi = bounds[b + 1];
        if (hi - lo <= per_block) {
            for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
            continue;
        }
        idx.push_back(lo);
        idx.push_back(hi - 1);
        for (std::size_t k = 2; k < per_block; ++k) idx.push_back(lo + 1 + uniform_index(rng, hi - lo - 2));
    }
    return idx;
}

inline void check_param_gradient(const CnnModel& model, const std::vector<std::vector<double>>& images,
                                 const std::vector<Label>& labels, NormMode mode, const std::vector<std::size_t>& indices,
                                 Summary& out) {
    std::vector<double> grad = param_gradient(model, images, labels, mode);
    double scale = 0.0;
    for (double g : grad) scale = std::max(scale, std::abs(g));
    const auto base_sig = kink_signature(model, images, mode);
    CnnModel mp = model, mm = model;
    for (std::size_t i : indices) {
        mp.params[i] = model.params[i] + kParamStep;
        mm.params[i] = model.params[i] - kParamStep;
        if (kink_signature(mp, images, mode) != base_sig || kink_signature(mm, images, mode) != base_sig) {
            ++out.skipped;
        } else {
            double fd = (batch_loss(mp, images, labels, mode) - batch_loss(mm, images, labels, mode)) / (2.0 * kParamStep);
            out.max_rel_error = std::max(out.max_rel_error, relative_error(grad[i], fd, scale));
            ++out.checked;
        }
        mp.params[i] = mm.params[i] = model.params[i];
    }
}

}  // namespace gradcheck
