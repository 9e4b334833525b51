#include "advsteg/distortion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "advsteg/errors.hpp"

namespace advsteg {

CostAlgorithm parse_cost_algorithm(const std::string& name) {
    if (name == "hill" || name == "HILL") return CostAlgorithm::Hill;
    if (name == "suniward" || name == "S-UNIWARD" || name == "s-uniward") return CostAlgorithm::SUniward;
    throw ArgumentError("unknown cost algorithm '" + name + "'");
}

std::string to_string(CostAlgorithm algo) {
    return algo == CostAlgorithm::Hill ? "hill" : "suniward";
}

namespace {

struct Plane {
    std::size_t width;
    std::size_t height;
    std::vector<double> v;
};

// Half-sample symmetric extension: ... x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} ...
std::ptrdiff_t mirror(std::ptrdiff_t i, std::ptrdiff_t n) {
    std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

// out(i,j) = sum_{u,v} k(u,v) * src(i + s*(u - a), j + s*(v - a)) with s = +1
// for correlation and s = -1 for convolution. Square kernels only.
Plane filter(const Plane& src, const std::vector<double>& kernel, std::size_t size, std::ptrdiff_t anchor,
             bool convolve) {
    auto h = static_cast<std::ptrdiff_t>(src.height);
    auto w = static_cast<std::ptrdiff_t>(src.width);
    auto n = static_cast<std::ptrdiff_t>(size);
    std::ptrdiff_t s = convolve ? -1 : 1;
    Plane out{src.width, src.height, std::vector<double>(src.v.size(), 0.0)};
    std::vector<std::ptrdiff_t> cols(static_cast<std::size_t>(w * n));
    for (std::ptrdiff_t j = 0; j < w; ++j)
        for (std::ptrdiff_t v = 0; v < n; ++v) cols[static_cast<std::size_t>(j * n + v)] = mirror(j + s * (v - anchor), w);
    for (std::ptrdiff_t i = 0; i < h; ++i) {
        for (std::ptrdiff_t u = 0; u < n; ++u) {
            const double* row = &src.v[static_cast<std::size_t>(mirror(i + s * (u - anchor), h) * w)];
            const double* krow = &kernel[static_cast<std::size_t>(u * n)];
            double* dst = &out.v[static_cast<std::size_t>(i * w)];
            for (std::ptrdiff_t j = 0; j < w; ++j) {
                const std::ptrdiff_t* cj = &cols[static_cast<std::size_t>(j * n)];
                double acc = 0.0;
                for (std::ptrdiff_t v = 0; v < n; ++v) acc += krow[v] * row[cj[v]];
                dst[j] += acc;
            }
        }
    }
    return out;
}

Plane box_mean(const Plane& src, std::size_t size) {
    std::vector<double> k(size * size, 1.0 / static_cast<double>(size * size));
    return filter(src, k, size, static_cast<std::ptrdiff_t>(size / 2), false);
}

Plane to_plane(const GrayImage& img) {
    Plane p{img.width(), img.height(), std::vector<double>(img.size())};
    for (std::size_t i = 0; i < img.size(); ++i) p.v[i] = img[i];
    return p;
}

CostMap finish(const GrayImage& img, std::vector<double> costs) {
    CostMap map{img.width(), img.height(), std::move(costs), kWetCost};
    for (std::size_t i = 0; i < map.costs.size(); ++i) {
        double& c = map.costs[i];
        if (is_wet(img[i]) || !std::isfinite(c) || c > kWetCost) c = kWetCost;
        if (c < 0.0) c = 0.0;
    }
    return map;
}

void check_profile(const CostProfile& profile) {
    if (!(profile.stabilizer > 0.0) || !std::isfinite(profile.stabilizer))
        throw ArgumentError("cost stabilizer must be a positive finite number");
}

// Daubechies 8-tap decomposition filters.
constexpr std::array<double, 8> kDbLow = {
    -0.010597401785069032, 0.0328830116668852,  0.030841381835560764, -0.18703481171909309,
    -0.027983769416859854, 0.6308807679298589,  0.7148465705529157,   0.2303778133088965,
};
constexpr std::array<double, 8> kDbHigh = {
    -0.2303778133088965,  0.7148465705529157,   -0.6308807679298589, -0.027983769416859854,
    0.18703481171909309,  0.030841381835560764, -0.0328830116668852, -0.010597401785069032,
};

std::vector<double> outer(const std::array<double, 8>& col, const std::array<double, 8>& row) {
    std::vector<double> k(64);
    for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t v = 0; v < 8; ++v) k[u * 8 + v] = col[u] * row[v];
    return k;
}

}  // namespace

CostMap hill_cost(const GrayImage& img, const CostProfile& profile) {
    check_profile(profile);
    if (img.width() < 3 || img.height() < 3) throw ArgumentError("HILL needs an image of at least 3x3");
    static const std::vector<double> kb = {-1, 2, -1, 2, -4, 2, -1, 2, -1};
    Plane residual = filter(to_plane(img), kb, 3, 1, true);
    for (double& r : residual.v) r = std::abs(r);
    Plane local = box_mean(residual, 3);
    for (double& r : local.v) r = 1.0 / (r + profile.stabilizer);
    Plane spread = box_mean(local, 15);
    return finish(img, std::move(spread.v));
}

CostMap suniward_cost(const GrayImage& img, const CostProfile& profile) {
    check_profile(profile);
    if (img.width() < 8 || img.height() < 8) throw ArgumentError("S-UNIWARD needs an image of at least 8x8");
    const std::array<std::vector<double>, 3> bank = {
        outer(kDbLow, kDbHigh),
        outer(kDbHigh, kDbLow),
        outer(kDbHigh, kDbHigh),
    };
    constexpr std::ptrdiff_t anchor = 4;
    Plane x = to_plane(img);
    std::vector<double> total(img.size(), 0.0);
    for (const auto& k : bank) {
        Plane r = filter(x, k, 8, anchor, true);
        for (double& v : r.v) v = 1.0 / (std::abs(v) + profile.stabilizer);
        std::vector<double> weight(k.size());
        std::transform(k.begin(), k.end(), weight.begin(), [](double c) { return std::abs(c); });
        // A pixel reaches residual (i+u-a, j+v-a) with weight k(u,v); gather the same footprint.
        Plane c = filter(r, weight, 8, anchor, false);
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += c.v[i];
    }
    return finish(img, std::move(total));
}

CostMap compute_costs(const GrayImage& img, const CostProfile& profile) {
    return profile.algorithm == CostAlgorithm::Hill ? hill_cost(img, profile) : suniward_cost(img, profile);
}

std::vector<std::pair<std::size_t, double>> flatten_costs(const CostMap& map, ScanOrder order) {
    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(map.costs.size());
    if (order == ScanOrder::RowMajor) {
        for (std::size_t i = 0; i < map.costs.size(); ++i) out.emplace_back(i, map.costs[i]);
    } else {
        for (std::size_t c = 0; c < map.width; ++c)
            for (std::size_t r = 0; r < map.height; ++r) out.emplace_back(r * map.width + c, map.costs[r * map.width + c]);
    }
    return out;
}

CostMap unflatten_costs(const std::vector<std::pair<std::size_t, double>>& flat, std::size_t width,
                        std::size_t height, double wet_cost) {
    if (flat.size() != width * height) throw ArgumentError("flattened cost count does not match shape");
    CostMap map{width, height, std::vector<double>(width * height, 0.0), wet_cost};
    std::vector<bool> seen(flat.size(), false);
    for (auto [idx, cost] : flat) {
        if (idx >= flat.size() || seen[idx]) throw ArgumentError("flattened cost indices are not a permutation");
        seen[idx] = true;
        map.costs[idx] = cost;
    }
    return map;
}

GrayImage cost_heatmap(const CostMap& map) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double c : map.costs) {
        if (c >= map.wet_cost) continue;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    std::vector<std::uint8_t> px(map.costs.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        double c = map.costs[i];
        if (c >= map.wet_cost) {
            px[i] = 255;
        } else if (hi > lo) {
            px[i] = static_cast<std::uint8_t>(std::lround(254.0 * (c - lo) / (hi - lo)));
        } else {
            px[i] = 0;
        }
    }
    return GrayImage(map.width, map.height, std::move(px));
}

}  // namespace advsteg
