#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "advsteg/image.hpp"

namespace advsteg {

/// Cost assigned to pixels whose flip direction is forced (value 0 or 255).
inline constexpr double kWetCost = 1e13;

enum class CostAlgorithm { Hill, SUniward };

enum class Boundary { Mirror };

struct CostProfile {
    CostAlgorithm algorithm = CostAlgorithm::Hill;
    double stabilizer = 1e-10;
    Boundary boundary = Boundary::Mirror;

    static CostProfile hill(double stabilizer = 1e-10) { return {CostAlgorithm::Hill, stabilizer, Boundary::Mirror}; }
    static CostProfile suniward(double stabilizer = 1.0) {
        return {CostAlgorithm::SUniward, stabilizer, Boundary::Mirror};
    }
};

CostAlgorithm parse_cost_algorithm(const std::string& name);
std::string to_string(CostAlgorithm algo);

/// Per-pixel additive embedding costs, row-major, same shape as the image.
struct CostMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> costs;
    double wet_cost = kWetCost;

    double at(std::size_t row, std::size_t col) const { return costs[row * width + col]; }
};

CostMap hill_cost(const GrayImage& img, const CostProfile& profile);
CostMap suniward_cost(const GrayImage& img, const CostProfile& profile);

// Dispatches on profile.algorithm.
CostMap compute_costs(const GrayImage& img, const CostProfile& profile);

enum class ScanOrder { RowMajor, ColumnMajor };

std::vector<std::pair<std::size_t, double>> flatten_costs(const CostMap& map, ScanOrder order = ScanOrder::RowMajor);
CostMap unflatten_costs(const std::vector<std::pair<std::size_t, double>>& flat, std::size_t width,
                        std::size_t height, double wet_cost = kWetCost);

// Heat image for debugging: non-wet costs min-max scaled to [0,254], wet pixels 255.
GrayImage cost_heatmap(const CostMap& map);

}  // namespace advsteg
