#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "stancedyn/landscape.hpp"

namespace stancedyn {

struct DensityGrid {
    LatticeSpec grid; // 2-D
    Eigen::MatrixXd density; // nodes[0] x nodes[1]
};

/// Gaussian KDE on a 2-D lattice. Bandwidth per axis by Scott's rule
/// (sigma_j n^(-1/6)) unless an explicit value is given.
DensityGrid kde_density(const std::vector<Eigen::Vector2d>& points, const LatticeSpec& grid,
                        std::optional<double> bandwidth = std::nullopt);

/// Rectangle-rule integral of the density over the grid (normalization check).
double density_grid_integral(const DensityGrid& density);

} // namespace stancedyn
