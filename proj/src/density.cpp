#include "stancedyn/density.hpp"

#include <cmath>

#include "stancedyn/common.hpp"
#include "stancedyn/exec.hpp"

namespace stancedyn {

DensityGrid kde_density(const std::vector<Eigen::Vector2d>& points, const LatticeSpec& grid,
                        std::optional<double> bandwidth) {
    if (grid.dims() != 2) throw ConfigError("kde_density: grid must be 2-D");
    if (points.size() < 2) throw DataError("kde_density: need at least 2 points");

    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Eigen::Vector2d var = Eigen::Vector2d::Zero();
    for (const auto& p : points) var += (p - mean).cwiseProduct(p - mean);
    var /= static_cast<double>(points.size() - 1);
    if (!(var(0) > 0.0) || !(var(1) > 0.0)) {
        throw DataError("kde_density: degenerate point set (zero variance)");
    }

    Eigen::Vector2d h;
    if (bandwidth) {
        if (!(*bandwidth > 0.0)) throw ConfigError("kde_density: bandwidth must be > 0");
        h.setConstant(*bandwidth);
    } else {
        // Scott's rule for d = 2
        const double factor = std::pow(static_cast<double>(points.size()), -1.0 / 6.0);
        h = factor * var.cwiseSqrt();
    }

    DensityGrid out;
    out.grid = grid;
    const int na = grid.nodes[0];
    const int nb = grid.nodes[1];
    out.density.resize(na, nb);
    const double norm = 1.0 / (2.0 * M_PI * h(0) * h(1) * static_cast<double>(points.size()));

    exec::parallel_for(static_cast<std::ptrdiff_t>(na) * nb, [&](std::ptrdiff_t idx) {
        const int ia = static_cast<int>(idx / nb);
        const int ib = static_cast<int>(idx % nb);
        const double x = grid.coord(0, ia);
        const double y = grid.coord(1, ib);
        double sum = 0.0;
        for (const auto& p : points) {
            const double dx = (x - p(0)) / h(0);
            const double dy = (y - p(1)) / h(1);
            sum += std::exp(-0.5 * (dx * dx + dy * dy));
        }
        out.density(ia, ib) = norm * sum;
    });
    return out;
}

double density_grid_integral(const DensityGrid& density) {
    return density.density.sum() * density.grid.spacing(0) * density.grid.spacing(1);
}

} // namespace stancedyn
