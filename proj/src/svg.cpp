#include "stancedyn/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stancedyn/common.hpp"

namespace stancedyn {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

/// Five-stop blue-to-yellow ramp for the density layer.
std::string heat_color(double t) {
    struct Stop {
        double pos;
        int r, g, b;
    };
    static const Stop stops[] = {{0.00, 20, 24, 60},
                                 {0.25, 40, 70, 140},
                                 {0.50, 36, 130, 140},
                                 {0.75, 120, 190, 90},
                                 {1.00, 250, 230, 80}};
    t = std::clamp(t, 0.0, 1.0);
    for (int i = 0; i < 4; ++i) {
        if (t <= stops[i + 1].pos) {
            const double w = (t - stops[i].pos) / (stops[i + 1].pos - stops[i].pos);
            const int r = static_cast<int>(std::lround(stops[i].r + w * (stops[i + 1].r - stops[i].r)));
            const int g = static_cast<int>(std::lround(stops[i].g + w * (stops[i + 1].g - stops[i].g)));
            const int b = static_cast<int>(std::lround(stops[i].b + w * (stops[i + 1].b - stops[i].b)));
            char buf[8];
            std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
            return buf;
        }
    }
    return "#fae650";
}

/// Bilinear interpolation of the drift field at an arbitrary point.
bool interp_drift(const DriftField& field, double x, double y, Eigen::Vector2d& out) {
    const auto& g = field.grid;
    const int na = g.nodes[0];
    const int nb = g.nodes[1];
    const double fx = (x - g.mins[0]) / (g.maxs[0] - g.mins[0]) * (na - 1);
    const double fy = (y - g.mins[1]) / (g.maxs[1] - g.mins[1]) * (nb - 1);
    if (fx < 0.0 || fy < 0.0 || fx > na - 1 || fy > nb - 1) return false;
    const int ia = std::min(static_cast<int>(fx), na - 2);
    const int ib = std::min(static_cast<int>(fy), nb - 2);
    const double wa = fx - ia;
    const double wb = fy - ib;
    auto node = [&](int a, int b) -> const Eigen::VectorXd& {
        return field.drift[static_cast<std::size_t>(a) * static_cast<std::size_t>(nb) +
                           static_cast<std::size_t>(b)];
    };
    const Eigen::VectorXd v = (1 - wa) * (1 - wb) * node(ia, ib) + wa * (1 - wb) * node(ia + 1, ib) +
                              (1 - wa) * wb * node(ia, ib + 1) + wa * wb * node(ia + 1, ib + 1);
    out = Eigen::Vector2d(v(0), v(1));
    return true;
}

} // namespace

std::string export_svg(const DriftField& field, const DensityGrid& density, const SvgStyle& style) {
    if (field.grid.dims() != 2) throw ConfigError("export_svg: field must be 2-D");
    if (field.grid.nodes != density.grid.nodes || field.grid.mins != density.grid.mins ||
        field.grid.maxs != density.grid.maxs) {
        throw ConfigError("export_svg: field and density grids differ");
    }
    const auto& g = field.grid;
    const int na = g.nodes[0];
    const int nb = g.nodes[1];

    const double px_per_x = style.width_px / (g.maxs[0] - g.mins[0]);
    const double px_per_y = style.height_px / (g.maxs[1] - g.mins[1]);
    auto to_px_x = [&](double x) { return (x - g.mins[0]) * px_per_x; };
    auto to_px_y = [&](double y) { return style.height_px - (y - g.mins[1]) * px_per_y; };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width_px << "\" height=\""
        << style.height_px << "\" viewBox=\"0 0 " << style.width_px << ' ' << style.height_px
        << "\">\n";

    // density heat layer
    const double dmax = density.density.maxCoeff();
    const double cell_w = px_per_x * g.spacing(0);
    const double cell_h = px_per_y * g.spacing(1);
    svg << "<g id=\"density\">\n";
    for (int ia = 0; ia < na; ++ia) {
        for (int ib = 0; ib < nb; ++ib) {
            const double t = dmax > 0.0 ? density.density(ia, ib) / dmax : 0.0;
            const double cx = to_px_x(g.coord(0, ia));
            const double cy = to_px_y(g.coord(1, ib));
            svg << "<rect x=\"" << fmt(cx - cell_w / 2) << "\" y=\"" << fmt(cy - cell_h / 2)
                << "\" width=\"" << fmt(cell_w) << "\" height=\"" << fmt(cell_h) << "\" fill=\""
                << heat_color(t) << "\"/>\n";
        }
    }
    svg << "</g>\n";

    // streamline layer: fixed-step integration seeded on a sub-lattice
    svg << "<g id=\"streamlines\" fill=\"none\" stroke=\"#ffffff\" stroke-width=\"1\" "
           "stroke-opacity=\"0.75\">\n";
    const double step = style.streamline_step_fraction * std::min(g.spacing(0), g.spacing(1));
    for (int ia = 0; ia < na; ia += style.streamline_seed_stride) {
        for (int ib = 0; ib < nb; ib += style.streamline_seed_stride) {
            double x = g.coord(0, ia);
            double y = g.coord(1, ib);
            Eigen::Vector2d v;
            if (!interp_drift(field, x, y, v) || v.norm() < style.min_drift) continue;
            std::ostringstream path;
            path << "M" << fmt(to_px_x(x)) << ' ' << fmt(to_px_y(y));
            int emitted = 0;
            for (int s = 0; s < style.streamline_max_steps; ++s) {
                if (!interp_drift(field, x, y, v)) break;
                const double n = v.norm();
                if (n < style.min_drift) break;
                x += step * v(0) / n;
                y += step * v(1) / n;
                path << " L" << fmt(to_px_x(x)) << ' ' << fmt(to_px_y(y));
                ++emitted;
            }
            if (emitted > 0) svg << "<path d=\"" << path.str() << "\"/>\n";
        }
    }
    svg << "</g>\n";

    // hatch layer over low-support nodes
    svg << "<g id=\"low-support\" stroke=\"#666666\" stroke-width=\"0.6\" stroke-opacity=\"0.8\">\n";
    for (int ia = 0; ia < na; ++ia) {
        for (int ib = 0; ib < nb; ++ib) {
            const std::size_t idx =
                static_cast<std::size_t>(ia) * static_cast<std::size_t>(nb) + static_cast<std::size_t>(ib);
            if (!field.low_support[idx]) continue;
            const double cx = to_px_x(g.coord(0, ia));
            const double cy = to_px_y(g.coord(1, ib));
            svg << "<line x1=\"" << fmt(cx - cell_w / 2) << "\" y1=\"" << fmt(cy + cell_h / 2)
                << "\" x2=\"" << fmt(cx + cell_w / 2) << "\" y2=\"" << fmt(cy - cell_h / 2)
                << "\"/>\n";
        }
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

void write_svg(const std::string& path, const std::string& svg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << svg;
}

} // namespace stancedyn
