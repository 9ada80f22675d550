#pragma once

#include <string>

#include "stancedyn/density.hpp"
#include "stancedyn/landscape.hpp"

namespace stancedyn {

struct SvgStyle {
    int width_px = 640;
    int height_px = 640;
    double streamline_step_fraction = 0.25; // of the grid spacing
    int streamline_max_steps = 500;
    int streamline_seed_stride = 4; // seed every n-th node per axis
    double min_drift = 1e-12; // below this, no streamline is traced
};

/// Layered deterministic SVG: density heat map, streamlines traced by
/// fixed-step integration of the drift field, hatching over low-support
/// nodes. The field must be 2-D and share the density grid.
std::string export_svg(const DriftField& field, const DensityGrid& density,
                       const SvgStyle& style = {});

void write_svg(const std::string& path, const std::string& svg);

} // namespace stancedyn
