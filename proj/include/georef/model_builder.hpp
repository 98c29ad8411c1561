#pragma once

#include <optional>
#include <string>
#include <vector>

#include "georef/common.hpp"
#include "georef/geo_ingest.hpp"
#include "georef/surfel_map.hpp"

namespace georef {

// 2D max-height grid; `origin` is the minimum corner of cell (0,0) and a
// cell covers [origin + i*cell, origin + (i+1)*cell). NaN marks no-data.
struct HeightMap {
    Vec2 origin = Vec2::Zero();
    double cell_size = 0.5;
    std::uint32_t ncols = 0;
    std::uint32_t nrows = 0;
    std::vector<float> values;

    bool in_bounds(std::int64_t col, std::int64_t row) const {
        return col >= 0 && row >= 0 && col < static_cast<std::int64_t>(ncols) &&
               row < static_cast<std::int64_t>(nrows);
    }
    void cell_of(const Vec2& p, std::int64_t& col, std::int64_t& row) const {
        col = static_cast<std::int64_t>(std::floor((p.x() - origin.x()) / cell_size));
        row = static_cast<std::int64_t>(std::floor((p.y() - origin.y()) / cell_size));
    }
    float value(std::int64_t col, std::int64_t row) const {
        return values[static_cast<std::size_t>(row) * ncols + col];
    }
    // Height at the cell containing p; NaN outside bounds or on no-data.
    float value_at(const Vec2& p) const {
        std::int64_t c, r;
        cell_of(p, c, r);
        return in_bounds(c, r) ? value(c, r) : std::numeric_limits<float>::quiet_NaN();
    }
    Vec2 cell_center(std::int64_t col, std::int64_t row) const {
        return origin + Vec2((col + 0.5) * cell_size, (row + 0.5) * cell_size);
    }
};

struct ModelParams {
    double max_triangle_area = 0.1;                  // m^2
    double dem_pitch = 0.31622776601683794;          // sqrt(0.1) m
    double height_cell = 0.5;                        // m
    SurfelMapParams surfels;
};

struct GeoModel {
    std::vector<Vec3> points;      // frame_origin already subtracted
    SurfelMap surfels;
    HeightMap height_map;
    Vec2 frame_origin = Vec2::Zero();
    ModelParams params;

    Vec3 to_local(const Vec3& projected) const {
        return projected - Vec3(frame_origin.x(), frame_origin.y(), 0.0);
    }
    Vec3 to_projected(const Vec3& local) const {
        return local + Vec3(frame_origin.x(), frame_origin.y(), 0.0);
    }
};

struct SubdivideSummary {
    int degenerate_passthrough = 0;
};

// Recursive midpoint 4-split until every triangle area is <= max_area.
TriangleMesh subdivide_mesh(const TriangleMesh& mesh, double max_area,
                            SubdivideSummary* summary = nullptr);

// Distinct vertex set of the mesh (dedup on a 1e-4 m quantization).
std::vector<Vec3> mesh_to_points(const TriangleMesh& mesh);

// Bilinear height at (x, y); nullopt when outside or next to no-data cells.
std::optional<double> dem_bilinear(const DemGrid& grid, double x, double y);

// Regular resampling of the DEM at target_pitch; lattice nodes with any
// no-data corner are omitted.
std::vector<Vec3> interpolate_dem(const DemGrid& grid, double target_pitch);

HeightMap build_height_map(const std::vector<Vec3>& points, double cell_size);

GeoModel assemble_model(const TriangleMesh& mesh, const DemGrid& dem, const ModelParams& params);

// GEOM1 model cache (little-endian binary). The surfel map is rebuilt from
// the cached points on load.
void save_model(const GeoModel& model, const std::string& path);
GeoModel load_model(const std::string& path, const ModelParams& params);

}  // namespace georef
