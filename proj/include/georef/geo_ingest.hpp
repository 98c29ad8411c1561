#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "georef/common.hpp"

namespace georef {

struct TriangleMesh {
    std::vector<Vec3> vertices;  // projected frame: easting, northing, height (m)
    std::vector<std::array<std::uint32_t, 3>> triangles;

    double triangle_area(std::size_t i) const {
        const auto& t = triangles[i];
        const Vec3 a = vertices[t[0]], b = vertices[t[1]], c = vertices[t[2]];
        return 0.5 * (b - a).cross(c - a).norm();
    }
    double total_area() const {
        double s = 0.0;
        for (std::size_t i = 0; i < triangles.size(); ++i) s += triangle_area(i);
        return s;
    }
    void append(const TriangleMesh& other);
};

// Regular ground-height grid. `origin` is the center of cell (0,0);
// invalid cells carry valid[idx] == 0.
struct DemGrid {
    Vec2 origin = Vec2::Zero();
    double spacing = 1.0;
    std::uint32_t ncols = 0;
    std::uint32_t nrows = 0;
    std::vector<double> heights;       // row-major, nrows * ncols
    std::vector<std::uint8_t> valid;

    double height_at(std::uint32_t col, std::uint32_t row) const {
        return heights[static_cast<std::size_t>(row) * ncols + col];
    }
    bool is_valid(std::uint32_t col, std::uint32_t row) const {
        return valid[static_cast<std::size_t>(row) * ncols + col] != 0;
    }
    std::size_t valid_count() const;
};

struct IngestWarnings {
    int skipped_rings = 0;      // rings with fewer than 3 distinct vertices
    int degenerate_cells = 0;   // reserved
    bool default_spacing = false;
};

// Parses the pragmatic CityGML subset: every <gml:exterior> polygon ring
// given as a flat x y z posList is fan-triangulated. Interior rings and
// xlink references are rejected. Coordinates pass through unchanged.
TriangleMesh parse_citygml_subset(std::string_view document, IngestWarnings* warnings = nullptr);

// Parses an XYZ DEM tile: one "easting northing height" triple per line,
// points on a regular grid whose pitch is inferred from the data.
DemGrid parse_dem_xyz(std::string_view document, IngestWarnings* warnings = nullptr);

// Line-oriented internal mesh format:
//   MESH <nverts> <ntris>
//   v x y z
//   t i j k        (0-based)
std::string mesh_to_text(const TriangleMesh& mesh);
TriangleMesh mesh_from_text(std::string_view text);

TriangleMesh load_citygml_file(const std::string& path, IngestWarnings* warnings = nullptr);
DemGrid load_dem_file(const std::string& path, IngestWarnings* warnings = nullptr);

}  // namespace georef
