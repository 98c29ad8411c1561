#include "georef/model_builder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "georef/io_util.hpp"

namespace georef {

namespace {

struct VertexKeyHash {
    std::size_t operator()(const std::array<std::uint64_t, 3>& k) const {
        std::size_t h = 1469598103934665603ull;
        for (auto v : k) h = (h ^ v) * 1099511628211ull;
        return h;
    }
};

std::array<std::uint64_t, 3> bit_key(const Vec3& v) {
    return {std::bit_cast<std::uint64_t>(v.x()), std::bit_cast<std::uint64_t>(v.y()),
            std::bit_cast<std::uint64_t>(v.z())};
}

}  // namespace

TriangleMesh subdivide_mesh(const TriangleMesh& mesh, double max_area,
                            SubdivideSummary* summary) {
    if (max_area <= 0.0) throw std::invalid_argument("subdivide_mesh: max_area must be > 0");
    TriangleMesh out;
    out.vertices = mesh.vertices;

    std::unordered_map<std::array<std::uint64_t, 3>, std::uint32_t, VertexKeyHash> vertex_ids;
    vertex_ids.reserve(mesh.vertices.size() * 2);
    for (std::uint32_t i = 0; i < out.vertices.size(); ++i)
        vertex_ids.emplace(bit_key(out.vertices[i]), i);

    auto midpoint_id = [&](std::uint32_t a, std::uint32_t b) {
        const Vec3 m = 0.5 * (out.vertices[a] + out.vertices[b]);
        auto [it, inserted] = vertex_ids.emplace(bit_key(m),
                                                 static_cast<std::uint32_t>(out.vertices.size()));
        if (inserted) out.vertices.push_back(m);
        return it->second;
    };

    std::vector<std::array<std::uint32_t, 3>> stack(mesh.triangles.begin(),
                                                    mesh.triangles.end());
    while (!stack.empty()) {
        const auto tri = stack.back();
        stack.pop_back();
        const Vec3 a = out.vertices[tri[0]], b = out.vertices[tri[1]], c = out.vertices[tri[2]];
        const double area = 0.5 * (b - a).cross(c - a).norm();
        if (area <= 0.0) {
            if (summary) ++summary->degenerate_passthrough;
            out.triangles.push_back(tri);
            continue;
        }
        if (area <= max_area) {
            out.triangles.push_back(tri);
            continue;
        }
        const std::uint32_t mab = midpoint_id(tri[0], tri[1]);
        const std::uint32_t mbc = midpoint_id(tri[1], tri[2]);
        const std::uint32_t mca = midpoint_id(tri[2], tri[0]);
        stack.push_back({tri[0], mab, mca});
        stack.push_back({mab, tri[1], mbc});
        stack.push_back({mca, mbc, tri[2]});
        stack.push_back({mab, mbc, mca});
    }
    return out;
}

std::vector<Vec3> mesh_to_points(const TriangleMesh& mesh) {
    std::vector<Vec3> points;
    points.reserve(mesh.vertices.size());
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(mesh.vertices.size() * 2);
    for (const auto& v : mesh.vertices) {
        const auto qx = static_cast<std::int64_t>(std::llround(v.x() * 1e4));
        const auto qy = static_cast<std::int64_t>(std::llround(v.y() * 1e4));
        const auto qz = static_cast<std::int64_t>(std::llround(v.z() * 1e4));
        std::uint64_t h = 1469598103934665603ull;
        for (std::int64_t q : {qx, qy, qz})
            h = (h ^ static_cast<std::uint64_t>(q)) * 1099511628211ull;
        if (seen.insert(h).second) points.push_back(v);
    }
    return points;
}

std::optional<double> dem_bilinear(const DemGrid& grid, double x, double y) {
    const double fx = (x - grid.origin.x()) / grid.spacing;
    const double fy = (y - grid.origin.y()) / grid.spacing;
    if (fx < 0.0 || fy < 0.0 || fx > grid.ncols - 1.0 || fy > grid.nrows - 1.0)
        return std::nullopt;
    if (grid.ncols == 1 && grid.nrows == 1)
        return grid.is_valid(0, 0) ? std::optional<double>(grid.height_at(0, 0)) : std::nullopt;

    auto cell_floor = [](double f, std::uint32_t n) {
        auto i = static_cast<std::int64_t>(std::floor(f));
        if (i >= static_cast<std::int64_t>(n) - 1) i = static_cast<std::int64_t>(n) - 2;
        if (i < 0) i = 0;
        return i;
    };
    const std::int64_t i0 = cell_floor(fx, grid.ncols);
    const std::int64_t j0 = cell_floor(fy, grid.nrows);
    const double u = fx - static_cast<double>(i0);
    const double v = fy - static_cast<double>(j0);

    const auto c0 = static_cast<std::uint32_t>(i0), r0 = static_cast<std::uint32_t>(j0);
    if (!grid.is_valid(c0, r0) || !grid.is_valid(c0 + 1, r0) || !grid.is_valid(c0, r0 + 1) ||
        !grid.is_valid(c0 + 1, r0 + 1))
        return std::nullopt;
    const double h00 = grid.height_at(c0, r0);
    const double h10 = grid.height_at(c0 + 1, r0);
    const double h01 = grid.height_at(c0, r0 + 1);
    const double h11 = grid.height_at(c0 + 1, r0 + 1);
    return (1.0 - u) * (1.0 - v) * h00 + u * (1.0 - v) * h10 + (1.0 - u) * v * h01 +
           u * v * h11;
}

std::vector<Vec3> interpolate_dem(const DemGrid& grid, double target_pitch) {
    if (target_pitch <= 0.0)
        throw std::invalid_argument("interpolate_dem: target_pitch must be > 0");
    std::vector<Vec3> out;
    const double extent_x = (grid.ncols - 1) * grid.spacing;
    const double extent_y = (grid.nrows - 1) * grid.spacing;
    const auto nx = static_cast<std::int64_t>(std::floor(extent_x / target_pitch + 1e-9)) + 1;
    const auto ny = static_cast<std::int64_t>(std::floor(extent_y / target_pitch + 1e-9)) + 1;
    out.reserve(static_cast<std::size_t>(nx) * ny);
    for (std::int64_t iy = 0; iy < ny; ++iy) {
        const double y = grid.origin.y() + iy * target_pitch;
        for (std::int64_t ix = 0; ix < nx; ++ix) {
            const double x = grid.origin.x() + ix * target_pitch;
            if (auto h = dem_bilinear(grid, x, y)) out.emplace_back(x, y, *h);
        }
    }
    return out;
}

HeightMap build_height_map(const std::vector<Vec3>& points, double cell_size) {
    if (points.empty()) throw std::invalid_argument("build_height_map: empty point set");
    if (cell_size <= 0.0) throw std::invalid_argument("build_height_map: cell_size must be > 0");
    Vec2 lo(points[0].x(), points[0].y()), hi = lo;
    for (const auto& p : points) {
        lo.x() = std::min(lo.x(), p.x());
        lo.y() = std::min(lo.y(), p.y());
        hi.x() = std::max(hi.x(), p.x());
        hi.y() = std::max(hi.y(), p.y());
    }
    HeightMap map;
    map.origin = lo;
    map.cell_size = cell_size;
    map.ncols = static_cast<std::uint32_t>(std::floor((hi.x() - lo.x()) / cell_size)) + 1;
    map.nrows = static_cast<std::uint32_t>(std::floor((hi.y() - lo.y()) / cell_size)) + 1;
    map.values.assign(static_cast<std::size_t>(map.ncols) * map.nrows,
                      std::numeric_limits<float>::quiet_NaN());
    for (const auto& p : points) {
        std::int64_t c, r;
        map.cell_of(Vec2(p.x(), p.y()), c, r);
        if (c == static_cast<std::int64_t>(map.ncols)) --c;  // points exactly on the max corner
        if (r == static_cast<std::int64_t>(map.nrows)) --r;
        float& cell = map.values[static_cast<std::size_t>(r) * map.ncols + c];
        const auto h = static_cast<float>(p.z());
        if (std::isnan(cell) || h > cell) cell = h;
    }
    return map;
}

GeoModel assemble_model(const TriangleMesh& mesh, const DemGrid& dem, const ModelParams& params) {
    GeoModel model;
    model.params = params;

    const TriangleMesh fine = subdivide_mesh(mesh, params.max_triangle_area);
    std::vector<Vec3> points = mesh_to_points(fine);
    const std::vector<Vec3> ground = interpolate_dem(dem, params.dem_pitch);
    points.insert(points.end(), ground.begin(), ground.end());
    if (points.empty()) throw std::runtime_error("assemble_model: empty combined point set");

    Vec2 lo(points[0].x(), points[0].y());
    for (const auto& p : points) {
        lo.x() = std::min(lo.x(), p.x());
        lo.y() = std::min(lo.y(), p.y());
    }
    model.frame_origin = Vec2(std::floor(lo.x()), std::floor(lo.y()));
    for (auto& p : points) p -= Vec3(model.frame_origin.x(), model.frame_origin.y(), 0.0);

    model.points = std::move(points);
    model.height_map = build_height_map(model.points, params.height_cell);
    model.surfels = build_surfel_map(model.points, params.surfels);
    return model;
}

void save_model(const GeoModel& model, const std::string& path) {
    check_little_endian();
    auto os = open_binary_out(path);
    write_magic(os, "GEOM");
    write_le<char>(os, '1');
    write_le<double>(os, model.frame_origin.x());
    write_le<double>(os, model.frame_origin.y());
    write_le<std::uint64_t>(os, model.points.size());
    for (const auto& p : model.points) {
        write_le<double>(os, p.x());
        write_le<double>(os, p.y());
        write_le<double>(os, p.z());
    }
    const HeightMap& hm = model.height_map;
    write_le<double>(os, hm.origin.x());
    write_le<double>(os, hm.origin.y());
    write_le<double>(os, hm.cell_size);
    write_le<std::uint32_t>(os, hm.ncols);
    write_le<std::uint32_t>(os, hm.nrows);
    for (float v : hm.values) write_le<float>(os, v);
    if (!os) throw std::runtime_error("failed writing model cache: " + path);
}

GeoModel load_model(const std::string& path, const ModelParams& params) {
    check_little_endian();
    auto is = open_binary_in(path);
    expect_magic(is, "GEOM", path);
    if (read_le<char>(is) != '1') throw std::runtime_error(path + ": unsupported GEOM version");
    GeoModel model;
    model.params = params;
    model.frame_origin.x() = read_le<double>(is);
    model.frame_origin.y() = read_le<double>(is);
    const auto n = read_le<std::uint64_t>(is);
    model.points.resize(n);
    for (auto& p : model.points) {
        p.x() = read_le<double>(is);
        p.y() = read_le<double>(is);
        p.z() = read_le<double>(is);
    }
    HeightMap& hm = model.height_map;
    hm.origin.x() = read_le<double>(is);
    hm.origin.y() = read_le<double>(is);
    hm.cell_size = read_le<double>(is);
    hm.ncols = read_le<std::uint32_t>(is);
    hm.nrows = read_le<std::uint32_t>(is);
    hm.values.resize(static_cast<std::size_t>(hm.ncols) * hm.nrows);
    for (float& v : hm.values) v = read_le<float>(is);
    model.surfels = build_surfel_map(model.points, params.surfels);
    return model;
}

}  // namespace georef
