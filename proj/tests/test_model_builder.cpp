#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "georef/io_util.hpp"
#include "georef/model_builder.hpp"

using namespace georef;

namespace {
std::mt19937_64 rng(123);
double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

TriangleMesh single_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
    TriangleMesh mesh;
    mesh.vertices = {a, b, c};
    mesh.triangles = {{0, 1, 2}};
    return mesh;
}
}  // namespace

TEST_CASE("subdivision: one 4-split takes a 0.4 m^2 triangle to four 0.1 m^2 pieces") {
    // legs 0.8 x 1.0 -> area 0.4
    const TriangleMesh mesh =
        single_triangle(Vec3(0, 0, 0), Vec3(0.8, 0, 0), Vec3(0, 1.0, 0));
    const TriangleMesh fine = subdivide_mesh(mesh, 0.1);
    CHECK(fine.triangles.size() == 4);
    for (std::size_t i = 0; i < fine.triangles.size(); ++i)
        CHECK(fine.triangle_area(i) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("subdivision: triangle below the bound passes through unchanged") {
    const TriangleMesh mesh =
        single_triangle(Vec3(0, 0, 0), Vec3(0.5, 0, 0), Vec3(0, 0.2, 0));  // 0.05 m^2
    const TriangleMesh fine = subdivide_mesh(mesh, 0.1);
    CHECK(fine.triangles.size() == 1);
    CHECK(fine.vertices.size() == 3);
}

TEST_CASE("subdivision conserves the fixture's 37.5 m^2 and respects the bound") {
    TriangleMesh mesh;  // 5x5 wall (25) + 5x5/2 triangle (12.5)
    mesh.vertices = {Vec3(0, 0, 0), Vec3(5, 0, 0), Vec3(5, 0, 5), Vec3(0, 0, 5),
                     Vec3(10, 0, 0), Vec3(15, 0, 0), Vec3(10, 0, 5)};
    mesh.triangles = {{0, 1, 2}, {0, 2, 3}, {4, 5, 6}};
    const double total = mesh.total_area();
    REQUIRE(total == doctest::Approx(37.5));
    const TriangleMesh fine = subdivide_mesh(mesh, 0.1);
    CHECK(fine.total_area() == doctest::Approx(37.5).epsilon(1e-6 / 37.5));
    for (std::size_t i = 0; i < fine.triangles.size(); ++i)
        CHECK(fine.triangle_area(i) <= 0.1 + 1e-12);
}

TEST_CASE("subdivision leaves degenerate triangles untouched but counts them") {
    TriangleMesh mesh = single_triangle(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0));
    SubdivideSummary summary;
    const TriangleMesh fine = subdivide_mesh(mesh, 0.1, &summary);
    CHECK(fine.triangles.size() == 1);
    CHECK(summary.degenerate_passthrough == 1);
}

TEST_CASE("mesh_to_points dedups shared vertices") {
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0),
                     Vec3(0, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
    mesh.triangles = {{0, 1, 2}, {3, 4, 5}};
    CHECK(mesh_to_points(mesh).size() == 4);
    CHECK(mesh_to_points(TriangleMesh{}).empty());
}

TEST_CASE("mesh_to_points on a subdivided unit wall matches the lattice enumeration") {
    // unit square wall in the xz-plane, two triangles of area 0.5 each
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 0, 1), Vec3(0, 0, 1)};
    mesh.triangles = {{0, 1, 2}, {0, 2, 3}};
    const TriangleMesh fine = subdivide_mesh(mesh, 0.1);
    const auto points = mesh_to_points(fine);

    // independent oracle: two levels of midpoint 4-splits put all vertices on
    // the (1/4)-lattice of the square; enumerate it
    std::set<std::pair<int, int>> lattice;
    for (int i = 0; i <= 4; ++i)
        for (int k = 0; k <= 4; ++k) lattice.insert({i, k});
    CHECK(points.size() == lattice.size());
    for (const auto& p : points) {
        const double gx = p.x() * 4.0, gz = p.z() * 4.0;
        CHECK(std::abs(gx - std::round(gx)) < 1e-12);
        CHECK(std::abs(gz - std::round(gz)) < 1e-12);
    }
}

TEST_CASE("bilinear: constant field and cell-center blend") {
    DemGrid grid;
    grid.origin = Vec2(0, 0);
    grid.spacing = 1.0;
    grid.ncols = grid.nrows = 2;
    grid.heights = {0, 0, 0, 0};
    grid.valid = {1, 1, 1, 1};
    for (const auto& p : interpolate_dem(grid, 0.31622776601683794))
        CHECK(p.z() == doctest::Approx(0.0));

    grid.heights = {0, 1, 1, 2};
    CHECK(*dem_bilinear(grid, 0.5, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("bilinear matches an independent closed form on random queries") {
    DemGrid grid;
    grid.origin = Vec2(10, 20);
    grid.spacing = 2.0;
    grid.ncols = grid.nrows = 5;
    grid.heights.resize(25);
    grid.valid.assign(25, 1);
    for (auto& h : grid.heights) h = uniform(-5, 5);

    for (int i = 0; i < 100; ++i) {
        const double x = uniform(10.0, 18.0), y = uniform(20.0, 28.0);
        const double fx = (x - 10.0) / 2.0, fy = (y - 20.0) / 2.0;
        const int i0 = std::min(static_cast<int>(fx), 3), j0 = std::min(static_cast<int>(fy), 3);
        const double u = fx - i0, v = fy - j0;
        auto h = [&](int c, int r) { return grid.heights[r * 5 + c]; };
        const double expected = h(i0, j0) * (1 - u) * (1 - v) + h(i0 + 1, j0) * u * (1 - v) +
                                h(i0, j0 + 1) * (1 - u) * v + h(i0 + 1, j0 + 1) * u * v;
        CHECK(*dem_bilinear(grid, x, y) == doctest::Approx(expected).epsilon(1e-12));
    }

    // exact reproduction at the source lattice
    for (std::uint32_t r = 0; r < 5; ++r)
        for (std::uint32_t c = 0; c < 5; ++c)
            CHECK(*dem_bilinear(grid, 10.0 + 2.0 * c, 20.0 + 2.0 * r) ==
                  doctest::Approx(grid.height_at(c, r)).epsilon(1e-15));
}

TEST_CASE("interpolate_dem omits samples next to no-data cells") {
    DemGrid grid;
    grid.origin = Vec2(0, 0);
    grid.spacing = 1.0;
    grid.ncols = grid.nrows = 3;
    grid.heights.assign(9, 1.0);
    grid.valid.assign(9, 1);
    grid.valid[4] = 0;  // center cell missing
    const auto points = interpolate_dem(grid, 0.5);
    for (const auto& p : points) {
        const bool near_center = p.x() > 0.0 && p.x() < 2.0 && p.y() > 0.0 && p.y() < 2.0;
        CHECK(!near_center);
    }
}

TEST_CASE("height map: max per cell, wall column over flat ground") {
    CHECK(build_height_map({Vec3(0.2, 0.2, 1.0), Vec3(0.3, 0.3, 5.0)}, 1.0).value(0, 0) == 5.0f);

    std::vector<Vec3> points;
    for (int x = 0; x < 20; ++x)
        for (int y = 0; y < 20; ++y) points.emplace_back(x * 0.5, y * 0.5, 60.0);
    for (int k = 0; k < 10; ++k) points.emplace_back(5.0, 5.0, 60.0 + k + 1.0);
    const HeightMap map = build_height_map(points, 0.5);
    std::int64_t c, r;
    map.cell_of(Vec2(5.0, 5.0), c, r);
    CHECK(map.value(c, r) == 70.0f);
    map.cell_of(Vec2(2.0, 2.0), c, r);
    CHECK(map.value(c, r) == 60.0f);
    CHECK_THROWS(build_height_map({}, 0.5));
}

TEST_CASE("height map matches a brute-force per-cell max on 10k random points") {
    std::vector<Vec3> points;
    points.reserve(10000);
    for (int i = 0; i < 10000; ++i)
        points.emplace_back(uniform(-20, 20), uniform(-20, 20), uniform(50, 90));
    const double cell = 0.75;
    const HeightMap map = build_height_map(points, cell);

    std::map<std::pair<std::int64_t, std::int64_t>, float> oracle;
    for (const auto& p : points) {
        const auto cx = static_cast<std::int64_t>(std::floor((p.x() - map.origin.x()) / cell));
        const auto cy = static_cast<std::int64_t>(std::floor((p.y() - map.origin.y()) / cell));
        auto [it, fresh] = oracle.try_emplace({cx, cy}, static_cast<float>(p.z()));
        if (!fresh) it->second = std::max(it->second, static_cast<float>(p.z()));
    }
    std::size_t occupied = 0;
    for (std::uint32_t r = 0; r < map.nrows; ++r)
        for (std::uint32_t c = 0; c < map.ncols; ++c) {
            const float v = map.value(c, r);
            const auto it = oracle.find({c, r});
            if (std::isnan(v)) {
                CHECK(it == oracle.end());
            } else {
                REQUIRE(it != oracle.end());
                CHECK(v == it->second);
                ++occupied;
            }
        }
    CHECK(occupied == oracle.size());
}

namespace {
DemGrid flat_dem(double h, int n = 12, double spacing = 1.0) {
    DemGrid grid;
    grid.origin = Vec2(1000.25, 2000.75);
    grid.spacing = spacing;
    grid.ncols = grid.nrows = n;
    grid.heights.assign(static_cast<std::size_t>(n) * n, h);
    grid.valid.assign(grid.heights.size(), 1);
    return grid;
}
}  // namespace

TEST_CASE("assemble_model: DEM only equals interpolated DEM shifted by frame_origin") {
    const DemGrid dem = flat_dem(60.0);
    ModelParams params;
    const GeoModel model = assemble_model(TriangleMesh{}, dem, params);
    const auto expected = interpolate_dem(dem, params.dem_pitch);
    REQUIRE(model.points.size() == expected.size());
    CHECK(model.frame_origin.x() == std::floor(dem.origin.x()));
    CHECK(model.frame_origin.y() == std::floor(dem.origin.y()));
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const Vec3 shifted =
            expected[i] - Vec3(model.frame_origin.x(), model.frame_origin.y(), 0.0);
        CHECK((model.points[i] - shifted).norm() == 0.0);
    }
}

TEST_CASE("assemble_model: building footprint raises the height map") {
    // one 4x4 box (walls+roof at 70) on flat ground at 60
    TriangleMesh mesh;
    auto add_quad = [&](const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
        const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.insert(mesh.vertices.end(), {a, b, c, d});
        mesh.triangles.push_back({base, base + 1, base + 2});
        mesh.triangles.push_back({base, base + 2, base + 3});
    };
    const double x0 = 1004, x1 = 1008, y0 = 2004, y1 = 2008, z0 = 60, z1 = 70;
    add_quad({x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1});
    add_quad({x1, y0, z0}, {x1, y1, z0}, {x1, y1, z1}, {x1, y0, z1});
    add_quad({x1, y1, z0}, {x0, y1, z0}, {x0, y1, z1}, {x1, y1, z1});
    add_quad({x0, y1, z0}, {x0, y0, z0}, {x0, y0, z1}, {x0, y1, z1});
    add_quad({x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1});

    const GeoModel model = assemble_model(mesh, flat_dem(60.0), ModelParams{});
    const Vec3 inside = model.to_local(Vec3(1006.0, 2006.0, 0.0));
    const Vec3 outside = model.to_local(Vec3(1001.0, 2001.0, 0.0));
    CHECK(model.height_map.value_at(inside.head<2>()) == doctest::Approx(70.0));
    CHECK(model.height_map.value_at(outside.head<2>()) == doctest::Approx(60.0));

    // dominance: each model point is covered by its cell's max
    for (const auto& p : model.points)
        CHECK(model.height_map.value_at(p.head<2>()) >= p.z() - 1e-9);
}

TEST_CASE("assemble_model is deterministic and the GEOM1 cache round-trips") {
    const DemGrid dem = flat_dem(61.5, 8);
    TriangleMesh mesh;
    mesh.vertices = {Vec3(1002, 2002, 61.5), Vec3(1005, 2002, 61.5), Vec3(1005, 2002, 66)};
    mesh.triangles = {{0, 1, 2}};
    ModelParams params;
    const GeoModel a = assemble_model(mesh, dem, params);
    const GeoModel b = assemble_model(mesh, dem, params);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i] == b.points[i]);
    CHECK(a.height_map.values == b.height_map.values);

    const auto dir = std::filesystem::temp_directory_path() / "georef_model_test";
    std::filesystem::create_directories(dir);
    const std::string path1 = (dir / "m1.geom").string();
    const std::string path2 = (dir / "m2.geom").string();
    save_model(a, path1);
    save_model(b, path2);
    CHECK(read_text_file(path1) == read_text_file(path2));

    const GeoModel loaded = load_model(path1, params);
    REQUIRE(loaded.points.size() == a.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(loaded.points[i] == a.points[i]);
    CHECK(loaded.height_map.values == a.height_map.values);
    CHECK(loaded.frame_origin == a.frame_origin);
    CHECK(loaded.surfels.total_surfels() == a.surfels.total_surfels());
}
