#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "georef/geo_ingest.hpp"
#include "georef/xml.hpp"

using namespace georef;

namespace {

std::string wrap_rings(const std::vector<std::string>& pos_lists) {
    std::string doc = "<?xml version=\"1.0\"?>\n<CityModel xmlns:gml=\"g\" xmlns:bldg=\"b\">\n";
    for (const auto& pl : pos_lists) {
        doc += "<bldg:Building><bldg:WallSurface><gml:Polygon><gml:exterior><gml:LinearRing>"
               "<gml:posList>" +
               pl +
               "</gml:posList></gml:LinearRing></gml:exterior></gml:Polygon>"
               "</bldg:WallSurface></bldg:Building>\n";
    }
    doc += "</CityModel>\n";
    return doc;
}

// axis-aligned box walls + roof, 12 rectangular faces for two buildings
std::vector<std::string> box_rings(double cx, double cy, double hx, double hy, double z0,
                                   double z1, bool with_roof) {
    auto fmt = [](double x, double y, double z) {
        std::ostringstream os;
        os << x << " " << y << " " << z;
        return os.str();
    };
    const double x0 = cx - hx, x1 = cx + hx, y0 = cy - hy, y1 = cy + hy;
    std::vector<std::string> rings;
    auto wall = [&](double ax, double ay, double bx, double by) {
        rings.push_back(fmt(ax, ay, z0) + " " + fmt(bx, by, z0) + " " + fmt(bx, by, z1) + " " +
                        fmt(ax, ay, z1) + " " + fmt(ax, ay, z0));
    };
    wall(x0, y0, x1, y0);
    wall(x1, y0, x1, y1);
    wall(x1, y1, x0, y1);
    wall(x0, y1, x0, y0);
    if (with_roof)
        rings.push_back(fmt(x0, y0, z1) + " " + fmt(x1, y0, z1) + " " + fmt(x1, y1, z1) + " " +
                        fmt(x0, y1, z1) + " " + fmt(x0, y0, z1));
    return rings;
}

}  // namespace

TEST_CASE("xml: malformed documents fail with a byte offset") {
    CHECK_THROWS_AS(xml::parse_document("<a><b></a>"), ParseError);
    try {
        xml::parse_document("<a><b></a>");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset() >= 0);
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    CHECK_THROWS_AS(xml::parse_document("<a attr=oops></a>"), ParseError);
    CHECK_THROWS_AS(xml::parse_document("no xml at all"), ParseError);
    CHECK_THROWS_AS(xml::parse_document("<a></a><b></b>"), ParseError);
}

TEST_CASE("citygml: one rectangular wall ring gives 4 vertices, 2 triangles") {
    const auto doc = wrap_rings({"0 0 0 4 0 0 4 0 3 0 0 3"});
    const TriangleMesh mesh = parse_citygml_subset(doc);
    CHECK(mesh.vertices.size() == 4);
    CHECK(mesh.triangles.size() == 2);
    CHECK(mesh.total_area() == doctest::Approx(12.0));
}

TEST_CASE("citygml: closing vertex of a ring is dropped") {
    const auto doc = wrap_rings({"0 0 0 4 0 0 4 0 3 0 0 3 0 0 0"});
    const TriangleMesh mesh = parse_citygml_subset(doc);
    CHECK(mesh.vertices.size() == 4);
    CHECK(mesh.triangles.size() == 2);
}

TEST_CASE("citygml: document with zero building elements parses to an empty mesh") {
    const TriangleMesh mesh = parse_citygml_subset("<CityModel></CityModel>");
    CHECK(mesh.vertices.empty());
    CHECK(mesh.triangles.empty());
}

TEST_CASE("citygml: two-building fixture, 12 faces -> 24 triangles, exact area") {
    // 4 walls + roof + floor per building
    auto fmt = [](double x, double y, double z) {
        std::ostringstream os;
        os << x << " " << y << " " << z;
        return os.str();
    };
    auto floor_ring = [&](double cx, double cy, double hx, double hy, double z) {
        const double x0 = cx - hx, x1 = cx + hx, y0 = cy - hy, y1 = cy + hy;
        return fmt(x0, y0, z) + " " + fmt(x0, y1, z) + " " + fmt(x1, y1, z) + " " +
               fmt(x1, y0, z) + " " + fmt(x0, y0, z);
    };
    auto rings = box_rings(0.0, 0.0, 2.0, 3.0, 10.0, 14.0, true);   // 4x6 footprint, height 4
    rings.push_back(floor_ring(0.0, 0.0, 2.0, 3.0, 10.0));
    auto more = box_rings(20.0, 5.0, 1.5, 2.5, 10.0, 15.0, true);   // 3x5 footprint, height 5
    more.push_back(floor_ring(20.0, 5.0, 1.5, 2.5, 10.0));
    rings.insert(rings.end(), more.begin(), more.end());
    REQUIRE(rings.size() == 12);

    const TriangleMesh mesh = parse_citygml_subset(wrap_rings(rings));
    CHECK(mesh.triangles.size() == 24);

    // independent area oracle: rectangle sides from the fixture parameters
    const double expected = (2 * 4.0 * 4 + 2 * 6.0 * 4) + 2 * (4.0 * 6.0) +
                            (2 * 3.0 * 5 + 2 * 5.0 * 5) + 2 * (3.0 * 5.0);
    CHECK(mesh.total_area() == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("citygml: ring with <3 distinct vertices is skipped and counted") {
    IngestWarnings warnings;
    const auto doc = wrap_rings({"0 0 0 1 0 0", "0 0 0 1 0 0 1 1 0"});
    const TriangleMesh mesh = parse_citygml_subset(doc, &warnings);
    CHECK(warnings.skipped_rings == 1);
    CHECK(mesh.triangles.size() == 1);
}

TEST_CASE("citygml: coordinate count not divisible by 3 names the element") {
    const auto doc = wrap_rings({"0 0 0 1 0"});
    CHECK_THROWS_WITH_AS(parse_citygml_subset(doc),
                         doctest::Contains("not divisible by 3"), ParseError);
}

TEST_CASE("citygml: interior rings and xlink references are rejected") {
    const std::string interior =
        "<a><gml:Polygon><gml:interior><gml:LinearRing><gml:posList>0 0 0</gml:posList>"
        "</gml:LinearRing></gml:interior></gml:Polygon></a>";
    CHECK_THROWS_WITH_AS(parse_citygml_subset(interior), doctest::Contains("interior"),
                         ParseError);
    const std::string xlink = "<a><gml:surfaceMember xlink:href=\"#other\"/></a>";
    CHECK_THROWS_WITH_AS(parse_citygml_subset(xlink), doctest::Contains("xlink"), ParseError);
}

TEST_CASE("mesh text format round-trips exactly") {
    const auto doc = wrap_rings({"0.125 0 0 4.75 0 0 4.75 0 3.5 0.125 0 3.5"});
    const TriangleMesh mesh = parse_citygml_subset(doc);
    const TriangleMesh back = mesh_from_text(mesh_to_text(mesh));
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    REQUIRE(back.triangles.size() == mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        CHECK((back.vertices[i] - mesh.vertices[i]).norm() == 0.0);
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
        CHECK(back.triangles[i] == mesh.triangles[i]);
}

TEST_CASE("dem: 2x2 grid at 1 m pitch") {
    const DemGrid grid = parse_dem_xyz("10 20 1\n11 20 2\n10 21 3\n11 21 4\n");
    CHECK(grid.ncols == 2);
    CHECK(grid.nrows == 2);
    CHECK(grid.spacing == doctest::Approx(1.0));
    CHECK(grid.height_at(0, 0) == 1.0);
    CHECK(grid.height_at(1, 0) == 2.0);
    CHECK(grid.height_at(0, 1) == 3.0);
    CHECK(grid.height_at(1, 1) == 4.0);
}

TEST_CASE("dem: single line defaults to 1 m spacing with a warning") {
    IngestWarnings warnings;
    const DemGrid grid = parse_dem_xyz("5 6 7\n", &warnings);
    CHECK(grid.ncols == 1);
    CHECK(grid.nrows == 1);
    CHECK(grid.spacing == 1.0);
    CHECK(warnings.default_spacing);
}

TEST_CASE("dem: 3x3 grid with one missing cell tracks no-data") {
    std::string doc;
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            if (x == 1 && y == 1) continue;
            doc += std::to_string(x) + " " + std::to_string(y) + " 1.5\n";
        }
    const DemGrid grid = parse_dem_xyz(doc);
    CHECK(grid.valid_count() == 8);
    CHECK(!grid.is_valid(1, 1));
}

TEST_CASE("dem: inconsistent pitch and non-numeric tokens are parse errors") {
    CHECK_THROWS_AS(parse_dem_xyz("0 0 1\n1 0 1\n2.5001 0 1\n"), ParseError);
    try {
        parse_dem_xyz("0 0 1\nx 0 1\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("dem: parse is order-insensitive") {
    std::vector<std::string> lines;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
            lines.push_back(std::to_string(100 + x) + " " + std::to_string(200 + y) + " " +
                            std::to_string(0.25 * x + 0.5 * y));
    std::string forward, shuffled;
    for (const auto& l : lines) forward += l + "\n";
    std::mt19937 rng(7);
    std::shuffle(lines.begin(), lines.end(), rng);
    for (const auto& l : lines) shuffled += l + "\n";

    const DemGrid a = parse_dem_xyz(forward);
    const DemGrid b = parse_dem_xyz(shuffled);
    CHECK(a.origin == b.origin);
    CHECK(a.ncols == b.ncols);
    CHECK(a.nrows == b.nrows);
    CHECK(a.heights == b.heights);
    CHECK(a.valid == b.valid);
}
