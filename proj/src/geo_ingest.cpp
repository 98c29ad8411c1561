#include "georef/geo_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "georef/io_util.hpp"
#include "georef/xml.hpp"

namespace georef {

void TriangleMesh::append(const TriangleMesh& other) {
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    triangles.reserve(triangles.size() + other.triangles.size());
    for (const auto& t : other.triangles)
        triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

std::size_t DemGrid::valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
}

namespace {

std::vector<double> parse_double_list(const std::string& text, std::int64_t element_offset,
                                      const std::string& element_name) {
    std::vector<double> out;
    const char* p = text.c_str();
    const char* end = p + text.size();
    while (p < end) {
        while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
        if (p >= end) break;
        char* next = nullptr;
        const double v = std::strtod(p, &next);
        if (next == p)
            throw ParseError("non-numeric token in <" + element_name + ">", element_offset);
        out.push_back(v);
        p = next;
    }
    return out;
}

void triangulate_ring(const std::vector<Vec3>& ring, TriangleMesh& mesh,
                      IngestWarnings& warnings) {
    // drop exact consecutive duplicates and the closing vertex
    std::vector<Vec3> pts;
    for (const auto& p : ring) {
        if (pts.empty() || (p - pts.back()).norm() > 0.0) pts.push_back(p);
    }
    if (pts.size() >= 2 && (pts.front() - pts.back()).norm() == 0.0) pts.pop_back();
    if (pts.size() < 3) {
        ++warnings.skipped_rings;
        return;
    }
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.insert(mesh.vertices.end(), pts.begin(), pts.end());
    for (std::uint32_t i = 1; i + 1 < pts.size(); ++i) {
        const Vec3 a = pts[0], b = pts[i], c = pts[i + 1];
        if (0.5 * (b - a).cross(c - a).norm() <= 0.0) continue;  // degenerate fan slice
        mesh.triangles.push_back({base, base + i, base + i + 1});
    }
}

}  // namespace

TriangleMesh parse_citygml_subset(std::string_view document, IngestWarnings* warnings) {
    IngestWarnings local;
    IngestWarnings& warn = warnings ? *warnings : local;
    const xml::Element root = xml::parse_document(document);

    TriangleMesh mesh;
    root.visit([&](const xml::Element& el) {
        if (el.local_name() == "interior")
            throw ParseError("interior rings are not supported (element <" + el.name + ">)",
                             el.byte_offset);
        if (el.attribute("href") != nullptr)
            throw ParseError("xlink references are not supported (element <" + el.name + ">)",
                             el.byte_offset);
        if (el.local_name() != "posList") return;
        const std::vector<double> coords = parse_double_list(el.text, el.byte_offset, el.name);
        if (coords.size() % 3 != 0)
            throw ParseError("coordinate count in <" + el.name + "> is not divisible by 3",
                             el.byte_offset);
        std::vector<Vec3> ring;
        ring.reserve(coords.size() / 3);
        for (std::size_t i = 0; i + 2 < coords.size(); i += 3)
            ring.emplace_back(coords[i], coords[i + 1], coords[i + 2]);
        triangulate_ring(ring, mesh, warn);
    });
    return mesh;
}

DemGrid parse_dem_xyz(std::string_view document, IngestWarnings* warnings) {
    IngestWarnings local;
    IngestWarnings& warn = warnings ? *warnings : local;

    struct Sample {
        double x, y, z;
    };
    std::vector<Sample> samples;
    std::int64_t line_no = 0;
    std::size_t pos = 0;
    while (pos < document.size()) {
        auto eol = document.find('\n', pos);
        if (eol == std::string_view::npos) eol = document.size();
        const std::string line(document.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        double vals[3];
        const char* p = line.c_str();
        for (int k = 0; k < 3; ++k) {
            char* next = nullptr;
            vals[k] = std::strtod(p, &next);
            if (next == p)
                throw ParseError("expected \"easting northing height\"", -1, line_no);
            p = next;
        }
        while (*p != '\0' && std::isspace(static_cast<unsigned char>(*p))) ++p;
        if (*p != '\0') throw ParseError("trailing tokens after height", -1, line_no);
        samples.push_back({vals[0], vals[1], vals[2]});
    }
    if (samples.empty()) throw ParseError("DEM file holds no samples");

    auto unique_sorted = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-9; }),
                v.end());
        return v;
    };
    std::vector<double> xs, ys;
    xs.reserve(samples.size());
    ys.reserve(samples.size());
    for (const auto& s : samples) {
        xs.push_back(s.x);
        ys.push_back(s.y);
    }
    xs = unique_sorted(std::move(xs));
    ys = unique_sorted(std::move(ys));

    double spacing = 0.0;
    for (const auto* axis : {&xs, &ys}) {
        for (std::size_t i = 1; i < axis->size(); ++i) {
            const double gap = (*axis)[i] - (*axis)[i - 1];
            if (gap > 1e-9 && (spacing == 0.0 || gap < spacing)) spacing = gap;
        }
    }
    if (spacing == 0.0) {
        spacing = 1.0;  // single sample; documented default
        warn.default_spacing = true;
    }

    DemGrid grid;
    grid.origin = Vec2(xs.front(), ys.front());
    grid.spacing = spacing;
    grid.ncols = static_cast<std::uint32_t>(std::llround((xs.back() - xs.front()) / spacing)) + 1;
    grid.nrows = static_cast<std::uint32_t>(std::llround((ys.back() - ys.front()) / spacing)) + 1;
    grid.heights.assign(static_cast<std::size_t>(grid.ncols) * grid.nrows, 0.0);
    grid.valid.assign(grid.heights.size(), 0);

    for (const auto& s : samples) {
        const double fc = (s.x - grid.origin.x()) / spacing;
        const double fr = (s.y - grid.origin.y()) / spacing;
        const auto col = std::llround(fc);
        const auto row = std::llround(fr);
        if (std::abs(s.x - (grid.origin.x() + col * spacing)) > 1e-6 ||
            std::abs(s.y - (grid.origin.y() + row * spacing)) > 1e-6)
            throw ParseError("sample off the inferred grid pitch " + std::to_string(spacing));
        const std::size_t idx = static_cast<std::size_t>(row) * grid.ncols + col;
        if (grid.valid[idx] && grid.heights[idx] != s.z)
            throw ParseError("duplicate grid point with conflicting heights");
        grid.heights[idx] = s.z;
        grid.valid[idx] = 1;
    }
    return grid;
}

std::string mesh_to_text(const TriangleMesh& mesh) {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "MESH %zu %zu\n", mesh.vertices.size(),
                  mesh.triangles.size());
    out += buf;
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out += buf;
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(buf, sizeof(buf), "t %u %u %u\n", t[0], t[1], t[2]);
        out += buf;
    }
    return out;
}

TriangleMesh mesh_from_text(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string tag;
    std::size_t nv = 0, nt = 0;
    if (!(is >> tag >> nv >> nt) || tag != "MESH")
        throw ParseError("mesh text: expected \"MESH <nverts> <ntris>\" header");
    TriangleMesh mesh;
    mesh.vertices.reserve(nv);
    mesh.triangles.reserve(nt);
    for (std::size_t i = 0; i < nv; ++i) {
        double x, y, z;
        if (!(is >> tag >> x >> y >> z) || tag != "v")
            throw ParseError("mesh text: bad vertex line " + std::to_string(i));
        mesh.vertices.emplace_back(x, y, z);
    }
    for (std::size_t i = 0; i < nt; ++i) {
        std::uint32_t a, b, c;
        if (!(is >> tag >> a >> b >> c) || tag != "t")
            throw ParseError("mesh text: bad triangle line " + std::to_string(i));
        if (a >= nv || b >= nv || c >= nv)
            throw ParseError("mesh text: triangle index out of range in line " +
                             std::to_string(i));
        mesh.triangles.push_back({a, b, c});
    }
    return mesh;
}

TriangleMesh load_citygml_file(const std::string& path, IngestWarnings* warnings) {
    try {
        return parse_citygml_subset(read_text_file(path), warnings);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

DemGrid load_dem_file(const std::string& path, IngestWarnings* warnings) {
    try {
        return parse_dem_xyz(read_text_file(path), warnings);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace georef
