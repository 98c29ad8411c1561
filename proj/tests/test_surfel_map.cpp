#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>

#include "georef/surfel_map.hpp"

using namespace georef;

namespace {
std::mt19937_64 rng(7);
double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}
}  // namespace

TEST_CASE("coplanar points in one voxel yield one surfel with the plane normal") {
    std::vector<Vec3> points;
    for (int i = 0; i < 10; ++i)
        points.emplace_back(uniform(0.05, 0.45), uniform(0.05, 0.45), 0.2);  // z = 0.2 plane
    SurfelMapParams params;
    params.coarsest_voxel = 0.5;
    params.finest_voxel = 0.5;
    const SurfelMap map = build_surfel_map(points, params);
    REQUIRE(map.levels.size() == 1);
    REQUIRE(map.levels[0].surfels.size() == 1);
    const Surfel& s = map.levels[0].surfels[0];
    CHECK(s.count == 10);
    CHECK(std::abs(s.normal.dot(Vec3::UnitZ())) == doctest::Approx(1.0));
    CHECK(s.min_eigenvalue < 1e-12);
}

TEST_CASE("voxels below min_points are omitted") {
    std::vector<Vec3> points;
    for (int i = 0; i < 5; ++i) points.emplace_back(0.1 * i, 0.0, 0.0);
    SurfelMapParams params;
    params.coarsest_voxel = 2.0;
    params.finest_voxel = 2.0;
    params.min_points = 6;
    CHECK(build_surfel_map(points, params).empty());
}

TEST_CASE("per-voxel statistics match a brute-force grouping oracle") {
    std::vector<Vec3> points;
    points.reserve(1000);
    for (int i = 0; i < 1000; ++i)
        points.emplace_back(uniform(-4, 4), uniform(-4, 4), uniform(-4, 4));
    SurfelMapParams params;
    params.coarsest_voxel = 2.0;
    params.finest_voxel = 1.0;
    const SurfelMap map = build_surfel_map(points, params, 1);
    REQUIRE(map.levels.size() == 2);

    for (const auto& level : map.levels) {
        // oracle: independent floor-grouping and two-pass statistics
        std::map<std::array<std::int64_t, 3>, std::vector<Vec3>> groups;
        for (const auto& p : points) {
            std::array<std::int64_t, 3> key;
            for (int a = 0; a < 3; ++a)
                key[a] = static_cast<std::int64_t>(std::floor(p[a] / level.voxel_size));
            groups[key].push_back(p);
        }
        std::size_t expected_surfels = 0;
        for (const auto& [key, members] : groups) {
            if (members.size() < params.min_points) continue;
            ++expected_surfels;
            const Surfel* s = level.find(pack_voxel(key[0], key[1], key[2]));
            REQUIRE(s != nullptr);
            Vec3 mean = Vec3::Zero();
            for (const auto& p : members) mean += p;
            mean /= static_cast<double>(members.size());
            Mat3 cov = Mat3::Zero();
            for (const auto& p : members) cov += (p - mean) * (p - mean).transpose();
            cov /= static_cast<double>(members.size() - 1);
            CHECK((s->mean - mean).norm() < 1e-10);
            CHECK((s->covariance - cov).norm() < 1e-10);
            CHECK(s->count == members.size());
            // normal is a unit eigenvector of the smallest eigenvalue
            CHECK(s->normal.norm() == doctest::Approx(1.0));
            CHECK((cov * s->normal - s->min_eigenvalue * s->normal).norm() < 1e-8);
        }
        CHECK(level.surfels.size() == expected_surfels);

        // every mean lies inside its voxel
        for (std::size_t i = 0; i < level.surfels.size(); ++i) {
            const Vec3& m = level.surfels[i].mean;
            CHECK(voxel_key_of(m, level.voxel_size) == level.keys[i]);
        }
    }
}

TEST_CASE("build is thread-count invariant") {
    std::vector<Vec3> points;
    for (int i = 0; i < 3000; ++i)
        points.emplace_back(uniform(-10, 10), uniform(-10, 10), uniform(-2, 2));
    SurfelMapParams params;
    const SurfelMap a = build_surfel_map(points, params, 1);
    const SurfelMap b = build_surfel_map(points, params, 4);
    REQUIRE(a.levels.size() == b.levels.size());
    for (std::size_t l = 0; l < a.levels.size(); ++l) {
        REQUIRE(a.levels[l].keys == b.levels[l].keys);
        for (std::size_t i = 0; i < a.levels[l].surfels.size(); ++i) {
            CHECK(a.levels[l].surfels[i].mean == b.levels[l].surfels[i].mean);
            CHECK(a.levels[l].surfels[i].covariance == b.levels[l].surfels[i].covariance);
        }
    }
}

TEST_CASE("transformed() moves statistics rigidly") {
    std::vector<Vec3> points;
    for (int i = 0; i < 200; ++i)
        points.emplace_back(uniform(0, 2), uniform(0, 2), uniform(0, 0.3));
    SurfelMapParams params;
    params.coarsest_voxel = 1.0;
    params.finest_voxel = 1.0;
    const SurfelMap map = build_surfel_map(points, params);
    const SE3 pose(so3_exp<double>(Vec3(0.1, -0.2, 0.7)), Vec3(3, -1, 2));
    const SurfelMap moved = map.transformed(pose);
    const Mat3 rot = pose.rotation_matrix();
    for (std::size_t l = 0; l < map.levels.size(); ++l)
        for (std::size_t i = 0; i < map.levels[l].surfels.size(); ++i) {
            const Surfel& a = map.levels[l].surfels[i];
            const Surfel& b = moved.levels[l].surfels[i];
            CHECK((b.mean - (pose * a.mean)).norm() < 1e-12);
            CHECK((b.covariance - rot * a.covariance * rot.transpose()).norm() < 1e-12);
            CHECK((b.normal - rot * a.normal).norm() < 1e-12);
        }
}
