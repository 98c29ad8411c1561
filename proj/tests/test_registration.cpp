#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "georef/registration.hpp"

using namespace georef;

namespace {

std::mt19937_64 rng(31);
double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Two perpendicular walls plus ground, fully constrained geometry. All
// coordinates are binary fractions offset from every voxel-size boundary so
// that lattice translations keep the voxel binning bit-exact.
std::vector<Vec3> corner_scene_points() {
    std::vector<Vec3> points;
    for (int a = 0; a <= 96; ++a)
        for (int k = 0; k <= 48; ++k) {
            const double along = 0.0625 + a * 0.125;
            const double z = 0.0625 + k * 0.125;
            points.emplace_back(along, 0.0625, z);  // wall along x
            points.emplace_back(0.0625, along, z);  // wall along y
        }
    for (int x = 0; x <= 48; ++x)
        for (int y = 0; y <= 48; ++y)
            points.emplace_back(0.0625 + x * 0.25, 0.0625 + y * 0.25, 0.0625);
    return points;
}

std::vector<Vec3> single_wall_points() {
    std::vector<Vec3> points;
    for (double x = -8.0; x <= 8.0; x += 0.1)
        for (double z = 0.0; z <= 5.0; z += 0.1) points.emplace_back(x, 0.0, z);
    return points;
}

SurfelMapParams map_params() {
    SurfelMapParams p;
    p.coarsest_voxel = 4.0;
    p.finest_voxel = 0.5;
    return p;
}

}  // namespace

TEST_CASE("self-registration from identity stays at identity with ~zero cost") {
    const auto points = corner_scene_points();
    const SurfelMap map = build_surfel_map(points, map_params());
    const RegistrationResult result =
        register_surfel_maps(map, map, SE3::identity(), RegistrationParams{});
    CHECK(result.converged);
    CHECK(result.final_cost < 1e-16);
    CHECK(result.pose.t.norm() < 1e-9);
    CHECK(result.pose.rotation_angle() < 1e-9);
}

TEST_CASE("corner scene: known shift (1.2, -0.8, 0.3) is recovered within 5 cm") {
    const auto points = corner_scene_points();
    const SurfelMap target = build_surfel_map(points, map_params());
    const SE3 truth(Vec4(1, 0, 0, 0), Vec3(1.2, -0.8, 0.3));
    std::vector<Vec3> moved;
    moved.reserve(points.size());
    for (const auto& p : points) moved.push_back(truth.inverse() * p);
    const SurfelMap source = build_surfel_map(moved, map_params());

    const RegistrationResult result =
        register_surfel_maps(source, target, SE3::identity(), RegistrationParams{});
    CHECK(result.converged);
    CHECK((result.pose.t - truth.t).norm() < 0.05);
    CHECK(result.cond_local_to_model < 100.0);
    CHECK(result.cond_model_to_local < 100.0);
}

TEST_CASE("accepted step costs never increase within an iteration") {
    const auto points = corner_scene_points();
    const SurfelMap target = build_surfel_map(points, map_params());
    const SE3 init(so3_exp<double>(Vec3(0, 0, 0.05)), Vec3(0.8, -0.5, 0.2));
    const RegistrationResult result =
        register_surfel_maps(target.transformed(init.inverse()), target, SE3::identity(),
                             RegistrationParams{});
    REQUIRE(result.cost_history.size() % 2 == 0);
    REQUIRE(!result.cost_history.empty());
    for (std::size_t i = 0; i < result.cost_history.size(); i += 2)
        CHECK(result.cost_history[i + 1] <= result.cost_history[i] + 1e-15);
}

TEST_CASE("single planar direction drives at least one condition number above 1e3") {
    const auto points = single_wall_points();
    const SurfelMap map = build_surfel_map(points, map_params());
    const RegistrationResult result =
        register_surfel_maps(map, map, SE3::identity(), RegistrationParams{});
    CHECK(std::max(result.cond_local_to_model, result.cond_model_to_local) > 1e3);
}

TEST_CASE("too few matches flags a non-converged result") {
    std::vector<Vec3> far_points;
    for (int i = 0; i < 50; ++i) far_points.emplace_back(uniform(500, 510), uniform(500, 510), 0);
    const SurfelMap a = build_surfel_map(corner_scene_points(), map_params());
    const SurfelMap b = build_surfel_map(far_points, map_params());
    const RegistrationResult result =
        register_surfel_maps(b, a, SE3::identity(), RegistrationParams{});
    CHECK(!result.converged);
    CHECK(result.matched_surfel_count < RegistrationParams{}.min_matches);
}

TEST_CASE("equivariance: transforming source and initial transforms the result") {
    const auto points = corner_scene_points();
    const SurfelMap target = build_surfel_map(points, map_params());
    const SE3 perturb(so3_exp<double>(Vec3(0, 0, 0.04)), Vec3(0.6, -0.4, 0.15));
    const SurfelMap source = target.transformed(perturb);

    RegistrationParams params;
    params.update_tolerance = 1e-10;  // tighter than the checked tolerance
    const RegistrationResult base =
        register_surfel_maps(source, target, SE3::identity(), params);
    REQUIRE(base.converged);

    const SE3 motion(so3_exp<double>(Vec3(0.0, 0.0, 0.5)), Vec3(4.0, -2.0, 1.0));
    const SurfelMap moved_source = source.transformed(motion);
    const RegistrationResult moved =
        register_surfel_maps(moved_source, target, base.pose * motion.inverse(), params);
    REQUIRE(moved.converged);
    const SE3 expected = base.pose * motion.inverse();
    CHECK((moved.pose.t - expected.t).norm() < 1e-6);

    // condition numbers are invariant when both maps move together; with a
    // grid-quantized association this is exact for lattice translations and
    // holds up to association discretization for generic motion
    const SE3 lattice_motion(quat_identity<double>(), Vec3(8.0, -4.0, 4.0));
    const RegistrationResult both = register_surfel_maps(
        source.transformed(lattice_motion), target.transformed(lattice_motion),
        lattice_motion * base.pose * lattice_motion.inverse(), params);
    REQUIRE(both.converged);
    CHECK(both.cond_local_to_model ==
          doctest::Approx(base.cond_local_to_model).epsilon(1e-6));
    CHECK(both.cond_model_to_local ==
          doctest::Approx(base.cond_model_to_local).epsilon(1e-6));

    // generic rigid motion with maps rebuilt from the moved points: the
    // condition numbers agree up to voxel-partition differences
    RegistrationParams loose = params;
    loose.update_tolerance = 1e-6;
    std::vector<Vec3> moved_target_pts, moved_source_pts;
    const SE3 source_motion = motion * perturb;
    for (const auto& p : points) {
        moved_target_pts.push_back(motion * p);
        moved_source_pts.push_back(source_motion * p);
    }
    const SurfelMap tgt2 = build_surfel_map(moved_target_pts, map_params());
    const SurfelMap src2 = build_surfel_map(moved_source_pts, map_params());
    const RegistrationResult generic =
        register_surfel_maps(src2, tgt2, motion * base.pose * motion.inverse(), loose);
    REQUIRE(generic.converged);
    CHECK(generic.cond_local_to_model ==
          doctest::Approx(base.cond_local_to_model).epsilon(0.10));
    CHECK(generic.cond_model_to_local ==
          doctest::Approx(base.cond_model_to_local).epsilon(0.10));
}
