#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "georef/common.hpp"
#include "georef/lie.hpp"

namespace georef {

// Gaussian surface element: second-order statistics of the points that fell
// into one voxel, with the plane normal taken from the smallest covariance
// eigenvector.
struct Surfel {
    Vec3 mean = Vec3::Zero();
    Mat3 covariance = Mat3::Zero();
    Vec3 normal = Vec3::UnitZ();
    std::uint32_t count = 0;
    double min_eigenvalue = 0.0;
};

// Signed 21-bit voxel coordinates packed into one key.
std::uint64_t pack_voxel(std::int64_t ix, std::int64_t iy, std::int64_t iz);
std::uint64_t voxel_key_of(const Vec3& p, double voxel_size);

// Open-addressing map voxel key -> surfel index; iteration order is never
// taken from the table (the sorted key array is canonical).
class VoxelIndex {
public:
    void build(const std::vector<std::uint64_t>& keys);
    std::optional<std::uint32_t> find(std::uint64_t key) const;
    bool empty() const { return size_ == 0; }

private:
    std::vector<std::uint64_t> slots_;
    std::vector<std::uint32_t> values_;
    std::vector<std::uint8_t> used_;
    std::size_t mask_ = 0;
    std::size_t size_ = 0;
};

struct SurfelLevel {
    double voxel_size = 0.0;
    std::vector<std::uint64_t> keys;  // sorted, parallel to surfels
    std::vector<Surfel> surfels;
    VoxelIndex index;

    const Surfel* find(std::uint64_t key) const {
        const auto idx = index.find(key);
        return idx ? &surfels[*idx] : nullptr;
    }
};

struct SurfelMapParams {
    double coarsest_voxel = 4.0;
    double finest_voxel = 0.5;
    std::uint32_t min_points = 6;

    // dyadic sizes from coarsest down to finest
    std::vector<double> level_sizes() const;
};

struct SurfelMap {
    std::vector<SurfelLevel> levels;  // coarse to fine

    std::size_t total_surfels() const;
    bool empty() const { return total_surfels() == 0; }

    // Rotates/translates every surfel's statistics; voxel keys and lookup
    // tables are rebuilt from the moved means.
    SurfelMap transformed(const SE3& pose) const;
};

SurfelMap build_surfel_map(const std::vector<Vec3>& points, const SurfelMapParams& params,
                           int threads = 1);

}  // namespace georef
