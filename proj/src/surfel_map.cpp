#include "georef/surfel_map.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "georef/parallel.hpp"

namespace georef {

namespace {
constexpr std::uint64_t kCoordMask = (1ull << 21) - 1;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t pack_voxel(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
    return (static_cast<std::uint64_t>(ix) & kCoordMask) |
           ((static_cast<std::uint64_t>(iy) & kCoordMask) << 21) |
           ((static_cast<std::uint64_t>(iz) & kCoordMask) << 42);
}

std::uint64_t voxel_key_of(const Vec3& p, double voxel_size) {
    const auto ix = static_cast<std::int64_t>(std::floor(p.x() / voxel_size));
    const auto iy = static_cast<std::int64_t>(std::floor(p.y() / voxel_size));
    const auto iz = static_cast<std::int64_t>(std::floor(p.z() / voxel_size));
    return pack_voxel(ix, iy, iz);
}

void VoxelIndex::build(const std::vector<std::uint64_t>& keys) {
    size_ = keys.size();
    std::size_t cap = 16;
    while (cap < keys.size() * 2) cap <<= 1;
    mask_ = cap - 1;
    slots_.assign(cap, 0);
    values_.assign(cap, 0);
    used_.assign(cap, 0);
    for (std::uint32_t i = 0; i < keys.size(); ++i) {
        std::size_t slot = splitmix64(keys[i]) & mask_;
        while (used_[slot]) slot = (slot + 1) & mask_;
        slots_[slot] = keys[i];
        values_[slot] = i;
        used_[slot] = 1;
    }
}

std::optional<std::uint32_t> VoxelIndex::find(std::uint64_t key) const {
    if (size_ == 0) return std::nullopt;
    std::size_t slot = splitmix64(key) & mask_;
    while (used_[slot]) {
        if (slots_[slot] == key) return values_[slot];
        slot = (slot + 1) & mask_;
    }
    return std::nullopt;
}

std::vector<double> SurfelMapParams::level_sizes() const {
    std::vector<double> sizes;
    for (double s = coarsest_voxel; s > finest_voxel * (1.0 + 1e-9); s *= 0.5)
        sizes.push_back(s);
    sizes.push_back(finest_voxel);
    return sizes;
}

std::size_t SurfelMap::total_surfels() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.surfels.size();
    return n;
}

SurfelMap SurfelMap::transformed(const SE3& pose) const {
    SurfelMap out;
    out.levels.resize(levels.size());
    const Mat3 rot = pose.rotation_matrix();
    for (std::size_t li = 0; li < levels.size(); ++li) {
        const auto& src = levels[li];
        auto& dst = out.levels[li];
        dst.voxel_size = src.voxel_size;
        dst.surfels.reserve(src.surfels.size());
        dst.keys.reserve(src.surfels.size());
        for (const auto& s : src.surfels) {
            Surfel moved = s;
            moved.mean = pose * s.mean;
            moved.covariance = rot * s.covariance * rot.transpose();
            moved.normal = rot * s.normal;
            dst.keys.push_back(voxel_key_of(moved.mean, dst.voxel_size));
            dst.surfels.push_back(moved);
        }
        dst.index.build(dst.keys);
    }
    return out;
}

namespace {

void set_canonical_sign(Vec3& n) {
    if (n.z() < 0.0 || (n.z() == 0.0 && (n.y() < 0.0 || (n.y() == 0.0 && n.x() < 0.0))))
        n = -n;
}

}  // namespace

SurfelMap build_surfel_map(const std::vector<Vec3>& points, const SurfelMapParams& params,
                           int threads) {
    SurfelMap map;
    for (const double voxel_size : params.level_sizes()) {
        SurfelLevel level;
        level.voxel_size = voxel_size;

        std::vector<std::pair<std::uint64_t, std::uint32_t>> order(points.size());
        for (std::uint32_t i = 0; i < points.size(); ++i)
            order[i] = {voxel_key_of(points[i], voxel_size), i};
        std::sort(order.begin(), order.end());

        // group boundaries for voxels meeting the point threshold
        struct Group {
            std::size_t begin, end;
            std::uint64_t key;
        };
        std::vector<Group> groups;
        std::size_t begin = 0;
        while (begin < order.size()) {
            std::size_t end = begin + 1;
            while (end < order.size() && order[end].first == order[begin].first) ++end;
            if (end - begin >= params.min_points)
                groups.push_back({begin, end, order[begin].first});
            begin = end;
        }

        level.keys.resize(groups.size());
        level.surfels.resize(groups.size());
        parallel_for(static_cast<std::int64_t>(groups.size()), threads, [&](std::int64_t gi) {
            const Group& g = groups[gi];
            Vec3 mean = Vec3::Zero();
            for (std::size_t k = g.begin; k < g.end; ++k) mean += points[order[k].second];
            const double n = static_cast<double>(g.end - g.begin);
            mean /= n;
            Mat3 cov = Mat3::Zero();
            for (std::size_t k = g.begin; k < g.end; ++k) {
                const Vec3 d = points[order[k].second] - mean;
                cov += d * d.transpose();
            }
            cov /= (n - 1.0);
            Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
            Surfel s;
            s.mean = mean;
            s.covariance = cov;
            s.count = static_cast<std::uint32_t>(g.end - g.begin);
            s.min_eigenvalue = eig.eigenvalues()[0];
            s.normal = eig.eigenvectors().col(0);
            set_canonical_sign(s.normal);
            level.keys[gi] = g.key;
            level.surfels[gi] = s;
        });
        level.index.build(level.keys);
        map.levels.push_back(std::move(level));
    }
    return map;
}

}  // namespace georef
