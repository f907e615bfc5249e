// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/world_model.hpp"

#include "hallucam/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace hallucam {

namespace {

constexpr std::size_t kHeaderBytes = 3 * 8 + 8 + 3 * 4;
constexpr std::size_t kMaxVoxels = std::size_t{1} << 34;

template <typename T> void putLE(std::vector<std::uint8_t> &out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T> T getLE(std::span<const std::uint8_t> in, std::size_t &off) {
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

} // namespace

OccupancyGrid::OccupancyGrid(const Eigen::Vector3d &origin, double voxelSize,
                             const std::array<std::uint32_t, 3> &dims)
    : mOrigin(origin), mVoxelSize(voxelSize), mDims(dims) {
    if (!(voxelSize > 0.0) || !std::isfinite(voxelSize)) {
        throw std::invalid_argument("voxel_size must be positive");
    }
    if (!origin.allFinite()) {
        throw std::invalid_argument("grid origin must be finite");
    }
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
        throw std::invalid_argument("grid dims must be at least 1 on every axis");
    }
    const std::size_t n = voxelCount();
    if (n > kMaxVoxels) {
        throw std::invalid_argument("grid too large: " + std::to_string(n) + " voxels");
    }
    mBits.assign((n + 63) / 64, 0);
}

std::size_t OccupancyGrid::voxelCount() const {
    return static_cast<std::size_t>(mDims[0]) * mDims[1] * mDims[2];
}

std::size_t OccupancyGrid::occupiedCount() const {
    std::size_t n = 0;
    for (auto w : mBits) {
        n += static_cast<std::size_t>(std::popcount(w));
    }
    return n;
}

bool OccupancyGrid::inBounds(const VoxelIndex &v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < mDims[0] && v.y < mDims[1] && v.z < mDims[2];
}

std::optional<VoxelIndex> OccupancyGrid::voxelOf(const Eigen::Vector3d &p) const {
    const Eigen::Vector3d rel = (p - mOrigin) / mVoxelSize;
    if (!rel.allFinite()) {
        return std::nullopt;
    }
    const Eigen::Vector3d f = rel.array().floor();
    if ((f.array() < 0.0).any() || f.x() >= mDims[0] || f.y() >= mDims[1] || f.z() >= mDims[2]) {
        return std::nullopt;
    }
    return VoxelIndex{static_cast<std::int64_t>(f.x()), static_cast<std::int64_t>(f.y()),
                      static_cast<std::int64_t>(f.z())};
}

Eigen::Vector3d OccupancyGrid::voxelCenter(const VoxelIndex &v) const {
    return mOrigin + mVoxelSize * Eigen::Vector3d(static_cast<double>(v.x) + 0.5, static_cast<double>(v.y) + 0.5,
                                                  static_cast<double>(v.z) + 0.5);
}

std::size_t OccupancyGrid::linearIndex(const VoxelIndex &v) const {
    return static_cast<std::size_t>(v.x) +
           static_cast<std::size_t>(mDims[0]) *
               (static_cast<std::size_t>(v.y) + static_cast<std::size_t>(mDims[1]) * static_cast<std::size_t>(v.z));
}

bool OccupancyGrid::occupied(const VoxelIndex &v) const {
    if (!inBounds(v)) {
        return false;
    }
    const std::size_t i = linearIndex(v);
    return (mBits[i >> 6] >> (i & 63)) & 1u;
}

void OccupancyGrid::setOccupied(const VoxelIndex &v, bool value) {
    if (!inBounds(v)) {
        throw std::out_of_range("voxel index outside grid");
    }
    const std::size_t i = linearIndex(v);
    const std::uint64_t mask = std::uint64_t{1} << (i & 63);
    if (value) {
        mBits[i >> 6] |= mask;
    } else {
        mBits[i >> 6] &= ~mask;
    }
}

std::vector<std::uint8_t> OccupancyGrid::serialize() const {
    static_assert(std::endian::native == std::endian::little, "grid export assumes a little-endian host");
    std::vector<std::uint8_t> out;
    const std::size_t n = voxelCount();
    out.reserve(kHeaderBytes + (n + 7) / 8);
    for (int k = 0; k < 3; ++k) {
        putLE<double>(out, mOrigin[k]);
    }
    putLE<double>(out, mVoxelSize);
    for (auto d : mDims) {
        putLE<std::uint32_t>(out, d);
    }
    const std::size_t base = out.size();
    out.resize(base + (n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if ((mBits[i >> 6] >> (i & 63)) & 1u) {
            out[base + (i >> 3)] |= static_cast<std::uint8_t>(1u << (i & 7));
        }
    }
    return out;
}

OccupancyGrid OccupancyGrid::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes) {
        throw LengthError("grid file shorter than its header");
    }
    std::size_t off = 0;
    Eigen::Vector3d origin;
    for (int k = 0; k < 3; ++k) {
        origin[k] = getLE<double>(bytes, off);
    }
    const double vs = getLE<double>(bytes, off);
    std::array<std::uint32_t, 3> dims{};
    for (auto &d : dims) {
        d = getLE<std::uint32_t>(bytes, off);
    }
    OccupancyGrid grid(origin, vs, dims);
    const std::size_t n = grid.voxelCount();
    if (bytes.size() != kHeaderBytes + (n + 7) / 8) {
        throw LengthError("grid payload length does not match dims");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if ((bytes[kHeaderBytes + (i >> 3)] >> (i & 7)) & 1u) {
            grid.mBits[i >> 6] |= std::uint64_t{1} << (i & 63);
        }
    }
    return grid;
}

void OccupancyGrid::save(const std::filesystem::path &path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

OccupancyGrid OccupancyGrid::load(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open grid file '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

OccupancyGrid buildGrid(std::span<const Eigen::Vector3d> points, double voxelSize, double padding) {
    if (points.empty()) {
        throw InsufficientDataError("cannot build an occupancy grid from an empty point list");
    }
    if (!(voxelSize > 0.0)) {
        throw std::invalid_argument("voxel_size must be positive");
    }
    if (!(padding >= 0.0)) {
        throw std::invalid_argument("padding must be non-negative");
    }
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (const auto &p : points) {
        if (!p.allFinite()) {
            throw std::invalid_argument("point cloud contains a non-finite point");
        }
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    lo.array() -= padding;
    hi.array() += padding;
    std::array<std::uint32_t, 3> dims{};
    for (int k = 0; k < 3; ++k) {
        const double cells = std::floor((hi[k] - lo[k]) / voxelSize) + 1.0;
        if (cells > std::numeric_limits<std::uint32_t>::max()) {
            throw std::invalid_argument("grid extent too large for voxel size");
        }
        dims[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(cells);
    }
    OccupancyGrid grid(lo, voxelSize, dims);
    for (const auto &p : points) {
        VoxelIndex v;
        std::int64_t *c[3] = {&v.x, &v.y, &v.z};
        for (int k = 0; k < 3; ++k) {
            const auto i = static_cast<std::int64_t>(std::floor((p[k] - lo[k]) / voxelSize));
            *c[k] = std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(dims[static_cast<std::size_t>(k)]) - 1);
        }
        grid.setOccupied(v);
    }
    return grid;
}

bool checkCollision(const OccupancyGrid &grid, const Eigen::Vector3d &center, double radius) {
    if (!(radius > 0.0)) {
        throw std::invalid_argument("collision radius must be positive");
    }
    const double vs = grid.voxelSize();
    const Eigen::Vector3d &o = grid.origin();
    // Voxel i has its centre at o + (i + 0.5) vs; keep i whose centre lies in [c - r, c + r].
    std::int64_t lo[3], hi[3];
    for (int k = 0; k < 3; ++k) {
        const double a = std::ceil((center[k] - radius - o[k]) / vs - 0.5 - 1e-9);
        const double b = std::floor((center[k] + radius - o[k]) / vs - 0.5 + 1e-9);
        const double maxIdx = static_cast<double>(grid.dims()[static_cast<std::size_t>(k)]) - 1.0;
        const double ca = std::max(a, 0.0);
        const double cb = std::min(b, maxIdx);
        if (!(ca <= cb)) {
            return false;
        }
        lo[k] = static_cast<std::int64_t>(ca);
        hi[k] = static_cast<std::int64_t>(cb);
    }
    const double r2 = radius * radius;
    for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
            for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
                const VoxelIndex v{x, y, z};
                if (grid.occupied(v) && (grid.voxelCenter(v) - center).squaredNorm() <= r2) {
                    return true;
                }
            }
        }
    }
    return false;
}

void Geofence::validate() const {
    if (!min.allFinite() || !max.allFinite() || !(min.array() < max.array()).all()) {
        throw std::invalid_argument("geofence: require min < max componentwise");
    }
}

GeofenceStatus checkGeofence(const Geofence &fence, const Eigen::Vector3d &p) {
    for (int k = 0; k < 3; ++k) {
        if (!(p[k] >= fence.min[k] && p[k] <= fence.max[k])) {
            return GeofenceStatus::Violation;
        }
    }
    return GeofenceStatus::Inside;
}

} // namespace hallucam
