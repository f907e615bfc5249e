// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hallucam {

struct TrajectorySample {
    std::uint64_t tNs = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Timestamped poses with strictly increasing stamps and at least two samples.
class Trajectory {
public:
    /// Throws InsufficientDataError (< 2 samples) or DataError (non-increasing
    /// stamp or non-finite value; index names the sample).
    explicit Trajectory(std::vector<TrajectorySample> samples);

    const std::vector<TrajectorySample> &samples() const { return mSamples; }
    std::size_t size() const { return mSamples.size(); }
    const TrajectorySample &operator[](std::size_t i) const { return mSamples[i]; }

private:
    std::vector<TrajectorySample> mSamples;
};

inline constexpr const char *kTrajectoryCsvHeader = "t_ns,x,y,z,qw,qx,qy,qz";

/// Header line is optional. Malformed rows throw DataError whose index is the
/// 1-based line number.
Trajectory parseTrajectoryCsv(const std::string &text);
Trajectory readTrajectoryCsv(const std::filesystem::path &path);
std::string formatTrajectoryCsv(const Trajectory &traj);
void writeTrajectoryCsv(const std::filesystem::path &path, const Trajectory &traj);

/// (estimate index, ground-truth index)
using IndexPair = std::pair<std::size_t, std::size_t>;

/// One-to-one timestamp matching: candidate pairs with |dt| <= maxDtS are
/// accepted greedily from the smallest |dt| (ties by estimate then gt index).
/// Result is ordered by estimate index. Throws InsufficientDataError below 3 pairs.
std::vector<IndexPair> associate(const Trajectory &est, const Trajectory &gt, double maxDtS);

struct Similarity3 {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double scale = 1.0;

    Eigen::Vector3d apply(const Eigen::Vector3d &p) const { return scale * (rotation * p) + translation; }
};

/// Least-squares dst ~ s R src + t with det R = +1. Throws DegeneracyError on
/// fewer than 3 pairs, mismatched sizes, or (near-)collinear configurations.
Similarity3 umeyamaAlign(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst, bool withScale);

struct AteReport {
    double rmseM = 0.0;
    double maxM = 0.0;
    double meanM = 0.0;
    std::size_t nPairs = 0;
    Similarity3 alignment;

    std::string toJson() const;
};

/// Default association tolerance.
inline constexpr double kDefaultMaxDtS = 0.02;

AteReport computeAte(const Trajectory &est, const Trajectory &gt, double maxDtS = kDefaultMaxDtS,
                     bool withScale = false);

} // namespace hallucam
