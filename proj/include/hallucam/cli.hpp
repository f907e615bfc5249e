// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/evaluation.hpp"
#include "hallucam/renderer.hpp"
#include "hallucam/scenario.hpp"
#include "hallucam/splat_scene.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hallucam::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kInput = 2, kInsufficient = 3 };

/// Maps an in-flight exception to an exit code and prints it to err.
int reportError(std::ostream &err);

/// "synthetic:<count>[:<seed>]" builds a procedural scene, anything else is a PLY path.
SplatScene openScene(const std::string &spec);

struct ServeOptions {
    /// 0 runs until stop is set (or a signal arrives in the CLI).
    double durationS = 0.0;
    const std::atomic<bool> *stop = nullptr;
};

/// Pose ingest, render loop, frame server and supervisor. Prints rate stats
/// once per second. Writes the event log and a leaderboard row once the run
/// reaches a terminal state (or at shutdown if the drone took off).
int serve(const std::filesystem::path &configPath, const ServeOptions &options, std::ostream &out,
          std::ostream &err);

struct SnapshotOptions {
    std::string scene;
    /// Camera -> world pose, camera axes x-right, y-down, z-forward.
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector4d quatWxyz = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
    CameraIntrinsics intrinsics{160.0, 160.0, 159.5, 119.5, 320, 240, 0.05, 20.0};
    Eigen::Vector3f background = Eigen::Vector3f::Zero();
    /// Writes <prefix>_rgb.png and <prefix>_depth.png.
    std::filesystem::path outPrefix;
};

/// Throws on invalid input; the pose quaternion must have unit norm within 1e-3.
void snapshot(const SnapshotOptions &options);

struct BenchOptions {
    std::string scene = "synthetic:50000";
    int width = 320;
    int height = 240;
    std::size_t frames = 200;
    std::uint64_t seed = 7;
    unsigned threads = 0;
};

struct BenchResult {
    std::size_t gaussians = 0;
    std::size_t frames = 0;
    double hz = 0.0;
    double p50Ms = 0.0;
    double p99Ms = 0.0;
};

/// Renders RGBD frames from random front-camera poses inside the scene bounds.
/// Throws std::invalid_argument when frames < 100.
BenchResult bench(const BenchOptions &options);
BenchResult bench(const SplatScene &scene, const BenchOptions &options);

struct GradeResult {
    RunState run;
    std::size_t poses = 0;
};

/// Replays a trajectory CSV through the supervisor, writes the event log and
/// appends a leaderboard row.
GradeResult grade(const std::filesystem::path &configPath, const std::filesystem::path &tracePath,
                  const std::optional<std::filesystem::path> &eventLogOverride = std::nullopt,
                  const std::optional<std::filesystem::path> &leaderboardOverride = std::nullopt);

/// Supervisor replay on an in-memory course.
RunState replayTrace(const Course &course, const SupervisorSettings &settings, const Trajectory &trace);

struct GridOptions {
    std::string scene;
    double voxelSize = 0.1;
    double opacityMin = 0.5;
    double padding = 0.1;
    std::filesystem::path out;
};

OccupancyGrid buildSceneGrid(const GridOptions &options);

/// Waypoints that fly straight through every gate centre, starting above start.
std::vector<Eigen::Vector3d> gateWaypoints(const std::vector<Gate> &gates, const Eigen::Vector3d &start,
                                           double approach = 1.0);

struct SimulateOptions {
    std::filesystem::path trajectoryOut;
    double speed = 1.5;
    double maxDurationS = 120.0;
    Eigen::Vector3d start = Eigen::Vector3d(1.0, 1.0, 0.0);
    /// When set, connect to a running serve instance over UDP instead of
    /// grading in-process.
    bool network = false;
    std::string host = "127.0.0.1";
};

int simulate(const std::filesystem::path &configPath, const SimulateOptions &options, std::ostream &out);

/// Real-time networked sim drone: streams pose datagrams to host:posePort and
/// obeys commands arriving on commandPort. The drone starts grounded below
/// start. Returns the emitted trajectory.
std::vector<TrajectorySample> runNetworkSimClient(const std::string &host, std::uint16_t posePort,
                                                  std::uint16_t commandPort, const Eigen::Vector3d &start,
                                                  const std::vector<Eigen::Vector3d> &waypoints, double speed,
                                                  double poseRateHz, double maxDurationS);

} // namespace hallucam::cli
