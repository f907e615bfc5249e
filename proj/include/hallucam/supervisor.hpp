// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/dynamic_window.hpp"
#include "hallucam/transport.hpp"
#include "hallucam/world_model.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hallucam {

enum class GateKind { Static, Dynamic };

/// Planar aperture in the z = 0 plane of its frame; crossing means moving
/// from z < 0 to z >= 0 through the aperture.
struct Gate {
    Eigen::Isometry3d worldToGate = Eigen::Isometry3d::Identity();
    Eigen::Vector2d apertureHalf = Eigen::Vector2d(0.5, 0.5);
    GateKind kind = GateKind::Static;
    /// Present for dynamic gates; its pose normally coincides with the gate's.
    std::optional<DynamicWindow> window;

    void validate() const;
};

enum class CrossingResult { NotCrossed, Crossed, HandHit };

CrossingResult gateCrossing(const Eigen::Vector3d &prev, const Eigen::Vector3d &curr, const Gate &gate, double t);

enum class RunStatus { Armed, Flying, Collided, GeofenceLand, Finished };

std::string_view toString(RunStatus s);
std::optional<RunStatus> runStatusFromString(std::string_view s);
inline bool isTerminal(RunStatus s) {
    return s == RunStatus::Collided || s == RunStatus::GeofenceLand || s == RunStatus::Finished;
}

struct RunEvent {
    std::uint64_t tNs = 0;
    std::string kind;
    std::string detail;

    bool operator==(const RunEvent &) const = default;
};

struct RunState {
    std::size_t stage = 0;
    RunStatus status = RunStatus::Armed;
    std::optional<std::uint64_t> tStartNs;
    std::optional<std::uint64_t> tEndNs;
    std::vector<RunEvent> events;
    /// Timestamp of the last supervised pose.
    std::uint64_t lastNs = 0;

    std::size_t stagesCompleted() const { return stage; }
    /// Seconds between takeoff and the terminal event (or the last pose while
    /// still flying); 0 before takeoff.
    double elapsedS() const;
    bool operator==(const RunState &) const = default;
};

struct SupervisorSettings {
    double collisionRadius = 0.2;
    double dynamicVoxelSize = 0.1;
    double takeoffZ = 0.15;
};

/// Everything the grader needs about the course.
struct Course {
    std::optional<OccupancyGrid> grid;
    Geofence fence;
    std::vector<Gate> gates;
    /// Window whose occupancy joins the static grid in collision checks.
    std::optional<DynamicWindow> window;
};

/// True when z >= zTakeoff; on the first such sample moves armed -> flying,
/// stamps t_start and logs a takeoff event.
bool detectTakeoff(RunState &state, const PoseSample &p, double zTakeoff);

struct StepResult {
    std::optional<Command> command;
};

/// One grading step for the segment prev -> curr. Checks run in order
/// geofence, collision (static grid and dynamic window), gate crossing; the
/// first terminal outcome wins. Terminal states absorb further input.
StepResult superviseStep(RunState &state, const PoseSample &prev, const PoseSample &curr, const Course &course,
                         const SupervisorSettings &settings);

/// Scenario clock used for the dynamic window: pose timestamp in seconds.
inline double scenarioTime(std::uint64_t tNs) { return static_cast<double>(tNs) * 1e-9; }

/// Convenience wrapper that remembers the previous pose.
class RunSupervisor {
public:
    RunSupervisor(Course course, SupervisorSettings settings);

    std::optional<Command> onPose(const PoseSample &p);
    const RunState &state() const { return mState; }
    const Course &course() const { return mCourse; }

private:
    Course mCourse;
    SupervisorSettings mSettings;
    RunState mState;
    std::optional<PoseSample> mPrev;
};

/// {t_ns, kind, detail} per line.
std::string eventLogJsonLines(const RunState &state);
void writeEventLog(const std::filesystem::path &path, const RunState &state);

struct LeaderboardRecord {
    std::string team;
    std::size_t stagesCompleted = 0;
    double elapsedS = 0.0;
    RunStatus status = RunStatus::Finished;
    std::chrono::system_clock::time_point timestamp = std::chrono::system_clock::now();
};

inline constexpr std::string_view kLeaderboardHeader = "team,stages,elapsed_s,status,iso_timestamp";

std::string formatIsoTimestamp(std::chrono::system_clock::time_point t);
std::string leaderboardRow(const LeaderboardRecord &r);

/// Appends one CSV row under an exclusive file lock, writing the header first
/// when the file is empty. Throws IoError when the path is unwritable.
void appendLeaderboard(const LeaderboardRecord &record, const std::filesystem::path &path);

} // namespace hallucam
