// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/supervisor.hpp"

#include "hallucam/errors.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace hallucam {

namespace {

std::string formatPosition(const Eigen::Vector3d &p) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "(%.4f, %.4f, %.4f)", p.x(), p.y(), p.z());
    return buf;
}

void terminate(RunState &state, RunStatus status, std::uint64_t tNs, std::string kind, std::string detail) {
    state.status = status;
    state.tEndNs = tNs;
    state.events.push_back(RunEvent{tNs, std::move(kind), std::move(detail)});
}

std::string csvField(const std::string &s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

void Gate::validate() const {
    if (!isOrthonormal(worldToGate.linear())) {
        throw std::invalid_argument("gate: pose rotation is not orthonormal");
    }
    if (!(apertureHalf.array() > 0.0).all()) {
        throw std::invalid_argument("gate: aperture half-extents must be positive");
    }
    if (kind == GateKind::Dynamic) {
        if (!window) {
            throw std::invalid_argument("gate: dynamic gate requires a window");
        }
        window->validate();
    }
}

CrossingResult gateCrossing(const Eigen::Vector3d &prev, const Eigen::Vector3d &curr, const Gate &gate, double t) {
    const Eigen::Vector3d a = gate.worldToGate * prev;
    const Eigen::Vector3d b = gate.worldToGate * curr;
    // Forward direction only: from behind the plane to on/in front of it.
    if (!(a.z() < 0.0 && b.z() >= 0.0)) {
        return CrossingResult::NotCrossed;
    }
    const double s = -a.z() / (b.z() - a.z());
    const Eigen::Vector3d hit = a + s * (b - a);
    if (std::abs(hit.x()) > gate.apertureHalf.x() || std::abs(hit.y()) > gate.apertureHalf.y()) {
        return CrossingResult::NotCrossed;
    }
    if (gate.kind == GateKind::Dynamic && gate.window) {
        // Express the hit in the window's own frame in case the poses differ.
        const Eigen::Vector3d inWindow = gate.window->worldToWindow * (gate.worldToGate.inverse() * hit);
        if (pointOnHand(*gate.window, t, inWindow.head<2>())) {
            return CrossingResult::HandHit;
        }
    }
    return CrossingResult::Crossed;
}

std::string_view toString(RunStatus s) {
    switch (s) {
    case RunStatus::Armed:
        return "armed";
    case RunStatus::Flying:
        return "flying";
    case RunStatus::Collided:
        return "collided";
    case RunStatus::GeofenceLand:
        return "geofence_land";
    case RunStatus::Finished:
        return "finished";
    }
    return "unknown";
}

std::optional<RunStatus> runStatusFromString(std::string_view s) {
    for (auto st : {RunStatus::Armed, RunStatus::Flying, RunStatus::Collided, RunStatus::GeofenceLand,
                    RunStatus::Finished}) {
        if (toString(st) == s) {
            return st;
        }
    }
    return std::nullopt;
}

double RunState::elapsedS() const {
    if (!tStartNs) {
        return 0.0;
    }
    const std::uint64_t end = tEndNs.value_or(lastNs);
    return end >= *tStartNs ? static_cast<double>(end - *tStartNs) * 1e-9 : 0.0;
}

bool detectTakeoff(RunState &state, const PoseSample &p, double zTakeoff) {
    if (p.position.z() < zTakeoff) {
        return false;
    }
    if (state.status == RunStatus::Armed) {
        state.status = RunStatus::Flying;
        state.tStartNs = p.timestampNs;
        state.events.push_back(RunEvent{p.timestampNs, "takeoff", "z=" + std::to_string(p.position.z())});
    }
    return true;
}

StepResult superviseStep(RunState &state, const PoseSample &prev, const PoseSample &curr, const Course &course,
                         const SupervisorSettings &settings) {
    StepResult result;
    if (isTerminal(state.status)) {
        return result;
    }
    state.lastNs = curr.timestampNs;
    if (state.status == RunStatus::Armed && !detectTakeoff(state, curr, settings.takeoffZ)) {
        return result;
    }
    const std::uint64_t tNs = curr.timestampNs;
    const double t = scenarioTime(tNs);
    const Eigen::Vector3d &p = curr.position;

    if (checkGeofence(course.fence, p) == GeofenceStatus::Violation) {
        terminate(state, RunStatus::GeofenceLand, tNs, "geofence_violation", formatPosition(p));
        result.command = Command::land(tNs);
        return result;
    }

    const bool staticHit = course.grid && checkCollision(*course.grid, p, settings.collisionRadius);
    const bool dynamicHit = !staticHit && course.window &&
                            checkDynamicCollision(*course.window, t, settings.dynamicVoxelSize, p,
                                                  settings.collisionRadius);
    if (staticHit || dynamicHit) {
        terminate(state, RunStatus::Collided, tNs, "collision",
                  std::string(staticHit ? "static " : "dynamic ") + formatPosition(p));
        result.command = Command::land(tNs);
        return result;
    }

    if (state.stage < course.gates.size()) {
        switch (gateCrossing(prev.position, p, course.gates[state.stage], t)) {
        case CrossingResult::Crossed:
            state.events.push_back(RunEvent{tNs, "gate_crossed", "stage " + std::to_string(state.stage)});
            ++state.stage;
            if (state.stage == course.gates.size()) {
                terminate(state, RunStatus::Finished, tNs, "finished",
                          "stages " + std::to_string(state.stage));
            }
            break;
        case CrossingResult::HandHit:
            terminate(state, RunStatus::Collided, tNs, "hand_hit", "stage " + std::to_string(state.stage));
            result.command = Command::land(tNs);
            break;
        case CrossingResult::NotCrossed:
            break;
        }
    }
    return result;
}

RunSupervisor::RunSupervisor(Course course, SupervisorSettings settings)
    : mCourse(std::move(course)), mSettings(settings) {
    mCourse.fence.validate();
    for (const auto &g : mCourse.gates) {
        g.validate();
    }
    if (mCourse.window) {
        mCourse.window->validate();
    }
}

std::optional<Command> RunSupervisor::onPose(const PoseSample &p) {
    const PoseSample prev = mPrev.value_or(p);
    mPrev = p;
    return superviseStep(mState, prev, p, mCourse, mSettings).command;
}

std::string eventLogJsonLines(const RunState &state) {
    std::string out;
    for (const auto &e : state.events) {
        nlohmann::json j;
        j["t_ns"] = e.tNs;
        j["kind"] = e.kind;
        j["detail"] = e.detail;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void writeEventLog(const std::filesystem::path &path, const RunState &state) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << eventLogJsonLines(state);
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

std::string formatIsoTimestamp(std::chrono::system_clock::time_point t) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
    return buf;
}

std::string leaderboardRow(const LeaderboardRecord &r) {
    char elapsed[32];
    std::snprintf(elapsed, sizeof(elapsed), "%.3f", r.elapsedS);
    return csvField(r.team) + "," + std::to_string(r.stagesCompleted) + "," + elapsed + "," +
           std::string(toString(r.status)) + "," + formatIsoTimestamp(r.timestamp);
}

void appendLeaderboard(const LeaderboardRecord &record, const std::filesystem::path &path) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw IoError("cannot open leaderboard '" + path.string() + "': " + std::strerror(errno));
    }
    struct Closer {
        int fd;
        ~Closer() {
            ::flock(fd, LOCK_UN);
            ::close(fd);
        }
    } closer{fd};
    if (::flock(fd, LOCK_EX) != 0) {
        throw IoError("cannot lock leaderboard '" + path.string() + "'");
    }
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        throw IoError("cannot stat leaderboard '" + path.string() + "'");
    }
    std::string text;
    if (st.st_size == 0) {
        text += kLeaderboardHeader;
        text += '\n';
    }
    text += leaderboardRow(record);
    text += '\n';
    std::size_t written = 0;
    while (written < text.size()) {
        const ssize_t n = ::write(fd, text.data() + written, text.size() - written);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw IoError("write failed for leaderboard '" + path.string() + "'");
        }
        written += static_cast<std::size_t>(n);
    }
}

} // namespace hallucam
