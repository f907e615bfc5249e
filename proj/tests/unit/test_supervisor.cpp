// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/errors.hpp"
#include "hallucam/supervisor.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

using namespace hallucam;

namespace {

constexpr double kPi = std::numbers::pi;

Gate staticGate(const Eigen::Vector3d &c, double yaw = 0.0) {
    Gate g;
    g.worldToGate = verticalPlaneWorldToPlane(c, yaw);
    return g;
}

Gate dynamicGate(const Eigen::Vector3d &c, double omega) {
    Gate g = staticGate(c);
    g.kind = GateKind::Dynamic;
    DynamicWindow w;
    w.worldToWindow = g.worldToGate;
    w.omega = omega;
    g.window = w;
    return g;
}

PoseSample at(const Eigen::Vector3d &p, double tS, std::uint32_t seq = 0) {
    PoseSample s;
    s.seq = seq;
    s.timestampNs = static_cast<std::uint64_t>(std::llround(tS * 1e9));
    s.position = p;
    return s;
}

Course threeGateCourse() {
    Course c;
    c.fence = Geofence{Eigen::Vector3d::Zero(), Eigen::Vector3d(11.0, 4.5, 3.65)};
    for (double x : {3.0, 5.0, 7.0}) {
        c.gates.push_back(staticGate(Eigen::Vector3d(x, 2.0, 1.5)));
    }
    return c;
}

/// Climb at (1, 2), then fly along +x at 1.5 m until x_end, sampled at 100 Hz.
std::vector<PoseSample> straightRun(double xEnd, double y = 2.0) {
    std::vector<PoseSample> out;
    double t = 0.0;
    std::uint32_t seq = 1;
    for (int i = 0; i <= 150; ++i, t += 0.01) {
        out.push_back(at(Eigen::Vector3d(1.0, y, 0.01 * i), t, seq++));
    }
    for (double x = 1.0; x <= xEnd; x += 0.02, t += 0.01) {
        out.push_back(at(Eigen::Vector3d(x, y, 1.5), t, seq++));
    }
    return out;
}

RunState runAll(Course course, const std::vector<PoseSample> &poses, std::vector<Command> *commands = nullptr) {
    RunSupervisor sup(std::move(course), SupervisorSettings{});
    for (const auto &p : poses) {
        if (auto c = sup.onPose(p); c && commands) {
            commands->push_back(*c);
        }
    }
    return sup.state();
}

std::vector<std::string> readLines(const std::filesystem::path &p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) {
        lines.push_back(l);
    }
    return lines;
}

} // namespace

TEST(Takeoff, ThresholdStartsClockOnce) {
    RunState s;
    EXPECT_FALSE(detectTakeoff(s, at(Eigen::Vector3d(0, 0, 0.1), 1.0), 0.15));
    EXPECT_EQ(s.status, RunStatus::Armed);
    EXPECT_TRUE(detectTakeoff(s, at(Eigen::Vector3d(0, 0, 0.15), 2.0), 0.15));
    EXPECT_EQ(s.status, RunStatus::Flying);
    EXPECT_EQ(*s.tStartNs, 2'000'000'000u);
    EXPECT_TRUE(detectTakeoff(s, at(Eigen::Vector3d(0, 0, 1.0), 3.0), 0.15));
    EXPECT_EQ(*s.tStartNs, 2'000'000'000u);
    ASSERT_EQ(s.events.size(), 1u);
    EXPECT_EQ(s.events[0].kind, "takeoff");
}

TEST(GateCrossing, StaticExamples) {
    const Gate g = staticGate(Eigen::Vector3d(5, 2, 1.5));
    EXPECT_EQ(gateCrossing({4.9, 2, 1.5}, {5.1, 2, 1.5}, g, 0), CrossingResult::Crossed);
    EXPECT_EQ(gateCrossing({4.9, 2, 1.5}, {5.0, 2, 1.5}, g, 0), CrossingResult::Crossed);
    EXPECT_EQ(gateCrossing({5.1, 2, 1.5}, {4.9, 2, 1.5}, g, 0), CrossingResult::NotCrossed);
    EXPECT_EQ(gateCrossing({4.9, 2, 1.5}, {4.9, 2.5, 1.5}, g, 0), CrossingResult::NotCrossed);
    EXPECT_EQ(gateCrossing({4.9, 2.6, 1.5}, {5.1, 2.6, 1.5}, g, 0), CrossingResult::NotCrossed);
    EXPECT_EQ(gateCrossing({4.9, 2, 2.1}, {5.1, 2, 2.1}, g, 0), CrossingResult::NotCrossed);
}

TEST(GateCrossing, RotatedGateUsesItsNormal) {
    const Gate g = staticGate(Eigen::Vector3d(1, 1, 1), kPi / 2);
    EXPECT_EQ(gateCrossing({1, 0.9, 1}, {1, 1.1, 1}, g, 0), CrossingResult::Crossed);
    EXPECT_EQ(gateCrossing({0.9, 1, 1}, {1.1, 1, 1}, g, 0), CrossingResult::NotCrossed);
}

TEST(GateCrossing, HandHitThenClearHalfTurnLater) {
    const double omega = kPi / 2;
    const Gate g = dynamicGate(Eigen::Vector3d(5, 2, 1.5), omega);
    // Window +x points along world +y for yaw 0; the hand starts there.
    const Eigen::Vector3d a(4.9, 2.2, 1.5), b(5.1, 2.2, 1.5);
    EXPECT_EQ(gateCrossing(a, b, g, 0.0), CrossingResult::HandHit);
    EXPECT_EQ(gateCrossing(a, b, g, kPi / omega), CrossingResult::Crossed);
    EXPECT_EQ(gateCrossing(a, b, g, 2 * kPi / omega), CrossingResult::HandHit);
}

TEST(Supervisor, ScriptedRunFinishesThreeGates) {
    std::vector<Command> cmds;
    const auto poses = straightRun(9.0);
    const RunState s = runAll(threeGateCourse(), poses, &cmds);
    EXPECT_EQ(s.status, RunStatus::Finished);
    EXPECT_EQ(s.stagesCompleted(), 3u);
    EXPECT_TRUE(cmds.empty());
    std::vector<std::string> kinds;
    for (const auto &e : s.events) {
        kinds.push_back(e.kind);
    }
    EXPECT_EQ(kinds, (std::vector<std::string>{"takeoff", "gate_crossed", "gate_crossed", "gate_crossed", "finished"}));
    // Clock starts at the first sample at or above 0.15 m.
    const auto first = std::find_if(poses.begin(), poses.end(), [](const PoseSample &p) { return p.position.z() >= 0.15; });
    EXPECT_EQ(*s.tStartNs, first->timestampNs);
    EXPECT_GT(s.elapsedS(), 4.0);
    EXPECT_LT(s.elapsedS(), 5.0);
}

TEST(Supervisor, GatesMustBeTakenInOrder) {
    Course c = threeGateCourse();
    std::swap(c.gates[0], c.gates[2]);
    const RunState s = runAll(c, straightRun(9.0));
    EXPECT_EQ(s.status, RunStatus::Flying);
    EXPECT_EQ(s.stagesCompleted(), 1u);
}

TEST(Supervisor, CollisionLandsAtOffendingPose) {
    Course c = threeGateCourse();
    OccupancyGrid g(Eigen::Vector3d::Zero(), 0.1, {110, 45, 36});
    const auto v = g.voxelOf(Eigen::Vector3d(4.0, 2.0, 1.5));
    g.setOccupied(*v);
    c.grid = g;
    std::vector<Command> cmds;
    const auto poses = straightRun(9.0);
    const RunState s = runAll(c, poses, &cmds);
    EXPECT_EQ(s.status, RunStatus::Collided);
    EXPECT_EQ(s.stagesCompleted(), 1u);
    ASSERT_EQ(cmds.size(), 1u);
    EXPECT_EQ(cmds[0].kind, CommandKind::Land);
    // First pose whose sphere reaches the voxel centre.
    std::uint64_t expectNs = 0;
    for (const auto &p : poses) {
        if (p.position.z() >= 0.15 && (p.position - g.voxelCenter(*v)).norm() <= 0.2) {
            expectNs = p.timestampNs;
            break;
        }
    }
    EXPECT_EQ(s.events.back().kind, "collision");
    EXPECT_EQ(s.events.back().tNs, expectNs);
    EXPECT_EQ(*s.tEndNs, expectNs);
    EXPECT_EQ(cmds[0].timestampNs, expectNs);
}

TEST(Supervisor, GeofenceViolationLands) {
    Course c;
    c.fence = Geofence{Eigen::Vector3d::Zero(), Eigen::Vector3d(11.0, 4.5, 3.65)};
    std::vector<Command> cmds;
    const RunState s = runAll(c, straightRun(12.0), &cmds);
    EXPECT_EQ(s.status, RunStatus::GeofenceLand);
    EXPECT_EQ(s.events.back().kind, "geofence_violation");
    ASSERT_EQ(cmds.size(), 1u);
    EXPECT_EQ(cmds[0].kind, CommandKind::Land);
    EXPECT_NE(s.events.back().detail.find("(11.0"), std::string::npos);
}

TEST(Supervisor, DynamicWindowCollision) {
    Course c;
    c.fence = Geofence{Eigen::Vector3d::Zero(), Eigen::Vector3d(11.0, 4.5, 3.65)};
    DynamicWindow w;
    w.worldToWindow = verticalPlaneWorldToPlane(Eigen::Vector3d(5, 2, 1.5), 0.0);
    w.omega = 0.0;
    c.window = w;
    // Path through the aperture centre meets the pivot of the hand.
    const RunState s = runAll(c, straightRun(9.0));
    EXPECT_EQ(s.status, RunStatus::Collided);
    EXPECT_NE(s.events.back().detail.find("dynamic"), std::string::npos);
    // 0.25 m beside the pivot, on the side away from the hand, is clear.
    const RunState clear = runAll(c, straightRun(9.0, 1.75));
    EXPECT_EQ(clear.status, RunStatus::Flying);
}

TEST(Supervisor, TerminalStatesAbsorb) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2.0, 13.0);
    for (double xEnd : {9.0, 12.0}) {
        Course c = threeGateCourse();
        if (xEnd > 11.0) {
            c.gates.clear();
        }
        RunSupervisor sup(c, SupervisorSettings{});
        for (const auto &p : straightRun(xEnd)) {
            sup.onPose(p);
        }
        ASSERT_TRUE(isTerminal(sup.state().status));
        const RunState frozen = sup.state();
        for (int i = 0; i < 500; ++i) {
            EXPECT_FALSE(sup.onPose(at(Eigen::Vector3d(u(rng), u(rng), u(rng)), 100.0 + i)));
        }
        EXPECT_EQ(sup.state(), frozen);
    }
}

TEST(Supervisor, Deterministic) {
    const auto poses = straightRun(9.0);
    const RunState a = runAll(threeGateCourse(), poses);
    const RunState b = runAll(threeGateCourse(), poses);
    EXPECT_EQ(a, b);
    EXPECT_EQ(eventLogJsonLines(a), eventLogJsonLines(b));
}

TEST(EventLog, JsonLinesAndFile) {
    const RunState s = runAll(threeGateCourse(), straightRun(9.0));
    const std::string text = eventLogJsonLines(s);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
    EXPECT_NE(text.find("\"kind\":\"takeoff\""), std::string::npos);
    const auto path = std::filesystem::temp_directory_path() / "hallucam_events.jsonl";
    writeEventLog(path, s);
    EXPECT_EQ(readLines(path).size(), 5u);
    std::filesystem::remove(path);
}

TEST(RunStatus, StringRoundTrip) {
    for (auto st : {RunStatus::Armed, RunStatus::Flying, RunStatus::Collided, RunStatus::GeofenceLand,
                    RunStatus::Finished}) {
        EXPECT_EQ(runStatusFromString(toString(st)), st);
    }
    EXPECT_FALSE(runStatusFromString("crashed"));
}

TEST(Leaderboard, RowFormat) {
    LeaderboardRecord r;
    r.team = "team, one";
    r.stagesCompleted = 2;
    r.elapsedS = 12.3456;
    r.status = RunStatus::Collided;
    r.timestamp = std::chrono::system_clock::time_point{};
    EXPECT_EQ(leaderboardRow(r), "\"team, one\",2,12.346,collided,1970-01-01T00:00:00.000Z");
}

TEST(Leaderboard, HeaderOnceAndConcurrentAppends) {
    const auto path = std::filesystem::temp_directory_path() / "hallucam_leaderboard.csv";
    std::filesystem::remove(path);
    std::vector<std::thread> writers;
    for (int w = 0; w < 4; ++w) {
        writers.emplace_back([&, w] {
            for (int i = 0; i < 25; ++i) {
                LeaderboardRecord r;
                r.team = "team" + std::to_string(w);
                r.stagesCompleted = static_cast<std::size_t>(i);
                appendLeaderboard(r, path);
            }
        });
    }
    for (auto &t : writers) {
        t.join();
    }
    const auto lines = readLines(path);
    ASSERT_EQ(lines.size(), 101u);
    EXPECT_EQ(lines[0], kLeaderboardHeader);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        EXPECT_EQ(std::count(lines[i].begin(), lines[i].end(), ','), 4) << lines[i];
        EXPECT_EQ(lines[i].rfind("team", 0), 0u);
    }
    std::filesystem::remove(path);
}

TEST(Leaderboard, UnwritablePathIsIoError) {
    LeaderboardRecord r;
    EXPECT_THROW(appendLeaderboard(r, "/nonexistent/dir/board.csv"), IoError);
}
