// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/sim.hpp"
#include "oracles/sim_oracle.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <numbers>
#include <random>

using namespace hallucam;

namespace {

constexpr double kPi = std::numbers::pi;

SimDroneState flyingAt(const Eigen::Vector3d &p) {
    SimDroneState s;
    s.position = p;
    s.mode = FlightMode::Flying;
    return s;
}

Course threeGateCourse() {
    Course c;
    c.fence = Geofence{Eigen::Vector3d::Zero(), Eigen::Vector3d(11.0, 4.5, 3.65)};
    for (double x : {3.0, 5.0, 7.0}) {
        Gate g;
        g.worldToGate = verticalPlaneWorldToPlane(Eigen::Vector3d(x, 2.0, 1.5), 0.0);
        c.gates.push_back(g);
    }
    return c;
}

Autopilot waypointAutopilot() {
    auto pilot = std::make_shared<WaypointPilot>(
        std::vector<Eigen::Vector3d>{{2.0, 2.0, 1.5}, {3.5, 2.0, 1.5}, {5.5, 2.0, 1.5}, {7.5, 2.0, 1.5}}, 1.0);
    return [pilot](const PoseSample &p) -> std::optional<Command> { return pilot->command(p); };
}

CameraIntrinsics smallK(int w = 32, int h = 24) {
    return CameraIntrinsics{20.0, 20.0, (w - 1) / 2.0, (h - 1) / 2.0, w, h, 0.05, 20.0};
}

} // namespace

TEST(SimStep, SteadyStateVelocity) {
    SimDroneState s = flyingAt(Eigen::Vector3d(0, 0, 1));
    const Command c = Command::velocity(Eigen::Vector3d(1, 0, 0), 0, 0);
    for (int i = 0; i < 600; ++i) {
        s = simStep(s, c, 0.005);
    }
    EXPECT_NEAR(s.velocity.x(), 1.0, 1e-4);
    EXPECT_NEAR(s.velocity.y(), 0.0, 1e-12);
}

TEST(SimStep, VelocityAfterOneTimeConstant) {
    SimDroneState s = flyingAt(Eigen::Vector3d(0, 0, 1));
    const Command c = Command::velocity(Eigen::Vector3d(1, 0, 0), 0, 0);
    for (int i = 0; i < 60; ++i) {
        s = simStep(s, c, 0.005);
    }
    EXPECT_NEAR(s.velocity.x(), oracle::lagVelocity(0, 1, 0.3, 0.3), 1e-9);
    EXPECT_NEAR(s.velocity.x(), 0.632, 1e-3);
    // Position uses the end-of-step velocity: within one step of the continuous integral.
    EXPECT_NEAR(s.position.x(), oracle::lagDisplacement(0, 1, 0.3, 0.3), 0.005);
}

TEST(SimStep, VelocityMatchesLagForAnyStep) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.001, 0.05);
    for (int trial = 0; trial < 50; ++trial) {
        const double dt = u(rng);
        SimDroneState s = flyingAt(Eigen::Vector3d(0, 0, 1));
        s.velocity = Eigen::Vector3d(0.3, 0, 0);
        const Command c = Command::velocity(Eigen::Vector3d(-2, 0, 0), 0, 0);
        double t = 0.0;
        for (int i = 0; i < 40; ++i) {
            s = simStep(s, c, dt);
            t += dt;
        }
        EXPECT_NEAR(s.velocity.x(), oracle::lagVelocity(0.3, -2, 0.3, t), 1e-9);
    }
}

TEST(SimStep, SpeedClamped) {
    SimDroneState s = flyingAt(Eigen::Vector3d(0, 0, 1));
    const Command c = Command::velocity(Eigen::Vector3d(30, 0, 0), 0, 0);
    for (int i = 0; i < 1000; ++i) {
        s = simStep(s, c, 0.01);
        EXPECT_LE(s.velocity.norm(), 6.0 + 1e-12);
    }
    EXPECT_NEAR(s.velocity.norm(), 6.0, 1e-6);
}

TEST(SimStep, LandingFromOneMetre) {
    SimDroneState s = flyingAt(Eigen::Vector3d(0, 0, 1));
    const double dt = 0.005;
    int steps = 0;
    s = simStep(s, Command::land(0), dt);
    ++steps;
    while (s.mode != FlightMode::Grounded && steps < 10000) {
        s = simStep(s, Command::velocity(Eigen::Vector3d(1, 0, 0), 0, 0), dt);
        ++steps;
    }
    ASSERT_EQ(s.mode, FlightMode::Grounded);
    EXPECT_EQ(s.position.z(), 0.0);
    EXPECT_EQ(s.position.x(), 0.0);
    const double ref = oracle::touchdownTime(1.0, 0.0, 0.5, 0.3);
    EXPECT_NEAR(steps * dt, ref, 0.02);
    EXPECT_GT(ref, 2.0);
    EXPECT_LT(ref, 2.5);
}

TEST(SimStep, GroundedIgnoresAllButTakeoff) {
    SimDroneState s;
    s = simStep(s, Command::velocity(Eigen::Vector3d(1, 1, 1), 0, 0), 0.01);
    EXPECT_EQ(s, SimDroneState{});
    s = simStep(s, Command::takeoff(0), 0.01);
    EXPECT_EQ(s.mode, FlightMode::Takeoff);
    int steps = 0;
    while (s.mode == FlightMode::Takeoff && steps < 2000) {
        s = simStep(s, Command::velocity(Eigen::Vector3d(5, 0, 0), 0, 0), 0.01);
        ++steps;
    }
    EXPECT_EQ(s.mode, FlightMode::Flying);
    EXPECT_GE(s.position.z(), 1.0);
    EXPECT_EQ(s.position.x(), 0.0);
}

TEST(SimStep, NonFiniteCommandFaults) {
    const SimDroneState s = flyingAt(Eigen::Vector3d(1, 2, 3));
    const Command bad = Command::velocity(Eigen::Vector3d(std::numeric_limits<double>::infinity(), 0, 0), 0, 0);
    const SimDroneState t = simStep(s, bad, 0.01);
    EXPECT_EQ(t.faults, 1u);
    SimDroneState expect = s;
    expect.faults = 1;
    EXPECT_EQ(t, expect);
    EXPECT_THROW(simStep(s, Command::land(0), 0.0), std::invalid_argument);
    EXPECT_THROW(simStep(s, Command::land(0), 0.06), std::invalid_argument);
}

TEST(SimStep, YawRateIntegrates) {
    SimDroneState s = flyingAt(Eigen::Vector3d(0, 0, 1));
    for (int i = 0; i < 100; ++i) {
        s = simStep(s, Command::velocity(Eigen::Vector3d::Zero(), 0.5, 0), 0.01);
    }
    EXPECT_NEAR(s.yaw, 0.5, 1e-12);
}

TEST(Trajectory, SquareExamplesAndPeriod) {
    TrajectorySpec t;
    t.kind = TrajectoryKind::Square;
    t.amplitude = 2.0;
    t.speed = 1.0;
    t.height = 1.2;
    t.duration = 30.0;
    EXPECT_EQ(trajectoryPoint(t, 0.0), Eigen::Vector3d(0, 0, 1.2));
    EXPECT_LE((trajectoryPoint(t, 2.0) - Eigen::Vector3d(2, 0, 1.2)).norm(), 1e-12);
    EXPECT_LE((trajectoryPoint(t, 3.0) - Eigen::Vector3d(2, 1, 1.2)).norm(), 1e-12);
    EXPECT_LE((trajectoryPoint(t, 5.0) - Eigen::Vector3d(1, 2, 1.2)).norm(), 1e-12);
    EXPECT_LE((trajectoryPoint(t, 7.5) - Eigen::Vector3d(0, 0.5, 1.2)).norm(), 1e-12);
    EXPECT_DOUBLE_EQ(t.period(), 8.0);
    EXPECT_THROW(trajectoryPoint(t, 30.5), std::out_of_range);
    EXPECT_THROW(trajectoryPoint(t, -0.1), std::out_of_range);
}

TEST(Trajectory, PeriodicKinds) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto kind : {TrajectoryKind::Square, TrajectoryKind::Lemniscate}) {
        TrajectorySpec t;
        t.kind = kind;
        t.amplitude = 1.5;
        t.omega = 0.7;
        t.speed = 0.9;
        t.duration = 100.0;
        const double T = t.period();
        for (int i = 0; i < 200; ++i) {
            const double s = u(rng) * (t.duration - 2 * T);
            EXPECT_LE((trajectoryPoint(t, s) - trajectoryPoint(t, s + T)).norm(), 1e-9);
        }
    }
}

TEST(Trajectory, LemniscateAndSpiralShape) {
    TrajectorySpec l;
    l.amplitude = 2.0;
    l.omega = 1.0;
    l.height = 1.0;
    EXPECT_LE((trajectoryPoint(l, kPi / 2) - Eigen::Vector3d(2, 0, 1)).norm(), 1e-12);
    EXPECT_LE((trajectoryPoint(l, kPi / 4) - Eigen::Vector3d(std::sqrt(2.0), 1.0, 1)).norm(), 1e-12);

    TrajectorySpec s;
    s.kind = TrajectoryKind::Spiral;
    s.r0 = 0.5;
    s.radialRate = 0.1;
    s.climbRate = 0.05;
    s.omega = 2.0;
    for (double t : {0.0, 1.0, 4.0}) {
        const Eigen::Vector3d p = trajectoryPoint(s, t);
        EXPECT_NEAR(p.head<2>().norm(), 0.5 + 0.1 * t, 1e-12);
        EXPECT_NEAR(p.z(), 1.0 + 0.05 * t, 1e-12);
    }
    EXPECT_EQ(s.period(), 0.0);
}

TEST(Trajectory, SamplingCountAndStamps) {
    TrajectorySpec t;
    t.duration = 10.0;
    const Trajectory tr = sampleTrajectory(t, 100.0);
    ASSERT_EQ(tr.size(), 1001u);
    EXPECT_EQ(tr.samples().back().tNs, 10'000'000'000u);
    EXPECT_EQ(tr.samples()[37].tNs, 370'000'000u);
}

TEST(PotentialField, FarDepthFollowsGoal) {
    const CameraIntrinsics K = smallK();
    std::vector<float> depth(K.pixelCount(), 5.0f);
    depth[3] = 0.0f;
    const Eigen::Vector3d v = potentialFieldVelocity(depth, K, Eigen::Vector3d(0.3, -0.2, 1.0));
    EXPECT_LE((v - Eigen::Vector3d(0.3, -0.2, 1.0)).norm(), 1e-12);
}

TEST(PotentialField, SinglePixelHandComputed) {
    const CameraIntrinsics K{20.0, 20.0, 1.0, 1.0, 3, 3, 0.05, 20.0};
    std::vector<float> depth(9, 0.0f);
    depth[4] = 1.5f;
    const Eigen::Vector3d v = potentialFieldVelocity(depth, K, Eigen::Vector3d(0, 0, 1));
    EXPECT_NEAR(v.z(), 1.0 - 2.0 * (1.0 / 1.5 - 1.0 / 3.0), 1e-7);
    EXPECT_NEAR(v.x(), 0.0, 1e-12);
}

TEST(PotentialField, LeftObstaclePushesRight) {
    const CameraIntrinsics K = smallK();
    std::vector<float> depth(K.pixelCount(), 0.0f);
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < 8; ++u) {
            depth[static_cast<std::size_t>(v) * K.width + u] = 1.0f;
        }
    }
    const Eigen::Vector3d vel = potentialFieldVelocity(depth, K, Eigen::Vector3d(0, 0, 1));
    EXPECT_GT(vel.x(), 0.0);
    EXPECT_LT(vel.z(), 1.0);
}

TEST(PotentialField, MirrorSymmetry) {
    const CameraIntrinsics K = smallK();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 4.0f);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> depth(K.pixelCount()), mirrored(K.pixelCount());
        for (auto &d : depth) {
            d = u(rng);
        }
        for (int v = 0; v < K.height; ++v) {
            for (int x = 0; x < K.width; ++x) {
                mirrored[static_cast<std::size_t>(v) * K.width + (K.width - 1 - x)] =
                    depth[static_cast<std::size_t>(v) * K.width + x];
            }
        }
        const Eigen::Vector3d a = potentialFieldVelocity(depth, K, Eigen::Vector3d(0.2, 0.1, 1));
        const Eigen::Vector3d b = potentialFieldVelocity(mirrored, K, Eigen::Vector3d(-0.2, 0.1, 1));
        EXPECT_NEAR(a.x(), -b.x(), 1e-9);
        EXPECT_NEAR(a.y(), b.y(), 1e-9);
        EXPECT_NEAR(a.z(), b.z(), 1e-9);
    }
}

TEST(PotentialField, ClampedToMaxSpeed) {
    const CameraIntrinsics K = smallK();
    std::vector<float> depth(K.pixelCount(), 0.06f);
    const Eigen::Vector3d v = potentialFieldVelocity(depth, K, Eigen::Vector3d(0, 0, 1));
    EXPECT_NEAR(v.norm(), 6.0, 1e-9);
    EXPECT_LT(v.z(), 0.0);
}

TEST(PotentialField, YawEquivariantWorldCommand) {
    const CameraIntrinsics K = smallK();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(0.5f, 4.0f);
    FrameRGBD f;
    f.width = K.width;
    f.height = K.height;
    f.rgb.assign(K.pixelCount() * 3, 0);
    f.depth.resize(K.pixelCount());
    for (auto &d : f.depth) {
        d = u(rng);
    }
    const Eigen::Matrix3d camToWorld = frontCameraExtrinsic().linear().transpose();
    const Eigen::Vector3d goal(1, 0.2, 0);
    const Command base = potentialFieldStep(f, K, camToWorld, goal);
    for (double yaw : {0.3, 1.7, -2.5}) {
        const Eigen::Matrix3d R = yawQuaternion(yaw).toRotationMatrix();
        const Command c = potentialFieldStep(f, K, R * camToWorld, R * goal);
        const Eigen::Vector3d expect = R * Eigen::Vector3d(base.payload[0], base.payload[1], base.payload[2]);
        EXPECT_LE((Eigen::Vector3d(c.payload[0], c.payload[1], c.payload[2]) - expect).norm(), 1e-9);
    }
}

TEST(WaypointPilot, AdvancesAndStops) {
    WaypointPilot p({{1, 0, 0}, {1, 1, 0}}, 2.0, 0.1);
    PoseSample s;
    Command c = p.command(s);
    EXPECT_LE((Eigen::Vector3d(c.payload[0], c.payload[1], c.payload[2]) - Eigen::Vector3d(2, 0, 0)).norm(), 1e-12);
    s.position = Eigen::Vector3d(1, 0.05, 0);
    c = p.command(s);
    EXPECT_EQ(p.nextIndex(), 1u);
    EXPECT_NEAR(c.payload[1], 0.95, 1e-12);
    s.position = Eigen::Vector3d(1, 1, 0);
    c = p.command(s);
    EXPECT_TRUE(p.done());
    EXPECT_EQ(c.payload[0], 0.0);
}

TEST(ClosedLoop, WaypointsFinishAllGatesDeterministically) {
    const ClosedLoopResult a = runClosedLoop(threeGateCourse(), SupervisorSettings{}, waypointAutopilot());
    const ClosedLoopResult b = runClosedLoop(threeGateCourse(), SupervisorSettings{}, waypointAutopilot());
    EXPECT_EQ(a.run.status, RunStatus::Finished);
    EXPECT_EQ(a.run.stagesCompleted(), 3u);
    EXPECT_FALSE(a.land);
    EXPECT_EQ(a.run, b.run);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].tNs, b.log[i].tNs);
        EXPECT_EQ(a.log[i].position, b.log[i].position);
    }
    EXPECT_EQ(a.posesSent, a.log.size());
}

TEST(ClosedLoop, StartsFromConfiguredGroundPosition) {
    ClosedLoopSettings s;
    s.startPosition = Eigen::Vector3d(1.0, 2.0, 5.0);
    s.maxDurationS = 1.0;
    const ClosedLoopResult r = runClosedLoop(threeGateCourse(), SupervisorSettings{}, waypointAutopilot(), s);
    ASSERT_FALSE(r.log.empty());
    EXPECT_EQ(r.log.front().position, Eigen::Vector3d(1.0, 2.0, 0.0));
}

TEST(ClosedLoop, CollisionLandsWithinOneTick) {
    Course c = threeGateCourse();
    OccupancyGrid g(Eigen::Vector3d::Zero(), 0.1, {110, 45, 36});
    g.setOccupied(*g.voxelOf(Eigen::Vector3d(4.2, 2.0, 1.5)));
    c.grid = g;
    const ClosedLoopResult r = runClosedLoop(c, SupervisorSettings{}, waypointAutopilot());
    EXPECT_EQ(r.run.status, RunStatus::Collided);
    ASSERT_TRUE(r.land);
    EXPECT_EQ(r.land->poseNs, *r.run.tEndNs);
    EXPECT_GE(r.land->commandNs, r.land->poseNs);
    EXPECT_LE(r.land->commandNs - r.land->poseNs, 10'000'000u);
    EXPECT_EQ(r.finalState.mode, FlightMode::Grounded);
    EXPECT_EQ(r.finalState.position.z(), 0.0);
}

TEST(ClosedLoop, PotentialFieldPilotHeadsForGoal) {
    // Sparse wall far ahead; within the short run the field is dominated by the goal.
    std::vector<Gaussian3D> gs;
    for (int j = -10; j <= 10; ++j) {
        for (int k = 0; k <= 12; ++k) {
            Gaussian3D g;
            g.mean = Eigen::Vector3f(9.0f, 2.0f + 0.15f * j, 0.2f * k);
            g.scale = Eigen::Vector3f::Constant(0.08f);
            g.opacity = 0.95f;
            gs.push_back(g);
        }
    }
    const SplatScene scene(std::move(gs));
    const SplatRenderer renderer(scene);
    SensorSpec sensor;
    sensor.id = "front";
    sensor.intrinsics = CameraIntrinsics{24, 24, 15.5, 11.5, 32, 24, 0.05, 20};
    sensor.bodyToCamera = frontCameraExtrinsic();
    Course c;
    c.fence = Geofence{Eigen::Vector3d::Zero(), Eigen::Vector3d(11.0, 4.5, 3.65)};
    ClosedLoopSettings s;
    s.maxDurationS = 4.0;
    const ClosedLoopResult r =
        runClosedLoop(c, SupervisorSettings{}, makePotentialFieldPilot(renderer, sensor, Eigen::Vector3d(1, 0, 0)), s);
    EXPECT_EQ(r.run.status, RunStatus::Flying);
    EXPECT_GT(r.finalState.position.x(), 0.5);
    EXPECT_NEAR(r.finalState.position.y(), 0.0, 0.05);
    EXPECT_GT(r.commandsSent, 10u);
}
