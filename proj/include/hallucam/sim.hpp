// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/evaluation.hpp"
#include "hallucam/renderer.hpp"
#include "hallucam/supervisor.hpp"
#include "hallucam/transport.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace hallucam {

enum class FlightMode { Grounded, Takeoff, Flying, Landing };

std::string_view toString(FlightMode m);

struct SimParams {
    double tau = 0.3;
    double vMax = 6.0;
    double landSpeed = 0.5;
    double takeoffSpeed = 0.5;
    double takeoffHeight = 1.0;
    /// Proportional gain for position commands (1/s).
    double positionGain = 1.0;
};

struct SimDroneState {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    double yaw = 0.0;
    Eigen::Vector3d commandedVelocity = Eigen::Vector3d::Zero();
    FlightMode mode = FlightMode::Grounded;
    /// Rejected (non-finite) commands.
    std::uint64_t faults = 0;

    Pose6D pose() const;
    bool operator==(const SimDroneState &) const = default;
};

/// Advances the kinematic model by dt in (0, 0.05]. Velocity follows
/// v' = (v_cmd - v) / tau, integrated exactly over the step, then the speed is
/// clamped and the position advanced with the new velocity. Velocity commands
/// are world-frame. Land latches until z <= 0 (then grounded); takeoff climbs
/// until z >= takeoffHeight (then hovers). A grounded drone only reacts to
/// takeoff. Non-finite commands leave the state unchanged and count a fault.
SimDroneState simStep(const SimDroneState &state, const Command &cmd, double dt, const SimParams &params = {});

enum class TrajectoryKind { Square, Spiral, Lemniscate };

struct TrajectorySpec {
    TrajectoryKind kind = TrajectoryKind::Lemniscate;
    /// Side length (square) or amplitude (lemniscate), meters.
    double amplitude = 1.0;
    double omega = 1.0;
    double height = 1.0;
    /// Spiral radial rate (m/s) and climb rate (m/s).
    double radialRate = 0.1;
    double climbRate = 0.0;
    /// Spiral starting radius.
    double r0 = 0.5;
    /// Square traversal speed (m/s).
    double speed = 1.0;
    double duration = 10.0;

    void validate() const;
    /// Square: 4A / v, lemniscate: 2 pi / omega; spiral is aperiodic (0).
    double period() const;
};

/// Square loops (0,0,h) -> (A,0,h) -> (A,A,h) -> (0,A,h). Throws
/// std::out_of_range for t outside [0, duration].
Eigen::Vector3d trajectoryPoint(const TrajectorySpec &spec, double t);

/// Samples the reference at rateHz with identity orientation.
Trajectory sampleTrajectory(const TrajectorySpec &spec, double rateHz);

struct PotentialFieldParams {
    double kAttract = 1.0;
    double kRepulse = 2.0;
    double dMax = 3.0;
    double vMax = 6.0;
};

/// Velocity in the camera frame from a depth image (row-major, meters, 0 =
/// invalid) and a goal direction expressed in the camera frame.
Eigen::Vector3d potentialFieldVelocity(std::span<const float> depth, const CameraIntrinsics &K,
                                       const Eigen::Vector3d &goalDir, const PotentialFieldParams &params = {});

/// World-frame velocity command: the repulsive term is rotated by
/// cameraToWorld and the goal direction is given in world.
Command potentialFieldStep(const FrameRGBD &frame, const CameraIntrinsics &K,
                           const Eigen::Matrix3d &cameraToWorld, const Eigen::Vector3d &goalWorld,
                           const PotentialFieldParams &params = {}, std::uint64_t tNs = 0);

/// Flies through waypoints at constant speed using world-frame velocity
/// commands; slows inside `slowRadius` of the final waypoint.
class WaypointPilot {
public:
    WaypointPilot(std::vector<Eigen::Vector3d> waypoints, double speed, double tolerance = 0.15);

    Command command(const PoseSample &pose);
    bool done() const { return mNext >= mWaypoints.size(); }
    std::size_t nextIndex() const { return mNext; }

private:
    std::vector<Eigen::Vector3d> mWaypoints;
    double mSpeed;
    double mTolerance;
    std::size_t mNext = 0;
};

/// Autonomy callback: given the newest pose, optionally produce a command.
using Autopilot = std::function<std::optional<Command>(const PoseSample &)>;

/// Autopilot that renders the sensor's depth from each pose and steers with
/// potentialFieldStep. The renderer must outlive the returned callable.
Autopilot makePotentialFieldPilot(const SplatRenderer &renderer, const SensorSpec &sensor,
                                  const Eigen::Vector3d &goalWorld, const PotentialFieldParams &params = {},
                                  const RenderSettings &renderSettings = {});

struct ClosedLoopSettings {
    SimParams sim;
    double dt = 0.005;
    double poseRateHz = 200.0;
    double maxDurationS = 60.0;
    std::uint64_t startNs = 1'000'000'000;
    /// Ground position the drone starts from (z is forced to 0).
    Eigen::Vector3d startPosition = Eigen::Vector3d::Zero();
    /// Seconds spent on the ground before takeoff is sent.
    double armDelayS = 0.1;
};

struct LandEvent {
    std::uint64_t poseNs = 0;    // pose that triggered the land command
    std::uint64_t commandNs = 0; // sim time when the sim drone received it
};

struct ClosedLoopResult {
    RunState run;
    /// Emitted poses, one per datagram.
    std::vector<TrajectorySample> log;
    std::optional<LandEvent> land;
    SimDroneState finalState;
    std::uint64_t posesSent = 0;
    std::uint64_t commandsSent = 0;
};

/// Deterministic in-process loop: the sim drone emits pose datagrams, which go
/// through the pose codec and ingestor into the supervisor and autopilot;
/// commands travel back through the command codec into a newest-wins cell read
/// by the sim on its next tick. Supervisor land commands override the pilot.
/// Ends when the run is terminal and the drone is grounded, or at maxDuration.
ClosedLoopResult runClosedLoop(const Course &course, const SupervisorSettings &supervisorSettings,
                               const Autopilot &pilot, const ClosedLoopSettings &settings = {});

} // namespace hallucam
