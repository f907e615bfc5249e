// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/sim.hpp"

#include "hallucam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hallucam {

std::string_view toString(FlightMode m) {
    switch (m) {
    case FlightMode::Grounded:
        return "grounded";
    case FlightMode::Takeoff:
        return "takeoff";
    case FlightMode::Flying:
        return "flying";
    case FlightMode::Landing:
        return "landing";
    }
    return "unknown";
}

Pose6D SimDroneState::pose() const {
    Pose6D p;
    p.position = position;
    p.orientation = yawQuaternion(yaw);
    return p;
}

namespace {

double wrapAngle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

} // namespace

SimDroneState simStep(const SimDroneState &state, const Command &cmd, double dt, const SimParams &params) {
    if (!(dt > 0.0 && dt <= 0.05)) {
        throw std::invalid_argument("sim_step: dt must lie in (0, 0.05], got " + std::to_string(dt));
    }
    SimDroneState s = state;
    if (cmd.carriesPayload() && !std::all_of(cmd.payload.begin(), cmd.payload.end(),
                                             [](double x) { return std::isfinite(x); })) {
        ++s.faults;
        return s;
    }

    double yawRate = 0.0;
    switch (s.mode) {
    case FlightMode::Grounded:
        if (cmd.kind == CommandKind::Takeoff) {
            s.mode = FlightMode::Takeoff;
        } else {
            s.velocity.setZero();
            s.commandedVelocity.setZero();
            return s;
        }
        break;
    case FlightMode::Takeoff:
    case FlightMode::Flying:
        if (cmd.kind == CommandKind::Land) {
            s.mode = FlightMode::Landing;
        } else if (s.mode == FlightMode::Flying) {
            if (cmd.kind == CommandKind::Velocity) {
                s.commandedVelocity = Eigen::Vector3d(cmd.payload[0], cmd.payload[1], cmd.payload[2]);
                yawRate = cmd.payload[3];
            } else if (cmd.kind == CommandKind::Position) {
                const Eigen::Vector3d target(cmd.payload[0], cmd.payload[1], cmd.payload[2]);
                s.commandedVelocity = params.positionGain * (target - s.position);
                yawRate = params.positionGain * wrapAngle(cmd.payload[3] - s.yaw);
            }
        }
        break;
    case FlightMode::Landing:
        break;
    }
    if (s.mode == FlightMode::Takeoff) {
        s.commandedVelocity = Eigen::Vector3d(0.0, 0.0, params.takeoffSpeed);
    } else if (s.mode == FlightMode::Landing) {
        s.commandedVelocity = Eigen::Vector3d(0.0, 0.0, -params.landSpeed);
    }
    if (s.commandedVelocity.norm() > params.vMax) {
        s.commandedVelocity *= params.vMax / s.commandedVelocity.norm();
    }

    const double decay = std::exp(-dt / params.tau);
    s.velocity = s.commandedVelocity + (s.velocity - s.commandedVelocity) * decay;
    const double speed = s.velocity.norm();
    if (speed > params.vMax) {
        s.velocity *= params.vMax / speed;
    }
    s.position += s.velocity * dt;
    s.yaw = wrapAngle(s.yaw + yawRate * dt);

    if (s.mode == FlightMode::Landing && s.position.z() <= 0.0) {
        s.mode = FlightMode::Grounded;
        s.position.z() = 0.0;
        s.velocity.setZero();
        s.commandedVelocity.setZero();
    } else if (s.mode == FlightMode::Takeoff && s.position.z() >= params.takeoffHeight) {
        s.mode = FlightMode::Flying;
        s.commandedVelocity.setZero();
    } else if (s.position.z() < 0.0) {
        s.position.z() = 0.0;
        s.velocity.z() = std::max(0.0, s.velocity.z());
    }
    return s;
}

void TrajectorySpec::validate() const {
    const auto positive = [](double v, const char *name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("trajectory: ") + name + " must be positive");
        }
    };
    positive(amplitude, "amplitude");
    positive(duration, "duration");
    if (!(height >= 0.0)) {
        throw std::invalid_argument("trajectory: height must be non-negative");
    }
    switch (kind) {
    case TrajectoryKind::Square:
        positive(speed, "speed");
        break;
    case TrajectoryKind::Spiral:
        positive(omega, "omega");
        positive(r0, "r0");
        if (!(radialRate >= 0.0) || !std::isfinite(climbRate)) {
            throw std::invalid_argument("trajectory: radial rate must be non-negative and climb rate finite");
        }
        break;
    case TrajectoryKind::Lemniscate:
        positive(omega, "omega");
        break;
    }
}

double TrajectorySpec::period() const {
    switch (kind) {
    case TrajectoryKind::Square:
        return 4.0 * amplitude / speed;
    case TrajectoryKind::Lemniscate:
        return 2.0 * std::numbers::pi / omega;
    case TrajectoryKind::Spiral:
        return 0.0;
    }
    return 0.0;
}

Eigen::Vector3d trajectoryPoint(const TrajectorySpec &spec, double t) {
    spec.validate();
    if (!(t >= 0.0 && t <= spec.duration)) {
        throw std::out_of_range("trajectory: t=" + std::to_string(t) + " outside [0, " +
                                std::to_string(spec.duration) + "]");
    }
    const double a = spec.amplitude;
    const double h = spec.height;
    switch (spec.kind) {
    case TrajectoryKind::Square: {
        const double s = std::fmod(spec.speed * t, 4.0 * a);
        const int side = std::min(3, static_cast<int>(s / a));
        const double f = s - side * a;
        switch (side) {
        case 0:
            return {f, 0.0, h};
        case 1:
            return {a, f, h};
        case 2:
            return {a - f, a, h};
        default:
            return {0.0, a - f, h};
        }
    }
    case TrajectoryKind::Spiral: {
        const double r = spec.r0 + spec.radialRate * t;
        return {r * std::cos(spec.omega * t), r * std::sin(spec.omega * t), h + spec.climbRate * t};
    }
    case TrajectoryKind::Lemniscate: {
        const double s = std::sin(spec.omega * t);
        return {a * s, a * s * std::cos(spec.omega * t), h};
    }
    }
    return Eigen::Vector3d::Zero();
}

Trajectory sampleTrajectory(const TrajectorySpec &spec, double rateHz) {
    if (!(rateHz > 0.0)) {
        throw std::invalid_argument("trajectory: rate must be positive");
    }
    const auto n = static_cast<std::size_t>(std::floor(spec.duration * rateHz)) + 1;
    std::vector<TrajectorySample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = std::min(spec.duration, static_cast<double>(i) / rateHz);
        TrajectorySample s;
        s.tNs = static_cast<std::uint64_t>(std::llround(static_cast<double>(i) * 1e9 / rateHz));
        s.position = trajectoryPoint(spec, t);
        samples.push_back(s);
    }
    return Trajectory(std::move(samples));
}

Eigen::Vector3d potentialFieldVelocity(std::span<const float> depth, const CameraIntrinsics &K,
                                       const Eigen::Vector3d &goalDir, const PotentialFieldParams &params) {
    if (depth.size() != K.pixelCount()) {
        throw std::invalid_argument("potential field: depth size does not match intrinsics");
    }
    Eigen::Vector3d repulse = Eigen::Vector3d::Zero();
    std::size_t count = 0;
    const double invDMax = 1.0 / params.dMax;
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            const double d = depth[static_cast<std::size_t>(v) * K.width + u];
            if (!(d > 0.0 && d < params.dMax)) {
                continue;
            }
            const Eigen::Vector3d ray = Eigen::Vector3d((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0).normalized();
            repulse -= (1.0 / d - invDMax) * ray;
            ++count;
        }
    }
    if (count > 0) {
        repulse /= static_cast<double>(count);
    }
    Eigen::Vector3d vel = params.kAttract * goalDir + params.kRepulse * repulse;
    const double n = vel.norm();
    if (n > params.vMax) {
        vel *= params.vMax / n;
    }
    return vel;
}

Command potentialFieldStep(const FrameRGBD &frame, const CameraIntrinsics &K, const Eigen::Matrix3d &cameraToWorld,
                           const Eigen::Vector3d &goalWorld, const PotentialFieldParams &params, std::uint64_t tNs) {
    if (!frame.hasDepth()) {
        throw std::invalid_argument("potential field: frame carries no depth");
    }
    const Eigen::Vector3d goalCam = cameraToWorld.transpose() * goalWorld;
    const Eigen::Vector3d velCam = potentialFieldVelocity(frame.depth, K, goalCam, params);
    return Command::velocity(cameraToWorld * velCam, 0.0, tNs);
}

Autopilot makePotentialFieldPilot(const SplatRenderer &renderer, const SensorSpec &sensor,
                                  const Eigen::Vector3d &goalWorld, const PotentialFieldParams &params,
                                  const RenderSettings &renderSettings) {
    return [&renderer, sensor, goalWorld, params, renderSettings](const PoseSample &p) -> std::optional<Command> {
        const Pose6D cam = composeCameraPose(p.pose(), sensor.bodyToCamera);
        const FrameRGBD frame = renderer.render(cam, sensor.intrinsics, renderSettings);
        return potentialFieldStep(frame, sensor.intrinsics, cam.orientation.toRotationMatrix(), goalWorld, params,
                                  p.timestampNs);
    };
}

WaypointPilot::WaypointPilot(std::vector<Eigen::Vector3d> waypoints, double speed, double tolerance)
    : mWaypoints(std::move(waypoints)), mSpeed(speed), mTolerance(tolerance) {
    if (mWaypoints.empty() || !(speed > 0.0) || !(tolerance > 0.0)) {
        throw std::invalid_argument("waypoint pilot: need waypoints, positive speed and tolerance");
    }
}

Command WaypointPilot::command(const PoseSample &pose) {
    while (mNext < mWaypoints.size() && (mWaypoints[mNext] - pose.position).norm() <= mTolerance) {
        ++mNext;
    }
    if (done()) {
        return Command::velocity(Eigen::Vector3d::Zero(), 0.0, pose.timestampNs);
    }
    const Eigen::Vector3d delta = mWaypoints[mNext] - pose.position;
    double speed = mSpeed;
    if (mNext + 1 == mWaypoints.size()) {
        speed = std::min(mSpeed, delta.norm());
    }
    return Command::velocity(delta.normalized() * speed, 0.0, pose.timestampNs);
}

ClosedLoopResult runClosedLoop(const Course &course, const SupervisorSettings &supervisorSettings,
                               const Autopilot &pilot, const ClosedLoopSettings &settings) {
    if (!(settings.poseRateHz > 0.0) || !(settings.dt > 0.0)) {
        throw std::invalid_argument("closed loop: rates must be positive");
    }
    const auto dtNs = static_cast<std::uint64_t>(std::llround(settings.dt * 1e9));
    const auto decimation =
        std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(1.0 / (settings.poseRateHz * settings.dt))));
    const auto maxTicks = static_cast<std::uint64_t>(std::ceil(settings.maxDurationS / settings.dt));
    const auto armTicks = static_cast<std::uint64_t>(std::llround(settings.armDelayS / settings.dt));

    RunSupervisor supervisor(course, supervisorSettings);
    PoseIngestor ingestor;
    LatestCell<Command> commandCell;
    std::uint64_t commandKey = 0;
    bool landLatched = false;
    std::optional<std::uint64_t> pendingLandPoseNs;

    ClosedLoopResult result;
    SimDroneState state;
    state.position = Eigen::Vector3d(settings.startPosition.x(), settings.startPosition.y(), 0.0);
    Command hover = Command::velocity(Eigen::Vector3d::Zero(), 0.0, settings.startNs);
    const auto send = [&](const Command &c) {
        const auto bytes = encodeCommand(c);
        commandCell.offer(decodeCommand(bytes), ++commandKey);
        ++result.commandsSent;
    };

    std::uint32_t seq = 0;
    for (std::uint64_t tick = 0; tick < maxTicks; ++tick) {
        const std::uint64_t nowNs = settings.startNs + tick * dtNs;
        if (tick == armTicks) {
            send(Command::takeoff(nowNs));
        }
        const Command cmd = commandCell.get().value_or(hover);
        if (pendingLandPoseNs && cmd.kind == CommandKind::Land) {
            result.land = LandEvent{*pendingLandPoseNs, nowNs};
            pendingLandPoseNs.reset();
        }
        state = simStep(state, cmd, settings.dt, settings.sim);
        const std::uint64_t tNs = nowNs + dtNs;

        if ((tick + 1) % decimation != 0) {
            continue;
        }
        PoseSample sample;
        sample.seq = ++seq;
        sample.timestampNs = tNs;
        sample.position = state.position;
        const Eigen::Quaterniond q = yawQuaternion(state.yaw);
        sample.quat = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
        ingestor.ingest(encodePose(sample));
        ++result.posesSent;
        const PoseSample latest = ingestor.latest().value_or(sample);
        result.log.push_back(TrajectorySample{latest.timestampNs, latest.position, latest.pose().orientation});

        if (const auto landCmd = supervisor.onPose(latest); landCmd && !landLatched) {
            landLatched = true;
            pendingLandPoseNs = latest.timestampNs;
            send(*landCmd);
        }
        if (!landLatched && state.mode == FlightMode::Flying && !isTerminal(supervisor.state().status)) {
            if (auto c = pilot(latest)) {
                send(*c);
            }
        }
        const RunStatus status = supervisor.state().status;
        if (isTerminal(status) && (state.mode == FlightMode::Grounded || status == RunStatus::Finished)) {
            break;
        }
    }
    result.run = supervisor.state();
    result.finalState = state;
    return result;
}

} // namespace hallucam
