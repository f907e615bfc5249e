// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/cli.hpp"

#include "hallucam/errors.hpp"
#include "hallucam/image_io.hpp"
#include "hallucam/net.hpp"
#include "hallucam/sim.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <numbers>
#include <random>
#include <thread>

namespace hallucam::cli {

using Clock = std::chrono::steady_clock;

int reportError(std::ostream &err) {
    try {
        throw;
    } catch (const InsufficientDataError &e) {
        err << "error: " << e.what() << '\n';
        return kInsufficient;
    } catch (const DegeneracyError &e) {
        err << "error: " << e.what() << '\n';
        return kInsufficient;
    } catch (const Error &e) {
        err << "error: " << e.what() << '\n';
        return kInput;
    } catch (const std::invalid_argument &e) {
        err << "error: " << e.what() << '\n';
        return kInput;
    } catch (const std::out_of_range &e) {
        err << "error: " << e.what() << '\n';
        return kInput;
    } catch (const std::exception &e) {
        err << "internal error: " << e.what() << '\n';
        return kInternal;
    } catch (...) {
        err << "internal error\n";
        return kInternal;
    }
}

SplatScene openScene(const std::string &spec) {
    constexpr std::string_view prefix = "synthetic:";
    if (!spec.starts_with(prefix)) {
        return loadScene(spec);
    }
    SyntheticSceneOptions opts;
    std::string_view rest = std::string_view(spec).substr(prefix.size());
    const auto colon = rest.find(':');
    const std::string_view countText = rest.substr(0, colon);
    auto [p, ec] = std::from_chars(countText.data(), countText.data() + countText.size(), opts.count);
    if (ec != std::errc() || p != countText.data() + countText.size()) {
        throw std::invalid_argument("bad synthetic scene spec '" + spec + "'");
    }
    if (colon != std::string_view::npos) {
        const std::string_view seedText = rest.substr(colon + 1);
        auto [q, ec2] = std::from_chars(seedText.data(), seedText.data() + seedText.size(), opts.seed);
        if (ec2 != std::errc() || q != seedText.data() + seedText.size()) {
            throw std::invalid_argument("bad synthetic scene seed in '" + spec + "'");
        }
    }
    return makeSyntheticScene(opts);
}

namespace {

void finishRun(const ScenarioConfig &config, const RunState &run, const std::filesystem::path &eventLog,
               const std::filesystem::path &leaderboard) {
    writeEventLog(eventLog, run);
    LeaderboardRecord record;
    record.team = config.team;
    record.stagesCompleted = run.stagesCompleted();
    record.elapsedS = run.elapsedS();
    record.status = run.status;
    appendLeaderboard(record, leaderboard);
}

Pose6D defaultHoverPose(const ScenarioConfig &config) {
    Pose6D p;
    p.position = 0.5 * (config.geofence.min + config.geofence.max);
    p.position.z() = config.geofence.min.z() + 1.0;
    return p;
}

} // namespace

int serve(const std::filesystem::path &configPath, const ServeOptions &options, std::ostream &out,
          std::ostream &err) {
    try {
        const ScenarioConfig config = loadScenarioConfig(configPath);
        const SplatScene scene = loadScene(config.scenePath);
        const Course course = buildCourse(config, courseGrid(config, scene));
        const SplatRenderer renderer(scene);
        const RenderSettings renderSettings = config.renderSettings();
        const double near = config.rig.sensors.front().intrinsics.near;
        const double far = config.rig.sensors.front().intrinsics.far;

        PoseIngestService ingest(config.ports.pose);
        FrameServer frames(config.ports.frame);
        UdpSocket commandOut = UdpSocket::unbound();
        RunSupervisor supervisor(course, config.supervisorSettings());
        std::mutex supervisorMutex;
        bool reported = false;

        ingest.start();
        frames.start();
        out << "serving: pose udp " << ingest.port() << ", frames tcp " << frames.port() << ", commands -> "
            << config.droneHost << ":" << config.ports.command << std::endl;

        std::atomic<bool> running{true};
        std::jthread supervisorThread([&] {
            std::uint64_t seen = 0;
            while (running.load()) {
                const auto latest = ingest.ingestor().cell().getVersioned();
                if (latest && latest->second != seen) {
                    seen = latest->second;
                    std::lock_guard lock(supervisorMutex);
                    if (auto cmd = supervisor.onPose(latest->first)) {
                        commandOut.sendTo(encodeCommand(*cmd), config.droneHost, config.ports.command);
                    }
                    if (!reported && isTerminal(supervisor.state().status)) {
                        reported = true;
                        finishRun(config, supervisor.state(), config.eventLogPath, config.leaderboardPath);
                    }
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(1));
            }
        });

        const auto start = Clock::now();
        const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(
            1.0 / config.rates.renderHz));
        auto next = start;
        auto lastReport = start;
        std::vector<std::int64_t> renderTimes;
        std::uint32_t seq = 0;
        while (true) {
            if (options.stop && options.stop->load()) {
                break;
            }
            const auto now = Clock::now();
            if (options.durationS > 0.0 && now - start >= std::chrono::duration<double>(options.durationS)) {
                break;
            }
            const auto latest = ingest.ingestor().latest();
            const Pose6D body = latest ? latest->pose() : defaultHoverPose(config);
            const std::uint64_t stamp = latest ? latest->timestampNs : 0;
            const double t = scenarioTime(stamp);
            ++seq;
            const auto clients = frames.clients();
            const auto renderOne = [&](const SensorSpec &sensor) {
                const Pose6D cam = composeCameraPose(body, sensor.bodyToCamera);
                FrameRGBD frame = renderer.render(cam, sensor.intrinsics, renderSettings);
                if (config.window) {
                    frame = overlayHand(frame, cam, sensor.intrinsics, *config.window, t);
                }
                frame.seq = seq;
                frame.timestampNs = stamp;
                return frame;
            };
            if (clients.empty()) {
                for (const auto &sensor : config.rig.sensors) {
                    renderOne(sensor);
                }
            } else {
                for (const auto &c : clients) {
                    FrameRGBD frame = renderOne(c.config.toSensorSpec(near, far));
                    if (!c.config.depth) {
                        frame.depth.clear();
                    }
                    frames.publish(c.id, frame);
                }
            }
            const auto done = Clock::now();
            renderTimes.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(done - start).count());
            if (done - lastReport >= std::chrono::seconds(1) && renderTimes.size() >= 2) {
                lastReport = done;
                const RateStats stats = measureRate(renderTimes, 1.0);
                const IngestCounters ic = ingest.ingestor().counters();
                const FrameServerCounters fc = frames.counters();
                std::string status;
                {
                    std::lock_guard lock(supervisorMutex);
                    status = std::string(toString(supervisor.state().status));
                }
                char line[256];
                std::snprintf(line, sizeof(line),
                              "render %.1f Hz (p50 %.2f ms, p99 %.2f ms) | poses %llu ok %llu bad | clients %zu "
                              "sent %llu dropped %llu | run %s",
                              stats.hz, stats.p50GapMs, stats.p99GapMs,
                              static_cast<unsigned long long>(ic.accepted),
                              static_cast<unsigned long long>(ic.malformed), clients.size(),
                              static_cast<unsigned long long>(fc.framesSent),
                              static_cast<unsigned long long>(fc.framesDropped), status.c_str());
                out << line << std::endl;
                if (renderTimes.size() > 4096) {
                    renderTimes.erase(renderTimes.begin(), renderTimes.end() - 2048);
                }
            }
            next += period;
            if (next < Clock::now()) {
                next = Clock::now();
            } else {
                std::this_thread::sleep_until(next);
            }
        }
        running = false;
        supervisorThread.join();
        frames.stop();
        ingest.stop();
        std::lock_guard lock(supervisorMutex);
        if (!reported && supervisor.state().tStartNs) {
            finishRun(config, supervisor.state(), config.eventLogPath, config.leaderboardPath);
        }
        return kOk;
    } catch (...) {
        return reportError(err);
    }
}

void snapshot(const SnapshotOptions &options) {
    if (!options.position.allFinite() || !options.quatWxyz.allFinite() ||
        std::abs(options.quatWxyz.norm() - 1.0) > 1e-3) {
        throw std::invalid_argument("snapshot: pose quaternion must be finite with unit norm");
    }
    options.intrinsics.validate();
    const SplatScene scene = openScene(options.scene);
    Pose6D pose;
    pose.position = options.position;
    pose.orientation =
        Eigen::Quaterniond(options.quatWxyz(0), options.quatWxyz(1), options.quatWxyz(2), options.quatWxyz(3))
            .normalized();
    RenderSettings settings;
    settings.background = options.background;
    const FrameRGBD frame = render(scene, pose, options.intrinsics, settings);
    const auto &K = options.intrinsics;
    const std::string prefix = options.outPrefix.string();
    writePng(prefix + "_rgb.png", frame.rgb, K.width, K.height, 3);
    writePng(prefix + "_depth.png", depthToGray(frame.depth, K.near, K.far), K.width, K.height, 1);
}

BenchResult bench(const SplatScene &scene, const BenchOptions &options) {
    if (options.frames < 100) {
        throw std::invalid_argument("bench: frames must be at least 100, got " + std::to_string(options.frames));
    }
    CameraIntrinsics K;
    K.width = options.width;
    K.height = options.height;
    K.fx = K.fy = 0.5 * options.width;
    K.cx = 0.5 * options.width - 0.5;
    K.cy = 0.5 * options.height - 0.5;
    K.far = 20.0;
    K.validate();
    RenderSettings settings;
    settings.threads = options.threads;

    Eigen::Vector3d lo = Eigen::Vector3d::Zero(), hi = Eigen::Vector3d::Ones();
    if (!scene.empty()) {
        lo = scene.aabb().min.cast<double>();
        hi = scene.aabb().max.cast<double>();
        const Eigen::Vector3d margin = 0.1 * (hi - lo);
        lo += margin;
        hi -= margin;
    }
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const SplatRenderer renderer(scene);
    std::vector<double> frameMs;
    frameMs.reserve(options.frames);
    const auto start = Clock::now();
    for (std::size_t i = 0; i < options.frames; ++i) {
        Pose6D body;
        for (int a = 0; a < 3; ++a) {
            body.position(a) = lo(a) + unit(rng) * (hi(a) - lo(a));
        }
        body.orientation = yawQuaternion(2.0 * std::numbers::pi * unit(rng));
        const Pose6D cam = composeCameraPose(body, frontCameraExtrinsic());
        const auto t0 = Clock::now();
        const FrameRGBD frame = renderer.render(cam, K, settings);
        const auto t1 = Clock::now();
        frameMs.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        if (frame.rgb.empty()) {
            throw std::logic_error("bench: empty frame");
        }
    }
    const double totalS = std::chrono::duration<double>(Clock::now() - start).count();
    BenchResult r;
    r.gaussians = scene.size();
    r.frames = options.frames;
    r.hz = static_cast<double>(options.frames) / totalS;
    r.p50Ms = percentile(frameMs, 50.0);
    r.p99Ms = percentile(frameMs, 99.0);
    return r;
}

BenchResult bench(const BenchOptions &options) {
    if (options.frames < 100) {
        throw std::invalid_argument("bench: frames must be at least 100, got " + std::to_string(options.frames));
    }
    return bench(openScene(options.scene), options);
}

RunState replayTrace(const Course &course, const SupervisorSettings &settings, const Trajectory &trace) {
    RunSupervisor supervisor(course, settings);
    std::uint32_t seq = 0;
    for (const auto &s : trace.samples()) {
        PoseSample p;
        p.seq = ++seq;
        p.timestampNs = s.tNs;
        p.position = s.position;
        p.quat = Eigen::Vector4d(s.orientation.w(), s.orientation.x(), s.orientation.y(), s.orientation.z());
        supervisor.onPose(p);
        if (isTerminal(supervisor.state().status)) {
            break;
        }
    }
    return supervisor.state();
}

GradeResult grade(const std::filesystem::path &configPath, const std::filesystem::path &tracePath,
                  const std::optional<std::filesystem::path> &eventLogOverride,
                  const std::optional<std::filesystem::path> &leaderboardOverride) {
    const ScenarioConfig config = loadScenarioConfig(configPath);
    const Trajectory trace = readTrajectoryCsv(tracePath);
    std::optional<OccupancyGrid> grid;
    if (config.gridPath) {
        grid = OccupancyGrid::load(*config.gridPath);
    } else {
        grid = courseGrid(config, loadScene(config.scenePath));
    }
    const Course course = buildCourse(config, std::move(grid));
    GradeResult result;
    result.run = replayTrace(course, config.supervisorSettings(), trace);
    result.poses = trace.size();
    finishRun(config, result.run, eventLogOverride.value_or(config.eventLogPath),
              leaderboardOverride.value_or(config.leaderboardPath));
    return result;
}

OccupancyGrid buildSceneGrid(const GridOptions &options) {
    if (!(options.opacityMin >= 0.0 && options.opacityMin < 1.0)) {
        throw std::invalid_argument("grid: opacity_min must lie in [0, 1)");
    }
    const SplatScene scene = openScene(options.scene);
    const auto points = exportPointcloud(scene, options.opacityMin);
    OccupancyGrid grid = buildGrid(points, options.voxelSize, options.padding);
    if (!options.out.empty()) {
        grid.save(options.out);
    }
    return grid;
}

std::vector<Eigen::Vector3d> gateWaypoints(const std::vector<Gate> &gates, const Eigen::Vector3d &start,
                                           double approach) {
    std::vector<Eigen::Vector3d> wps;
    if (gates.empty()) {
        return wps;
    }
    const auto centre = [](const Gate &g) { return Eigen::Vector3d(g.worldToGate.inverse().translation()); };
    const auto forward = [](const Gate &g) { return Eigen::Vector3d(g.worldToGate.inverse().linear().col(2)); };
    wps.push_back(Eigen::Vector3d(start.x(), start.y(), centre(gates.front()).z()));
    for (const auto &g : gates) {
        wps.push_back(centre(g) - approach * forward(g));
        wps.push_back(centre(g) + approach * forward(g));
    }
    return wps;
}

std::vector<TrajectorySample> runNetworkSimClient(const std::string &host, std::uint16_t posePort,
                                                  std::uint16_t commandPort, const Eigen::Vector3d &start,
                                                  const std::vector<Eigen::Vector3d> &waypoints, double speed,
                                                  double poseRateHz, double maxDurationS) {
    constexpr double dt = 0.005;
    CommandListener listener(commandPort, "127.0.0.1");
    listener.start();
    const UdpSocket tx = UdpSocket::unbound();
    WaypointPilot pilot(waypoints, speed);
    SimDroneState state;
    state.position = Eigen::Vector3d(start.x(), start.y(), 0.0);
    Command current = Command::takeoff(0);
    bool landLatched = false;
    std::uint64_t seenVersion = 0;
    const auto decimation = std::max<long>(1, std::lround(1.0 / (poseRateHz * dt)));
    const auto baseNs = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count());
    std::vector<TrajectorySample> log;
    std::uint32_t seq = 0;
    double doneFor = 0.0;
    const auto wallStart = Clock::now();
    const auto step = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(dt));
    for (long tick = 0; tick * dt < maxDurationS; ++tick) {
        if (const auto latest = listener.latest(); latest && latest->second != seenVersion) {
            seenVersion = latest->second;
            if (latest->first.kind == CommandKind::Land) {
                landLatched = true;
                current = latest->first;
            }
        }
        state = simStep(state, current, dt);
        const std::uint64_t tNs = baseNs + static_cast<std::uint64_t>((tick + 1) * static_cast<long>(dt * 1e9));
        if ((tick + 1) % decimation == 0) {
            PoseSample p;
            p.seq = ++seq;
            p.timestampNs = tNs;
            p.position = state.position;
            const Eigen::Quaterniond q = yawQuaternion(state.yaw);
            p.quat = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
            tx.sendTo(encodePose(p), host, posePort);
            log.push_back(TrajectorySample{tNs, p.position, q});
            if (!landLatched && state.mode == FlightMode::Flying) {
                current = pilot.command(p);
            }
        }
        if (landLatched && state.mode == FlightMode::Grounded) {
            break;
        }
        if (pilot.done()) {
            doneFor += dt;
            if (doneFor > 0.5) {
                break;
            }
        }
        std::this_thread::sleep_until(wallStart + step * (tick + 1));
    }
    listener.stop();
    return log;
}

int simulate(const std::filesystem::path &configPath, const SimulateOptions &options, std::ostream &out) {
    const ScenarioConfig config = loadScenarioConfig(configPath);
    const auto waypoints = gateWaypoints(config.gates, options.start);
    if (waypoints.empty()) {
        throw ConfigError("config field 'gates': simulate needs at least one gate");
    }
    std::vector<TrajectorySample> log;
    if (options.network) {
        log = runNetworkSimClient(options.host, config.ports.pose, config.ports.command, options.start, waypoints,
                                  options.speed, config.rates.poseHz, options.maxDurationS);
        out << "sent " << log.size() << " poses\n";
    } else {
        std::optional<OccupancyGrid> grid;
        if (config.gridPath) {
            grid = OccupancyGrid::load(*config.gridPath);
        } else {
            grid = courseGrid(config, loadScene(config.scenePath));
        }
        const Course course = buildCourse(config, std::move(grid));
        auto pilot = std::make_shared<WaypointPilot>(waypoints, options.speed);
        ClosedLoopSettings settings;
        settings.poseRateHz = config.rates.poseHz;
        settings.maxDurationS = options.maxDurationS;
        settings.startPosition = options.start;
        const ClosedLoopResult result = runClosedLoop(
            course, config.supervisorSettings(),
            [pilot](const PoseSample &p) -> std::optional<Command> { return pilot->command(p); }, settings);
        finishRun(config, result.run, config.eventLogPath, config.leaderboardPath);
        log = result.log;
        char line[160];
        std::snprintf(line, sizeof(line), "status %s, stages %zu/%zu, elapsed %.3f s\n",
                      std::string(toString(result.run.status)).c_str(), result.run.stagesCompleted(),
                      config.gates.size(), result.run.elapsedS());
        out << line;
    }
    if (!options.trajectoryOut.empty() && log.size() >= 2) {
        writeTrajectoryCsv(options.trajectoryOut, Trajectory(log));
    }
    return kOk;
}

} // namespace hallucam::cli
