// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/cli.hpp"
#include "hallucam/errors.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>

namespace {

std::atomic<bool> gStop{false};

void onSignal(int) { gStop = true; }

} // namespace

int main(int argc, char **argv) {
    using namespace hallucam;
    CLI::App app{"hallucam: pose-driven RGBD sensor hallucination, grading and evaluation"};
    app.require_subcommand(1);

    // serve
    auto *serveCmd = app.add_subcommand("serve", "Run pose ingest, render loop, frame server and supervisor");
    std::string serveConfig;
    double serveDuration = 0.0;
    serveCmd->add_option("config", serveConfig, "Scenario JSON")->required();
    serveCmd->add_option("--duration", serveDuration, "Stop after this many seconds (0 = until signal)");

    // snapshot
    auto *snapCmd = app.add_subcommand("snapshot", "Render one RGB + depth PNG pair");
    cli::SnapshotOptions snap;
    std::vector<double> snapPose{0, 0, 0, 1, 0, 0, 0};
    std::vector<double> snapK{320, 240, 160, 160, 159.5, 119.5};
    std::vector<double> snapRange{0.05, 20.0};
    std::string snapOut;
    snapCmd->add_option("scene", snap.scene, "PLY path or synthetic:<count>[:<seed>]")->required();
    snapCmd->add_option("--pose", snapPose, "Camera pose x y z qw qx qy qz")->expected(7);
    snapCmd->add_option("--intrinsics", snapK, "width height fx fy cx cy")->expected(6);
    snapCmd->add_option("--depth-range", snapRange, "near far")->expected(2);
    snapCmd->add_option("-o,--out", snapOut, "Output prefix")->required();

    // bench
    auto *benchCmd = app.add_subcommand("bench", "Measure render throughput");
    cli::BenchOptions benchOpts;
    bool benchScaling = false;
    benchCmd->add_option("--scene", benchOpts.scene, "PLY path or synthetic:<count>[:<seed>]");
    benchCmd->add_option("--width", benchOpts.width);
    benchCmd->add_option("--height", benchOpts.height);
    benchCmd->add_option("-n,--frames", benchOpts.frames, "Frames to render (>= 100)");
    benchCmd->add_option("--seed", benchOpts.seed);
    benchCmd->add_option("--threads", benchOpts.threads, "Render threads (0 = all cores)");
    benchCmd->add_flag("--scaling", benchScaling, "Synthetic scaling table at 10k/50k/200k Gaussians");

    // grade
    auto *gradeCmd = app.add_subcommand("grade", "Replay a pose log through the supervisor");
    std::string gradeConfig, gradeTrace, gradeEvents, gradeBoard;
    gradeCmd->add_option("config", gradeConfig)->required();
    gradeCmd->add_option("trace", gradeTrace, "CSV t_ns,x,y,z,qw,qx,qy,qz")->required();
    gradeCmd->add_option("--events", gradeEvents, "Event log path (overrides config)");
    gradeCmd->add_option("--leaderboard", gradeBoard, "Leaderboard CSV (overrides config)");

    // eval
    auto *evalCmd = app.add_subcommand("eval", "Absolute trajectory error of an estimate against ground truth");
    std::string evalEst, evalGt;
    double evalMaxDt = kDefaultMaxDtS;
    bool evalScale = false;
    evalCmd->add_option("estimate", evalEst)->required();
    evalCmd->add_option("groundtruth", evalGt)->required();
    evalCmd->add_option("--max-dt", evalMaxDt, "Association tolerance in seconds");
    evalCmd->add_flag("--scale", evalScale, "Similarity alignment instead of SE(3)");

    // grid
    auto *gridCmd = app.add_subcommand("grid", "Voxelise a scene into an occupancy grid");
    cli::GridOptions gridOpts;
    std::string gridOut;
    gridCmd->add_option("scene", gridOpts.scene)->required();
    gridCmd->add_option("--voxel", gridOpts.voxelSize);
    gridCmd->add_option("--opacity-min", gridOpts.opacityMin);
    gridCmd->add_option("--padding", gridOpts.padding);
    gridCmd->add_option("-o,--out", gridOut)->required();

    // simulate
    auto *simCmd = app.add_subcommand("simulate", "Fly the sim drone through the scenario gates");
    std::string simConfig, simTraj;
    cli::SimulateOptions simOpts;
    simCmd->add_option("config", simConfig)->required();
    simCmd->add_option("--trajectory", simTraj, "Write the flown trajectory CSV");
    simCmd->add_option("--speed", simOpts.speed);
    simCmd->add_option("--max-duration", simOpts.maxDurationS);
    simCmd->add_flag("--network", simOpts.network, "Talk to a running serve instance over UDP");
    simCmd->add_option("--host", simOpts.host);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::kInput;
    }

    try {
        if (*serveCmd) {
            std::signal(SIGINT, onSignal);
            std::signal(SIGTERM, onSignal);
            cli::ServeOptions opts;
            opts.durationS = serveDuration;
            opts.stop = &gStop;
            return cli::serve(serveConfig, opts, std::cout, std::cerr);
        }
        if (*snapCmd) {
            snap.position = Eigen::Vector3d(snapPose[0], snapPose[1], snapPose[2]);
            snap.quatWxyz = Eigen::Vector4d(snapPose[3], snapPose[4], snapPose[5], snapPose[6]);
            snap.intrinsics.width = static_cast<int>(snapK[0]);
            snap.intrinsics.height = static_cast<int>(snapK[1]);
            snap.intrinsics.fx = snapK[2];
            snap.intrinsics.fy = snapK[3];
            snap.intrinsics.cx = snapK[4];
            snap.intrinsics.cy = snapK[5];
            snap.intrinsics.near = snapRange[0];
            snap.intrinsics.far = snapRange[1];
            snap.outPrefix = snapOut;
            cli::snapshot(snap);
            std::cout << "wrote " << snapOut << "_rgb.png and " << snapOut << "_depth.png\n";
            return cli::kOk;
        }
        if (*benchCmd) {
            if (benchOpts.frames < 100) {
                std::cerr << "usage error: --frames must be at least 100\n";
                return cli::kInput;
            }
            const auto print = [](const cli::BenchResult &r) {
                std::printf("%9zu gaussians  %7.1f Hz  p50 %7.2f ms  p99 %7.2f ms  (%zu frames)\n", r.gaussians,
                            r.hz, r.p50Ms, r.p99Ms, r.frames);
            };
            if (benchScaling) {
                std::printf("# %dx%d RGBD, synthetic scenes\n", benchOpts.width, benchOpts.height);
                for (const std::size_t n : {10000u, 50000u, 200000u}) {
                    auto opts = benchOpts;
                    opts.scene = "synthetic:" + std::to_string(n);
                    print(cli::bench(opts));
                }
            } else {
                print(cli::bench(benchOpts));
            }
            return cli::kOk;
        }
        if (*gradeCmd) {
            std::optional<std::filesystem::path> events, board;
            if (!gradeEvents.empty()) {
                events = gradeEvents;
            }
            if (!gradeBoard.empty()) {
                board = gradeBoard;
            }
            const auto result = cli::grade(gradeConfig, gradeTrace, events, board);
            std::printf("status %s, stages %zu, elapsed %.3f s, poses %zu\n",
                        std::string(toString(result.run.status)).c_str(), result.run.stagesCompleted(),
                        result.run.elapsedS(), result.poses);
            return cli::kOk;
        }
        if (*evalCmd) {
            const Trajectory est = readTrajectoryCsv(evalEst);
            const Trajectory gt = readTrajectoryCsv(evalGt);
            std::cout << computeAte(est, gt, evalMaxDt, evalScale).toJson() << '\n';
            return cli::kOk;
        }
        if (*gridCmd) {
            gridOpts.out = gridOut;
            const auto grid = cli::buildSceneGrid(gridOpts);
            std::printf("grid %ux%ux%u, %zu occupied voxels -> %s\n", grid.dims()[0], grid.dims()[1],
                        grid.dims()[2], grid.occupiedCount(), gridOut.c_str());
            return cli::kOk;
        }
        if (*simCmd) {
            simOpts.trajectoryOut = simTraj;
            return cli::simulate(simConfig, simOpts, std::cout);
        }
    } catch (...) {
        return cli::reportError(std::cerr);
    }
    return cli::kInternal;
}
