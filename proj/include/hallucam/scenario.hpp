// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/dynamic_window.hpp"
#include "hallucam/renderer.hpp"
#include "hallucam/splat_scene.hpp"
#include "hallucam/supervisor.hpp"
#include "hallucam/world_model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hallucam {

struct PortConfig {
    std::uint16_t pose = kDefaultPosePort;
    std::uint16_t frame = kDefaultFramePort;
    std::uint16_t command = kDefaultCommandPort;
};

struct RateConfig {
    double renderHz = 100.0;
    double poseHz = 200.0;
};

/// One scenario per JSON document. Relative paths resolve against the
/// directory holding the config file.
struct ScenarioConfig {
    std::filesystem::path scenePath;
    /// Prebuilt grid; when absent the grid is voxelised from the scene.
    std::optional<std::filesystem::path> gridPath;
    double voxelSize = 0.1;
    double collisionRadius = 0.2;
    double opacityMin = 0.5;
    /// Scene points below geofence.min.z + floorClearance are left out of the
    /// voxelised grid; the geofence floor stands in for them.
    double floorClearance = 0.1;
    Geofence geofence{Eigen::Vector3d(0.0, 0.0, 0.0), Eigen::Vector3d(11.0, 4.5, 3.65)};
    std::vector<Gate> gates;
    std::optional<DynamicWindow> window;
    SensorRig rig;
    PortConfig ports;
    std::string droneHost = "127.0.0.1";
    RateConfig rates;
    Eigen::Vector3f background = Eigen::Vector3f::Zero();
    double takeoffZ = 0.15;
    std::string team = "anonymous";
    std::filesystem::path leaderboardPath = "leaderboard.csv";
    std::filesystem::path eventLogPath = "events.jsonl";

    SupervisorSettings supervisorSettings() const;
    RenderSettings renderSettings() const;
};

/// Throws ConfigError whose message names the offending field. With
/// checkFiles set, scene_path (and grid_path) must exist.
ScenarioConfig parseScenarioConfig(const std::string &json, const std::filesystem::path &baseDir,
                                   bool checkFiles = true);

/// Reads the file, parses it, then applies HALLUCAM_POSE_PORT,
/// HALLUCAM_FRAME_PORT and HALLUCAM_COMMAND_PORT overrides.
ScenarioConfig loadScenarioConfig(const std::filesystem::path &path);

void applyEnvOverrides(ScenarioConfig &config);

/// Grid from the config's grid_path, or voxelised from the scene points
/// above opacity_min and above the floor clearance (padded by one voxel).
OccupancyGrid courseGrid(const ScenarioConfig &config, const SplatScene &scene);

Course buildCourse(const ScenarioConfig &config, std::optional<OccupancyGrid> grid);

} // namespace hallucam
