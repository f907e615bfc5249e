// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/scenario.hpp"

#include "hallucam/errors.hpp"
#include "hallucam/geometry.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hallucam {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string &field, const std::string &why) {
    throw ConfigError("config field '" + field + "': " + why);
}

std::string join(const std::string &parent, const std::string &key) {
    return parent.empty() ? key : parent + "." + key;
}

double number(const json &j, const std::string &field) {
    if (!j.is_number()) {
        fail(field, "expected a number");
    }
    const double v = j.get<double>();
    if (!std::isfinite(v)) {
        fail(field, "must be finite");
    }
    return v;
}

double positive(const json &j, const std::string &field) {
    const double v = number(j, field);
    if (!(v > 0.0)) {
        fail(field, "must be positive");
    }
    return v;
}

template <int N> Eigen::Matrix<double, N, 1> vec(const json &j, const std::string &field) {
    if (!j.is_array() || j.size() != N) {
        fail(field, "expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
        v(i) = number(j[i], field + "[" + std::to_string(i) + "]");
    }
    return v;
}

std::string string(const json &j, const std::string &field) {
    if (!j.is_string()) {
        fail(field, "expected a string");
    }
    return j.get<std::string>();
}

std::uint16_t port(const json &j, const std::string &field) {
    if (!j.is_number_integer()) {
        fail(field, "expected an integer port");
    }
    const auto v = j.get<std::int64_t>();
    if (v < 1 || v > 65535) {
        fail(field, "port must lie in [1, 65535]");
    }
    return static_cast<std::uint16_t>(v);
}

void checkKeys(const json &obj, const std::string &field, std::initializer_list<const char *> allowed) {
    if (!obj.is_object()) {
        fail(field.empty() ? "<root>" : field, "expected an object");
    }
    for (const auto &item : obj.items()) {
        bool known = false;
        for (const char *a : allowed) {
            known = known || item.key() == a;
        }
        if (!known) {
            fail(join(field, item.key()), "unknown field");
        }
    }
}

Eigen::Isometry3d planePose(const json &j, const std::string &field) {
    if (!j.contains("center")) {
        fail(join(field, "center"), "missing");
    }
    const Eigen::Vector3d center = vec<3>(j["center"], join(field, "center"));
    const double yaw = j.contains("yaw") ? number(j["yaw"], join(field, "yaw")) : 0.0;
    return verticalPlaneWorldToPlane(center, yaw);
}

DynamicWindow parseWindow(const json &j, const std::string &field) {
    checkKeys(j, field,
              {"center", "yaw", "aperture", "frame_width", "hand_length", "hand_width", "omega", "theta0"});
    DynamicWindow w;
    w.worldToWindow = planePose(j, field);
    if (j.contains("aperture")) {
        w.apertureHalf = 0.5 * vec<2>(j["aperture"], join(field, "aperture"));
        if (!(w.apertureHalf.array() > 0.0).all()) {
            fail(join(field, "aperture"), "must be positive");
        }
    }
    if (j.contains("frame_width")) {
        w.frameWidth = positive(j["frame_width"], join(field, "frame_width"));
    }
    if (j.contains("hand_length")) {
        w.handLength = positive(j["hand_length"], join(field, "hand_length"));
    }
    if (j.contains("hand_width")) {
        w.handWidth = positive(j["hand_width"], join(field, "hand_width"));
    }
    if (j.contains("omega")) {
        w.omega = number(j["omega"], join(field, "omega"));
    }
    if (j.contains("theta0")) {
        w.theta0 = number(j["theta0"], join(field, "theta0"));
    }
    try {
        w.validate();
    } catch (const std::invalid_argument &e) {
        fail(field, e.what());
    }
    return w;
}

SensorSpec parseSensor(const json &j, const std::string &field) {
    checkKeys(j, field, {"id", "width", "height", "fx", "fy", "cx", "cy", "near", "far", "mount", "extrinsic"});
    SensorSpec s;
    s.id = j.contains("id") ? string(j["id"], join(field, "id")) : std::string("cam");
    for (const char *key : {"width", "height", "fx", "fy", "cx", "cy"}) {
        if (!j.contains(key)) {
            fail(join(field, key), "missing");
        }
    }
    const auto dim = [&](const char *key) {
        const json &v = j[key];
        if (!v.is_number_integer() || v.get<std::int64_t>() < 8 || v.get<std::int64_t>() > 65535) {
            fail(join(field, key), "expected an integer in [8, 65535]");
        }
        return static_cast<int>(v.get<std::int64_t>());
    };
    auto &K = s.intrinsics;
    K.width = dim("width");
    K.height = dim("height");
    K.fx = positive(j["fx"], join(field, "fx"));
    K.fy = positive(j["fy"], join(field, "fy"));
    K.cx = number(j["cx"], join(field, "cx"));
    K.cy = number(j["cy"], join(field, "cy"));
    if (j.contains("near")) {
        K.near = positive(j["near"], join(field, "near"));
    }
    if (j.contains("far")) {
        K.far = positive(j["far"], join(field, "far"));
    }
    if (!(K.far > K.near)) {
        fail(join(field, "far"), "must exceed near");
    }
    if (j.contains("extrinsic") && j.contains("mount")) {
        fail(join(field, "extrinsic"), "give either mount or extrinsic, not both");
    }
    if (j.contains("extrinsic")) {
        const auto m = vec<16>(j["extrinsic"], join(field, "extrinsic"));
        Eigen::Matrix4d T = Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>>(m.data());
        if (!isOrthonormal(T.topLeftCorner<3, 3>()) || (T.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-9) {
            fail(join(field, "extrinsic"), "must be a rigid transform");
        }
        s.bodyToCamera.matrix() = T;
    } else {
        const std::string mount = j.contains("mount") ? string(j["mount"], join(field, "mount")) : "front";
        if (mount == "front") {
            s.bodyToCamera = frontCameraExtrinsic();
        } else if (mount == "down") {
            s.bodyToCamera = downCameraExtrinsic();
        } else {
            fail(join(field, "mount"), "expected 'front' or 'down'");
        }
    }
    return s;
}

std::filesystem::path resolve(const std::filesystem::path &p, const std::filesystem::path &base) {
    return p.is_absolute() ? p : base / p;
}

} // namespace

SupervisorSettings ScenarioConfig::supervisorSettings() const {
    SupervisorSettings s;
    s.collisionRadius = collisionRadius;
    s.dynamicVoxelSize = voxelSize;
    s.takeoffZ = takeoffZ;
    return s;
}

RenderSettings ScenarioConfig::renderSettings() const {
    RenderSettings s;
    s.background = background;
    return s;
}

ScenarioConfig parseScenarioConfig(const std::string &text, const std::filesystem::path &baseDir, bool checkFiles) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    checkKeys(root, "",
              {"scene_path", "grid_path", "voxel_size", "collision_radius", "opacity_min", "floor_clearance",
               "geofence", "gates", "dynamic_window", "sensors", "ports", "drone_host", "rates", "background",
               "takeoff_z", "team", "leaderboard_path", "event_log_path"});
    ScenarioConfig c;
    if (!root.contains("scene_path")) {
        fail("scene_path", "missing");
    }
    c.scenePath = resolve(string(root["scene_path"], "scene_path"), baseDir);
    if (checkFiles && !std::filesystem::is_regular_file(c.scenePath)) {
        fail("scene_path", "file '" + c.scenePath.string() + "' does not exist");
    }
    if (root.contains("grid_path")) {
        c.gridPath = resolve(string(root["grid_path"], "grid_path"), baseDir);
        if (checkFiles && !std::filesystem::is_regular_file(*c.gridPath)) {
            fail("grid_path", "file '" + c.gridPath->string() + "' does not exist");
        }
    }
    if (root.contains("voxel_size")) {
        c.voxelSize = positive(root["voxel_size"], "voxel_size");
    }
    if (root.contains("collision_radius")) {
        c.collisionRadius = positive(root["collision_radius"], "collision_radius");
    }
    if (root.contains("opacity_min")) {
        c.opacityMin = number(root["opacity_min"], "opacity_min");
        if (!(c.opacityMin >= 0.0 && c.opacityMin < 1.0)) {
            fail("opacity_min", "must lie in [0, 1)");
        }
    }
    if (root.contains("floor_clearance")) {
        c.floorClearance = number(root["floor_clearance"], "floor_clearance");
        if (!(c.floorClearance >= 0.0)) {
            fail("floor_clearance", "must be non-negative");
        }
    }
    if (root.contains("geofence")) {
        const json &g = root["geofence"];
        checkKeys(g, "geofence", {"min", "max"});
        if (!g.contains("min") || !g.contains("max")) {
            fail(g.contains("min") ? "geofence.max" : "geofence.min", "missing");
        }
        c.geofence.min = vec<3>(g["min"], "geofence.min");
        c.geofence.max = vec<3>(g["max"], "geofence.max");
        if (!(c.geofence.max.array() > c.geofence.min.array()).all()) {
            fail("geofence.max", "must exceed geofence.min on every axis");
        }
    }
    if (root.contains("dynamic_window")) {
        c.window = parseWindow(root["dynamic_window"], "dynamic_window");
    }
    if (root.contains("gates")) {
        if (!root["gates"].is_array()) {
            fail("gates", "expected an array");
        }
        for (std::size_t i = 0; i < root["gates"].size(); ++i) {
            const std::string field = "gates[" + std::to_string(i) + "]";
            const json &g = root["gates"][i];
            checkKeys(g, field, {"center", "yaw", "aperture", "kind"});
            Gate gate;
            gate.worldToGate = planePose(g, field);
            if (g.contains("aperture")) {
                gate.apertureHalf = 0.5 * vec<2>(g["aperture"], join(field, "aperture"));
                if (!(gate.apertureHalf.array() > 0.0).all()) {
                    fail(join(field, "aperture"), "must be positive");
                }
            }
            const std::string kind = g.contains("kind") ? string(g["kind"], join(field, "kind")) : "static";
            if (kind == "dynamic") {
                if (!c.window) {
                    fail(join(field, "kind"), "dynamic gate requires dynamic_window");
                }
                gate.kind = GateKind::Dynamic;
                gate.window = c.window;
            } else if (kind != "static") {
                fail(join(field, "kind"), "expected 'static' or 'dynamic'");
            }
            c.gates.push_back(std::move(gate));
        }
    }
    if (root.contains("sensors")) {
        if (!root["sensors"].is_array() || root["sensors"].empty()) {
            fail("sensors", "expected a non-empty array");
        }
        for (std::size_t i = 0; i < root["sensors"].size(); ++i) {
            c.rig.sensors.push_back(parseSensor(root["sensors"][i], "sensors[" + std::to_string(i) + "]"));
        }
        try {
            c.rig.validate();
        } catch (const std::invalid_argument &e) {
            fail("sensors", e.what());
        }
    } else {
        SensorSpec s;
        s.id = "front";
        s.intrinsics = CameraIntrinsics{160.0, 160.0, 159.5, 119.5, 320, 240, 0.05, 20.0};
        s.bodyToCamera = frontCameraExtrinsic();
        c.rig.sensors.push_back(s);
    }
    if (root.contains("ports")) {
        const json &p = root["ports"];
        checkKeys(p, "ports", {"pose", "frame", "command"});
        if (p.contains("pose")) {
            c.ports.pose = port(p["pose"], "ports.pose");
        }
        if (p.contains("frame")) {
            c.ports.frame = port(p["frame"], "ports.frame");
        }
        if (p.contains("command")) {
            c.ports.command = port(p["command"], "ports.command");
        }
    }
    if (root.contains("drone_host")) {
        c.droneHost = string(root["drone_host"], "drone_host");
    }
    if (root.contains("rates")) {
        const json &r = root["rates"];
        checkKeys(r, "rates", {"render_hz", "pose_hz"});
        if (r.contains("render_hz")) {
            c.rates.renderHz = positive(r["render_hz"], "rates.render_hz");
        }
        if (r.contains("pose_hz")) {
            c.rates.poseHz = positive(r["pose_hz"], "rates.pose_hz");
        }
    }
    if (root.contains("background")) {
        const Eigen::Vector3d bg = vec<3>(root["background"], "background");
        if ((bg.array() < 0.0).any() || (bg.array() > 1.0).any()) {
            fail("background", "components must lie in [0, 1]");
        }
        c.background = bg.cast<float>();
    }
    if (root.contains("takeoff_z")) {
        c.takeoffZ = positive(root["takeoff_z"], "takeoff_z");
    }
    if (root.contains("team")) {
        c.team = string(root["team"], "team");
    }
    if (root.contains("leaderboard_path")) {
        c.leaderboardPath = resolve(string(root["leaderboard_path"], "leaderboard_path"), baseDir);
    } else {
        c.leaderboardPath = resolve(c.leaderboardPath, baseDir);
    }
    if (root.contains("event_log_path")) {
        c.eventLogPath = resolve(string(root["event_log_path"], "event_log_path"), baseDir);
    } else {
        c.eventLogPath = resolve(c.eventLogPath, baseDir);
    }
    return c;
}

void applyEnvOverrides(ScenarioConfig &config) {
    const auto apply = [](const char *name, std::uint16_t &target) {
        const char *value = std::getenv(name);
        if (!value) {
            return;
        }
        char *end = nullptr;
        const long v = std::strtol(value, &end, 10);
        if (end == value || *end != '\0' || v < 1 || v > 65535) {
            throw ConfigError(std::string("environment variable ") + name + ": invalid port '" + value + "'");
        }
        target = static_cast<std::uint16_t>(v);
    };
    apply("HALLUCAM_POSE_PORT", config.ports.pose);
    apply("HALLUCAM_FRAME_PORT", config.ports.frame);
    apply("HALLUCAM_COMMAND_PORT", config.ports.command);
}

ScenarioConfig loadScenarioConfig(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    ScenarioConfig c = parseScenarioConfig(ss.str(), path.parent_path());
    applyEnvOverrides(c);
    return c;
}

OccupancyGrid courseGrid(const ScenarioConfig &config, const SplatScene &scene) {
    if (config.gridPath) {
        return OccupancyGrid::load(*config.gridPath);
    }
    auto points = exportPointcloud(scene, config.opacityMin);
    const double floorZ = config.geofence.min.z() + config.floorClearance;
    std::erase_if(points, [floorZ](const Eigen::Vector3d &p) { return p.z() < floorZ; });
    if (points.empty()) {
        return OccupancyGrid(config.geofence.min, config.voxelSize, {1, 1, 1});
    }
    return buildGrid(points, config.voxelSize, config.voxelSize);
}

Course buildCourse(const ScenarioConfig &config, std::optional<OccupancyGrid> grid) {
    Course course;
    course.grid = std::move(grid);
    course.fence = config.geofence;
    course.gates = config.gates;
    course.window = config.window;
    return course;
}

} // namespace hallucam
