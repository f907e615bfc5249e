// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/dynamic_window.hpp"
#include "hallucam/errors.hpp"
#include "hallucam/evaluation.hpp"
#include "hallucam/renderer.hpp"
#include "hallucam/splat_scene.hpp"
#include "hallucam/supervisor.hpp"
#include "hallucam/transport.hpp"
#include "hallucam/world_model.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace hallucam;

namespace {

Pose6D makePose(const Eigen::Vector3d &position, const Eigen::Vector4d &wxyz) {
    Pose6D p;
    p.position = position;
    p.orientation = Eigen::Quaterniond(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    if (std::abs(p.orientation.norm() - 1.0) > 1e-3) {
        throw std::invalid_argument("quaternion must have unit norm");
    }
    p.orientation.normalize();
    return p;
}

py::dict frameToDict(const FrameRGBD &f) {
    py::array_t<std::uint8_t> rgb({f.height, f.width, 3});
    std::memcpy(rgb.mutable_data(), f.rgb.data(), f.rgb.size());
    py::array_t<float> depth({f.height, f.width});
    std::memcpy(depth.mutable_data(), f.depth.data(), f.depth.size() * sizeof(float));
    py::dict d;
    d["rgb"] = rgb;
    d["depth"] = depth;
    d["seq"] = f.seq;
    d["timestamp_ns"] = f.timestampNs;
    return d;
}

std::vector<Eigen::Vector3d> rowsToPoints(const py::array_t<double, py::array::c_style | py::array::forcecast> &a) {
    if (a.ndim() != 2 || a.shape(1) != 3) {
        throw std::invalid_argument("expected an (N, 3) array");
    }
    std::vector<Eigen::Vector3d> pts(static_cast<std::size_t>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        pts[static_cast<std::size_t>(i)] = Eigen::Vector3d(r(i, 0), r(i, 1), r(i, 2));
    }
    return pts;
}

/// Rows of (t_ns, x, y, z, qw, qx, qy, qz).
Trajectory rowsToTrajectory(const py::array_t<double, py::array::c_style | py::array::forcecast> &a) {
    if (a.ndim() != 2 || a.shape(1) != 8) {
        throw std::invalid_argument("expected an (N, 8) array");
    }
    auto r = a.unchecked<2>();
    std::vector<TrajectorySample> s(static_cast<std::size_t>(a.shape(0)));
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        auto &x = s[static_cast<std::size_t>(i)];
        x.tNs = static_cast<std::uint64_t>(r(i, 0));
        x.position = Eigen::Vector3d(r(i, 1), r(i, 2), r(i, 3));
        x.orientation = Eigen::Quaterniond(r(i, 4), r(i, 5), r(i, 6), r(i, 7)).normalized();
    }
    return Trajectory(std::move(s));
}

py::bytes toBytes(const std::uint8_t *p, std::size_t n) {
    return py::bytes(reinterpret_cast<const char *>(p), n);
}

std::vector<std::uint8_t> fromBytes(const py::bytes &b) {
    const std::string s = b;
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

} // namespace

PYBIND11_MODULE(_hallucam, m) {
    m.doc() = "Gaussian-splat sensor synthesis and run supervision";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<TruncationError>(m, "TruncationError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
    py::register_exception<LengthError>(m, "LengthError", base.ptr());
    py::register_exception<DegeneracyError>(m, "DegeneracyError", base.ptr());
    py::register_exception<InsufficientDataError>(m, "InsufficientDataError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
        .def(py::init([](int width, int height, double fx, double fy, double cx, double cy, double near, double far) {
                 CameraIntrinsics K{fx, fy, cx, cy, width, height, near, far};
                 K.validate();
                 return K;
             }),
             py::arg("width"), py::arg("height"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
             py::arg("near") = 0.05, py::arg("far") = 100.0)
        .def_readonly("width", &CameraIntrinsics::width)
        .def_readonly("height", &CameraIntrinsics::height)
        .def_readonly("fx", &CameraIntrinsics::fx)
        .def_readonly("fy", &CameraIntrinsics::fy)
        .def_readonly("cx", &CameraIntrinsics::cx)
        .def_readonly("cy", &CameraIntrinsics::cy)
        .def_readonly("near", &CameraIntrinsics::near)
        .def_readonly("far", &CameraIntrinsics::far);

    py::class_<SplatScene>(m, "SplatScene")
        .def("__len__", &SplatScene::size)
        .def_property_readonly("aabb_min", [](const SplatScene &s) { return s.aabb().min; })
        .def_property_readonly("aabb_max", [](const SplatScene &s) { return s.aabb().max; })
        .def(
            "means",
            [](const SplatScene &s) {
                py::array_t<double> out({static_cast<py::ssize_t>(s.size()), py::ssize_t{3}});
                auto w = out.mutable_unchecked<2>();
                for (std::size_t i = 0; i < s.size(); ++i) {
                    for (int a = 0; a < 3; ++a) {
                        w(static_cast<py::ssize_t>(i), a) = s.gaussians()[i].mean[a];
                    }
                }
                return out;
            },
            "Gaussian means as an (N, 3) array.");

    m.def("load_scene", &loadScene, py::arg("path"));
    m.def("write_scene", &writeScene, py::arg("path"), py::arg("scene"));
    m.def(
        "synthetic_scene",
        [](std::size_t count, std::uint64_t seed) {
            SyntheticSceneOptions o;
            o.count = count;
            o.seed = seed;
            return makeSyntheticScene(o);
        },
        py::arg("count"), py::arg("seed") = 1);
    m.def(
        "export_pointcloud",
        [](const SplatScene &s, double opacityMin) {
            const auto pts = exportPointcloud(s, opacityMin);
            py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
            auto w = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < pts.size(); ++i) {
                for (int a = 0; a < 3; ++a) {
                    w(static_cast<py::ssize_t>(i), a) = pts[i][a];
                }
            }
            return out;
        },
        py::arg("scene"), py::arg("opacity_min") = 0.5);

    m.def(
        "render",
        [](const SplatScene &scene, const Eigen::Vector3d &position, const Eigen::Vector4d &quatWxyz,
           const CameraIntrinsics &K, const Eigen::Vector3f &background) {
            RenderSettings s;
            s.background = background;
            FrameRGBD f;
            {
                py::gil_scoped_release release;
                f = render(scene, makePose(position, quatWxyz), K, s);
            }
            return frameToDict(f);
        },
        py::arg("scene"), py::arg("position"), py::arg("quat_wxyz"), py::arg("intrinsics"),
        py::arg("background") = Eigen::Vector3f::Zero(),
        "Renders RGB (H, W, 3) uint8 and depth (H, W) float32 from a camera -> world pose.");

    py::class_<OccupancyGrid>(m, "OccupancyGrid")
        .def_property_readonly("origin", &OccupancyGrid::origin)
        .def_property_readonly("voxel_size", &OccupancyGrid::voxelSize)
        .def_property_readonly("dims", &OccupancyGrid::dims)
        .def("occupied_count", &OccupancyGrid::occupiedCount)
        .def("is_occupied",
             [](const OccupancyGrid &g, std::int64_t i, std::int64_t j, std::int64_t k) {
                 const VoxelIndex v{i, j, k};
                 return g.inBounds(v) && g.occupied(v);
             })
        .def("save", &OccupancyGrid::save)
        .def_static("load", &OccupancyGrid::load)
        .def("__eq__", [](const OccupancyGrid &a, const OccupancyGrid &b) { return a == b; });

    m.def(
        "build_grid",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast> &points, double voxelSize,
           double padding) { return buildGrid(rowsToPoints(points), voxelSize, padding); },
        py::arg("points"), py::arg("voxel_size"), py::arg("padding") = 0.0);
    m.def("check_collision", &checkCollision, py::arg("grid"), py::arg("center"), py::arg("radius"));
    m.def(
        "inside_geofence",
        [](const Eigen::Vector3d &lo, const Eigen::Vector3d &hi, const Eigen::Vector3d &p) {
            Geofence f{lo, hi};
            f.validate();
            return checkGeofence(f, p) == GeofenceStatus::Inside;
        },
        py::arg("min"), py::arg("max"), py::arg("point"));

    m.def(
        "encode_pose",
        [](std::uint32_t seq, std::uint64_t tNs, const Eigen::Vector3d &position, const Eigen::Vector4d &quat) {
            const auto b = encodePose(PoseSample{seq, tNs, position, quat});
            return toBytes(b.data(), b.size());
        },
        py::arg("seq"), py::arg("timestamp_ns"), py::arg("position"), py::arg("quat_wxyz"));
    m.def(
        "decode_pose",
        [](const py::bytes &b) {
            const auto p = decodePose(fromBytes(b));
            py::dict d;
            d["seq"] = p.seq;
            d["timestamp_ns"] = p.timestampNs;
            d["position"] = p.position;
            d["quat_wxyz"] = p.quat;
            return d;
        },
        py::arg("data"));

    py::enum_<CommandKind>(m, "CommandKind")
        .value("VELOCITY", CommandKind::Velocity)
        .value("POSITION", CommandKind::Position)
        .value("LAND", CommandKind::Land)
        .value("TAKEOFF", CommandKind::Takeoff);
    m.def(
        "encode_command",
        [](CommandKind kind, std::uint64_t tNs, const std::array<double, 4> &payload) {
            const auto b = encodeCommand(Command{kind, tNs, payload});
            return toBytes(b.data(), b.size());
        },
        py::arg("kind"), py::arg("timestamp_ns"), py::arg("payload") = std::array<double, 4>{});
    m.def(
        "decode_command",
        [](const py::bytes &b) {
            const auto c = decodeCommand(fromBytes(b));
            py::dict d;
            d["kind"] = c.kind;
            d["timestamp_ns"] = c.timestampNs;
            d["payload"] = c.payload;
            return d;
        },
        py::arg("data"));

    m.def(
        "compute_ate",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast> &est,
           const py::array_t<double, py::array::c_style | py::array::forcecast> &gt, double maxDtS,
           bool withScale) {
            const auto r = computeAte(rowsToTrajectory(est), rowsToTrajectory(gt), maxDtS, withScale);
            py::dict d;
            d["rmse_m"] = r.rmseM;
            d["max_m"] = r.maxM;
            d["mean_m"] = r.meanM;
            d["n_pairs"] = r.nPairs;
            d["rotation"] = r.alignment.rotation;
            d["translation"] = r.alignment.translation;
            d["scale"] = r.alignment.scale;
            return d;
        },
        py::arg("est"), py::arg("gt"), py::arg("max_dt") = kDefaultMaxDtS, py::arg("with_scale") = false,
        "ATE between two (N, 8) arrays of t_ns, x, y, z, qw, qx, qy, qz rows.");
    m.def(
        "umeyama_align",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast> &src,
           const py::array_t<double, py::array::c_style | py::array::forcecast> &dst, bool withScale) {
            const auto s = umeyamaAlign(rowsToPoints(src), rowsToPoints(dst), withScale);
            return py::make_tuple(s.rotation, s.translation, s.scale);
        },
        py::arg("src"), py::arg("dst"), py::arg("with_scale") = false);

    py::class_<DynamicWindow>(m, "DynamicWindow")
        .def(py::init([](const Eigen::Vector3d &center, double yaw, const Eigen::Vector2d &apertureHalf,
                         double handLength, double handWidth, double omega, double theta0) {
                 DynamicWindow w;
                 w.worldToWindow = verticalPlaneWorldToPlane(center, yaw);
                 w.apertureHalf = apertureHalf;
                 w.handLength = handLength;
                 w.handWidth = handWidth;
                 w.omega = omega;
                 w.theta0 = theta0;
                 w.validate();
                 return w;
             }),
             py::arg("center"), py::arg("yaw"), py::arg("aperture_half"), py::arg("hand_length") = 0.4,
             py::arg("hand_width") = 0.08, py::arg("omega") = 1.0, py::arg("theta0") = 0.0)
        .def("hand_angle", &handAngle, py::arg("t"))
        .def("point_on_hand",
             [](const DynamicWindow &w, double t, const Eigen::Vector2d &xy) { return pointOnHand(w, t, xy); })
        .def("hand_corners", [](const DynamicWindow &w, double t) {
            const auto c = handCorners(w, t);
            return std::vector<Eigen::Vector2d>(c.begin(), c.end());
        });
}
