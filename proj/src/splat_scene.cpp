// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/splat_scene.hpp"

#include "hallucam/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

namespace hallucam {

namespace {

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }
float logit(float p) { return std::log(p / (1.0f - p)); }

struct PlyProperty {
    std::string name;
    std::size_t size = 0;
    std::size_t offset = 0;
    bool isFloat32 = false;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::size_t stride = 0;
    std::vector<PlyProperty> properties;
};

std::size_t scalarSize(const std::string &type) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},   {"uchar", 1},  {"int8", 1},    {"uint8", 1},   {"short", 2},
        {"ushort", 2}, {"int16", 2},  {"uint16", 2},  {"int", 4},     {"uint", 4},
        {"int32", 4},  {"uint32", 4}, {"float", 4},   {"float32", 4}, {"double", 8},
        {"float64", 8}};
    auto it = sizes.find(type);
    if (it == sizes.end()) {
        throw FormatError("unsupported PLY property type '" + type + "'");
    }
    return it->second;
}

struct ParsedHeader {
    std::size_t payloadOffset = 0;
    std::vector<PlyElement> elements;
};

ParsedHeader parseHeader(const std::vector<std::uint8_t> &bytes) {
    static const std::string kEnd = "end_header";
    ParsedHeader header;
    std::size_t pos = 0;
    bool sawMagic = false;
    bool sawFormat = false;

    auto nextLine = [&](std::string &line) -> bool {
        if (pos >= bytes.size()) {
            return false;
        }
        const auto *begin = bytes.data() + pos;
        const auto *nl = static_cast<const std::uint8_t *>(std::memchr(begin, '\n', bytes.size() - pos));
        if (nl == nullptr) {
            return false;
        }
        line.assign(reinterpret_cast<const char *>(begin), static_cast<std::size_t>(nl - begin));
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        pos = static_cast<std::size_t>(nl - bytes.data()) + 1;
        return true;
    };

    std::string line;
    while (true) {
        if (!nextLine(line)) {
            throw FormatError("PLY header not terminated by end_header");
        }
        std::istringstream ss(line);
        std::string keyword;
        ss >> keyword;
        if (!sawMagic) {
            if (keyword != "ply") {
                throw FormatError("missing 'ply' magic line");
            }
            sawMagic = true;
            continue;
        }
        if (keyword == "format") {
            std::string fmt, version;
            ss >> fmt >> version;
            if (fmt != "binary_little_endian") {
                throw FormatError("unsupported PLY format '" + fmt + "', expected binary_little_endian");
            }
            sawFormat = true;
        } else if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
            continue;
        } else if (keyword == "element") {
            PlyElement el;
            long long count = -1;
            ss >> el.name >> count;
            if (el.name.empty() || count < 0) {
                throw FormatError("malformed element line: '" + line + "'");
            }
            el.count = static_cast<std::size_t>(count);
            header.elements.push_back(std::move(el));
        } else if (keyword == "property") {
            if (header.elements.empty()) {
                throw FormatError("property declared before any element");
            }
            std::string type, name;
            ss >> type;
            if (type == "list") {
                throw FormatError("list properties are not supported");
            }
            ss >> name;
            auto &el = header.elements.back();
            PlyProperty prop;
            prop.name = name;
            prop.size = scalarSize(type);
            prop.offset = el.stride;
            prop.isFloat32 = (type == "float" || type == "float32");
            el.stride += prop.size;
            el.properties.push_back(prop);
        } else if (keyword == kEnd) {
            break;
        } else {
            throw FormatError("unexpected PLY header keyword '" + keyword + "'");
        }
    }
    if (!sawFormat) {
        throw FormatError("missing 'format' line");
    }
    header.payloadOffset = pos;
    return header;
}

std::string restName(std::size_t i) { return "f_rest_" + std::to_string(i); }

} // namespace

void Gaussian3D::validate() const {
    if (!mean.allFinite()) {
        throw std::invalid_argument("gaussian mean must be finite");
    }
    if (!scale.allFinite() || (scale.array() <= 0.0f).any()) {
        throw std::invalid_argument("gaussian scale must be positive and finite");
    }
    if (!(opacity > 0.0f && opacity < 1.0f)) {
        throw std::invalid_argument("gaussian opacity must lie in (0, 1)");
    }
    if (!rotation.coeffs().allFinite() || std::abs(rotation.norm() - 1.0f) > 1e-5f) {
        throw std::invalid_argument("gaussian rotation must be a unit quaternion");
    }
    if (!sh.allFinite()) {
        throw std::invalid_argument("gaussian SH coefficients must be finite");
    }
}

SplatScene::SplatScene(std::vector<Gaussian3D> gaussians) : mGaussians(std::move(gaussians)) {
    if (mGaussians.empty()) {
        return;
    }
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (const auto &g : mGaussians) {
        const Eigen::Vector3d m = g.mean.cast<double>();
        lo = lo.cwiseMin(m);
        hi = hi.cwiseMax(m);
    }
    mAabb = Aabb{lo, hi};
}

SplatScene parseScene(const std::vector<std::uint8_t> &bytes) {
    const ParsedHeader header = parseHeader(bytes);

    // Data for elements preceding "vertex" has to be skipped.
    std::size_t dataOffset = header.payloadOffset;
    const PlyElement *vertex = nullptr;
    for (const auto &el : header.elements) {
        if (el.name == "vertex") {
            vertex = &el;
            break;
        }
        dataOffset += el.count * el.stride;
    }
    if (vertex == nullptr) {
        throw FormatError("missing element 'vertex'");
    }

    std::map<std::string, const PlyProperty *> byName;
    for (const auto &p : vertex->properties) {
        byName[p.name] = &p;
    }
    auto require = [&](const std::string &name) -> std::size_t {
        auto it = byName.find(name);
        if (it == byName.end()) {
            throw FormatError("missing vertex property '" + name + "'");
        }
        if (!it->second->isFloat32) {
            throw FormatError("vertex property '" + name + "' must be float");
        }
        return it->second->offset;
    };

    const std::array<std::size_t, 3> pos = {require("x"), require("y"), require("z")};
    const std::array<std::size_t, 3> dc = {require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
    const std::size_t opacityOff = require("opacity");
    const std::array<std::size_t, 3> scaleOff = {require("scale_0"), require("scale_1"), require("scale_2")};
    const std::array<std::size_t, 4> rotOff = {require("rot_0"), require("rot_1"), require("rot_2"),
                                               require("rot_3")};
    // Higher-order SH is optional as a block (degree-0 exports omit it), but a
    // partial block is malformed.
    std::optional<std::array<std::size_t, 45>> restOff;
    if (byName.count(restName(0)) != 0) {
        std::array<std::size_t, 45> offs{};
        for (std::size_t i = 0; i < 45; ++i) {
            offs[i] = require(restName(i));
        }
        restOff = offs;
    }

    if (vertex->count == 0) {
        throw FormatError("vertex element declares zero records");
    }

    const std::size_t stride = vertex->stride;
    const std::size_t available = bytes.size() > dataOffset ? bytes.size() - dataOffset : 0;
    const std::size_t complete = available / stride;
    if (complete < vertex->count) {
        throw TruncationError("payload truncated: header declares " + std::to_string(vertex->count) +
                                  " vertices, " + std::to_string(complete) + " complete records present",
                              dataOffset + complete * stride);
    }

    std::vector<Gaussian3D> out;
    out.reserve(vertex->count);
    for (std::size_t i = 0; i < vertex->count; ++i) {
        const std::uint8_t *rec = bytes.data() + dataOffset + i * stride;
        auto f = [&](std::size_t off) {
            float v;
            std::memcpy(&v, rec + off, sizeof(float));
            return v;
        };
        auto finite = [&](float v, const char *what) {
            if (!std::isfinite(v)) {
                throw DataError("non-finite " + std::string(what) + " in vertex record " + std::to_string(i), i);
            }
            return v;
        };

        Gaussian3D g;
        for (int k = 0; k < 3; ++k) {
            g.mean[k] = finite(f(pos[k]), "position");
            g.scale[k] = finite(std::exp(finite(f(scaleOff[k]), "scale")), "scale");
            g.sh(0, k) = finite(f(dc[k]), "f_dc");
        }
        if (restOff) {
            // Channel-major: coefficients 1..15 for R, then G, then B.
            for (int c = 0; c < 3; ++c) {
                for (int j = 0; j < 15; ++j) {
                    g.sh(j + 1, c) = finite(f((*restOff)[static_cast<std::size_t>(c * 15 + j)]), "f_rest");
                }
            }
        }
        g.opacity = sigmoid(finite(f(opacityOff), "opacity"));
        Eigen::Quaternionf q(finite(f(rotOff[0]), "rotation"), finite(f(rotOff[1]), "rotation"),
                             finite(f(rotOff[2]), "rotation"), finite(f(rotOff[3]), "rotation"));
        const float n = q.norm();
        if (!(n > 0.0f)) {
            throw DataError("zero-norm rotation in vertex record " + std::to_string(i), i);
        }
        g.rotation = Eigen::Quaternionf(q.coeffs() / n);
        if (!(g.scale.array() > 0.0f).all()) {
            throw DataError("scale underflows to zero in vertex record " + std::to_string(i), i);
        }
        // Saturated logits activate to exactly 0 or 1; keep the open interval.
        g.opacity = std::clamp(g.opacity, std::numeric_limits<float>::min(),
                               std::nextafter(1.0f, 0.0f));
        out.push_back(g);
    }
    return SplatScene(std::move(out));
}

SplatScene loadScene(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open scene file '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parseScene(bytes);
}

std::vector<std::uint8_t> serializeScene(const SplatScene &scene) {
    std::ostringstream hdr;
    hdr << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << "\n";
    for (const char *n : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        hdr << "property float " << n << "\n";
    }
    for (std::size_t i = 0; i < 45; ++i) {
        hdr << "property float " << restName(i) << "\n";
    }
    for (const char *n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        hdr << "property float " << n << "\n";
    }
    hdr << "end_header\n";
    const std::string h = hdr.str();

    std::vector<std::uint8_t> bytes(h.begin(), h.end());
    const std::size_t base = bytes.size();
    bytes.resize(base + scene.size() * kSplatRecordFloats * sizeof(float));
    std::array<float, kSplatRecordFloats> rec{};
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto &g = scene.gaussians()[i];
        rec.fill(0.0f);
        for (int k = 0; k < 3; ++k) {
            rec[static_cast<std::size_t>(k)] = g.mean[k];
            rec[6 + static_cast<std::size_t>(k)] = g.sh(0, k);
            rec[55 + static_cast<std::size_t>(k)] = std::log(g.scale[k]);
        }
        for (int c = 0; c < 3; ++c) {
            for (int j = 0; j < 15; ++j) {
                rec[9 + static_cast<std::size_t>(c * 15 + j)] = g.sh(j + 1, c);
            }
        }
        rec[54] = logit(g.opacity);
        const Eigen::Quaternionf q = g.rotation.normalized();
        rec[58] = q.w();
        rec[59] = q.x();
        rec[60] = q.y();
        rec[61] = q.z();
        std::memcpy(bytes.data() + base + i * kSplatRecordFloats * sizeof(float), rec.data(),
                    kSplatRecordFloats * sizeof(float));
    }
    return bytes;
}

void writeScene(const std::filesystem::path &path, const SplatScene &scene) {
    const auto bytes = serializeScene(scene);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

std::vector<Eigen::Vector3d> exportPointcloud(const SplatScene &scene, double opacityMin) {
    if (!(opacityMin >= 0.0 && opacityMin < 1.0)) {
        throw std::invalid_argument("opacity_min must lie in [0, 1)");
    }
    std::vector<Eigen::Vector3d> points;
    for (const auto &g : scene.gaussians()) {
        if (static_cast<double>(g.opacity) >= opacityMin) {
            points.push_back(g.mean.cast<double>());
        }
    }
    return points;
}

Eigen::Matrix3d covarianceOf(const Gaussian3D &g) {
    const Eigen::Matrix3d R = g.rotation.cast<double>().normalized().toRotationMatrix();
    const Eigen::Vector3d s2 = g.scale.cast<double>().array().square();
    const Eigen::Matrix3d M = R * s2.asDiagonal() * R.transpose();
    return 0.5 * (M + M.transpose());
}

SplatScene makeSyntheticScene(const SyntheticSceneOptions &options) {
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<float> scaleDist(options.minScale, options.maxScale);
    std::normal_distribution<float> shNoise(0.0f, 0.15f);

    const Eigen::Vector3d lo = options.roomMin;
    const Eigen::Vector3d hi = options.roomMax;
    const Eigen::Vector3d ext = hi - lo;

    // Four pillars at fixed fractions of the room footprint.
    const std::array<Eigen::Vector2d, 4> pillars = {Eigen::Vector2d(0.3, 0.35), Eigen::Vector2d(0.5, 0.7),
                                                    Eigen::Vector2d(0.7, 0.3), Eigen::Vector2d(0.85, 0.65)};
    const double pillarRadius = 0.25;

    // Face areas for area-proportional sampling: -x,+x,-y,+y,-z,+z.
    const std::array<double, 6> area = {ext.y() * ext.z(), ext.y() * ext.z(), ext.x() * ext.z(),
                                        ext.x() * ext.z(), ext.x() * ext.y(), ext.x() * ext.y()};
    std::discrete_distribution<int> faceDist(area.begin(), area.end());

    std::vector<Gaussian3D> gs;
    gs.reserve(options.count);
    for (std::size_t i = 0; i < options.count; ++i) {
        Gaussian3D g;
        Eigen::Vector3d p;
        Eigen::Vector3f base;
        if (unit(rng) < options.obstacleFraction) {
            const auto &c = pillars[i % pillars.size()];
            const double a = 2.0 * M_PI * unit(rng);
            p = Eigen::Vector3d(lo.x() + c.x() * ext.x() + pillarRadius * std::cos(a),
                                lo.y() + c.y() * ext.y() + pillarRadius * std::sin(a), lo.z() + unit(rng) * ext.z());
            base = Eigen::Vector3f(0.8f, 0.35f, 0.1f);
        } else {
            const int face = faceDist(rng);
            p = lo + Eigen::Vector3d(unit(rng), unit(rng), unit(rng)).cwiseProduct(ext);
            const int axis = face / 2;
            p[axis] = (face % 2 == 0) ? lo[axis] : hi[axis];
            // Checker pattern so views are not uniform.
            const int cell = static_cast<int>(std::floor(p.x() * 2.0) + std::floor(p.y() * 2.0) + std::floor(p.z() * 2.0));
            base = (cell % 2 == 0) ? Eigen::Vector3f(0.85f, 0.85f, 0.8f) : Eigen::Vector3f(0.25f, 0.3f, 0.45f);
            if (axis == 2 && face == 4) {
                base = Eigen::Vector3f(0.35f, 0.5f, 0.3f);
            }
        }
        g.mean = p.cast<float>();
        g.scale = Eigen::Vector3f(scaleDist(rng), scaleDist(rng), scaleDist(rng) * 0.3f);
        std::normal_distribution<float> gauss(0.0f, 1.0f);
        Eigen::Quaternionf q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
        g.rotation = Eigen::Quaternionf(q.coeffs().normalized());
        g.opacity = 0.6f + 0.39f * static_cast<float>(unit(rng));
        constexpr float kY00 = 0.28209479177387814f;
        for (int c = 0; c < 3; ++c) {
            g.sh(0, c) = (base[c] - 0.5f) / kY00 + shNoise(rng);
            for (int k = 1; k < 4; ++k) {
                g.sh(k, c) = 0.2f * shNoise(rng);
            }
        }
        gs.push_back(g);
    }
    return SplatScene(std::move(gs));
}

} // namespace hallucam
