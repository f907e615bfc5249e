// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/transport.hpp"

#include "hallucam/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

namespace hallucam {

static_assert(std::endian::native == std::endian::little, "wire codecs assume a little-endian host");

namespace {

class Writer {
public:
    explicit Writer(std::uint8_t *dst) : mDst(dst) {}
    template <typename T> void put(T v) {
        std::memcpy(mDst + mOff, &v, sizeof(T));
        mOff += sizeof(T);
    }
    std::size_t offset() const { return mOff; }

private:
    std::uint8_t *mDst;
    std::size_t mOff = 0;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> src) : mSrc(src) {}
    template <typename T> T get() {
        T v;
        std::memcpy(&v, mSrc.data() + mOff, sizeof(T));
        mOff += sizeof(T);
        return v;
    }

private:
    std::span<const std::uint8_t> mSrc;
    std::size_t mOff = 0;
};

} // namespace

Pose6D PoseSample::pose() const {
    Pose6D p;
    p.position = position;
    p.orientation = Eigen::Quaterniond(quat[0], quat[1], quat[2], quat[3]).normalized();
    return p;
}

std::array<std::uint8_t, kPoseDatagramSize> encodePose(const PoseSample &p) {
    std::array<std::uint8_t, kPoseDatagramSize> out{};
    Writer w(out.data());
    w.put<std::uint16_t>(kPoseMagic);
    w.put<std::uint8_t>(kPoseVersion);
    w.put<std::uint8_t>(0);
    w.put<std::uint32_t>(p.seq);
    w.put<std::uint64_t>(p.timestampNs);
    for (int k = 0; k < 3; ++k) {
        w.put<double>(p.position[k]);
    }
    for (int k = 0; k < 4; ++k) {
        w.put<double>(p.quat[k]);
    }
    return out;
}

PoseSample decodePose(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kPoseDatagramSize) {
        throw LengthError("pose datagram must be 72 bytes, got " + std::to_string(bytes.size()));
    }
    Reader r(bytes);
    if (r.get<std::uint16_t>() != kPoseMagic) {
        throw ProtocolError("pose datagram: bad magic");
    }
    const auto version = r.get<std::uint8_t>();
    if (version != kPoseVersion) {
        throw ProtocolError("pose datagram: unsupported version " + std::to_string(version));
    }
    r.get<std::uint8_t>(); // flags
    PoseSample p;
    p.seq = r.get<std::uint32_t>();
    p.timestampNs = r.get<std::uint64_t>();
    for (int k = 0; k < 3; ++k) {
        p.position[k] = r.get<double>();
    }
    for (int k = 0; k < 4; ++k) {
        p.quat[k] = r.get<double>();
    }
    return p;
}

Command Command::velocity(const Eigen::Vector3d &v, double yawRate, std::uint64_t t) {
    return Command{CommandKind::Velocity, t, {v.x(), v.y(), v.z(), yawRate}};
}

Command Command::land(std::uint64_t t) { return Command{CommandKind::Land, t, {}}; }

Command Command::takeoff(std::uint64_t t) { return Command{CommandKind::Takeoff, t, {}}; }

std::array<std::uint8_t, kCommandDatagramSize> encodeCommand(const Command &c) {
    std::array<std::uint8_t, kCommandDatagramSize> out{};
    Writer w(out.data());
    w.put<std::uint16_t>(kCommandMagic);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.kind));
    w.put<std::uint64_t>(c.timestampNs);
    for (double v : c.payload) {
        w.put<double>(c.carriesPayload() ? v : 0.0);
    }
    return out;
}

Command decodeCommand(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kCommandDatagramSize) {
        throw LengthError("command datagram must be 43 bytes, got " + std::to_string(bytes.size()));
    }
    Reader r(bytes);
    if (r.get<std::uint16_t>() != kCommandMagic) {
        throw ProtocolError("command datagram: bad magic");
    }
    const auto kind = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(CommandKind::Takeoff)) {
        throw ProtocolError("command datagram: unknown kind " + std::to_string(kind));
    }
    Command c;
    c.kind = static_cast<CommandKind>(kind);
    c.timestampNs = r.get<std::uint64_t>();
    for (auto &v : c.payload) {
        v = r.get<double>();
    }
    if (c.carriesPayload()) {
        for (double v : c.payload) {
            if (!std::isfinite(v)) {
                throw ProtocolError("command datagram: non-finite payload");
            }
        }
    } else {
        c.payload = {0.0, 0.0, 0.0, 0.0};
    }
    return c;
}

std::string SensorConfig::toJson() const {
    nlohmann::json j;
    j["sensor_id"] = sensorId;
    j["width"] = width;
    j["height"] = height;
    j["fx"] = fx;
    j["fy"] = fy;
    j["cx"] = cx;
    j["cy"] = cy;
    j["extrinsic"] = extrinsic;
    j["depth"] = depth;
    return j.dump();
}

SensorConfig SensorConfig::fromJson(const std::string &text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw ProtocolError(std::string("sensor config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ProtocolError("sensor config: document must be an object");
    }
    auto field = [&](const char *name) -> const nlohmann::json & {
        if (!j.contains(name)) {
            throw ProtocolError(std::string("sensor config: missing field '") + name + "'");
        }
        return j.at(name);
    };
    auto number = [&](const char *name) {
        const auto &v = field(name);
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            throw ProtocolError(std::string("sensor config: field '") + name + "' must be a finite number");
        }
        return v.get<double>();
    };
    auto dimension = [&](const char *name) {
        const auto &v = field(name);
        if (!v.is_number_integer() || v.get<long long>() < 8 || v.get<long long>() > 65535) {
            throw ProtocolError(std::string("sensor config: field '") + name + "' must be an integer in [8, 65535]");
        }
        return static_cast<int>(v.get<long long>());
    };
    SensorConfig c;
    const auto &id = field("sensor_id");
    if (!id.is_string()) {
        throw ProtocolError("sensor config: field 'sensor_id' must be a string");
    }
    c.sensorId = id.get<std::string>();
    c.width = dimension("width");
    c.height = dimension("height");
    c.fx = number("fx");
    c.fy = number("fy");
    c.cx = number("cx");
    c.cy = number("cy");
    if (!(c.fx > 0.0) || !(c.fy > 0.0)) {
        throw ProtocolError("sensor config: field 'fx'/'fy' must be positive");
    }
    const auto &ex = field("extrinsic");
    if (!ex.is_array() || ex.size() != 16) {
        throw ProtocolError("sensor config: field 'extrinsic' must hold 16 numbers");
    }
    for (std::size_t i = 0; i < 16; ++i) {
        if (!ex[i].is_number()) {
            throw ProtocolError("sensor config: field 'extrinsic' must hold 16 numbers");
        }
        c.extrinsic[i] = ex[i].get<double>();
    }
    Eigen::Matrix3d R;
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) {
            R(r, k) = c.extrinsic[static_cast<std::size_t>(r * 4 + k)];
        }
    }
    if (!isOrthonormal(R) || c.extrinsic[12] != 0.0 || c.extrinsic[13] != 0.0 || c.extrinsic[14] != 0.0 ||
        c.extrinsic[15] != 1.0) {
        throw ProtocolError("sensor config: field 'extrinsic' is not a rigid transform");
    }
    const auto &d = field("depth");
    if (!d.is_boolean()) {
        throw ProtocolError("sensor config: field 'depth' must be a boolean");
    }
    c.depth = d.get<bool>();
    return c;
}

SensorSpec SensorConfig::toSensorSpec(double near, double far) const {
    SensorSpec s;
    s.id = sensorId;
    s.intrinsics = CameraIntrinsics{fx, fy, cx, cy, width, height, near, far};
    Eigen::Matrix4d M;
    for (int r = 0; r < 4; ++r) {
        for (int k = 0; k < 4; ++k) {
            M(r, k) = extrinsic[static_cast<std::size_t>(r * 4 + k)];
        }
    }
    s.bodyToCamera.matrix() = M;
    return s;
}

std::vector<std::uint8_t> encodeFrame(const FrameRGBD &frame, bool includeDepth) {
    if (frame.width < 0 || frame.height < 0 || frame.width > 65535 || frame.height > 65535) {
        throw std::invalid_argument("frame dimensions do not fit the wire header");
    }
    const std::size_t npix = static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height);
    if (frame.rgb.size() != npix * 3) {
        throw std::invalid_argument("frame rgb buffer does not match its dimensions");
    }
    const bool withDepth = includeDepth && frame.hasDepth();
    if (withDepth && frame.depth.size() != npix) {
        throw std::invalid_argument("frame depth buffer does not match its dimensions");
    }
    const std::size_t rgbLen = frame.rgb.size();
    const std::size_t depthLen = withDepth ? npix * sizeof(float) : 0;
    std::vector<std::uint8_t> out(kFrameHeaderSize + rgbLen + depthLen);
    Writer w(out.data());
    w.put<std::uint16_t>(kFrameMagic);
    w.put<std::uint32_t>(frame.seq);
    w.put<std::uint64_t>(frame.timestampNs);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(frame.width));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(frame.height));
    w.put<std::uint8_t>(withDepth ? 1 : 0);
    w.put<std::uint8_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rgbLen));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(depthLen));
    std::memcpy(out.data() + kFrameHeaderSize, frame.rgb.data(), rgbLen);
    if (withDepth) {
        std::memcpy(out.data() + kFrameHeaderSize + rgbLen, frame.depth.data(), depthLen);
    }
    return out;
}

FrameHeader decodeFrameHeader(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameHeaderSize) {
        throw LengthError("frame header must be 28 bytes");
    }
    Reader r(bytes);
    const auto magic = r.get<std::uint16_t>();
    if (magic == kErrorMagic) {
        throw ProtocolError("server sent an error frame");
    }
    if (magic != kFrameMagic) {
        throw ProtocolError("frame stream: bad magic");
    }
    FrameHeader h;
    h.seq = r.get<std::uint32_t>();
    h.timestampNs = r.get<std::uint64_t>();
    h.width = r.get<std::uint16_t>();
    h.height = r.get<std::uint16_t>();
    const auto flags = r.get<std::uint8_t>();
    r.get<std::uint8_t>();
    h.depthPresent = (flags & 1u) != 0;
    h.rgbLen = r.get<std::uint32_t>();
    h.depthLen = r.get<std::uint32_t>();
    const std::size_t npix = static_cast<std::size_t>(h.width) * h.height;
    if (h.rgbLen != npix * 3 || h.depthLen != (h.depthPresent ? npix * 4 : 0)) {
        throw ProtocolError("frame stream: payload lengths inconsistent with dimensions");
    }
    return h;
}

FrameRGBD decodeFrame(std::span<const std::uint8_t> bytes) {
    const FrameHeader h = decodeFrameHeader(bytes);
    if (bytes.size() != kFrameHeaderSize + h.rgbLen + h.depthLen) {
        throw LengthError("frame message length does not match its header");
    }
    FrameRGBD f;
    f.seq = h.seq;
    f.timestampNs = h.timestampNs;
    f.width = h.width;
    f.height = h.height;
    f.rgb.assign(bytes.begin() + kFrameHeaderSize, bytes.begin() + kFrameHeaderSize + h.rgbLen);
    if (h.depthPresent) {
        f.depth.resize(h.depthLen / sizeof(float));
        std::memcpy(f.depth.data(), bytes.data() + kFrameHeaderSize + h.rgbLen, h.depthLen);
    }
    return f;
}

std::vector<std::uint8_t> encodeErrorFrame(const std::string &message) {
    std::vector<std::uint8_t> out(6 + message.size());
    Writer w(out.data());
    w.put<std::uint16_t>(kErrorMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(message.size()));
    std::memcpy(out.data() + 6, message.data(), message.size());
    return out;
}

std::vector<std::uint8_t> encodeLengthPrefixed(const std::string &text) {
    std::vector<std::uint8_t> out(4 + text.size());
    Writer w(out.data());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    std::memcpy(out.data() + 4, text.data(), text.size());
    return out;
}

bool PoseIngestor::ingest(std::span<const std::uint8_t> datagram) {
    PoseSample p;
    {
        std::lock_guard lock(mMutex);
        ++mCounters.received;
        try {
            p = decodePose(datagram);
        } catch (const Error &) {
            ++mCounters.malformed;
            return false;
        }
        const double n = p.quat.norm();
        if (!p.position.allFinite() || !std::isfinite(n) || std::abs(n - 1.0) > 1e-3) {
            ++mCounters.malformed;
            return false;
        }
        p.quat /= n;
        if (mLastTimestamp && p.timestampNs < *mLastTimestamp) {
            ++mCounters.timestampRegressions;
        }
        mLastTimestamp = p.timestampNs;
    }
    const bool accepted = mCell.offer(p, p.seq);
    std::lock_guard lock(mMutex);
    if (accepted) {
        ++mCounters.accepted;
    } else {
        ++mCounters.stale;
    }
    return accepted;
}

IngestCounters PoseIngestor::counters() const {
    std::lock_guard lock(mMutex);
    return mCounters;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw InsufficientDataError("percentile of an empty sample");
    }
    const double rank = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lo);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (frac == 0.0 || lo + 1 >= values.size()) {
        return a;
    }
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + frac * (b - a);
}

RateStats measureRate(std::span<const std::int64_t> timestampsNs, double windowS) {
    if (timestampsNs.size() < 2) {
        throw InsufficientDataError("rate needs at least two events");
    }
    if (!(windowS > 0.0)) {
        throw std::invalid_argument("rate window must be positive");
    }
    std::vector<std::int64_t> ts(timestampsNs.begin(), timestampsNs.end());
    std::sort(ts.begin(), ts.end());
    const std::int64_t last = ts.back();
    const double spanS = static_cast<double>(last - ts.front()) * 1e-9;
    const auto windowNs = static_cast<std::int64_t>(std::llround(windowS * 1e9));
    const auto first = std::lower_bound(ts.begin(), ts.end(), last - windowNs);

    RateStats stats;
    stats.windowS = windowS;
    stats.frames = static_cast<std::size_t>(ts.end() - first);
    if (spanS >= windowS) {
        stats.hz = static_cast<double>(stats.frames) / windowS;
    } else {
        if (!(spanS > 0.0)) {
            throw InsufficientDataError("rate undefined: all events share one timestamp");
        }
        stats.hz = static_cast<double>(ts.size() - 1) / spanS;
    }
    std::vector<double> gaps;
    for (auto it = first + 1; it < ts.end(); ++it) {
        gaps.push_back(static_cast<double>(*it - *(it - 1)) * 1e-6);
    }
    if (!gaps.empty()) {
        stats.p50GapMs = percentile(gaps, 50.0);
        stats.p99GapMs = percentile(gaps, 99.0);
    }
    return stats;
}

} // namespace hallucam
