// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/renderer.hpp"

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hallucam {

inline constexpr std::uint16_t kPoseMagic = 0x565A;
inline constexpr std::uint8_t kPoseVersion = 1;
inline constexpr std::size_t kPoseDatagramSize = 72;

inline constexpr std::uint16_t kCommandMagic = 0x434D;
inline constexpr std::size_t kCommandDatagramSize = 43;

inline constexpr std::uint16_t kFrameMagic = 0x4652;
inline constexpr std::uint16_t kErrorMagic = 0x4545;
inline constexpr std::size_t kFrameHeaderSize = 28;

inline constexpr std::uint16_t kDefaultPosePort = 5155;
inline constexpr std::uint16_t kDefaultFramePort = 5156;
inline constexpr std::uint16_t kDefaultCommandPort = 5157;

struct PoseSample {
    std::uint32_t seq = 0;
    std::uint64_t timestampNs = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    /// (w, x, y, z)
    Eigen::Vector4d quat = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);

    Pose6D pose() const;
    bool operator==(const PoseSample &) const = default;
};

/// Little-endian: magic u16, version u8, flags u8, seq u32, timestamp_ns u64,
/// position 3 x f64, quat 4 x f64 (w, x, y, z).
std::array<std::uint8_t, kPoseDatagramSize> encodePose(const PoseSample &p);
/// Throws LengthError on a size other than 72 and ProtocolError on bad magic/version.
PoseSample decodePose(std::span<const std::uint8_t> bytes);

enum class CommandKind : std::uint8_t { Velocity = 0, Position = 1, Land = 2, Takeoff = 3 };

struct Command {
    CommandKind kind = CommandKind::Velocity;
    std::uint64_t timestampNs = 0;
    /// (vx, vy, vz, yaw_rate) for velocity, (x, y, z, yaw) for position; unused otherwise.
    std::array<double, 4> payload = {0.0, 0.0, 0.0, 0.0};

    static Command velocity(const Eigen::Vector3d &v, double yawRate, std::uint64_t t);
    static Command land(std::uint64_t t);
    static Command takeoff(std::uint64_t t);
    bool carriesPayload() const { return kind == CommandKind::Velocity || kind == CommandKind::Position; }
    bool operator==(const Command &) const = default;
};

/// magic u16, kind u8, timestamp_ns u64, payload 4 x f64. Land and takeoff
/// encode a zero payload.
std::array<std::uint8_t, kCommandDatagramSize> encodeCommand(const Command &c);
/// Throws LengthError, or ProtocolError on bad magic, unknown kind or a
/// non-finite payload. Payload of land/takeoff is returned zeroed.
Command decodeCommand(std::span<const std::uint8_t> bytes);

/// Per-connection sensor request sent by a frame-stream client.
struct SensorConfig {
    std::string sensorId;
    int width = 0;
    int height = 0;
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    std::array<double, 16> extrinsic{}; // body -> camera, row-major 4x4
    bool depth = true;

    std::string toJson() const;
    /// Throws ProtocolError naming the offending field.
    static SensorConfig fromJson(const std::string &text);
    SensorSpec toSensorSpec(double near, double far) const;
    bool operator==(const SensorConfig &) const = default;
};

struct FrameHeader {
    std::uint32_t seq = 0;
    std::uint64_t timestampNs = 0;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    bool depthPresent = false;
    std::uint32_t rgbLen = 0;
    std::uint32_t depthLen = 0;
};

/// magic u16, seq u32, timestamp_ns u64, width u16, height u16, flags u8
/// (bit0 = depth present), reserved u8, rgb_len u32, depth_len u32; followed by
/// rgb bytes then depth as f32 LE.
std::vector<std::uint8_t> encodeFrame(const FrameRGBD &frame, bool includeDepth);
FrameHeader decodeFrameHeader(std::span<const std::uint8_t> bytes);
/// Decodes one complete message (header + payload).
FrameRGBD decodeFrame(std::span<const std::uint8_t> bytes);

/// magic u16 = 0x4545, length u32, UTF-8 message.
std::vector<std::uint8_t> encodeErrorFrame(const std::string &message);

/// u32 LE length followed by the JSON document.
std::vector<std::uint8_t> encodeLengthPrefixed(const std::string &text);

/// Single-slot cell holding the newest value by sequence key; stale offers are
/// dropped and counted.
template <typename T> class LatestCell {
public:
    /// Returns true when accepted.
    bool offer(const T &value, std::uint64_t key) {
        std::lock_guard lock(mMutex);
        if (mValue && key <= mKey) {
            ++mStale;
            return false;
        }
        mValue = value;
        mKey = key;
        ++mAccepted;
        ++mVersion;
        return true;
    }
    std::optional<T> get() const {
        std::lock_guard lock(mMutex);
        return mValue;
    }
    /// Value plus a counter bumped on every accepted offer.
    std::optional<std::pair<T, std::uint64_t>> getVersioned() const {
        std::lock_guard lock(mMutex);
        if (!mValue) {
            return std::nullopt;
        }
        return std::make_pair(*mValue, mVersion);
    }
    std::uint64_t accepted() const {
        std::lock_guard lock(mMutex);
        return mAccepted;
    }
    std::uint64_t stale() const {
        std::lock_guard lock(mMutex);
        return mStale;
    }

private:
    mutable std::mutex mMutex;
    std::optional<T> mValue;
    std::uint64_t mKey = 0;
    std::uint64_t mAccepted = 0;
    std::uint64_t mStale = 0;
    std::uint64_t mVersion = 0;
};

struct IngestCounters {
    std::uint64_t received = 0;
    std::uint64_t accepted = 0;
    std::uint64_t stale = 0;
    std::uint64_t malformed = 0;
    std::uint64_t timestampRegressions = 0;
};

/// Datagram-level pose ingest logic independent of any socket: decodes,
/// validates and re-normalises, then offers to the latest-pose cell.
class PoseIngestor {
public:
    /// Returns true when the datagram updated the cell.
    bool ingest(std::span<const std::uint8_t> datagram);
    std::optional<PoseSample> latest() const { return mCell.get(); }
    const LatestCell<PoseSample> &cell() const { return mCell; }
    IngestCounters counters() const;

private:
    LatestCell<PoseSample> mCell;
    mutable std::mutex mMutex;
    IngestCounters mCounters;
    std::optional<std::uint64_t> mLastTimestamp;
};

struct RateStats {
    double windowS = 0.0;
    std::size_t frames = 0;
    double hz = 0.0;
    double p50GapMs = 0.0;
    double p99GapMs = 0.0;
};

/// Rate over the trailing window [t_last - window, t_last]. When the events
/// span at least the window, hz = frames-in-window / window; otherwise
/// hz = (n - 1) / span. Gap percentiles use linear interpolation between order
/// statistics. Throws InsufficientDataError with fewer than two events.
RateStats measureRate(std::span<const std::int64_t> timestampsNs, double windowS);

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

} // namespace hallucam
