// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/transport.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace hallucam {

/// Owning POSIX file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : mFd(fd) {}
    Socket(Socket &&o) noexcept : mFd(o.release()) {}
    Socket &operator=(Socket &&o) noexcept;
    Socket(const Socket &) = delete;
    Socket &operator=(const Socket &) = delete;
    ~Socket();

    int fd() const { return mFd; }
    bool valid() const { return mFd >= 0; }
    int release();
    void close();
    /// Unblocks pending accept/recv calls on other threads.
    void shutdown();

private:
    int mFd = -1;
};

class UdpSocket {
public:
    /// Port 0 picks an ephemeral port.
    static UdpSocket bind(std::uint16_t port, const std::string &host = "0.0.0.0");
    static UdpSocket unbound();

    void sendTo(std::span<const std::uint8_t> bytes, const std::string &host, std::uint16_t port) const;
    /// nullopt on timeout.
    std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) const;
    std::uint16_t localPort() const;

private:
    Socket mSocket;
};

/// Background UDP listener feeding a PoseIngestor. Never blocks readers of the cell.
class PoseIngestService {
public:
    explicit PoseIngestService(std::uint16_t port, const std::string &host = "0.0.0.0");
    ~PoseIngestService();

    void start();
    void stop();
    std::uint16_t port() const { return mPort; }
    const PoseIngestor &ingestor() const { return mIngestor; }

private:
    UdpSocket mSocket;
    std::uint16_t mPort;
    PoseIngestor mIngestor;
    std::atomic<bool> mRunning{false};
    std::jthread mThread;
};

/// Background UDP listener for command datagrams; newest timestamp wins.
class CommandListener {
public:
    explicit CommandListener(std::uint16_t port, const std::string &host = "0.0.0.0");
    ~CommandListener();

    void start();
    void stop();
    std::uint16_t port() const { return mPort; }
    std::optional<std::pair<Command, std::uint64_t>> latest() const { return mCell.getVersioned(); }
    std::uint64_t malformed() const { return mMalformed.load(); }

private:
    UdpSocket mSocket;
    std::uint16_t mPort;
    LatestCell<Command> mCell;
    std::atomic<std::uint64_t> mMalformed{0};
    std::atomic<bool> mRunning{false};
    std::jthread mThread;
};

struct FrameClientInfo {
    std::uint64_t id = 0;
    SensorConfig config;
};

struct FrameServerCounters {
    std::uint64_t connections = 0;
    std::uint64_t rejected = 0;
    std::uint64_t framesSent = 0;
    std::uint64_t framesDropped = 0;
};

/// TCP frame stream server. Each client first sends a length-prefixed JSON
/// SensorConfig; afterwards the server pushes frames from a per-connection
/// single-slot buffer, so a slow reader sees drops, never a backlog.
class FrameServer {
public:
    explicit FrameServer(std::uint16_t port, const std::string &host = "0.0.0.0");
    ~FrameServer();

    void start();
    void stop();
    std::uint16_t port() const { return mPort; }

    std::vector<FrameClientInfo> clients() const;
    /// Replaces the pending frame of one client (no-op for unknown ids).
    void publish(std::uint64_t clientId, const FrameRGBD &frame);
    void publishAll(const FrameRGBD &frame);
    FrameServerCounters counters() const;

private:
    struct Connection;

    void acceptLoop();
    void serveConnection(std::shared_ptr<Connection> conn);

    Socket mListen;
    std::uint16_t mPort;
    std::atomic<bool> mRunning{false};
    mutable std::mutex mMutex;
    std::list<std::shared_ptr<Connection>> mConnections;
    std::vector<std::jthread> mWorkers;
    std::jthread mAcceptThread;
    std::uint64_t mNextId = 1;
    FrameServerCounters mCounters;
};

class FrameStreamClient {
public:
    /// Connects and sends the sensor config.
    FrameStreamClient(const std::string &host, std::uint16_t port, const SensorConfig &config);

    /// Next frame, or nullopt on timeout. Throws ProtocolError carrying the
    /// server message on an error frame, IoError when the connection closes.
    std::optional<FrameRGBD> read(std::chrono::milliseconds timeout);
    void close() { mSocket.close(); }

private:
    Socket mSocket;
};

} // namespace hallucam
