// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/net.hpp"

#include "hallucam/errors.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace hallucam {

namespace {

constexpr std::uint32_t kMaxConfigBytes = 64 * 1024;
constexpr auto kPollSlice = std::chrono::milliseconds(50);
constexpr auto kConfigTimeout = std::chrono::seconds(5);
constexpr auto kBodyTimeout = std::chrono::seconds(5);

std::string errnoText(const char *what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const std::string &host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) {
        return addr;
    }
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo *res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
        throw IoError("cannot resolve host '" + host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in *>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

std::uint16_t boundPort(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (getsockname(fd, reinterpret_cast<sockaddr *>(&addr), &len) != 0) {
        throw IoError(errnoText("getsockname"));
    }
    return ntohs(addr.sin_port);
}

/// Waits until fd is readable. False on timeout.
bool waitReadable(int fd, std::chrono::milliseconds timeout) {
    pollfd p{fd, POLLIN, 0};
    while (true) {
        const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (rc < 0 && errno == EINTR) {
            continue;
        }
        if (rc < 0) {
            throw IoError(errnoText("poll"));
        }
        return rc > 0;
    }
}

/// Reads exactly n bytes; false when the deadline passes or the peer closes first.
bool readExact(int fd, std::uint8_t *dst, std::size_t n, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t got = 0;
    while (got < n) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                std::chrono::steady_clock::now());
        if (left.count() <= 0 || !waitReadable(fd, left)) {
            return false;
        }
        const ssize_t r = ::recv(fd, dst + got, n - got, 0);
        if (r == 0) {
            return false;
        }
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            return false;
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

bool writeAll(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

} // namespace

Socket &Socket::operator=(Socket &&o) noexcept {
    if (this != &o) {
        close();
        mFd = o.release();
    }
    return *this;
}

Socket::~Socket() { close(); }

int Socket::release() {
    const int fd = mFd;
    mFd = -1;
    return fd;
}

void Socket::close() {
    if (mFd >= 0) {
        ::close(mFd);
        mFd = -1;
    }
}

void Socket::shutdown() {
    if (mFd >= 0) {
        ::shutdown(mFd, SHUT_RDWR);
    }
}

UdpSocket UdpSocket::bind(std::uint16_t port, const std::string &host) {
    UdpSocket s;
    s.mSocket = Socket(::socket(AF_INET, SOCK_DGRAM, 0));
    if (!s.mSocket.valid()) {
        throw IoError(errnoText("socket"));
    }
    const int one = 1;
    ::setsockopt(s.mSocket.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const sockaddr_in addr = resolve(host, port);
    if (::bind(s.mSocket.fd(), reinterpret_cast<const sockaddr *>(&addr), sizeof(addr)) != 0) {
        throw IoError(errnoText(("bind udp port " + std::to_string(port)).c_str()));
    }
    return s;
}

UdpSocket UdpSocket::unbound() {
    UdpSocket s;
    s.mSocket = Socket(::socket(AF_INET, SOCK_DGRAM, 0));
    if (!s.mSocket.valid()) {
        throw IoError(errnoText("socket"));
    }
    return s;
}

void UdpSocket::sendTo(std::span<const std::uint8_t> bytes, const std::string &host, std::uint16_t port) const {
    const sockaddr_in addr = resolve(host, port);
    const ssize_t r = ::sendto(mSocket.fd(), bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr *>(&addr),
                               sizeof(addr));
    if (r < 0 || static_cast<std::size_t>(r) != bytes.size()) {
        throw IoError(errnoText("sendto"));
    }
}

std::optional<std::vector<std::uint8_t>> UdpSocket::receive(std::chrono::milliseconds timeout) const {
    if (!waitReadable(mSocket.fd(), timeout)) {
        return std::nullopt;
    }
    std::vector<std::uint8_t> buf(65536);
    const ssize_t r = ::recv(mSocket.fd(), buf.data(), buf.size(), 0);
    if (r < 0) {
        if (errno == EINTR || errno == EAGAIN) {
            return std::nullopt;
        }
        throw IoError(errnoText("recv"));
    }
    buf.resize(static_cast<std::size_t>(r));
    return buf;
}

std::uint16_t UdpSocket::localPort() const { return boundPort(mSocket.fd()); }

PoseIngestService::PoseIngestService(std::uint16_t port, const std::string &host)
    : mSocket(UdpSocket::bind(port, host)), mPort(mSocket.localPort()) {}

PoseIngestService::~PoseIngestService() { stop(); }

void PoseIngestService::start() {
    if (mRunning.exchange(true)) {
        return;
    }
    mThread = std::jthread([this] {
        while (mRunning.load()) {
            auto datagram = mSocket.receive(kPollSlice);
            if (datagram) {
                mIngestor.ingest(*datagram);
            }
        }
    });
}

void PoseIngestService::stop() {
    mRunning = false;
    if (mThread.joinable()) {
        mThread.join();
    }
}

CommandListener::CommandListener(std::uint16_t port, const std::string &host)
    : mSocket(UdpSocket::bind(port, host)), mPort(mSocket.localPort()) {}

CommandListener::~CommandListener() { stop(); }

void CommandListener::start() {
    if (mRunning.exchange(true)) {
        return;
    }
    mThread = std::jthread([this] {
        while (mRunning.load()) {
            auto datagram = mSocket.receive(kPollSlice);
            if (!datagram) {
                continue;
            }
            try {
                const Command c = decodeCommand(*datagram);
                mCell.offer(c, c.timestampNs);
            } catch (const Error &) {
                ++mMalformed;
            }
        }
    });
}

void CommandListener::stop() {
    mRunning = false;
    if (mThread.joinable()) {
        mThread.join();
    }
}

struct FrameServer::Connection {
    std::uint64_t id = 0;
    Socket socket;
    std::optional<SensorConfig> config;
    std::mutex mutex;
    std::condition_variable cv;
    std::optional<FrameRGBD> pending;
    bool closed = false;
};

FrameServer::FrameServer(std::uint16_t port, const std::string &host) {
    mListen = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!mListen.valid()) {
        throw IoError(errnoText("socket"));
    }
    const int one = 1;
    ::setsockopt(mListen.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const sockaddr_in addr = resolve(host, port);
    if (::bind(mListen.fd(), reinterpret_cast<const sockaddr *>(&addr), sizeof(addr)) != 0) {
        throw IoError(errnoText(("bind tcp port " + std::to_string(port)).c_str()));
    }
    if (::listen(mListen.fd(), 16) != 0) {
        throw IoError(errnoText("listen"));
    }
    mPort = boundPort(mListen.fd());
}

FrameServer::~FrameServer() { stop(); }

void FrameServer::start() {
    if (mRunning.exchange(true)) {
        return;
    }
    mAcceptThread = std::jthread([this] { acceptLoop(); });
}

void FrameServer::stop() {
    if (!mRunning.exchange(false)) {
        return;
    }
    if (mAcceptThread.joinable()) {
        mAcceptThread.join();
    }
    {
        std::lock_guard lock(mMutex);
        for (auto &c : mConnections) {
            std::lock_guard clock(c->mutex);
            c->closed = true;
            c->socket.shutdown();
            c->cv.notify_all();
        }
    }
    for (auto &w : mWorkers) {
        if (w.joinable()) {
            w.join();
        }
    }
    mWorkers.clear();
    std::lock_guard lock(mMutex);
    mConnections.clear();
}

void FrameServer::acceptLoop() {
    while (mRunning.load()) {
        if (!waitReadable(mListen.fd(), kPollSlice)) {
            continue;
        }
        const int fd = ::accept(mListen.fd(), nullptr, nullptr);
        if (fd < 0) {
            continue;
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        auto conn = std::make_shared<Connection>();
        conn->socket = Socket(fd);
        {
            std::lock_guard lock(mMutex);
            conn->id = mNextId++;
            mConnections.push_back(conn);
            ++mCounters.connections;
            mWorkers.emplace_back([this, conn] { serveConnection(conn); });
        }
    }
}

void FrameServer::serveConnection(std::shared_ptr<Connection> conn) {
    auto drop = [&] {
        std::lock_guard lock(mMutex);
        mConnections.remove(conn);
    };

    std::uint8_t lenBuf[4];
    std::string reason;
    std::optional<SensorConfig> config;
    if (!readExact(conn->socket.fd(), lenBuf, 4, kConfigTimeout)) {
        reason = "missing sensor config";
    } else {
        std::uint32_t len;
        std::memcpy(&len, lenBuf, 4);
        if (len == 0 || len > kMaxConfigBytes) {
            reason = "sensor config length out of range";
        } else {
            std::string text(len, '\0');
            if (!readExact(conn->socket.fd(), reinterpret_cast<std::uint8_t *>(text.data()), len, kConfigTimeout)) {
                reason = "truncated sensor config";
            } else {
                try {
                    config = SensorConfig::fromJson(text);
                } catch (const ProtocolError &e) {
                    reason = e.what();
                }
            }
        }
    }
    if (!config) {
        writeAll(conn->socket.fd(), encodeErrorFrame(reason));
        conn->socket.shutdown();
        {
            std::lock_guard lock(mMutex);
            ++mCounters.rejected;
        }
        drop();
        return;
    }
    {
        std::lock_guard lock(conn->mutex);
        conn->config = config;
    }

    while (true) {
        FrameRGBD frame;
        {
            std::unique_lock lock(conn->mutex);
            conn->cv.wait(lock, [&] { return conn->closed || conn->pending.has_value(); });
            if (conn->closed) {
                break;
            }
            frame = std::move(*conn->pending);
            conn->pending.reset();
        }
        const auto bytes = encodeFrame(frame, config->depth);
        if (!writeAll(conn->socket.fd(), bytes)) {
            break;
        }
        std::lock_guard lock(mMutex);
        ++mCounters.framesSent;
    }
    {
        std::lock_guard lock(conn->mutex);
        conn->closed = true;
    }
    drop();
}

std::vector<FrameClientInfo> FrameServer::clients() const {
    std::vector<FrameClientInfo> out;
    std::lock_guard lock(mMutex);
    for (const auto &c : mConnections) {
        std::lock_guard clock(c->mutex);
        if (c->config && !c->closed) {
            out.push_back(FrameClientInfo{c->id, *c->config});
        }
    }
    return out;
}

void FrameServer::publish(std::uint64_t clientId, const FrameRGBD &frame) {
    std::shared_ptr<Connection> target;
    {
        std::lock_guard lock(mMutex);
        for (const auto &c : mConnections) {
            if (c->id == clientId) {
                target = c;
                break;
            }
        }
    }
    if (!target) {
        return;
    }
    bool dropped = false;
    {
        std::lock_guard lock(target->mutex);
        if (target->closed || !target->config) {
            return;
        }
        dropped = target->pending.has_value();
        target->pending = frame;
    }
    target->cv.notify_one();
    if (dropped) {
        std::lock_guard lock(mMutex);
        ++mCounters.framesDropped;
    }
}

void FrameServer::publishAll(const FrameRGBD &frame) {
    for (const auto &c : clients()) {
        publish(c.id, frame);
    }
}

FrameServerCounters FrameServer::counters() const {
    std::lock_guard lock(mMutex);
    return mCounters;
}

FrameStreamClient::FrameStreamClient(const std::string &host, std::uint16_t port, const SensorConfig &config) {
    mSocket = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!mSocket.valid()) {
        throw IoError(errnoText("socket"));
    }
    const sockaddr_in addr = resolve(host, port);
    if (::connect(mSocket.fd(), reinterpret_cast<const sockaddr *>(&addr), sizeof(addr)) != 0) {
        throw IoError(errnoText(("connect " + host + ":" + std::to_string(port)).c_str()));
    }
    const auto msg = encodeLengthPrefixed(config.toJson());
    if (!writeAll(mSocket.fd(), msg)) {
        throw IoError("failed to send sensor config");
    }
}

std::optional<FrameRGBD> FrameStreamClient::read(std::chrono::milliseconds timeout) {
    if (!waitReadable(mSocket.fd(), timeout)) {
        return std::nullopt;
    }
    std::vector<std::uint8_t> buf(kFrameHeaderSize);
    if (!readExact(mSocket.fd(), buf.data(), 2, kBodyTimeout)) {
        throw IoError("frame stream closed");
    }
    std::uint16_t magic;
    std::memcpy(&magic, buf.data(), 2);
    if (magic == kErrorMagic) {
        std::uint8_t lenBuf[4];
        if (!readExact(mSocket.fd(), lenBuf, 4, kBodyTimeout)) {
            throw ProtocolError("truncated error frame");
        }
        std::uint32_t len;
        std::memcpy(&len, lenBuf, 4);
        std::string text(std::min<std::uint32_t>(len, kMaxConfigBytes), '\0');
        readExact(mSocket.fd(), reinterpret_cast<std::uint8_t *>(text.data()), text.size(), kBodyTimeout);
        throw ProtocolError("server error: " + text);
    }
    if (!readExact(mSocket.fd(), buf.data() + 2, kFrameHeaderSize - 2, kBodyTimeout)) {
        throw IoError("frame stream closed mid-header");
    }
    const FrameHeader h = decodeFrameHeader(buf);
    buf.resize(kFrameHeaderSize + h.rgbLen + h.depthLen);
    if (!readExact(mSocket.fd(), buf.data() + kFrameHeaderSize, h.rgbLen + h.depthLen, kBodyTimeout)) {
        throw IoError("frame stream closed mid-payload");
    }
    return decodeFrame(buf);
}

} // namespace hallucam
