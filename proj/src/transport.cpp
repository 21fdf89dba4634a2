#include "r3split/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

namespace r3split::splitnn {

namespace {

class InprocQueue {
public:
    void push(TunnelMessage msg) {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            queue_.push_back(std::move(msg));
        }
        cv_.notify_one();
    }

    TunnelMessage pop() {
        std::unique_lock<std::mutex> lock(mutex_);
        if (!cv_.wait_for(lock, std::chrono::seconds(60), [&] { return !queue_.empty(); }))
            throw TransportError("inproc: receive timed out (protocol deadlock?)");
        TunnelMessage msg = std::move(queue_.front());
        queue_.pop_front();
        return msg;
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<TunnelMessage> queue_;
};

class InprocChannel final : public Channel {
public:
    InprocChannel(std::shared_ptr<InprocQueue> out, std::shared_ptr<InprocQueue> in)
        : out_(std::move(out)), in_(std::move(in)) {}

    void send(const TunnelMessage& msg) override {
        // Round-trip through the codec so both transports quantize and
        // validate identically.
        out_->push(decode_message(encode_message(msg)));
    }

    TunnelMessage receive() override { return in_->pop(); }

private:
    std::shared_ptr<InprocQueue> out_;
    std::shared_ptr<InprocQueue> in_;
};

void sleep_ms(int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }

class TcpChannel final : public Channel {
public:
    TcpChannel(int fd, TcpOptions opts) : fd_(fd), opts_(opts) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        timeval tv{};
        tv.tv_sec = opts_.read_timeout_ms / 1000;
        tv.tv_usec = (opts_.read_timeout_ms % 1000) * 1000;
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    }

    ~TcpChannel() override {
        if (fd_ >= 0) ::close(fd_);
    }

    void send(const TunnelMessage& msg) override {
        const auto frame = encode_message(msg);
        std::size_t sent = 0;
        while (sent < frame.size()) {
            const ssize_t n =
                ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
            if (n <= 0)
                throw TransportError(std::string("tcp: send failed: ") + std::strerror(errno));
            sent += static_cast<std::size_t>(n);
        }
    }

    TunnelMessage receive() override {
        std::uint8_t len_buf[4];
        read_exact(len_buf, 4);
        const std::uint32_t length = std::uint32_t(len_buf[0]) | (std::uint32_t(len_buf[1]) << 8) |
                                     (std::uint32_t(len_buf[2]) << 16) |
                                     (std::uint32_t(len_buf[3]) << 24);
        if (length > 64u * 1024u * 1024u)
            throw TransportError("tcp: declared frame length " + std::to_string(length) +
                                 " exceeds sanity limit");
        std::vector<std::uint8_t> frame(4 + length);
        std::memcpy(frame.data(), len_buf, 4);
        read_exact(frame.data() + 4, length);
        return decode_message(frame);
    }

    void handshake() {
        send(TunnelMessage{Direction::forward, 0, {}});
        const TunnelMessage hello = receive(); // decode validates the version
        if (!hello.payload.empty())
            throw TransportError("tcp: unexpected payload in handshake frame");
    }

private:
    void read_exact(std::uint8_t* dst, std::size_t count) {
        std::size_t got = 0;
        int attempts = 0;
        while (got < count) {
            const ssize_t n = ::recv(fd_, dst + got, count - got, 0);
            if (n > 0) {
                got += static_cast<std::size_t>(n);
                continue;
            }
            if (n == 0) throw TransportError("tcp: peer closed the connection");
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
                attempts += 1;
                if (attempts > opts_.retries)
                    throw TransportError("tcp: read timed out after " +
                                         std::to_string(opts_.retries) + " retries");
                sleep_ms(opts_.backoff_ms * attempts);
                continue;
            }
            throw TransportError(std::string("tcp: recv failed: ") + std::strerror(errno));
        }
    }

    int fd_;
    TcpOptions opts_;
};

} // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inproc_pair() {
    auto a_to_b = std::make_shared<InprocQueue>();
    auto b_to_a = std::make_shared<InprocQueue>();
    return {std::make_unique<InprocChannel>(a_to_b, b_to_a),
            std::make_unique<InprocChannel>(b_to_a, a_to_b)};
}

std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port,
                                     const TcpOptions& opts) {
    std::string last_error;
    for (int attempt = 1; attempt <= opts.retries; ++attempt) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const std::string port_str = std::to_string(port);
        if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0 || !res) {
            last_error = "cannot resolve " + host;
        } else {
            const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
            if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
                ::freeaddrinfo(res);
                auto channel = std::make_unique<TcpChannel>(fd, opts);
                channel->handshake();
                return channel;
            }
            last_error = std::strerror(errno);
            if (fd >= 0) ::close(fd);
            ::freeaddrinfo(res);
        }
        if (attempt < opts.retries) sleep_ms(opts.backoff_ms * attempt);
    }
    throw TransportError("tcp: connect to " + host + ":" + std::to_string(port) +
                         " failed after " + std::to_string(opts.retries) +
                         " retries: " + last_error);
}

TcpListener::TcpListener(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw TransportError(std::string("tcp: socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd_);
        fd_ = -1;
        throw TransportError("tcp: bind to port " + std::to_string(port) + " failed: " + err);
    }
    if (::listen(fd_, 1) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd_);
        fd_ = -1;
        throw TransportError("tcp: listen failed: " + err);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept_channel(const TcpOptions& opts) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw TransportError(std::string("tcp: accept: ") + std::strerror(errno));
    auto channel = std::make_unique<TcpChannel>(fd, opts);
    channel->handshake();
    return channel;
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= endpoint.size())
        throw std::invalid_argument("endpoint '" + endpoint + "' is not host:port");
    const std::string host = endpoint.substr(0, colon);
    const int port = std::stoi(endpoint.substr(colon + 1));
    if (port <= 0 || port > 65535)
        throw std::invalid_argument("endpoint port out of range in '" + endpoint + "'");
    return {host, static_cast<std::uint16_t>(port)};
}

} // namespace r3split::splitnn
