#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

#include "r3split/message.hpp"

namespace r3split::splitnn {

class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Blocking duplex message channel. The only path between the parties.
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(const TunnelMessage& msg) = 0;
    virtual TunnelMessage receive() = 0;
};

// Two in-process endpoints over a shared queue pair. receive() blocks until
// a message is available, so the two parties may run on one thread
// (alternating, sends strictly before the matching receive) or on two.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inproc_pair();

struct TcpOptions {
    int read_timeout_ms = 2000;
    int retries = 3;           // linear backoff between attempts
    int backoff_ms = 100;
};

// Client side: connect with retries, then exchange version-only handshake
// frames. Throws TransportError after the retry budget is exhausted.
std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port,
                                     const TcpOptions& opts = {});

class TcpListener {
public:
    // Port 0 binds an ephemeral port; see port().
    explicit TcpListener(std::uint16_t port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    std::unique_ptr<Channel> accept_channel(const TcpOptions& opts = {});

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

} // namespace r3split::splitnn
