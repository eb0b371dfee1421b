#pragma once

// WebSocket transport for live sessions (Boost.Beast). Each connection owns
// one LiveSession; reads, writes and the tick timer of a connection all run
// on one strand, so the session loop stays strictly sequential.

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "mirror/liveplay.hpp"

namespace mirror::live {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8765;  ///< 0 picks a free port
    SessionConfig session;
    /// Wall-clock tick period; defaults to the session's T. Tests shorten it
    /// to run sessions faster than real time.
    std::optional<std::chrono::nanoseconds> tick_period;
    std::function<void(const std::string&)> log;
};

namespace detail {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket&& socket, const ServerOptions& opt)
        : ws_(std::move(socket)), timer_(ws_.get_executor()), logic_(opt.session), period_(opt.tick_period),
          log_(opt.log) {}

    void run() {
        net::dispatch(ws_.get_executor(), beast::bind_front_handler(&Connection::on_run, shared_from_this()));
    }

private:
    void on_run() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
    }

    void on_accept(beast::error_code ec) {
        if (ec) return note("accept: " + ec.message());
        ws_.text(true);
        do_read();
    }

    void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            closed_ = true;
            timer_.cancel();
            if (ec != websocket::error::closed) note("read: " + ec.message());
            return;
        }
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        const bool was_running = logic_.running();
        send(logic_.on_message(text));
        if (!was_running && logic_.running()) start_ticks();
        do_read();
    }

    void start_ticks() {
        const auto period = period_.value_or(std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::duration<double>(logic_.tick_period())));
        next_ = std::chrono::steady_clock::now() + period;
        arm(period);
    }

    void arm(std::chrono::nanoseconds period) {
        timer_.expires_at(next_);
        timer_.async_wait([self = shared_from_this(), period](beast::error_code ec) {
            if (ec || self->closed_) return;
            self->send(self->logic_.on_tick());
            if (!self->logic_.running()) return;
            // Fixed-rate schedule; a late tick does not shift later ones.
            self->next_ += period;
            self->arm(period);
        });
    }

    void send(std::vector<std::string> frames) {
        const bool idle = outbox_.empty();
        for (auto& f : frames) outbox_.push_back(std::move(f));
        if (idle && !outbox_.empty()) do_write();
    }

    void do_write() {
        ws_.async_write(net::buffer(outbox_.front()),
                        beast::bind_front_handler(&Connection::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (ec) {
            closed_ = true;
            timer_.cancel();
            return note("write: " + ec.message());
        }
        outbox_.pop_front();
        if (!outbox_.empty()) do_write();
    }

    void note(const std::string& s) const {
        if (log_) log_(s);
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    net::steady_timer timer_;
    LiveSession logic_;
    std::optional<std::chrono::nanoseconds> period_;
    std::function<void(const std::string&)> log_;
    std::chrono::steady_clock::time_point next_;
    std::deque<std::string> outbox_;
    bool closed_ = false;
};

}  // namespace detail

/// Accepts WebSocket connections and runs one live session per connection.
class LiveServer {
public:
    LiveServer(net::io_context& ioc, ServerOptions opt) : ioc_(ioc), opt_(std::move(opt)), acceptor_(net::make_strand(ioc)) {
        opt_.session.validate();
        const tcp::endpoint ep{net::ip::make_address(opt_.address), opt_.port};
        acceptor_.open(ep.protocol());
        acceptor_.set_option(net::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen(net::socket_base::max_listen_connections);
    }

    unsigned short port() const { return acceptor_.local_endpoint().port(); }

    void start() { do_accept(); }

    void stop() {
        net::post(acceptor_.get_executor(), [this] {
            beast::error_code ec;
            acceptor_.close(ec);
        });
    }

private:
    void do_accept() {
        acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec != net::error::operation_aborted && opt_.log) opt_.log("accept: " + ec.message());
                if (!acceptor_.is_open()) return;
            } else {
                std::make_shared<detail::Connection>(std::move(socket), opt_)->run();
            }
            do_accept();
        });
    }

    net::io_context& ioc_;
    ServerOptions opt_;
    tcp::acceptor acceptor_;
};

}  // namespace mirror::live
