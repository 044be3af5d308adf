#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "tmrl/control_protocol.hpp"

namespace tmrl {

namespace service_detail {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

using Reply = std::function<void(std::string)>;

struct Inbound {
  enum class Kind { Hello, Text, SnapshotTimes, Graph } kind;
  std::string text;
  Reply reply;
};

// Commands flow from connections to the simulation thread through this queue.
class Inbox {
 public:
  void push(Inbound in) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(in));
    }
    cv_.notify_one();
  }

  // Waits until a message arrives, `deadline` passes, or stop() is called.
  std::deque<Inbound> wait(std::chrono::steady_clock::time_point deadline) {
    std::unique_lock lock(mutex_);
    cv_.wait_until(lock, deadline, [&] { return stopping_ || !queue_.empty(); });
    std::deque<Inbound> out;
    out.swap(queue_);
    return out;
  }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
  }

  bool stopping() const {
    std::lock_guard lock(mutex_);
    return stopping_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Inbound> queue_;
  bool stopping_ = false;
};

class WsSession;

class Hub {
 public:
  void join(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(mutex_);
    sessions_.push_back(s);
  }
  void broadcast(const std::string& msg);

 private:
  std::mutex mutex_;
  std::vector<std::weak_ptr<WsSession>> sessions_;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  static constexpr std::size_t kMaxQueued = 4096;

  WsSession(tcp::socket&& socket, Hub& hub, Inbox& inbox) : ws_(std::move(socket)), hub_(hub), inbox_(inbox) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.join(self);
      self->inbox_.push({Inbound::Kind::Hello, {}, self->replier()});
      self->do_read();
    });
  }

  void send(std::shared_ptr<const std::string> msg) {
    net::post(ws_.get_executor(), [self = shared_from_this(), msg = std::move(msg)] {
      if (self->closed_) return;
      if (self->queue_.size() >= kMaxQueued) {
        self->closed_ = true;
        beast::get_lowest_layer(self->ws_).close();
        return;
      }
      self->queue_.push_back(msg);
      if (self->queue_.size() == 1) self->do_write();
    });
  }

  bool closed() const { return closed_; }

 private:
  Reply replier() {
    return [weak = weak_from_this()](std::string msg) {
      if (auto self = weak.lock()) self->send(std::make_shared<const std::string>(std::move(msg)));
    };
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->inbox_.push({Inbound::Kind::Text, std::move(text), self->replier()});
      self->do_read();
    });
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->do_write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  Hub& hub_;
  Inbox& inbox_;
  std::atomic<bool> closed_{false};
};

inline void Hub::broadcast(const std::string& msg) {
  auto shared = std::make_shared<const std::string>(msg);
  std::lock_guard lock(mutex_);
  std::erase_if(sessions_, [](const std::weak_ptr<WsSession>& w) {
    auto s = w.lock();
    return !s || s->closed();
  });
  for (const auto& w : sessions_)
    if (auto s = w.lock()) s->send(shared);
}

inline std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Hub& hub, Inbox& inbox, std::filesystem::path static_dir)
      : stream_(std::move(socket)), hub_(hub), inbox_(inbox), static_dir_(std::move(static_dir)) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

 private:
  void on_request() {
    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (target != "/ws") return respond(http::status::not_found, "text/plain", "unknown endpoint\n");
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), hub_, inbox_)->run(std::move(req_));
      return;
    }
    if (req_.method() != http::verb::get) return respond(http::status::method_not_allowed, "text/plain", "GET only\n");
    if (target == "/snapshot-times" || target == "/graph") {
      const auto kind = target == "/graph" ? Inbound::Kind::Graph : Inbound::Kind::SnapshotTimes;
      inbox_.push({kind, {}, [self = shared_from_this()](std::string body) {
                     net::post(self->stream_.get_executor(), [self, body = std::move(body)] {
                       self->respond(http::status::ok, "application/json", body);
                     });
                   }});
      return;
    }
    if (!static_dir_.empty()) {
      std::string rel = target.substr(0, target.find('?'));
      if (rel == "/") rel = "/index.html";
      if (rel.find("..") == std::string::npos) {
        const auto path = static_dir_ / rel.substr(1);
        std::ifstream f(path, std::ios::binary);
        if (f) {
          std::string body((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
          return respond(http::status::ok, mime_type(path), std::move(body));
        }
      }
    }
    respond(http::status::not_found, "text/plain", "not found\n");
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, type);
    res->set(http::field::access_control_allow_origin, "*");
    res->keep_alive(false);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  Hub& hub_;
  Inbox& inbox_;
  std::filesystem::path static_dir_;
};

}  // namespace service_detail

// Hosts one live session: WebSocket endpoint /ws, HTTP GET /snapshot-times
// and /graph, optional static files. One I/O thread, one simulation thread;
// they exchange data only through the inbox and the per-connection queues.
class ControlServer {
 public:
  struct Options {
    std::string address = "127.0.0.1";
    unsigned short port = 7341;  // 0 picks a free port
    bool start_paused = false;
    double steps_per_second = 50.0;
    std::filesystem::path static_dir;
    std::filesystem::path log_path;  // runs.jsonl for param changes and rewinds
  };

  ControlServer(ExperimentConfig config, Options options)
      : options_(std::move(options)), acceptor_(ioc_) {
    if (!options_.log_path.empty()) {
      if (options_.log_path.has_parent_path()) std::filesystem::create_directories(options_.log_path.parent_path());
      log_.open(options_.log_path, std::ios::app);
      if (!log_) throw Error("cannot open log " + options_.log_path.string());
    }
    protocol_ = std::make_unique<ControlSession>(std::move(config), !options_.start_paused, options_.steps_per_second,
                                                 log_.is_open() ? &log_ : nullptr);
  }

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;
  ~ControlServer() { stop(); }

  // Binds the port (throws Error if busy) and starts the threads.
  void start() {
    namespace net = service_detail::net;
    using service_detail::tcp;
    boost::system::error_code ec;
    const tcp::endpoint ep(net::ip::make_address(options_.address, ec), options_.port);
    if (ec) throw Error("invalid address " + options_.address);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw Error("cannot listen on " + options_.address + ":" + std::to_string(options_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    sim_thread_ = std::thread([this] { simulate(); });
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    inbox_.stop();
    if (sim_thread_.joinable()) sim_thread_.join();
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
  }

  // Blocks until stop() is called from another thread.
  void wait() {
    if (sim_thread_.joinable()) sim_thread_.join();
  }

  unsigned short port() const { return port_; }

 private:
  void do_accept() {
    acceptor_.async_accept(service_detail::net::make_strand(ioc_),
                           [this](boost::system::error_code ec, service_detail::tcp::socket socket) {
                             if (!ec) {
                               std::make_shared<service_detail::HttpSession>(std::move(socket), hub_, inbox_,
                                                                            options_.static_dir)
                                   ->run();
                             }
                             if (acceptor_.is_open()) do_accept();
                           });
  }

  void dispatch(const ControlSession::Response& r, const service_detail::Reply& reply) {
    for (const auto& m : r.replies)
      if (reply) reply(m);
    for (const auto& m : r.broadcasts) hub_.broadcast(m);
  }

  void simulate() {
    using Clock = std::chrono::steady_clock;
    using Kind = service_detail::Inbound::Kind;
    auto next_step = Clock::now();
    while (!inbox_.stopping()) {
      const auto deadline = protocol_->running() ? next_step : Clock::now() + std::chrono::milliseconds(250);
      for (auto& in : inbox_.wait(deadline)) {
        switch (in.kind) {
          case Kind::Hello:
            in.reply(protocol_->hello());
            in.reply(protocol_->state_message());
            break;
          case Kind::Text: dispatch(protocol_->handle(in.text), in.reply); break;
          case Kind::SnapshotTimes: in.reply(protocol_->snapshot_times_json()); break;
          case Kind::Graph: in.reply(protocol_->graph_json()); break;
        }
      }
      if (!protocol_->running()) {
        next_step = Clock::now();
        continue;
      }
      const auto now = Clock::now();
      if (now >= next_step) {
        dispatch(protocol_->tick(now), {});
        const auto period = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(1.0 / protocol_->steps_per_second()));
        next_step += period;
        if (next_step < now - period) next_step = now;
      }
    }
  }

  Options options_;
  std::ofstream log_;
  std::unique_ptr<ControlSession> protocol_;
  service_detail::net::io_context ioc_;
  service_detail::tcp::acceptor acceptor_;
  service_detail::Hub hub_;
  service_detail::Inbox inbox_;
  std::thread io_thread_;
  std::thread sim_thread_;
  std::atomic<bool> stopped_{false};
  unsigned short port_ = 0;
};

}  // namespace tmrl
