#pragma once

// Frame sources and the bounded queue between a source thread and the
// session consumer.
//
//   bridge://host:port            TCP relay speaking the bridge protocol
//   replay://path[?speed=...]     CSV replay; speed = realtime (default) | max | <factor>
//   synth://specfile[?speed=...]  synthetic spec file (see synth.hpp)

#include "neurochat/errors.hpp"
#include "neurochat/ingest/bridge.hpp"
#include "neurochat/ingest/csv.hpp"
#include "neurochat/ingest/synth.hpp"

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>
#include <optional>
#include <vector>

namespace neurochat {

enum class QueuePolicy { kDropOldest, kBlock };

// Bounded single-consumer queue. With kDropOldest a full queue discards its
// oldest frame (and reports it); with kBlock the producer waits.
class FrameQueue {
public:
  explicit FrameQueue(std::size_t capacity = 2 * kSampleRateHz, QueuePolicy policy = QueuePolicy::kDropOldest)
      : capacity_(capacity), policy_(policy) {}

  void push(const EegFrame& f, std::stop_token st = {}) {
    std::unique_lock lock(mu_);
    if (policy_ == QueuePolicy::kBlock) {
      not_full_.wait(lock, [&] { return frames_.size() < capacity_ || closed_ || st.stop_requested(); });
      if (closed_ || st.stop_requested()) return;
    } else if (frames_.size() >= capacity_) {
      frames_.pop_front();
      ++dropped_;
      if (events_.empty() || events_.back().kind != QualityEvent::Kind::kQueueOverflow) {
        events_.push_back({QualityEvent::Kind::kQueueOverflow, f.timestamp_ms, 0, "queue beyond 2 s, dropping oldest"});
      }
      ++events_.back().count;
    }
    frames_.push_back(f);
    not_empty_.notify_one();
  }

  void report(QualityEvent e) {
    std::lock_guard lock(mu_);
    events_.push_back(std::move(e));
    not_empty_.notify_one();
  }

  enum class PopResult { kFrame, kTimeout, kClosed };

  PopResult pop(EegFrame& out, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    not_empty_.wait_for(lock, timeout, [&] { return !frames_.empty() || closed_; });
    if (!frames_.empty()) {
      out = frames_.front();
      frames_.pop_front();
      not_full_.notify_one();
      return PopResult::kFrame;
    }
    return closed_ ? PopResult::kClosed : PopResult::kTimeout;
  }

  std::vector<QualityEvent> drain_events() {
    std::lock_guard lock(mu_);
    std::vector<QualityEvent> out(events_.begin(), events_.end());
    events_.clear();
    return out;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  void set_policy(QueuePolicy p) {
    std::lock_guard lock(mu_);
    policy_ = p;
  }

  std::size_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return frames_.size();
  }

private:
  mutable std::mutex mu_;
  std::condition_variable_any not_empty_;
  std::condition_variable_any not_full_;
  std::deque<EegFrame> frames_;
  std::deque<QualityEvent> events_;
  std::size_t capacity_;
  QueuePolicy policy_;
  bool closed_ = false;
  std::size_t dropped_ = 0;
};

class FrameSource {
public:
  virtual ~FrameSource() = default;
  // Produces frames until exhausted, failed, or stopped. Errors propagate.
  virtual void run(FrameQueue& queue, std::stop_token st) = 0;
  virtual QueuePolicy policy() const { return QueuePolicy::kDropOldest; }
  virtual std::string describe() const = 0;
};

namespace detail {

// Sleeps until stream time `t_ms` (relative to `t0_ms`) is due at `speed`.
// Returns false if stopped while waiting.
inline bool pace(std::chrono::steady_clock::time_point wall0, double t0_ms, double t_ms, double speed,
                 std::stop_token st) {
  if (speed <= 0.0) return !st.stop_requested();
  const auto due = wall0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                               std::chrono::duration<double, std::milli>((t_ms - t0_ms) / speed));
  while (std::chrono::steady_clock::now() < due) {
    if (st.stop_requested()) return false;
    std::this_thread::sleep_until(std::min(due, std::chrono::steady_clock::now() + std::chrono::milliseconds(20)));
  }
  return !st.stop_requested();
}

}  // namespace detail

class SynthSource : public FrameSource {
public:
  explicit SynthSource(SynthScript script) : script_(std::move(script)) {}

  void run(FrameQueue& queue, std::stop_token st) override {
    const auto wall0 = std::chrono::steady_clock::now();
    for (const auto& seg : script_.segments) {
      SynthGenerator gen(seg);
      while (!gen.done()) {
        const auto f = gen.next();
        if (!detail::pace(wall0, 0.0, f.timestamp_ms, script_.speed, st)) return;
        queue.push(f, st);
      }
    }
  }

  QueuePolicy policy() const override { return script_.speed <= 0.0 ? QueuePolicy::kBlock : QueuePolicy::kDropOldest; }
  std::string describe() const override { return "synth"; }

private:
  SynthScript script_;
};

class ReplaySource : public FrameSource {
public:
  ReplaySource(std::string path, double speed) : path_(std::move(path)), speed_(speed) {
    std::ifstream probe(path_);
    if (!probe) throw FormatError("cannot open replay file " + path_);
    CsvFrameReader check(probe);  // validates the header up front
  }

  void run(FrameQueue& queue, std::stop_token st) override {
    std::ifstream in(path_);
    CsvFrameReader reader(in);
    const auto wall0 = std::chrono::steady_clock::now();
    EegFrame f;
    bool first = true;
    double t0 = 0.0;
    std::size_t skipped = 0;
    while (reader.next(f)) {
      if (first) {
        t0 = f.timestamp_ms;
        first = false;
      }
      if (reader.skipped_rows() != skipped) {
        queue.report({QualityEvent::Kind::kMalformedLine, f.timestamp_ms, reader.skipped_rows() - skipped,
                      "non-numeric CSV row skipped"});
        skipped = reader.skipped_rows();
      }
      if (!detail::pace(wall0, t0, f.timestamp_ms, speed_, st)) return;
      queue.push(f, st);
    }
    if (reader.skipped_rows() != skipped) {
      queue.report({QualityEvent::Kind::kMalformedLine, f.timestamp_ms, reader.skipped_rows() - skipped,
                    "non-numeric CSV row skipped"});
    }
  }

  QueuePolicy policy() const override { return speed_ <= 0.0 ? QueuePolicy::kBlock : QueuePolicy::kDropOldest; }
  std::string describe() const override { return "replay://" + path_; }

private:
  std::string path_;
  double speed_;
};

namespace detail {

class SocketFd {
public:
  explicit SocketFd(int fd = -1) : fd_(fd) {}
  SocketFd(SocketFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  SocketFd& operator=(SocketFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~SocketFd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

private:
  int fd_;
};

inline SocketFd tcp_connect(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw ProtocolError("cannot resolve bridge host " + host);
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  for (auto* ai = res; ai; ai = ai->ai_next) {
    SocketFd fd(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (fd.get() < 0) continue;
    if (::connect(fd.get(), ai->ai_addr, ai->ai_addrlen) == 0) return fd;
  }
  throw ProtocolError("cannot connect to bridge " + host + ":" + std::to_string(port));
}

}  // namespace detail

class BridgeSource : public FrameSource {
public:
  using Clock = std::function<double()>;

  BridgeSource(std::string host, int port, Clock clock) : host_(std::move(host)), port_(port), clock_(std::move(clock)) {}

  void run(FrameQueue& queue, std::stop_token st) override {
    auto fd = detail::tcp_connect(host_, port_);
    BridgeDecoder decoder;
    char buf[4096];
    while (!st.stop_requested()) {
      pollfd p{fd.get(), POLLIN, 0};
      const int ready = ::poll(&p, 1, 50);
      if (ready < 0) throw ProtocolError("poll failed on bridge socket");
      if (ready == 0) continue;
      const auto n = ::recv(fd.get(), buf, sizeof buf, 0);
      if (n == 0) return;  // relay closed
      if (n < 0) throw ProtocolError("bridge socket read failed");
      for (const auto& f : decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)), clock_())) {
        queue.push(f, st);
      }
      for (auto& e : decoder.drain_events()) queue.report(std::move(e));
    }
  }

  std::string describe() const override { return "bridge://" + host_ + ":" + std::to_string(port_); }

private:
  std::string host_;
  int port_;
  Clock clock_;
};

struct SourceDescriptor {
  enum class Kind { kBridge, kReplay, kSynth };
  Kind kind;
  std::string target;  // host or path
  int port = 0;
  std::optional<double> speed;
  std::string text;
};

inline SourceDescriptor parse_source_descriptor(const std::string& text) {
  const auto sep = text.find("://");
  if (sep == std::string::npos) throw FormatError("source must look like scheme://target: " + text);
  const auto scheme = text.substr(0, sep);
  auto rest = text.substr(sep + 3);

  SourceDescriptor d;
  d.text = text;
  if (const auto q = rest.find("?speed="); q != std::string::npos) {
    const auto value = rest.substr(q + 7);
    rest = rest.substr(0, q);
    if (value == "max") {
      d.speed = 0.0;
    } else if (value == "realtime") {
      d.speed = 1.0;
    } else {
      double s = 0.0;
      if (!parse_double(value, s) || s < 0.0) throw FormatError("bad speed: " + value);
      d.speed = s;
    }
  }
  if (rest.empty()) throw FormatError("source target missing: " + text);

  if (scheme == "bridge") {
    d.kind = SourceDescriptor::Kind::kBridge;
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw FormatError("bridge source needs host:port");
    d.target = rest.substr(0, colon);
    try {
      d.port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw FormatError("bad bridge port in " + text);
    }
    if (d.port <= 0 || d.port > 65535) throw FormatError("bad bridge port in " + text);
  } else if (scheme == "replay") {
    d.kind = SourceDescriptor::Kind::kReplay;
    d.target = rest;
  } else if (scheme == "synth") {
    d.kind = SourceDescriptor::Kind::kSynth;
    d.target = rest;
  } else {
    throw FormatError("unknown source scheme: " + scheme);
  }
  return d;
}

inline std::unique_ptr<FrameSource> make_source(const SourceDescriptor& d, BridgeSource::Clock clock) {
  switch (d.kind) {
    case SourceDescriptor::Kind::kBridge:
      return std::make_unique<BridgeSource>(d.target, d.port, std::move(clock));
    case SourceDescriptor::Kind::kReplay:
      return std::make_unique<ReplaySource>(d.target, d.speed.value_or(1.0));
    case SourceDescriptor::Kind::kSynth: {
      std::ifstream in(d.target);
      if (!in) throw FormatError("cannot open synth spec " + d.target);
      auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded()) throw FormatError("synth spec is not valid JSON: " + d.target);
      auto script = parse_synth_script(j);
      if (d.speed) script.speed = *d.speed;
      return std::make_unique<SynthSource>(std::move(script));
    }
  }
  throw FormatError("unknown source");
}

// Runs a source on its own thread, feeding a queue. The queue closes when
// the source finishes, fails, or is stopped.
class SourceRunner {
public:
  explicit SourceRunner(std::unique_ptr<FrameSource> source)
      : source_(std::move(source)), queue_(2 * kSampleRateHz, source_->policy()) {
    thread_ = std::jthread([this](std::stop_token st) {
      try {
        source_->run(queue_, st);
        queue_.report({QualityEvent::Kind::kStreamEnded, 0.0, 0, source_->describe()});
      } catch (const std::exception& e) {
        queue_.report({QualityEvent::Kind::kSourceError, 0.0, 0, e.what()});
      }
      queue_.close();
    });
  }

  ~SourceRunner() { stop(); }

  void stop() {
    if (thread_.joinable()) {
      thread_.request_stop();
      queue_.close();
      thread_.join();
    }
  }

  FrameQueue& queue() { return queue_; }
  const FrameSource& source() const { return *source_; }

private:
  std::unique_ptr<FrameSource> source_;
  FrameQueue queue_;
  std::jthread thread_;
};

}  // namespace neurochat
