#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "schedprice/quote_service.hpp"

namespace httplib {
class Server;
}

namespace schedprice {

/// The artifact currently being served. Replacing the file on disk (by
/// rename) and calling reload_if_changed() swaps in the new model; requests
/// already holding the old engine finish on it.
class ModelHolder {
 public:
  /// Loads the artifact; throws if it cannot.
  explicit ModelHolder(std::string path);

  std::shared_ptr<const QuoteEngine> current() const;
  /// Reloads when the file's identity (inode, size, mtime) changed. A file
  /// that fails to load is skipped and the old model kept. Returns true if
  /// a new model was swapped in.
  bool reload_if_changed();

  std::uint64_t reloads() const { return reloads_.load(); }
  std::uint64_t failed_reloads() const { return failed_.load(); }
  const std::string& path() const { return path_; }

 private:
  struct Stamp {
    std::uint64_t inode = 0;
    std::int64_t size = -1;
    std::int64_t mtime_ns = 0;
    bool operator==(const Stamp&) const = default;
  };
  Stamp stamp() const;

  std::string path_;
  Stamp loaded_;
  mutable std::mutex mutex_;
  std::shared_ptr<const QuoteEngine> engine_;
  std::atomic<std::uint64_t> reloads_{0};
  std::atomic<std::uint64_t> failed_{0};
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  /// 0 binds any free port.
  int port = 8080;
  std::chrono::milliseconds poll_interval{50};
};

/// POST /quote and GET /healthz over a hot-reloaded artifact.
class QuoteServer {
 public:
  QuoteServer(std::string artifact_path, ServerConfig config);
  ~QuoteServer();
  QuoteServer(const QuoteServer&) = delete;
  QuoteServer& operator=(const QuoteServer&) = delete;

  /// Binds the socket; returns the bound port. Throws on failure.
  int bind();
  /// Serves until stop(). Binds first if needed.
  void run();
  /// run() on a background thread; returns the bound port.
  int start();
  void stop();

  ModelHolder& models() { return models_; }

 private:
  void poll_loop();

  ModelHolder models_;
  ServerConfig config_;
  std::unique_ptr<httplib::Server> http_;
  int port_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread poller_;
  std::thread listener_;
};

}  // namespace schedprice
