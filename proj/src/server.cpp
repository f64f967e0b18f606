#include "schedprice/server.hpp"

#include <sys/stat.h>

#include <httplib.h>
#include <json.hpp>

namespace schedprice {

ModelHolder::ModelHolder(std::string path) : path_(std::move(path)) {
  loaded_ = stamp();
  auto artifact = std::make_shared<const ModelArtifact>(load_artifact(path_));
  engine_ = std::make_shared<const QuoteEngine>(std::move(artifact));
}

ModelHolder::Stamp ModelHolder::stamp() const {
  struct stat st {};
  if (::stat(path_.c_str(), &st) != 0) return {};
  return {static_cast<std::uint64_t>(st.st_ino), static_cast<std::int64_t>(st.st_size),
          static_cast<std::int64_t>(st.st_mtim.tv_sec) * 1'000'000'000 + st.st_mtim.tv_nsec};
}

std::shared_ptr<const QuoteEngine> ModelHolder::current() const {
  std::lock_guard lock(mutex_);
  return engine_;
}

bool ModelHolder::reload_if_changed() {
  const Stamp now = stamp();
  if (now == loaded_ || now.size < 0) return false;
  std::shared_ptr<const QuoteEngine> next;
  try {
    auto artifact = std::make_shared<const ModelArtifact>(load_artifact(path_));
    next = std::make_shared<const QuoteEngine>(std::move(artifact));
  } catch (const std::exception&) {
    ++failed_;
    loaded_ = now;
    return false;
  }
  loaded_ = now;
  {
    std::lock_guard lock(mutex_);
    engine_.swap(next);
  }
  ++reloads_;
  return true;
}

QuoteServer::QuoteServer(std::string artifact_path, ServerConfig config)
    : models_(std::move(artifact_path)),
      config_(std::move(config)),
      http_(std::make_unique<httplib::Server>()) {
  using nlohmann::json;
  auto error = [](httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  };
  http_->Post("/quote", [this, error](const httplib::Request& req, httplib::Response& res) {
    const auto engine = models_.current();
    try {
      const QuoteRequest q = parse_quote_request(req.body);
      res.set_content(to_json(engine->quote(q)), "application/json");
    } catch (const std::invalid_argument& e) {
      error(res, 400, e.what());
    } catch (const std::exception& e) {
      error(res, 500, e.what());
    }
  });
  http_->Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    const auto engine = models_.current();
    res.set_content(json{{"status", "ok"}, {"model_version", engine->artifact().model_version}}.dump(),
                    "application/json");
  });
}

QuoteServer::~QuoteServer() { stop(); }

int QuoteServer::bind() {
  if (port_ >= 0) return port_;
  port_ = config_.port == 0 ? http_->bind_to_any_port(config_.host)
                            : (http_->bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (port_ < 0) {
    throw std::runtime_error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  return port_;
}

void QuoteServer::poll_loop() {
  while (!stopping_.load()) {
    models_.reload_if_changed();
    std::this_thread::sleep_for(config_.poll_interval);
  }
}

void QuoteServer::run() {
  bind();
  stopping_ = false;
  if (!poller_.joinable()) poller_ = std::thread([this] { poll_loop(); });
  http_->listen_after_bind();
}

int QuoteServer::start() {
  const int port = bind();
  stopping_ = false;
  poller_ = std::thread([this] { poll_loop(); });
  listener_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port;
}

void QuoteServer::stop() {
  stopping_ = true;
  if (http_) http_->stop();
  if (listener_.joinable()) listener_.join();
  if (poller_.joinable()) poller_.join();
}

}  // namespace schedprice
