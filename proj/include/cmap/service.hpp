#pragma once

#include <memory>
#include <string>
#include <thread>

#include "cmap/bundle.hpp"

namespace cmap {

struct ApiResponse {
    int status = 200;
    json body;
};

/// Routes one request without any sockets. `query` holds decoded parameters.
ApiResponse handle_api(const SummaryBundle& bundle, const std::string& method, const std::string& path,
                       const std::map<std::string, std::string>& query, const std::string& body);

/// HTTP front end over a shared, read-only bundle.
class Service {
  public:
    explicit Service(std::shared_ptr<const SummaryBundle> bundle);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds host:port (0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); requires bind().
    void run();
    /// Serves on a background thread; returns once accepting connections.
    void start();
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread worker_;
};

}  // namespace cmap
