#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "session.hpp"

namespace httplib {
class Server;
}

namespace redkit::service {

struct ServerOptions {
  /// Synchronous requests slower than this get 503.
  std::chrono::milliseconds guard{10'000};
  int threads = 1;  ///< worker threads for parallel analyses
};

/// Local HTTP front end over one design session.
class Server {
 public:
  Server(std::shared_ptr<Session> session, ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  std::shared_ptr<Session> session_;
  ServerOptions options_;
  JobManager jobs_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace redkit::service
