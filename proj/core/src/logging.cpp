#include "redkit/logging.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace redkit {

void configure_logging() {
  auto logger = spdlog::get("redkit");
  if (!logger) logger = spdlog::stderr_color_mt("redkit");
  spdlog::set_default_logger(logger);

  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("REDKIT_LOG")) {
    level = spdlog::level::from_str(env);
  }
  spdlog::set_level(level);
}

}  // namespace redkit
