#include "ikk/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace ikk {

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("ikk");
    l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    auto level = spdlog::level::warn;
    if (const char* env = std::getenv("IKK_LOG")) {
      level = spdlog::level::from_str(env);
    }
    l->set_level(level);
    return l;
  }();
  return *logger;
}

}  // namespace ikk
