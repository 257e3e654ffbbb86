#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace ikk {

/// Shared logger. Verbosity comes from the IKK_LOG environment variable
/// (trace, debug, info, warn, error, off); default is warn.
spdlog::logger& log();

}  // namespace ikk
