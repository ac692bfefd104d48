#pragma once

namespace redkit {

/// Routes library logging to stderr at the level named by REDKIT_LOG
/// (trace, debug, info, warn, error, off; default warn).
void configure_logging();

}  // namespace redkit
