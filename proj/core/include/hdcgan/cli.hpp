#pragma once

namespace hdc {

/// Dispatches the hdcgan command line: dataset-build, train, generate,
/// eval-msssim, eval-fd, nn, moments-demo, emit-curves. Every flag has
/// a default or is required; a config file (--config, INI style) fills
/// in values that explicit flags then override. All randomness flows
/// from --seed, so identical argv over identical inputs reproduces
/// output files byte for byte; timestamps live only in run.log.
///
/// Returns 0 on success, 1 on a usage error, 2 on a runtime failure.
int run(int argc, const char* const* argv);

}  // namespace hdc
