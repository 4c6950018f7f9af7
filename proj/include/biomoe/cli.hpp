#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace biomoe::cli {

/// Runs one command line (without the program name) and returns the process exit code:
/// 0 ok, 2 usage, 3 processing, 4 integrity, 5 shape.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count from BIOMOE_THREADS, else the hardware concurrency; always at least 1.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) on up to `workers` threads. If any call throws, the exception
/// of the lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Class names used by `eval`, index order.
const std::vector<std::string>& pain_class_names();

}  // namespace biomoe::cli
