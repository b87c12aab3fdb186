#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>

namespace bilevel {

/// Number of worker threads used by the pair-sum kernels.
/// Defaults to 1; BILEVEL_THREADS (env) or set_thread_count() override.
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over a static partition of [0, n).
/// Results written through per-index buffers are independent of the
/// partition, which keeps every reduction in this library deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// Pairwise (cascade) summation; fixed reduction tree, bit-reproducible.
double pairwise_sum(std::span<const double> xs);

/// FNV-1a 64-bit hash; stable across platforms, used for config manifests.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace bilevel
