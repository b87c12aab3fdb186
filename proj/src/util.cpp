#include "bilevel/util.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace bilevel {

namespace {

int initial_thread_count() {
    if (const char* env = std::getenv("BILEVEL_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

std::atomic<int>& thread_slot() {
    static std::atomic<int> n{initial_thread_count()};
    return n;
}

}  // namespace

int thread_count() { return thread_slot().load(); }

void set_thread_count(int n) { thread_slot().store(std::max(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const int t = std::min<std::size_t>(thread_count(), n == 0 ? 1 : n);
    if (t <= 1 || n < 64) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (int k = 0; k < t; ++k) {
        const std::size_t b = std::min(n, k * chunk);
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        workers.emplace_back(fn, b, e);
    }
    for (auto& w : workers) w.join();
}

double pairwise_sum(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace bilevel
