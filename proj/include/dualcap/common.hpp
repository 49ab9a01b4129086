#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dualcap {

// Probabilities below this are treated as zero in support/reachability logic.
inline constexpr double kProbTol = 1e-12;

// Precondition failures that are expected outcomes of a run (not bugs):
// the requested bound would not be valid, so we refuse with a reason.
class Refusal : public std::runtime_error {
public:
    Refusal(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

// A computation exceeded its configured budget (enumeration size, grid size,
// series length, ...).
class ResourceError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("FSC_DUALCAP_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
    }
    return n;
}

// Chunked parallel map over [0, n). Falls back to a serial loop for small n
// so cheap sweeps do not pay thread start-up costs.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                         std::size_t serial_cutoff = 4096) {
    unsigned workers = worker_count();
    if (n == 0) return;
    if (workers <= 1 || n < serial_cutoff) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        if (lo >= n) break;
        std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

// FNV-1a, used for content digests in result provenance.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::vector<double>& v, std::uint64_t seed = 1469598103934665603ull) {
    return fnv1a(v.data(), v.size() * sizeof(double), seed);
}

inline std::string hex64(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace dualcap
