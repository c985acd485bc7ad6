#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rationalets {

// Write to a unique temporary sibling, then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// SplitMix64 step; used wherever a platform-stable pseudo-random stream is needed.
std::uint64_t splitmix64(std::uint64_t& state);

// Uniform integer in [0, bound) from a splitmix stream, without modulo bias.
std::uint64_t uniform_below(std::uint64_t& state, std::uint64_t bound);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// stops further scheduling and is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            if (failed.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::jthread> threads;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(worker);
    threads.clear();
    if (error) std::rethrow_exception(error);
}

// Shortest round-trippable decimal for a double.
std::string format_double(double v);

}  // namespace rationalets
