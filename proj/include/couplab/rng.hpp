#pragma once

// Deterministic stream seeding: a master seed derives named substreams,
// substreams derive indexed children. Identical (seed, name, index)
// always yields the same engine, independent of evaluation order.

#include <atomic>
#include <cstdint>
#include <random>
#include <string_view>
#include <thread>
#include <vector>

namespace couplab {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

class SeedStream {
  public:
    static SeedStream root(std::uint64_t master) { return SeedStream(detail::splitmix64(master ^ 0x5bf0f5ULL)); }

    SeedStream child(std::string_view name) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return SeedStream(detail::splitmix64(state_ ^ h));
    }

    SeedStream child(std::uint64_t index) const {
        return SeedStream(detail::splitmix64(state_ ^ (0xa24baed4963ee407ULL + index)));
    }

    std::mt19937_64 engine() const { return std::mt19937_64(state_); }
    std::uint64_t raw() const { return state_; }

  private:
    explicit SeedStream(std::uint64_t s) : state_(s) {}
    std::uint64_t state_;
};

// Runs fn(i) for i in [0, count) on `workers` threads. Work items own
// disjoint output slots, so the merged result is order-independent.
template <class F>
void parallel_for(std::size_t count, unsigned workers, F&& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    unsigned k = std::min<unsigned>(workers, static_cast<unsigned>(count));
    pool.reserve(k);
    for (unsigned w = 0; w < k; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace couplab
