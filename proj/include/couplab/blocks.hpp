#pragma once

// Contiguous index blocks I_l = { i : (l-1) n / K < i <= l n / K } with
// K = ceil(n^{1/6}); indices are 1-based.

#include <cstdint>
#include <vector>

#include "couplab/errors.hpp"

namespace couplab {

struct BlockPartition {
    std::uint64_t n = 0;
    std::size_t count = 0;             // K
    std::vector<std::uint64_t> first;  // i_l, 1-based
    std::vector<std::uint64_t> size;   // m_l

    std::uint64_t last(std::size_t l) const { return first[l] + size[l] - 1; }
};

// Integer-safe ceil(n^{1/6}): the smallest K with K^6 >= n.
inline std::size_t block_count(std::uint64_t n) {
    if (n == 0) throw ConfigError("block_count: n must be positive");
    std::size_t k = 1;
    while (true) {
        std::uint64_t p = 1;
        bool overflow = false;
        for (int j = 0; j < 6; ++j) {
            if (p > n) { overflow = true; break; }
            p *= k;
        }
        if (overflow || p >= n) return k;
        ++k;
    }
}

inline BlockPartition make_blocks(std::uint64_t n) {
    BlockPartition bp;
    bp.n = n;
    bp.count = block_count(n);
    std::uint64_t prev_end = 0;
    for (std::size_t l = 1; l <= bp.count; ++l) {
        std::uint64_t end = static_cast<std::uint64_t>(l) * n / bp.count;  // floor(l n / K)
        bp.first.push_back(prev_end + 1);
        bp.size.push_back(end - prev_end);
        prev_end = end;
    }
    return bp;
}

}  // namespace couplab
