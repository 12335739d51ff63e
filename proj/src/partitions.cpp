#include "pathsde/partitions.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "pathsde/errors.hpp"

namespace pathsde {

IndexSet::IndexSet(std::vector<int> elements) : elements_(std::move(elements)) {
    for (std::size_t i = 1; i < elements_.size(); ++i) {
        if (elements_[i - 1] >= elements_[i]) {
            throw ArgumentError("IndexSet elements must be strictly increasing");
        }
    }
}

IndexSet::IndexSet(std::initializer_list<int> elements)
    : IndexSet(std::vector<int>(elements)) {}

bool IndexSet::contains(int value) const {
    return std::binary_search(elements_.begin(), elements_.end(), value);
}

namespace {

// Restricted growth strings a[0..n) with a[0] = 0, a[i] <= max(a[0..i)) + 1,
// using exactly `blocks` distinct labels, visited in lexicographic order.
void visit_rgs(std::vector<int>& a, int pos, int used, int blocks,
               std::vector<Partition>& out) {
    const int n = static_cast<int>(a.size());
    if (pos == n) {
        if (used != blocks) return;
        std::vector<std::vector<int>> grouped(blocks);
        for (int i = 0; i < n; ++i) grouped[a[i]].push_back(i + 1);
        Partition p;
        p.blocks.reserve(blocks);
        for (auto& g : grouped) p.blocks.emplace_back(std::move(g));
        out.push_back(std::move(p));
        return;
    }
    const int remaining = n - pos;
    for (int label = 0; label <= std::min(used, blocks - 1); ++label) {
        const int now_used = label == used ? used + 1 : used;
        // every still-missing block needs one of the remaining positions
        if (blocks - now_used > remaining - 1) continue;
        a[pos] = label;
        visit_rgs(a, pos + 1, now_used, blocks, out);
    }
}

}  // namespace

std::vector<Partition> enumerate_partitions(int n, int blocks) {
    if (n < 1 || blocks < 1 || blocks > n) {
        throw ArgumentError("enumerate_partitions requires 1 <= blocks <= n, got n=" +
                            std::to_string(n) + ", blocks=" + std::to_string(blocks));
    }
    if (n > kMaxPartitionElements) {
        throw ArgumentError("enumerate_partitions is capped at n <= " +
                            std::to_string(kMaxPartitionElements));
    }
    std::vector<Partition> out;
    std::vector<int> a(n, 0);
    visit_rgs(a, 1, 1, blocks, out);
    return out;
}

std::vector<Partition> enumerate_all_partitions(int n) {
    if (n < 1 || n > kMaxPartitionElements) {
        throw ArgumentError("enumerate_all_partitions requires 1 <= n <= " +
                            std::to_string(kMaxPartitionElements));
    }
    std::vector<Partition> out;
    for (int i = 1; i <= n; ++i) {
        auto part = enumerate_partitions(n, i);
        out.insert(out.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    }
    return out;
}

std::vector<IndexSet> power_set(const IndexSet& s) {
    if (s.size() > static_cast<std::size_t>(kMaxPowerSetElements)) {
        throw ArgumentError("power_set is capped at " + std::to_string(kMaxPowerSetElements) +
                            " elements");
    }
    const std::uint32_t count = 1u << s.size();
    std::vector<IndexSet> out;
    out.reserve(count);
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        std::vector<int> sub;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (mask & (1u << i)) sub.push_back(s[i]);
        }
        out.emplace_back(std::move(sub));
    }
    return out;
}

std::vector<Partition> partitions_of(const IndexSet& s, int blocks) {
    auto base = enumerate_partitions(static_cast<int>(s.size()), blocks);
    for (auto& p : base) {
        for (auto& block : p.blocks) {
            std::vector<int> relabelled;
            relabelled.reserve(block.size());
            for (int e : block) relabelled.push_back(s[e - 1]);
            block = IndexSet(std::move(relabelled));
        }
    }
    return base;
}

bool is_partition_of(const Partition& p, const IndexSet& universe) {
    std::vector<int> seen;
    for (const auto& block : p.blocks) {
        if (block.empty()) return false;
        seen.insert(seen.end(), block.begin(), block.end());
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) return false;
    return seen == universe.elements();
}

std::uint32_t to_mask(const IndexSet& s) {
    std::uint32_t mask = 0;
    for (int e : s) {
        if (e < 0 || e >= 32) throw ArgumentError("to_mask needs elements in [0, 32)");
        mask |= 1u << e;
    }
    return mask;
}

IndexSet from_mask(std::uint32_t mask) {
    std::vector<int> elements;
    elements.reserve(std::popcount(mask));
    for (int i = 0; mask != 0; ++i, mask >>= 1) {
        if (mask & 1u) elements.push_back(i);
    }
    return IndexSet(std::move(elements));
}

}  // namespace pathsde
