#pragma once

// Set partitions and power sets of small index sets.
//
// These index the terms of the multivariate chain rule and of the
// fixed-point derivative recursion. Output order is canonical:
// partitions follow restricted-growth-string (lexicographic) order with
// blocks sorted by their least element; subsets follow increasing bitmask
// order. Both are pure functions of their inputs.

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace pathsde {

inline constexpr int kMaxPartitionElements = 12;
inline constexpr int kMaxPowerSetElements = 20;

class IndexSet {
public:
    IndexSet() = default;
    // Throws ArgumentError unless elements are strictly increasing.
    explicit IndexSet(std::vector<int> elements);
    IndexSet(std::initializer_list<int> elements);

    const std::vector<int>& elements() const noexcept { return elements_; }
    std::size_t size() const noexcept { return elements_.size(); }
    bool empty() const noexcept { return elements_.empty(); }
    int operator[](std::size_t i) const { return elements_[i]; }
    bool contains(int value) const;

    auto begin() const noexcept { return elements_.begin(); }
    auto end() const noexcept { return elements_.end(); }

    friend bool operator==(const IndexSet&, const IndexSet&) = default;
    friend auto operator<=>(const IndexSet&, const IndexSet&) = default;

private:
    std::vector<int> elements_;
};

struct Partition {
    std::vector<IndexSet> blocks;

    std::size_t size() const noexcept { return blocks.size(); }
    friend bool operator==(const Partition&, const Partition&) = default;
};

// Every partition of {1..n} into exactly `blocks` non-empty blocks.
std::vector<Partition> enumerate_partitions(int n, int blocks);

// Concatenation over blocks = 1..n; its size is the Bell number B(n).
std::vector<Partition> enumerate_all_partitions(int n);

// All 2^|s| subsets of s, from the empty set to s itself.
std::vector<IndexSet> power_set(const IndexSet& s);

// Partitions of an arbitrary index set, relabelled from enumerate_partitions.
std::vector<Partition> partitions_of(const IndexSet& s, int blocks);

// Checks disjointness, non-emptiness and that the blocks cover `universe`.
bool is_partition_of(const Partition& p, const IndexSet& universe);

// Bitmask helpers used by the derivative recursions (bit i <-> index i).
std::uint32_t to_mask(const IndexSet& s);
IndexSet from_mask(std::uint32_t mask);

}  // namespace pathsde
