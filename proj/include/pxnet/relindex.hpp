#pragma once

// Indexing between actor pairs and the column-wise vectorization of the
// upper triangle of an n x n relation matrix, plus the three classes of
// relation pairs (identical, sharing one actor, disjoint).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace pxnet {

using Index = std::ptrdiff_t;

struct ActorPair {
    Index i;
    Index j;
    friend bool operator==(const ActorPair&, const ActorPair&) = default;
};

struct DyadPair {
    Index first;
    Index second;
    friend bool operator==(const DyadPair&, const DyadPair&) = default;
};

enum class ThetaClass { Theta1, Theta2, Theta3 };

struct ThetaCounts {
    double theta1;
    double theta2;
    double theta3;
};

inline Index num_dyads(Index n) { return n * (n - 1) / 2; }

// Order: (0,1),(0,2),(1,2),(0,3),(1,3),(2,3),...
inline Index pair_to_index(Index i, Index j, Index n) {
    if (i < 0 || i >= j || j >= n) {
        throw DomainError("pair_to_index: need 0 <= i < j < n, got (" + std::to_string(i) + "," +
                          std::to_string(j) + ") with n=" + std::to_string(n));
    }
    return j * (j - 1) / 2 + i;
}

inline ActorPair index_to_pair(Index d, Index n) {
    if (d < 0 || d >= num_dyads(n)) {
        throw DomainError("index_to_pair: index " + std::to_string(d) + " out of range");
    }
    auto j = static_cast<Index>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(d))) / 2.0);
    while (j * (j - 1) / 2 > d) --j;
    while ((j + 1) * j / 2 <= d) ++j;
    return {d - j * (j - 1) / 2, j};
}

/// Column-wise relation indexing for a fixed actor count.
class RelationIndex {
public:
    explicit RelationIndex(Index n) : n_(n) {
        if (n < 3) throw DomainError("RelationIndex: need at least 3 actors");
    }

    Index actors() const { return n_; }
    Index size() const { return num_dyads(n_); }
    Index from_pair(Index i, Index j) const {
        return i < j ? pair_to_index(i, j, n_) : pair_to_index(j, i, n_);
    }
    ActorPair to_pair(Index d) const { return index_to_pair(d, n_); }

private:
    Index n_;
};

/// Ordered pair counts |Theta_i|, i.e. the number of ones in S_1, S_2, S_3.
inline ThetaCounts theta_counts(Index n) {
    if (n < 3) throw DomainError("theta_counts: need n >= 3");
    const double nd = static_cast<double>(n);
    const double t1 = nd * (nd - 1.0) / 2.0;
    const double t2 = nd * (nd - 1.0) * (nd - 2.0);
    const double t3 = n < 4 ? 0.0 : t1 * (nd - 2.0) * (nd - 3.0) / 2.0;
    return {t1, t2, t3};
}

inline bool shares_one_actor(ActorPair a, ActorPair b) {
    const int shared = (a.i == b.i) + (a.i == b.j) + (a.j == b.i) + (a.j == b.j);
    return shared == 1;
}

// Number of unordered Theta_2 pairs whose two relations are both observed.
// `missing` is empty (fully observed) or has one flag per dyad.
inline double admissible_theta2(Index n, std::span<const std::uint8_t> missing) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        double deg = 0.0;
        for (Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const Index d = k < i ? pair_to_index(k, i, n) : pair_to_index(i, k, n);
            if (missing.empty() || !missing[d]) deg += 1.0;
        }
        total += deg * (deg - 1.0) / 2.0;
    }
    return total;
}

/// Draws m unordered pairs of relations sharing exactly one actor.
///
/// The shared actor i is drawn with probability proportional to the number of
/// observed relation pairs it anchors, then two distinct observed partners
/// {j, k} uniformly; each Theta_2 pair has a unique shared actor, so the draw
/// is uniform over admissible pairs. Draws are with replacement unless m
/// reaches the admissible population, in which case the whole population is
/// returned.
template <class Rng>
std::vector<DyadPair> sample_theta2(Index n, Index m, std::span<const std::uint8_t> missing,
                                    Rng& rng) {
    if (n < 3) throw DomainError("sample_theta2: need n >= 3");
    if (m < 1) throw DomainError("sample_theta2: sample size must be positive");
    if (!missing.empty() && static_cast<Index>(missing.size()) != num_dyads(n)) {
        throw DomainError("sample_theta2: mask length mismatch");
    }

    std::vector<std::vector<Index>> partners(static_cast<std::size_t>(n));
    std::vector<double> weight(static_cast<std::size_t>(n), 0.0);
    double population = 0.0;
    for (Index i = 0; i < n; ++i) {
        auto& p = partners[static_cast<std::size_t>(i)];
        for (Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const Index d = k < i ? pair_to_index(k, i, n) : pair_to_index(i, k, n);
            if (missing.empty() || !missing[d]) p.push_back(k);
        }
        const double deg = static_cast<double>(p.size());
        weight[static_cast<std::size_t>(i)] = deg * (deg - 1.0) / 2.0;
        population += weight[static_cast<std::size_t>(i)];
    }
    if (population <= 0.0) {
        throw EstimationError("sample_theta2: no observed pair of relations shares an actor");
    }

    auto dyad = [n](Index a, Index b) {
        return a < b ? pair_to_index(a, b, n) : pair_to_index(b, a, n);
    };

    std::vector<DyadPair> out;
    if (static_cast<double>(m) >= population) {
        out.reserve(static_cast<std::size_t>(population));
        for (Index i = 0; i < n; ++i) {
            const auto& p = partners[static_cast<std::size_t>(i)];
            for (std::size_t a = 0; a < p.size(); ++a) {
                for (std::size_t b = a + 1; b < p.size(); ++b) {
                    out.push_back({dyad(i, p[a]), dyad(i, p[b])});
                }
            }
        }
        return out;
    }

    std::discrete_distribution<Index> pick_actor(weight.begin(), weight.end());
    out.reserve(static_cast<std::size_t>(m));
    for (Index s = 0; s < m; ++s) {
        const Index i = pick_actor(rng);
        const auto& p = partners[static_cast<std::size_t>(i)];
        const auto deg = static_cast<Index>(p.size());
        std::uniform_int_distribution<Index> first(0, deg - 1);
        std::uniform_int_distribution<Index> second(0, deg - 2);
        const Index a = first(rng);
        Index b = second(rng);
        if (b >= a) ++b;
        out.push_back({dyad(i, p[static_cast<std::size_t>(a)]), dyad(i, p[static_cast<std::size_t>(b)])});
    }
    return out;
}

}  // namespace pxnet
