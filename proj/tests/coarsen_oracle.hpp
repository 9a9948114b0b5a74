#ifndef HMC_TEST_COARSEN_ORACLE_HPP
#define HMC_TEST_COARSEN_ORACLE_HPP

#include <limits>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "hmc/coarsen.hpp"

namespace hmc::test {

/// Greedy contraction that re-evaluates every live candidate pair at every
/// step and takes the minimum of (cost, i, j).
inline std::vector<MergeRecord> brute_force_coarsen(const TriMesh& mesh, int n_target, double eps) {
    const int n = mesh.vertex_count();
    std::vector<Quadric> q = vertex_quadrics(mesh);
    std::vector<Vec3> pos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pos[i] = mesh.vertex(i);
    std::set<std::pair<int, int>> pairs;
    for (auto p : candidate_pairs(mesh, eps)) pairs.insert(p);
    std::vector<MergeRecord> log;
    int remaining = n;
    while (remaining > n_target && !pairs.empty()) {
        std::tuple<double, int, int> best{std::numeric_limits<double>::infinity(), -1, -1};
        Vec3 best_pos = Vec3::Zero();
        for (auto [i, j] : pairs) {
            const Contraction c = optimal_contraction(q[i], q[j], pos[i], pos[j]);
            const std::tuple<double, int, int> key{c.cost, i, j};
            if (key < best) {
                best = key;
                best_pos = c.position;
            }
        }
        const auto [cost, i, j] = best;
        log.push_back(MergeRecord{i, j, cost, best_pos});
        pos[i] = best_pos;
        q[i] += q[j];
        --remaining;
        std::set<std::pair<int, int>> next;
        for (auto [a, b] : pairs) {
            if (a == j) a = i;
            if (b == j) b = i;
            if (a == b) continue;
            next.insert({std::min(a, b), std::max(a, b)});
        }
        pairs = std::move(next);
    }
    return log;
}

/// True when both logs pick the same pairs with bit-identical costs and positions.
inline bool same_merges(const std::vector<MergeRecord>& a, const std::vector<MergeRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].kept != b[k].kept || a[k].removed != b[k].removed || a[k].cost != b[k].cost ||
            a[k].position != b[k].position) {
            return false;
        }
    }
    return true;
}

}  // namespace hmc::test

#endif  // HMC_TEST_COARSEN_ORACLE_HPP
