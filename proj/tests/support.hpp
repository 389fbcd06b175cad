#pragma once

// Random model instances shared by the unit and acceptance tests.

#include <algorithm>
#include <map>
#include <stdexcept>
#include <numeric>
#include <queue>
#include <random>
#include <vector>

#include <Eigen/SparseCore>

#include "crangbp/factor_graph.hpp"
#include "crangbp/grid_model.hpp"
#include "crangbp/linear_oracle.hpp"

namespace crangbp::testing {

template <FieldScalar Scalar>
Scalar random_coefficient(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    std::bernoulli_distribution flip(0.5);
    if constexpr (is_complex_v<Scalar>) {
        std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
        return std::polar(mag(rng), phase(rng));
    } else {
        return flip(rng) ? mag(rng) : -mag(rng);
    }
}

template <FieldScalar Scalar>
struct Instance {
    SparseMatrix<Scalar> A;
    SparseMatrix<Scalar> H;
    Vector<Scalar> y;
    GraphParams params;

    FactorGraph<Scalar> graph() const { return build_bilayer_graph<Scalar>(A, H, y, params); }
};

/// Each row of A touches 1..max_row_nnz states, each row of H 1..max_row_nnz
/// measurements; H gets a dominant diagonal-like entry so that loopy GBP
/// has a good chance of converging.
template <FieldScalar Scalar>
Instance<Scalar> random_instance(std::mt19937_64& rng, Index N, Index M, Index L, int max_row_nnz = 3) {
    std::uniform_int_distribution<int> nnz(1, max_row_nnz);
    std::uniform_real_distribution<double> var(0.05, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto random_rows = [&](Index rows, Index cols, bool dominant) {
        std::vector<Eigen::Triplet<Scalar>> t;
        std::vector<Index> perm(static_cast<std::size_t>(cols));
        std::iota(perm.begin(), perm.end(), 0);
        for (Index r = 0; r < rows; ++r) {
            std::shuffle(perm.begin(), perm.end(), rng);
            const int k = std::min<int>(nnz(rng), static_cast<int>(cols));
            std::vector<Index> chosen(perm.begin(), perm.begin() + k);
            const Index lead = r % cols;
            if (dominant && std::find(chosen.begin(), chosen.end(), lead) == chosen.end()) chosen[0] = lead;
            for (Index c : chosen) {
                Scalar v = random_coefficient<Scalar>(rng);
                if (dominant && c == lead) v *= 3.0;
                t.emplace_back(r, c, v);
            }
        }
        SparseMatrix<Scalar> m(rows, cols);
        m.setFromTriplets(t.begin(), t.end());
        return m;
    };

    Instance<Scalar> inst;
    inst.A = random_rows(M, N, false);
    inst.H = random_rows(L, M, true);
    inst.y.resize(L);
    for (Index i = 0; i < L; ++i) {
        if constexpr (is_complex_v<Scalar>) {
            inst.y(i) = Scalar(normal(rng), normal(rng));
        } else {
            inst.y(i) = normal(rng);
        }
    }
    inst.params.sigma_n_sq = var(rng);
    inst.params.sigma_m_sq = var(rng);
    inst.params.sigma_s_sq = 100.0;
    return inst;
}

/// Instance whose runtime factor graph is a forest: every multi-variable
/// factor joins variables from distinct components (union-find).
template <FieldScalar Scalar>
Instance<Scalar> random_tree_instance(std::mt19937_64& rng, Index N, Index M, Index L) {
    std::vector<Index> parent(static_cast<std::size_t>(N + M));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](Index v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    };
    std::uniform_int_distribution<int> size(1, 3);
    std::uniform_real_distribution<double> var(0.1, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    // picks up to k variables from [first, first + count), each in a new component
    auto pick = [&](Index first, Index count, int k, std::vector<Index> taken) {
        std::vector<Index> order(static_cast<std::size_t>(count));
        std::iota(order.begin(), order.end(), first);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<Index> out;
        for (Index v : order) {
            if (static_cast<int>(out.size()) == k) break;
            const Index root = find(v);
            bool fresh = true;
            for (Index u : taken) fresh = fresh && find(u) != root;
            if (!fresh) continue;
            out.push_back(v);
            taken.push_back(v);
        }
        for (std::size_t i = 1; i < taken.size(); ++i) parent[static_cast<std::size_t>(find(taken[i]))] = find(taken[0]);
        return out;
    };

    std::vector<Eigen::Triplet<Scalar>> ta, th;
    for (Index j = 0; j < M; ++j) {
        for (Index k : pick(0, N, size(rng), {N + j})) ta.emplace_back(j, k, random_coefficient<Scalar>(rng));
    }
    for (Index i = 0; i < L; ++i) {
        for (Index x : pick(N, M, size(rng), {})) th.emplace_back(i, x - N, random_coefficient<Scalar>(rng));
    }
    Instance<Scalar> inst;
    inst.A.resize(M, N);
    inst.A.setFromTriplets(ta.begin(), ta.end());
    inst.H.resize(L, M);
    inst.H.setFromTriplets(th.begin(), th.end());
    inst.y.resize(L);
    for (Index i = 0; i < L; ++i) {
        if constexpr (is_complex_v<Scalar>) {
            inst.y(i) = Scalar(normal(rng), normal(rng));
        } else {
            inst.y(i) = normal(rng);
        }
    }
    inst.params.sigma_n_sq = var(rng);
    inst.params.sigma_m_sq = var(rng);
    inst.params.sigma_s_sq = 10.0;
    return inst;
}

/// Longest shortest path, in edges, over the runtime graph (variables and
/// factors as nodes, all components).
template <FieldScalar Scalar>
int graph_diameter(const FactorGraph<Scalar>& g) {
    const Index V = g.n_variables();
    const Index F = static_cast<Index>(g.factors().size());
    std::vector<std::vector<Index>> adj(static_cast<std::size_t>(V + F));
    for (const auto& e : g.edges()) {
        adj[static_cast<std::size_t>(e.variable)].push_back(V + e.factor);
        adj[static_cast<std::size_t>(V + e.factor)].push_back(e.variable);
    }
    int diameter = 0;
    for (Index src = 0; src < V + F; ++src) {
        std::vector<int> dist(adj.size(), -1);
        std::queue<Index> q;
        dist[static_cast<std::size_t>(src)] = 0;
        q.push(src);
        while (!q.empty()) {
            const Index u = q.front();
            q.pop();
            for (Index w : adj[static_cast<std::size_t>(u)]) {
                if (dist[static_cast<std::size_t>(w)] < 0) {
                    dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
                    diameter = std::max(diameter, dist[static_cast<std::size_t>(w)]);
                    q.push(w);
                }
            }
        }
    }
    return diameter;
}

/// max |a - b| / (1 + max |b|).
template <typename A, typename B>
double relative_max_diff(const A& a, const B& b) {
    return (a - b).cwiseAbs().maxCoeff() / (1.0 + b.cwiseAbs().maxCoeff());
}

// DC flow and injection formulas evaluated directly on the full angle vector
inline double flow(const Branch& br, int r, int k, const std::map<int, double>& theta) {
    return -br.susceptance * (theta.at(r) - theta.at(k));
}

inline std::map<int, double> full_angles(const GridCase& grid, const Eigen::VectorXd& s) {
    std::map<int, double> theta;
    for (const auto& b : grid.buses()) {
        const auto col = grid.state_column(b.id);
        theta[b.id] = col ? s(*col) : 0.0;
    }
    return theta;
}

inline double brute_force(const GridCase& grid, const MeasurementSpec& m, const Eigen::VectorXd& s) {
    const auto theta = full_angles(grid, s);
    switch (m.kind) {
        case MeasurementKind::Angle: return theta.at(m.bus);
        case MeasurementKind::BranchFlow:
            for (const auto& br : grid.branches()) {
                if ((br.from == m.bus && br.to == m.to_bus) || (br.to == m.bus && br.from == m.to_bus)) {
                    return flow(br, m.bus, m.to_bus, theta);
                }
            }
            throw std::logic_error("no branch");
        case MeasurementKind::Injection: {
            double p = 0.0;
            for (const auto& br : grid.branches()) {
                if (br.from == m.bus) p += flow(br, br.from, br.to, theta);
                if (br.to == m.bus) p += flow(br, br.to, br.from, theta);
            }
            return p;
        }
    }
    return 0.0;
}

}  // namespace crangbp::testing
