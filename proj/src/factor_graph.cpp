#include "crangbp/factor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace crangbp {

std::string_view to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::S: return "S";
        case NodeKind::X: return "X";
        case NodeKind::Y: return "Y";
        case NodeKind::FA: return "FA";
        case NodeKind::FH: return "FH";
        case NodeKind::Fy: return "Fy";
        case NodeKind::Fx: return "Fx";
        case NodeKind::Fs: return "Fs";
    }
    return "?";
}

std::string to_string(NodeId id) {
    return std::string(to_string(id.kind)) + "(" + std::to_string(id.index) + ")";
}

namespace {

constexpr double kMinCoefficient = 1e-12;

template <FieldScalar Scalar>
void write_scalar(std::ostream& out, const Scalar& c) {
    if constexpr (is_complex_v<Scalar>) {
        out << '(' << c.real() << ',' << c.imag() << ')';
    } else {
        out << c;
    }
}

}  // namespace

template <FieldScalar Scalar>
FactorGraph<Scalar>::FactorGraph(Index n_states, Index n_measurements, Index n_rrh,
                                 std::vector<GraphFactor<Scalar>> factors, Vector<Scalar> y,
                                 GraphParams params)
    : n_states_(n_states),
      n_measurements_(n_measurements),
      n_rrh_(n_rrh),
      factors_(std::move(factors)),
      y_(std::move(y)),
      params_(params) {
    std::stable_sort(factors_.begin(), factors_.end(),
                     [](const auto& a, const auto& b) { return a.id < b.id; });
    for (auto& f : factors_) {
        std::stable_sort(f.coeffs.coeffs.begin(), f.coeffs.coeffs.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
    }

    const Index n_vars = n_variables();
    factor_offsets_.reserve(factors_.size() + 1);
    factor_offsets_.push_back(0);
    std::vector<Index> degree(static_cast<std::size_t>(n_vars), 0);
    for (std::size_t f = 0; f < factors_.size(); ++f) {
        const auto& coeffs = factors_[f].coeffs.coeffs;
        for (std::size_t slot = 0; slot < coeffs.size(); ++slot) {
            const Index v = coeffs[slot].first;
            edges_.push_back({static_cast<Index>(f), v, static_cast<Index>(slot)});
            if (v >= 0 && v < n_vars) ++degree[static_cast<std::size_t>(v)];
        }
        factor_offsets_.push_back(static_cast<Index>(edges_.size()));
    }

    variable_edge_offsets_.assign(static_cast<std::size_t>(n_vars) + 1, 0);
    for (Index v = 0; v < n_vars; ++v) {
        variable_edge_offsets_[static_cast<std::size_t>(v) + 1] =
            variable_edge_offsets_[static_cast<std::size_t>(v)] + degree[static_cast<std::size_t>(v)];
    }
    variable_edge_list_.resize(static_cast<std::size_t>(variable_edge_offsets_.back()));
    std::vector<Index> fill(variable_edge_offsets_.begin(), variable_edge_offsets_.end() - 1);
    // factors are sorted, so each variable's edge list comes out in factor-id order
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const Index v = edges_[e].variable;
        if (v < 0 || v >= n_vars) continue;
        variable_edge_list_[static_cast<std::size_t>(fill[static_cast<std::size_t>(v)]++)] =
            static_cast<Index>(e);
    }
}

template <FieldScalar Scalar>
std::span<const Index> FactorGraph<Scalar>::variable_edges(Index v) const {
    const auto begin = static_cast<std::size_t>(variable_edge_offsets_[static_cast<std::size_t>(v)]);
    const auto end = static_cast<std::size_t>(variable_edge_offsets_[static_cast<std::size_t>(v) + 1]);
    return std::span<const Index>(variable_edge_list_).subspan(begin, end - begin);
}

template <FieldScalar Scalar>
NodeId FactorGraph<Scalar>::variable_node(Index v) const {
    if (v < n_states_) return {NodeKind::S, v};
    return {NodeKind::X, v - n_states_};
}

template <FieldScalar Scalar>
std::optional<Index> FactorGraph<Scalar>::variable_index(NodeId id) const {
    if (id.index < 0) return std::nullopt;
    if (id.kind == NodeKind::S && id.index < n_states_) return id.index;
    if (id.kind == NodeKind::X && id.index < n_measurements_) return n_states_ + id.index;
    return std::nullopt;
}

template <FieldScalar Scalar>
std::optional<Index> FactorGraph<Scalar>::factor_index(NodeId id) const {
    auto it = std::lower_bound(factors_.begin(), factors_.end(), id,
                               [](const auto& f, const NodeId& key) { return f.id < key; });
    if (it == factors_.end() || it->id != id) return std::nullopt;
    return static_cast<Index>(it - factors_.begin());
}

template <FieldScalar Scalar>
SparseMatrix<Scalar> FactorGraph<Scalar>::measurement_matrix() const {
    std::vector<Eigen::Triplet<Scalar>> triplets;
    for (const auto& f : factors_) {
        if (f.id.kind != NodeKind::FA) continue;
        for (const auto& [v, c] : f.coeffs.coeffs) {
            if (v < n_states_) triplets.emplace_back(f.id.index, v, c);
        }
    }
    SparseMatrix<Scalar> A(n_measurements_, n_states_);
    A.setFromTriplets(triplets.begin(), triplets.end());
    return A;
}

template <FieldScalar Scalar>
SparseMatrix<Scalar> FactorGraph<Scalar>::channel_matrix() const {
    std::vector<Eigen::Triplet<Scalar>> triplets;
    for (const auto& f : factors_) {
        if (f.id.kind != NodeKind::FH) continue;
        for (const auto& [v, c] : f.coeffs.coeffs) {
            triplets.emplace_back(f.id.index, v - n_states_, c);
        }
    }
    SparseMatrix<Scalar> H(n_rrh_, n_measurements_);
    H.setFromTriplets(triplets.begin(), triplets.end());
    return H;
}

template <FieldScalar Scalar>
FactorGraph<Scalar> build_bilayer_graph(const SparseMatrix<Scalar>& A, const SparseMatrix<Scalar>& H,
                                        const Vector<Scalar>& y, const GraphParams& params) {
    const Index M = A.rows();
    const Index N = A.cols();
    const Index L = H.rows();
    if (H.cols() != M) {
        throw std::invalid_argument("H has " + std::to_string(H.cols()) + " columns, expected M = " +
                                    std::to_string(M));
    }
    if (y.size() != L) {
        throw std::invalid_argument("y has length " + std::to_string(y.size()) + ", expected L = " +
                                    std::to_string(L));
    }
    if (!(params.sigma_n_sq > 0.0) || !(params.sigma_m_sq > 0.0) || !(params.sigma_s_sq > 0.0) ||
        !std::isfinite(params.sigma_s_sq)) {
        throw std::invalid_argument("noise and prior variances must be positive (prior finite)");
    }
    if (params.x_prior_var && !(*params.x_prior_var > 0.0)) {
        throw std::invalid_argument("x prior variance must be positive");
    }

    std::vector<GraphFactor<Scalar>> factors;
    factors.reserve(static_cast<std::size_t>(2 * M + L + N));

    for (Index j = 0; j < M; ++j) {
        GraphFactor<Scalar> f{{NodeKind::FA, j}, {{}, Scalar{}, params.sigma_n_sq}};
        for (typename SparseMatrix<Scalar>::InnerIterator it(A, j); it; ++it) {
            if (std::abs(it.value()) < kMinCoefficient) continue;
            f.coeffs.coeffs.emplace_back(it.col(), it.value());
        }
        if (f.coeffs.coeffs.empty()) {
            throw std::invalid_argument("row " + std::to_string(j) +
                                        " of A is entirely zero (measurement is disconnected)");
        }
        f.coeffs.coeffs.emplace_back(N + j, Scalar(-1.0));
        factors.push_back(std::move(f));
    }
    for (Index i = 0; i < L; ++i) {
        GraphFactor<Scalar> f{{NodeKind::FH, i}, {{}, y(i), params.sigma_m_sq}};
        for (typename SparseMatrix<Scalar>::InnerIterator it(H, i); it; ++it) {
            if (std::abs(it.value()) < kMinCoefficient) continue;
            f.coeffs.coeffs.emplace_back(N + it.col(), it.value());
        }
        if (f.coeffs.coeffs.empty()) {
            throw std::invalid_argument("row " + std::to_string(i) +
                                        " of H is entirely zero (RRH is disconnected)");
        }
        factors.push_back(std::move(f));
    }
    const double x_var = params.x_prior_var.value_or(std::numeric_limits<double>::infinity());
    for (Index j = 0; j < M; ++j) {
        factors.push_back({{NodeKind::Fx, j}, {{{N + j, Scalar(1.0)}}, Scalar{}, x_var}});
    }
    for (Index k = 0; k < N; ++k) {
        factors.push_back({{NodeKind::Fs, k}, {{{k, Scalar(1.0)}}, Scalar{}, params.sigma_s_sq}});
    }
    return FactorGraph<Scalar>(N, M, L, std::move(factors), y, params);
}

template <FieldScalar Scalar>
std::vector<Violation> validate(const FactorGraph<Scalar>& graph) {
    std::vector<Violation> out;
    const Index N = graph.n_states();
    const Index M = graph.n_measurements();
    const Index L = graph.n_rrh();
    const Index n_vars = graph.n_variables();
    auto report = [&](NodeId node, std::string msg) { out.push_back({node, std::move(msg)}); };
    auto is_state = [&](Index v) { return v >= 0 && v < N; };
    auto is_measurement = [&](Index v) { return v >= N && v < n_vars; };

    std::vector<int> fa_count(static_cast<std::size_t>(M), 0);
    std::vector<int> fh_count(static_cast<std::size_t>(L), 0);
    std::vector<int> prior_count(static_cast<std::size_t>(n_vars), 0);

    for (const auto& f : graph.factors()) {
        const auto& coeffs = f.coeffs.coeffs;
        const Index idx = f.id.index;
        bool ok = true;
        if (!is_factor(f.id.kind) || f.id.kind == NodeKind::Fy) {
            report(f.id, "node kind cannot carry factor coefficients");
            continue;
        }
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            if (coeffs[k].first < 0 || coeffs[k].first >= n_vars) {
                report(f.id, "edge to unknown variable " + std::to_string(coeffs[k].first));
                ok = false;
            } else if (k > 0 && coeffs[k].first == coeffs[k - 1].first) {
                report(f.id, "duplicate edge to " + to_string(graph.variable_node(coeffs[k].first)));
                ok = false;
            }
            if (std::abs(coeffs[k].second) == 0.0 || !is_finite(coeffs[k].second)) {
                report(f.id, "zero or non-finite coefficient");
                ok = false;
            }
        }
        if (!(f.coeffs.noise_var >= 0.0)) {
            report(f.id, "negative noise variance");
            ok = false;
        }
        if (!ok) {
            // a malformed factor still occupies its slot
            auto occupy = [&](std::vector<int>& counts, Index slot) {
                if (slot >= 0 && slot < static_cast<Index>(counts.size())) ++counts[static_cast<std::size_t>(slot)];
            };
            if (f.id.kind == NodeKind::FA) occupy(fa_count, idx);
            if (f.id.kind == NodeKind::FH) occupy(fh_count, idx);
            if (f.id.kind == NodeKind::Fs && idx < N) occupy(prior_count, idx);
            if (f.id.kind == NodeKind::Fx && idx >= 0 && idx < M) occupy(prior_count, N + idx);
            continue;
        }

        switch (f.id.kind) {
            case NodeKind::FA: {
                if (idx < 0 || idx >= M) {
                    report(f.id, "index out of range");
                    break;
                }
                ++fa_count[static_cast<std::size_t>(idx)];
                Index x_edges = 0;
                Index s_edges = 0;
                bool own = false;
                for (const auto& [v, c] : coeffs) {
                    if (is_state(v)) {
                        ++s_edges;
                    } else {
                        ++x_edges;
                        own = own || (v == N + idx && c == Scalar(-1.0));
                    }
                }
                if (x_edges != 1 || !own) {
                    report(f.id, "must have exactly one edge to x_" + std::to_string(idx) +
                                     " with coefficient -1");
                } else if (s_edges == 0) {
                    report(f.id, "has no state edges");
                }
                break;
            }
            case NodeKind::FH: {
                if (idx < 0 || idx >= L) {
                    report(f.id, "index out of range");
                    break;
                }
                ++fh_count[static_cast<std::size_t>(idx)];
                if (coeffs.empty()) {
                    report(f.id, "has no edges");
                } else if (!std::all_of(coeffs.begin(), coeffs.end(),
                                        [&](const auto& e) { return is_measurement(e.first); })) {
                    report(f.id, "connects to a non-measurement variable");
                } else if (f.coeffs.observation != graph.observations()(idx)) {
                    report(f.id, "observation differs from y_" + std::to_string(idx));
                }
                break;
            }
            case NodeKind::Fs:
            case NodeKind::Fx: {
                const bool state_prior = f.id.kind == NodeKind::Fs;
                const Index expected = state_prior ? idx : N + idx;
                if (coeffs.size() != 1 || coeffs[0].first != expected ||
                    !(state_prior ? is_state(expected) : is_measurement(expected))) {
                    report(f.id, "must be a degree-1 factor on " +
                                     to_string(NodeId{state_prior ? NodeKind::S : NodeKind::X, idx}));
                    break;
                }
                ++prior_count[static_cast<std::size_t>(expected)];
                break;
            }
            default: break;
        }
    }

    for (Index j = 0; j < M; ++j) {
        if (fa_count[static_cast<std::size_t>(j)] != 1) {
            report({NodeKind::FA, j}, std::to_string(fa_count[static_cast<std::size_t>(j)]) +
                                          " measurement factors for x_" + std::to_string(j));
        }
    }
    for (Index i = 0; i < L; ++i) {
        if (fh_count[static_cast<std::size_t>(i)] != 1) {
            report({NodeKind::FH, i}, std::to_string(fh_count[static_cast<std::size_t>(i)]) +
                                          " channel factors for y_" + std::to_string(i));
        }
    }
    for (Index v = 0; v < n_vars; ++v) {
        if (prior_count[static_cast<std::size_t>(v)] != 1) {
            report(graph.variable_node(v),
                   std::to_string(prior_count[static_cast<std::size_t>(v)]) + " prior factors");
        }
    }
    return out;
}

template <FieldScalar Scalar>
std::vector<NodeId> neighbors(const FactorGraph<Scalar>& graph, NodeId node) {
    std::vector<NodeId> out;
    const bool y_layer = node.kind == NodeKind::Y || node.kind == NodeKind::Fy;
    if (y_layer) {
        if (node.index < 0 || node.index >= graph.n_rrh()) {
            throw std::out_of_range("unknown node " + to_string(node));
        }
        out.push_back({node.kind == NodeKind::Y ? NodeKind::Fy : NodeKind::Y, node.index});
        return out;
    }
    if (!is_factor(node.kind)) {
        auto v = graph.variable_index(node);
        if (!v) throw std::out_of_range("unknown node " + to_string(node));
        for (Index e : graph.variable_edges(*v)) {
            out.push_back(graph.factors()[static_cast<std::size_t>(graph.edges()[static_cast<std::size_t>(e)].factor)].id);
        }
        return out;
    }
    auto f = graph.factor_index(node);
    if (!f) throw std::out_of_range("unknown node " + to_string(node));
    for (const auto& [v, c] : graph.factors()[static_cast<std::size_t>(*f)].coeffs.coeffs) {
        out.push_back(graph.variable_node(v));
    }
    return out;
}

template <FieldScalar Scalar>
void write_edge_list(const FactorGraph<Scalar>& graph, std::ostream& out) {
    std::ostringstream line;
    line << std::setprecision(17);
    for (const auto& f : graph.factors()) {
        for (const auto& [v, c] : f.coeffs.coeffs) {
            const NodeId var = graph.variable_node(v);
            line.str("");
            line << to_string(f.id.kind) << ' ' << f.id.index << ' ' << to_string(var.kind) << ' '
                 << var.index << ' ';
            write_scalar(line, c);
            out << line.str() << '\n';
        }
    }
    for (Index i = 0; i < graph.n_rrh(); ++i) {
        line.str("");
        line << "Fy " << i << " Y " << i << ' ';
        write_scalar(line, Scalar(1.0));
        out << line.str() << '\n';
    }
}

template class FactorGraph<double>;
template class FactorGraph<Complex>;

#define CRANGBP_INSTANTIATE_GRAPH(S)                                                                   \
    template FactorGraph<S> build_bilayer_graph<S>(const SparseMatrix<S>&, const SparseMatrix<S>&,    \
                                                   const Vector<S>&, const GraphParams&);             \
    template std::vector<Violation> validate<S>(const FactorGraph<S>&);                                 \
    template std::vector<NodeId> neighbors<S>(const FactorGraph<S>&, NodeId);                           \
    template void write_edge_list<S>(const FactorGraph<S>&, std::ostream&);

CRANGBP_INSTANTIATE_GRAPH(double)
CRANGBP_INSTANTIATE_GRAPH(Complex)

#undef CRANGBP_INSTANTIATE_GRAPH

}  // namespace crangbp
