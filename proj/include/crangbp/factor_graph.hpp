#pragma once

// Bi-layer factor graph joining the measurement layer (states S, measurements
// X, factors F_A and F_s) and the channel layer (received symbols Y, factors
// F_H and F_y) through the shared measurement nodes X and their F_x factors.
//
// The runtime graph folds every observed y_i into the observation of F_H(i),
// so the Y/F_y pair never carries messages. Both nodes still exist in the
// node-id space: `neighbors` and `write_edge_list` report the full layout.

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "crangbp/gaussian.hpp"

namespace crangbp {

enum class NodeKind : std::uint8_t { S, X, Y, FA, FH, Fy, Fx, Fs };

std::string_view to_string(NodeKind kind);

inline bool is_factor(NodeKind kind) { return kind >= NodeKind::FA; }

struct NodeId {
    NodeKind kind;
    Index index;

    auto operator<=>(const NodeId&) const = default;
};

std::string to_string(NodeId id);

template <FieldScalar Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

template <FieldScalar Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <FieldScalar Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct GraphParams {
    double sigma_n_sq = 0.0;
    double sigma_m_sq = 0.0;
    double sigma_s_sq = 1e4;
    /// Variance of the optional zero-mean prior on each x_j. Unset means
    /// F_x factors emit uninformative messages.
    std::optional<double> x_prior_var;
};

/// One factor node. Coefficient keys are runtime variable indices:
/// s_k -> k, x_j -> N + j.
template <FieldScalar Scalar>
struct GraphFactor {
    NodeId id;
    FactorCoeffs<Scalar> coeffs;
};

template <FieldScalar Scalar>
class FactorGraph {
public:
    struct Edge {
        Index factor;
        Index variable;
        Index slot;  // position within the factor's coefficient list
    };

    /// Assembles a graph from explicit parts. Factors are sorted by id and
    /// coefficients by variable index; no invariant is checked here (see
    /// `validate`).
    FactorGraph(Index n_states, Index n_measurements, Index n_rrh,
                std::vector<GraphFactor<Scalar>> factors, Vector<Scalar> y, GraphParams params);

    Index n_states() const { return n_states_; }
    Index n_measurements() const { return n_measurements_; }
    Index n_rrh() const { return n_rrh_; }
    Index n_variables() const { return n_states_ + n_measurements_; }
    const GraphParams& params() const { return params_; }
    const Vector<Scalar>& observations() const { return y_; }

    std::span<const GraphFactor<Scalar>> factors() const { return factors_; }
    std::span<const Edge> edges() const { return edges_; }

    /// Edges of factor f occupy [factor_offset(f), factor_offset(f + 1)).
    Index factor_offset(Index f) const { return factor_offsets_[static_cast<std::size_t>(f)]; }
    /// Edge indices incident to a runtime variable, ordered by factor id.
    std::span<const Index> variable_edges(Index v) const;

    NodeId variable_node(Index v) const;
    std::optional<Index> variable_index(NodeId id) const;
    std::optional<Index> factor_index(NodeId id) const;

    /// Message-carrying edges: nnz(A) + nnz(H) + 2M + N.
    Index edge_count() const { return static_cast<Index>(edges_.size()); }
    /// Full layout including the L edges F_y(i) -- y_i.
    Index layout_edge_count() const { return edge_count() + n_rrh_; }
    Index layout_variable_count() const { return n_states_ + n_measurements_ + n_rrh_; }
    Index layout_factor_count() const { return static_cast<Index>(factors_.size()) + n_rrh_; }

    /// Rebuild A (M x N) from the F_A factors and H (L x M) from F_H.
    SparseMatrix<Scalar> measurement_matrix() const;
    SparseMatrix<Scalar> channel_matrix() const;

private:
    Index n_states_;
    Index n_measurements_;
    Index n_rrh_;
    std::vector<GraphFactor<Scalar>> factors_;
    Vector<Scalar> y_;
    GraphParams params_;

    std::vector<Edge> edges_;
    std::vector<Index> factor_offsets_;
    std::vector<Index> variable_edge_offsets_;
    std::vector<Index> variable_edge_list_;
};

/// Builds the bi-layer graph for  x = A s + n,  y = H x + m,  s ~ N(0, sigma_s^2 I).
///
/// Entries with |c| < 1e-12 are dropped. Throws std::invalid_argument on
/// dimension mismatch, non-positive variances, or a row of A or H with no
/// remaining entries.
template <FieldScalar Scalar>
FactorGraph<Scalar> build_bilayer_graph(const SparseMatrix<Scalar>& A, const SparseMatrix<Scalar>& H,
                                        const Vector<Scalar>& y, const GraphParams& params);

struct Violation {
    NodeId node;
    std::string message;
};

template <FieldScalar Scalar>
std::vector<Violation> validate(const FactorGraph<Scalar>& graph);

/// Incident nodes in (kind, index) order. Throws std::out_of_range for an
/// id that is not part of the graph.
template <FieldScalar Scalar>
std::vector<NodeId> neighbors(const FactorGraph<Scalar>& graph, NodeId node);

/// One line per layout edge:
///   <factor-kind> <factor-index> <variable-kind> <variable-index> <coefficient>
/// Complex coefficients print as (re,im). Doubles use 17 significant digits.
template <FieldScalar Scalar>
void write_edge_list(const FactorGraph<Scalar>& graph, std::ostream& out);

extern template class FactorGraph<double>;
extern template class FactorGraph<Complex>;

}  // namespace crangbp
