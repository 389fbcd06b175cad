#pragma once

// Synchronous loopy Gaussian belief propagation over a FactorGraph.
//
// One iteration recomputes every variable->factor message from the previous
// factor->variable messages, then every factor->variable message from the new
// variable->factor messages. Damping, when enabled, blends factor->variable
// means with their previous value; precisions are never damped.

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "crangbp/factor_graph.hpp"
#include "crangbp/gaussian.hpp"

namespace crangbp {

struct ScheduleConfig {
    int max_iterations = 1000;
    double tolerance = 1e-8;
    double damping = 0.0;

    /// Throws std::invalid_argument when a field is out of range.
    void check() const;
};

/// Messages on every runtime edge, indexed like FactorGraph::edges().
template <FieldScalar Scalar>
struct MessageState {
    std::vector<GaussianMsg<Scalar>> to_factor;
    std::vector<GaussianMsg<Scalar>> to_variable;
};

template <FieldScalar Scalar>
struct GbpResult {
    Vector<Scalar> state_means;
    Eigen::VectorXd state_variances;  // +inf where no information reached the state
    Vector<Scalar> x_means;
    Eigen::VectorXd x_variances;
    int iterations_used = 0;
    bool converged = false;
    bool diverged = false;
    bool observable = true;  // false if any state marginal is uninformative
    double final_residual = 0.0;
};

/// Called once per iteration with (iteration index starting at 1, residual).
using ResidualSink = std::function<void(int, double)>;

class NonFiniteMessage : public std::runtime_error {
public:
    NonFiniteMessage(Index edge, NodeId factor, NodeId variable);

    Index edge() const { return edge_; }
    NodeId factor() const { return factor_; }
    NodeId variable() const { return variable_; }

private:
    Index edge_;
    NodeId factor_;
    NodeId variable_;
};

/// Degree-1 factors start with their direct message; every other edge
/// starts uninformative in both directions.
template <FieldScalar Scalar>
MessageState<Scalar> initialize_messages(const FactorGraph<Scalar>& graph);

/// One synchronous iteration, in place. Returns the largest absolute change
/// of a factor->variable mean. Throws NonFiniteMessage naming the first
/// offending edge.
template <FieldScalar Scalar>
double iterate_once(MessageState<Scalar>& state, const FactorGraph<Scalar>& graph,
                    const ScheduleConfig& config);

/// Marginals of every S and X node from the current factor->variable messages.
template <FieldScalar Scalar>
GbpResult<Scalar> extract_marginals(const MessageState<Scalar>& state, const FactorGraph<Scalar>& graph);

/// Iterates until the residual drops to `tolerance` or the budget runs out.
/// A residual above 1e12 or a non-finite message ends the run with
/// `diverged` set; this function does not throw on divergence.
template <FieldScalar Scalar>
GbpResult<Scalar> run_to_convergence(const FactorGraph<Scalar>& graph, const ScheduleConfig& config,
                                     const ResidualSink& sink = {});

}  // namespace crangbp
