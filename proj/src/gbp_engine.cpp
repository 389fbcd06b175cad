#include "crangbp/gbp_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crangbp {

namespace {

constexpr double kDivergenceResidual = 1e12;

}  // namespace

void ScheduleConfig::check() const {
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (!(damping >= 0.0 && damping < 1.0)) throw std::invalid_argument("damping must lie in [0, 1)");
}

NonFiniteMessage::NonFiniteMessage(Index edge, NodeId factor, NodeId variable)
    : std::runtime_error("non-finite message on edge " + std::to_string(edge) + " (" +
                         to_string(factor) + " -- " + to_string(variable) + ")"),
      edge_(edge),
      factor_(factor),
      variable_(variable) {}

template <FieldScalar Scalar>
MessageState<Scalar> initialize_messages(const FactorGraph<Scalar>& graph) {
    const auto n_edges = static_cast<std::size_t>(graph.edge_count());
    MessageState<Scalar> state{std::vector<GaussianMsg<Scalar>>(n_edges),
                               std::vector<GaussianMsg<Scalar>>(n_edges)};
    const std::vector<GaussianMsg<Scalar>> none(1);
    for (std::size_t f = 0; f < graph.factors().size(); ++f) {
        const auto& coeffs = graph.factors()[f].coeffs;
        if (coeffs.degree() != 1) continue;
        state.to_variable[static_cast<std::size_t>(graph.factor_offset(static_cast<Index>(f)))] =
            factor_to_variable<Scalar>(coeffs, none, 0);
    }
    return state;
}

template <FieldScalar Scalar>
double iterate_once(MessageState<Scalar>& state, const FactorGraph<Scalar>& graph,
                    const ScheduleConfig& config) {
    std::vector<GaussianMsg<Scalar>> gathered;
    std::vector<GaussianMsg<Scalar>> computed;

    // variable half-iteration: reads to_variable, writes to_factor
    for (Index v = 0; v < graph.n_variables(); ++v) {
        const auto edges = graph.variable_edges(v);
        gathered.resize(edges.size());
        computed.resize(edges.size());
        for (std::size_t k = 0; k < edges.size(); ++k) {
            gathered[k] = state.to_variable[static_cast<std::size_t>(edges[k])];
        }
        variable_to_factor_all<Scalar>(gathered, computed);
        for (std::size_t k = 0; k < edges.size(); ++k) {
            state.to_factor[static_cast<std::size_t>(edges[k])] = computed[k];
        }
    }

    // factor half-iteration: reads to_factor, writes to_variable
    double residual = 0.0;
    const auto factors = graph.factors();
    for (std::size_t f = 0; f < factors.size(); ++f) {
        const auto begin = static_cast<std::size_t>(graph.factor_offset(static_cast<Index>(f)));
        const auto degree = factors[f].coeffs.degree();
        computed.resize(degree);
        factor_to_variable_all<Scalar>(
            factors[f].coeffs, std::span<const GaussianMsg<Scalar>>(state.to_factor).subspan(begin, degree),
            computed);
        for (std::size_t k = 0; k < degree; ++k) {
            auto& slot = state.to_variable[begin + k];
            const GaussianMsg<Scalar> next = damp(slot, computed[k], config.damping);
            if (!is_finite(next.mean) || !std::isfinite(next.precision)) {
                const auto e = static_cast<Index>(begin + k);
                throw NonFiniteMessage(
                    e, factors[f].id, graph.variable_node(graph.edges()[static_cast<std::size_t>(e)].variable));
            }
            // an edge gaining or losing information has not settled, whatever its mean
            const double change = next.informative() == slot.informative()
                                      ? std::abs(next.mean - slot.mean)
                                      : std::numeric_limits<double>::infinity();
            residual = std::max(residual, change);
            slot = next;
        }
    }
    return residual;
}

template <FieldScalar Scalar>
GbpResult<Scalar> extract_marginals(const MessageState<Scalar>& state, const FactorGraph<Scalar>& graph) {
    const Index N = graph.n_states();
    const Index M = graph.n_measurements();
    GbpResult<Scalar> result;
    result.state_means = Vector<Scalar>::Zero(N);
    result.state_variances = Eigen::VectorXd::Zero(N);
    result.x_means = Vector<Scalar>::Zero(M);
    result.x_variances = Eigen::VectorXd::Zero(M);

    std::vector<GaussianMsg<Scalar>> gathered;
    for (Index v = 0; v < graph.n_variables(); ++v) {
        const auto edges = graph.variable_edges(v);
        gathered.resize(edges.size());
        for (std::size_t k = 0; k < edges.size(); ++k) {
            gathered[k] = state.to_variable[static_cast<std::size_t>(edges[k])];
        }
        const GaussianMsg<Scalar> belief = marginal<Scalar>(gathered);
        if (v < N) {
            result.state_means(v) = belief.mean;
            result.state_variances(v) = belief.variance();
            if (!belief.informative()) result.observable = false;
        } else {
            result.x_means(v - N) = belief.mean;
            result.x_variances(v - N) = belief.variance();
        }
    }
    return result;
}

template <FieldScalar Scalar>
GbpResult<Scalar> run_to_convergence(const FactorGraph<Scalar>& graph, const ScheduleConfig& config,
                                     const ResidualSink& sink) {
    config.check();
    MessageState<Scalar> state = initialize_messages(graph);
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    bool diverged = false;
    while (iterations < config.max_iterations) {
        try {
            residual = iterate_once(state, graph, config);
        } catch (const NonFiniteMessage&) {
            ++iterations;
            residual = std::numeric_limits<double>::infinity();
            diverged = true;
            if (sink) sink(iterations, residual);
            break;
        }
        ++iterations;
        if (sink) sink(iterations, residual);
        if (residual <= config.tolerance) break;
        if (residual > kDivergenceResidual && std::isfinite(residual)) {
            diverged = true;
            break;
        }
    }
    GbpResult<Scalar> result = extract_marginals(state, graph);
    result.iterations_used = iterations;
    result.final_residual = residual;
    result.diverged = diverged;
    result.converged = !diverged && residual <= config.tolerance;
    return result;
}

#define CRANGBP_INSTANTIATE_ENGINE(S)                                                                  \
    template MessageState<S> initialize_messages<S>(const FactorGraph<S>&);                            \
    template double iterate_once<S>(MessageState<S>&, const FactorGraph<S>&, const ScheduleConfig&);   \
    template GbpResult<S> extract_marginals<S>(const MessageState<S>&, const FactorGraph<S>&);         \
    template GbpResult<S> run_to_convergence<S>(const FactorGraph<S>&, const ScheduleConfig&,          \
                                                const ResidualSink&);

CRANGBP_INSTANTIATE_ENGINE(double)
CRANGBP_INSTANTIATE_ENGINE(Complex)

#undef CRANGBP_INSTANTIATE_ENGINE

}  // namespace crangbp
