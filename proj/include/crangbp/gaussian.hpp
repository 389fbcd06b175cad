#pragma once

// Scalar Gaussian message algebra for loopy Gaussian belief propagation.
//
// Messages live in precision form (mean, 1/variance) so that the
// uninformative message is exactly representable as precision 0. All
// functions are templated on the scalar field: `double` for real models,
// `std::complex<double>` for circularly-symmetric complex models, where a
// message carries one complex mean and one real variance and coefficients
// enter variances through their squared modulus.

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace crangbp {

using Index = Eigen::Index;
using Complex = std::complex<double>;

template <typename T>
struct is_complex : std::false_type {};
template <typename T>
struct is_complex<std::complex<T>> : std::true_type {};
template <typename T>
inline constexpr bool is_complex_v = is_complex<T>::value;

template <typename Scalar>
concept FieldScalar = std::is_same_v<Scalar, double> || std::is_same_v<Scalar, Complex>;

/// |c|^2 for real or complex scalars.
template <FieldScalar Scalar>
inline double abs2(const Scalar& c) {
    return std::norm(c);
}

template <FieldScalar Scalar>
inline bool is_finite(const Scalar& c) {
    if constexpr (is_complex_v<Scalar>) {
        return std::isfinite(c.real()) && std::isfinite(c.imag());
    } else {
        return std::isfinite(c);
    }
}

template <FieldScalar Scalar>
struct GaussianMsg {
    Scalar mean{};
    double precision = 0.0;

    static GaussianMsg uninformative() { return {}; }

    static GaussianMsg from_variance(Scalar mean, double variance) {
        return {mean, 1.0 / variance};
    }

    bool informative() const { return precision > 0.0; }

    double variance() const {
        return precision > 0.0 ? 1.0 / precision : std::numeric_limits<double>::infinity();
    }

    bool operator==(const GaussianMsg&) const = default;
};

/// A linear factor  z = sum_k C_k v_k + noise,  noise ~ N(0, noise_var).
///
/// `noise_var` may be +infinity, which turns a degree-1 factor into a
/// source of uninformative messages.
template <FieldScalar Scalar>
struct FactorCoeffs {
    std::vector<std::pair<Index, Scalar>> coeffs;
    Scalar observation{};
    double noise_var = 0.0;

    std::size_t degree() const { return coeffs.size(); }
};

/// Precision-weighted product of every message except `excluded`.
template <FieldScalar Scalar>
GaussianMsg<Scalar> variable_to_factor(std::span<const GaussianMsg<Scalar>> incoming,
                                       std::size_t excluded) {
    double precision = 0.0;
    Scalar weighted{};
    for (std::size_t k = 0; k < incoming.size(); ++k) {
        if (k == excluded) continue;
        precision += incoming[k].precision;
        weighted += incoming[k].precision * incoming[k].mean;
    }
    if (!(precision > 0.0)) return GaussianMsg<Scalar>::uninformative();
    return {weighted / precision, precision};
}

/// Marginal belief: product of all incoming messages.
template <FieldScalar Scalar>
GaussianMsg<Scalar> marginal(std::span<const GaussianMsg<Scalar>> incoming) {
    return variable_to_factor(incoming, incoming.size());
}

/// Message from a linear factor to the variable at position `target` of
/// `factor.coeffs`. `incoming[k]` is the message from the variable at
/// position k; the target's own entry is ignored.
///
///   mean     = (z - sum_{k != t} C_k m_k) / C_t
///   variance = (noise_var + sum_{k != t} |C_k|^2 var_k) / |C_t|^2
///
/// Any uninformative non-target input yields an uninformative output.
template <FieldScalar Scalar>
GaussianMsg<Scalar> factor_to_variable(const FactorCoeffs<Scalar>& factor,
                                       std::span<const GaussianMsg<Scalar>> incoming,
                                       std::size_t target) {
    Scalar residual = factor.observation;
    double variance = factor.noise_var;
    for (std::size_t k = 0; k < factor.coeffs.size(); ++k) {
        if (k == target) continue;
        if (!incoming[k].informative()) return GaussianMsg<Scalar>::uninformative();
        const Scalar& c = factor.coeffs[k].second;
        residual -= c * incoming[k].mean;
        variance += abs2(c) / incoming[k].precision;
    }
    if (std::isinf(variance)) return GaussianMsg<Scalar>::uninformative();
    const Scalar& ct = factor.coeffs[target].second;
    return {residual / ct, abs2(ct) / variance};
}

/// Leave-one-out products for every position of a variable node at once.
/// Uses prefix/suffix accumulation so no message is ever subtracted out.
template <FieldScalar Scalar>
void variable_to_factor_all(std::span<const GaussianMsg<Scalar>> incoming,
                            std::span<GaussianMsg<Scalar>> out) {
    const std::size_t n = incoming.size();
    // out[k] temporarily holds the prefix over [0, k)
    double p = 0.0;
    Scalar w{};
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = {w, p};
        p += incoming[k].precision;
        w += incoming[k].precision * incoming[k].mean;
    }
    p = 0.0;
    w = Scalar{};
    for (std::size_t k = n; k-- > 0;) {
        const double precision = out[k].precision + p;
        const Scalar weighted = out[k].mean + w;
        out[k] = precision > 0.0 ? GaussianMsg<Scalar>{weighted / precision, precision}
                                 : GaussianMsg<Scalar>::uninformative();
        p += incoming[k].precision;
        w += incoming[k].precision * incoming[k].mean;
    }
}

/// All outgoing messages of one factor. Same prefix/suffix scheme as
/// `variable_to_factor_all`; uninformative inputs are counted so that a
/// single uninformative neighbour still lets a message flow back to it.
template <FieldScalar Scalar>
void factor_to_variable_all(const FactorCoeffs<Scalar>& factor,
                            std::span<const GaussianMsg<Scalar>> incoming,
                            std::span<GaussianMsg<Scalar>> out) {
    const std::size_t n = factor.coeffs.size();
    struct Partial {
        Scalar sum{};
        double var = 0.0;
        int blind = 0;
    };
    std::vector<Partial> prefix(n);
    Partial acc;
    for (std::size_t k = 0; k < n; ++k) {
        prefix[k] = acc;
        const Scalar& c = factor.coeffs[k].second;
        if (incoming[k].informative()) {
            acc.sum += c * incoming[k].mean;
            acc.var += abs2(c) / incoming[k].precision;
        } else {
            ++acc.blind;
        }
    }
    acc = Partial{};
    for (std::size_t k = n; k-- > 0;) {
        const Scalar& ct = factor.coeffs[k].second;
        const int blind = prefix[k].blind + acc.blind;
        const double variance = factor.noise_var + prefix[k].var + acc.var;
        if (blind > 0 || std::isinf(variance)) {
            out[k] = GaussianMsg<Scalar>::uninformative();
        } else {
            out[k] = {(factor.observation - (prefix[k].sum + acc.sum)) / ct, abs2(ct) / variance};
        }
        if (incoming[k].informative()) {
            acc.sum += ct * incoming[k].mean;
            acc.var += abs2(ct) / incoming[k].precision;
        } else {
            ++acc.blind;
        }
    }
}

/// new_mean = (1 - d) * computed + d * previous; precision taken from `computed`.
template <FieldScalar Scalar>
GaussianMsg<Scalar> damp(const GaussianMsg<Scalar>& previous, const GaussianMsg<Scalar>& computed,
                         double damping) {
    if (damping == 0.0) return computed;
    return {computed.mean + damping * (previous.mean - computed.mean), computed.precision};
}

}  // namespace crangbp
