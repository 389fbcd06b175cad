#include "crangbp/cran_model.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>

#include "crangbp/random.hpp"

namespace crangbp {

double Partition::cell_diagonal() const {
    const double cw = 1.0 / w;
    const double cq = 1.0 / q;
    return std::sqrt(cw * cw + cq * cq);
}

std::vector<Rect> ue_rectangles(const GridCase& grid, std::span<const MeasurementSpec> specs) {
    std::vector<Rect> rects;
    rects.reserve(specs.size());
    for (const auto& m : specs) {
        const Bus& b = grid.bus(m.bus);
        rects.push_back({b.rect_row, b.rect_col});
    }
    return rects;
}

namespace {

void place_in(const Partition& p, int rect, Rng& rng, double& px, double& py) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int col = rect % p.w;
    const int row = rect / p.w;
    px = (col + unit(rng)) / p.w;
    py = (row + unit(rng)) / p.q;
}

}  // namespace

Placement place_devices(const Partition& partition, std::span<const Rect> ue_rects, Index n_rrh,
                        std::uint64_t ue_seed, std::uint64_t rrh_seed) {
    if (partition.w < 1 || partition.q < 1) throw std::invalid_argument("partition must be at least 1x1");
    Placement out;
    const auto m = static_cast<Index>(ue_rects.size());
    out.ue.resize(m, 2);
    out.rrh.resize(n_rrh, 2);

    Rng ue_rng(ue_seed);
    for (Index j = 0; j < m; ++j) {
        const Rect& r = ue_rects[static_cast<std::size_t>(j)];
        if (r.row >= partition.q || r.col >= partition.w || r.row < 0 || r.col < 0) {
            throw std::invalid_argument("UE rectangle outside the partition");
        }
        const int rect = r.linear(partition);
        out.ue_rect.push_back(rect);
        place_in(partition, rect, ue_rng, out.ue(j, 0), out.ue(j, 1));
    }
    Rng rrh_rng(rrh_seed);
    for (Index i = 0; i < n_rrh; ++i) {
        const int rect = rrh_rectangle(partition, i);
        out.rrh_rect.push_back(rect);
        place_in(partition, rect, rrh_rng, out.rrh(i, 0), out.rrh(i, 1));
    }
    return out;
}

Channel gen_channel(const Placement& placement, const Partition& partition, const ChannelParams& params,
                    std::uint64_t fading_seed) {
    if (!(params.alpha > 0.0)) throw std::invalid_argument("path-loss exponent must be positive");
    const double d0 = params.d0 > 0.0 ? params.d0 : partition.cell_diagonal();
    const Index L = placement.rrh.rows();
    const Index M = placement.ue.rows();

    Rng rng(fading_seed);
    // CN(0, 1): real and imaginary parts each N(0, 1/2)
    std::normal_distribution<double> half(0.0, std::sqrt(0.5));
    std::vector<Eigen::Triplet<Complex>> triplets;
    Channel out;
    std::vector<bool> heard(static_cast<std::size_t>(M), false);
    for (Index i = 0; i < L; ++i) {
        bool any = false;
        for (Index j = 0; j < M; ++j) {
            const double re = half(rng);
            const double im = half(rng);
            const double d = (placement.rrh.row(i) - placement.ue.row(j)).norm();
            if (d > d0) continue;
            const double gain = std::pow(std::max(d, params.d_min), -params.alpha);
            const Complex h = Complex(re, im) * gain;
            if (std::abs(h) == 0.0) continue;
            triplets.emplace_back(i, j, h);
            heard[static_cast<std::size_t>(j)] = true;
            any = true;
        }
        if (!any) out.stats.silent_rrhs.push_back(i);
    }
    for (Index j = 0; j < M; ++j) {
        if (!heard[static_cast<std::size_t>(j)]) out.stats.unheard_ues.push_back(j);
    }
    out.H.resize(L, M);
    out.H.setFromTriplets(triplets.begin(), triplets.end());
    out.stats.nnz = out.H.nonZeros();
    return out;
}

Transmission transmit(const SparseMatrix<Complex>& H, const Eigen::VectorXcd& x, double snr_linear,
                      std::uint64_t seed) {
    if (x.size() != H.cols()) throw std::invalid_argument("signal length differs from H columns");
    if (!(snr_linear > 0.0)) throw std::invalid_argument("SNR must be positive");
    const double power = H.squaredNorm();
    if (!(power > 0.0)) throw std::invalid_argument("channel carries no signal energy");
    Transmission out;
    out.sigma_m_sq = power / (static_cast<double>(H.rows()) * snr_linear);
    out.y = H * x;
    if (out.sigma_m_sq == 0.0) return out;
    Rng rng(seed);
    std::normal_distribution<double> half(0.0, std::sqrt(out.sigma_m_sq / 2.0));
    for (Index i = 0; i < out.y.size(); ++i) {
        const double re = half(rng);
        const double im = half(rng);
        out.y(i) += Complex(re, im);
    }
    return out;
}

namespace {

void check_constants(const NormalizationConstants& c) {
    if (!(c.flow > 0.0) || !(c.injection > 0.0) || !(c.angle > 0.0)) {
        throw std::invalid_argument("normalization constants must be positive");
    }
}

}  // namespace

Eigen::VectorXd normalize_measurements(const Eigen::VectorXd& x_raw, std::span<const MeasurementSpec> specs,
                                       const NormalizationConstants& constants) {
    check_constants(constants);
    if (x_raw.size() != static_cast<Index>(specs.size())) {
        throw std::invalid_argument("one measurement spec per entry required");
    }
    Eigen::VectorXd out(x_raw.size());
    for (Index j = 0; j < x_raw.size(); ++j) {
        out(j) = x_raw(j) / constants.of(specs[static_cast<std::size_t>(j)].kind);
    }
    return out;
}

SparseMatrix<double> normalize_rows(const SparseMatrix<double>& A, std::span<const MeasurementSpec> specs,
                                    const NormalizationConstants& constants) {
    check_constants(constants);
    if (A.rows() != static_cast<Index>(specs.size())) {
        throw std::invalid_argument("one measurement spec per row required");
    }
    Eigen::VectorXd scale(A.rows());
    for (Index j = 0; j < A.rows(); ++j) scale(j) = 1.0 / constants.of(specs[static_cast<std::size_t>(j)].kind);
    SparseMatrix<double> out = scale.asDiagonal() * A;
    return out;
}

SparseMatrix<Complex> drop_empty_rows(const SparseMatrix<Complex>& H, std::vector<Index>* kept) {
    std::vector<Eigen::Triplet<Complex>> triplets;
    Index rows = 0;
    if (kept) kept->clear();
    for (Index i = 0; i < H.outerSize(); ++i) {
        bool any = false;
        for (SparseMatrix<Complex>::InnerIterator it(H, i); it; ++it) {
            triplets.emplace_back(rows, it.col(), it.value());
            any = true;
        }
        if (any) {
            if (kept) kept->push_back(i);
            ++rows;
        }
    }
    SparseMatrix<Complex> out(rows, H.cols());
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

void write_topology(std::ostream& out, const Placement& placement, const SparseMatrix<Complex>& H) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::setprecision(17);
    for (Index j = 0; j < placement.ue.rows(); ++j) {
        out << "UE " << j << ' ' << placement.ue(j, 0) << ' ' << placement.ue(j, 1) << ' '
            << placement.ue_rect[static_cast<std::size_t>(j)] << '\n';
    }
    for (Index i = 0; i < placement.rrh.rows(); ++i) {
        out << "RRH " << i << ' ' << placement.rrh(i, 0) << ' ' << placement.rrh(i, 1) << ' '
            << placement.rrh_rect[static_cast<std::size_t>(i)] << '\n';
    }
    for (Index i = 0; i < H.outerSize(); ++i) {
        for (SparseMatrix<Complex>::InnerIterator it(H, i); it; ++it) {
            out << "H " << i << ' ' << it.col() << ' ' << it.value().real() << ' ' << it.value().imag() << '\n';
        }
    }
    out.flags(flags);
    out.precision(precision);
}

}  // namespace crangbp
