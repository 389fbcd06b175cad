#pragma once

// C-RAN uplink: device placement over a partitioned unit square, distance
// sparsified Rayleigh channels h = gamma * d^-alpha, and SNR-calibrated
// transmission y = H x + m.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "crangbp/factor_graph.hpp"
#include "crangbp/grid_model.hpp"

namespace crangbp {

/// w columns by q rows over the unit square; rectangle (col i, row j) spans
/// [i/w, (i+1)/w] x [j/q, (j+1)/q]. Linear index = row * w + col.
struct Partition {
    int w = 1;
    int q = 1;

    int size() const { return w * q; }
    /// Diagonal of one sub-rectangle, sqrt(1/w^2 + 1/q^2).
    double cell_diagonal() const;
};

struct Rect {
    int row = 0;
    int col = 0;

    int linear(const Partition& p) const { return row * p.w + col; }
    bool operator==(const Rect&) const = default;
};

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct Placement {
    Points ue;
    Points rrh;
    std::vector<int> ue_rect;   // linear rectangle index per UE
    std::vector<int> rrh_rect;  // linear rectangle index per RRH
};

/// Rectangle of each measurement's device: its bus, or the from-bus of a flow.
std::vector<Rect> ue_rectangles(const GridCase& grid, std::span<const MeasurementSpec> specs);

/// Rectangle of the i-th RRH under round-robin balancing.
inline int rrh_rectangle(const Partition& p, Index i) {
    return static_cast<int>(i % p.size());
}

/// UEs uniform inside their rectangles; RRH i uniform inside rectangle
/// i mod (w q). UE and RRH coordinates come from separate streams, and RRHs
/// are drawn in index order, so the first L RRHs of a larger deployment
/// match a deployment of L RRHs with the same seed.
Placement place_devices(const Partition& partition, std::span<const Rect> ue_rects, Index n_rrh,
                        std::uint64_t ue_seed, std::uint64_t rrh_seed);

struct ChannelParams {
    double alpha = 2.0;
    double d0 = 0.0;  // sparsification radius; <= 0 means partition cell diagonal
    double d_min = 1e-3;
};

struct ChannelStats {
    std::vector<Index> silent_rrhs;   // rows with no stored entry
    std::vector<Index> unheard_ues;   // columns with no stored entry
    Index nnz = 0;
};

struct Channel {
    SparseMatrix<Complex> H;  // L x M
    ChannelStats stats;
};

/// h_ij = gamma_ij * max(d_ij, d_min)^-alpha stored iff d_ij <= d0, with
/// gamma ~ CN(0, 1). One fading draw is consumed for every (RRH, UE) pair,
/// row by row, whether or not it is stored.
Channel gen_channel(const Placement& placement, const Partition& partition, const ChannelParams& params,
                    std::uint64_t fading_seed);

struct Transmission {
    Eigen::VectorXcd y;
    double sigma_m_sq = 0.0;
};

/// sigma_m^2 = ||H||_F^2 / (L * snr): mean per-RRH received power of a
/// unit-power signal over the target SNR. Noise m ~ CN(0, sigma_m^2).
/// Throws std::invalid_argument if H has no entries.
Transmission transmit(const SparseMatrix<Complex>& H, const Eigen::VectorXcd& x, double snr_linear,
                      std::uint64_t seed);

/// x_unit_j = x_raw_j / c_kind(j).
Eigen::VectorXd normalize_measurements(const Eigen::VectorXd& x_raw, std::span<const MeasurementSpec> specs,
                                       const NormalizationConstants& constants);

/// Scales row j of A by 1 / c_kind(j), matching normalize_measurements.
SparseMatrix<double> normalize_rows(const SparseMatrix<double>& A, std::span<const MeasurementSpec> specs,
                                    const NormalizationConstants& constants);

/// Removes rows without entries; `kept` receives the original row indices.
SparseMatrix<Complex> drop_empty_rows(const SparseMatrix<Complex>& H, std::vector<Index>* kept = nullptr);

/// Plain-text dump:
///   UE <index> <x> <y> <rect>
///   RRH <index> <x> <y> <rect>
///   H <rrh> <ue> <re> <im>
void write_topology(std::ostream& out, const Placement& placement, const SparseMatrix<Complex>& H);

}  // namespace crangbp
