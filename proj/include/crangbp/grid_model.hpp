#pragma once

// DC power-system model: case files, measurement matrices, random observable
// measurement configurations and synthetic measurements.
//
// Flows and injections follow
//   P_rk = -b_rk (theta_r - theta_k),
//   P_r  = -sum_{k in N(r)} b_rk (theta_r - theta_k),
// with the reference bus angle fixed to zero and dropped from the state.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "crangbp/factor_graph.hpp"

namespace crangbp {

class CaseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Bus {
    int id;
    int rect_row;
    int rect_col;
};

struct Branch {
    int from;
    int to;
    double susceptance;  // b_rk in p.u.
};

class GridCase {
public:
    GridCase(std::vector<Bus> buses, std::vector<Branch> branches, int reference_bus,
             std::map<int, double> injections = {});

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Branch>& branches() const { return branches_; }
    int reference_bus() const { return reference_bus_; }
    /// Net injection profile (p.u.) for non-reference buses; may be empty.
    const std::map<int, double>& injection_profile() const { return injections_; }

    /// N = |buses| - 1.
    Index n_states() const { return static_cast<Index>(buses_.size()) - 1; }
    /// State column of a bus angle; nullopt for the reference bus.
    std::optional<Index> state_column(int bus_id) const;
    const Bus& bus(int bus_id) const;
    /// Indices into branches() touching a bus.
    const std::vector<std::size_t>& incident_branches(int bus_id) const;
    int rect_rows() const;
    int rect_cols() const;

private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    int reference_bus_;
    std::map<int, double> injections_;
    std::map<int, std::size_t> bus_pos_;
    std::vector<std::optional<Index>> column_;
    std::vector<std::vector<std::size_t>> incident_;
};

/// Parses the line-oriented case format (sections BUS, BRANCH, REF and an
/// optional INJECTION; '#' starts a comment). Errors carry line numbers.
GridCase parse_case(std::istream& in, const std::string& source = "<stream>");
GridCase load_case(const std::filesystem::path& path);
/// Path of the IEEE 30-bus file shipped with the library.
std::filesystem::path shipped_case_path();

enum class MeasurementKind { BranchFlow, Injection, Angle };

std::string_view to_string(MeasurementKind kind);

struct MeasurementSpec {
    MeasurementKind kind;
    int bus;         // r: from-bus of a flow, location of injection/angle
    int to_bus = 0;  // k: flow only

    bool operator==(const MeasurementSpec&) const = default;
};

struct MeasurementConfig {
    std::vector<MeasurementSpec> specs;
    double redundancy = 0.0;
};

/// All branch flows in both directions, all injections, all non-reference angles.
std::vector<MeasurementSpec> candidate_pool(const GridCase& grid);

SparseMatrix<double> build_measurement_matrix(const GridCase& grid, std::span<const MeasurementSpec> specs);

/// Draws round(redundancy * N) distinct candidates until the measurement
/// matrix has full column rank. Throws std::runtime_error if no observable
/// draw is found within `max_attempts`.
MeasurementConfig generate_config(const GridCase& grid, double redundancy, std::uint64_t seed,
                                  int max_attempts = 1000);

/// x = A s + n, n ~ N(0, sigma_n^2) i.i.d.
Eigen::VectorXd simulate_measurements(const SparseMatrix<double>& A, const Eigen::VectorXd& s_true,
                                      double sigma_n, std::uint64_t seed);

enum class TrueStateMode { UniformAngles, DcPowerFlow };

/// Uniform angles on [-half_width, half_width], or the DC power-flow
/// solution of the case's injection profile (seed unused).
Eigen::VectorXd generate_true_state(const GridCase& grid, std::uint64_t seed,
                                    TrueStateMode mode = TrueStateMode::UniformAngles,
                                    double half_width = 0.5);

/// Solves B' theta = P for the case's injection profile.
Eigen::VectorXd dc_power_flow(const GridCase& grid);

/// Injection at every bus (order of grid.buses()) for a state vector.
Eigen::VectorXd bus_injections(const GridCase& grid, const Eigen::VectorXd& s);
/// P_rk for branch (r, k) in either orientation.
double branch_flow(const GridCase& grid, int from, int to, const Eigen::VectorXd& s);

/// Per-kind RMS signal levels used to scale transmitted measurements.
struct NormalizationConstants {
    double flow = 1.0;
    double injection = 1.0;
    double angle = 1.0;

    double of(MeasurementKind kind) const;
};

/// Exact RMS of each measurement kind over the candidate pool when angles
/// are i.i.d. uniform on [-half_width, half_width].
NormalizationConstants reference_normalization(const GridCase& grid, double half_width = 0.5);

}  // namespace crangbp
