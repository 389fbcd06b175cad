#pragma once

// Seeded Monte Carlo experiments over the IEEE 30-bus DC model measured
// through a simulated C-RAN uplink:
//
//   fig4   - RMSE between the C-RAN GBP estimate and the estimate from
//            directly delivered measurements, swept over sigma_n;
//   fig5   - fraction of unobservable topologies over (M/N, L/M);
//   single - one fully dumped trial.
//
// Trial seeds are derive_seed(master_seed, {sweep value, trial}); results
// are written in a fixed order, so output files do not depend on the
// number of worker threads.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "crangbp/cran_model.hpp"
#include "crangbp/gbp_engine.hpp"
#include "crangbp/grid_model.hpp"
#include "crangbp/linear_oracle.hpp"

namespace crangbp {

enum class ExperimentKind { Fig4, Fig5, Single };
enum class OutputFormat { Csv, Json };

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::Single;
    int trials = 1000;
    std::vector<double> redundancy{3.0};
    std::vector<double> rrh_density{1.0};
    double snr_linear = 10.0;
    std::vector<double> sigma_n{1e-1, 1e-2, 1e-3, 1e-4};
    std::optional<Partition> partition;  // unset: taken from the case's rectangle map
    double alpha = 2.0;
    double d0 = 0.0;  // <= 0: sub-rectangle diagonal
    double sigma_s_sq = 1e4;
    ScheduleConfig gbp;
    std::uint64_t master_seed = 1;
    std::filesystem::path case_path;  // empty: shipped IEEE 30-bus case
    TrueStateMode truth_mode = TrueStateMode::UniformAngles;
    /// Fraction of converged trials re-solved with the dense oracle.
    double oracle_check_fraction = 0.05;
    int threads = 1;  // 0: hardware concurrency
    std::filesystem::path output;
    OutputFormat format = OutputFormat::Csv;

    /// Throws std::invalid_argument describing the first bad field.
    void check() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

ExperimentKind parse_experiment_kind(const std::string& name);
OutputFormat parse_output_format(const std::string& name);

/// (1/N) ||a - b||_2, the normalization printed with the RMSE figure.
double rmse_printed(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);
/// ||a - b||_2 / sqrt(N).
double rmse_conventional(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);

struct TrialResult {
    double sigma_n = 0.0;
    double redundancy = 0.0;
    double rrh_density = 0.0;
    int trial = 0;
    Index n_measurements = 0;
    Index n_rrh = 0;
    bool observable = false;
    bool converged = false;
    int iterations = 0;
    // present iff observable && converged
    std::optional<double> rmse_printed;
    std::optional<double> rmse_conventional;
    std::optional<double> rmse_cran_vs_truth;
    std::optional<double> rmse_baseline_vs_truth;
    std::optional<double> oracle_max_abs_diff;
};

/// Tukey boxplot of rmse_printed over converged observable trials.
struct BoxStats {
    double sigma_n = 0.0;
    double redundancy = 0.0;
    double rrh_density = 0.0;
    int count = 0;
    int unobservable = 0;
    int not_converged = 0;
    double min = 0.0;  // lowest value inside the lower fence
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;  // highest value inside the upper fence
    std::vector<double> outliers;
};

/// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);

struct Fig4Result {
    std::vector<TrialResult> rows;
    std::vector<BoxStats> summary;
};

struct Fig5Point {
    double redundancy = 0.0;
    double rrh_density = 0.0;
    Index n_measurements = 0;
    Index n_rrh = 0;
    int trials = 0;
    int unobservable = 0;
    double fraction = 0.0;
};

struct Fig5Result {
    std::vector<Fig5Point> points;
    std::vector<TrialResult> rows;  // observable flag per trial
};

/// Everything generated for one trial, before estimation.
struct TrialData {
    MeasurementConfig config;
    SparseMatrix<double> A;  // normalized measurement matrix
    Eigen::VectorXd s_true;
    Eigen::VectorXd x;  // normalized noisy measurements
    Placement placement;
    Channel channel;              // full L x M channel
    SparseMatrix<Complex> H;      // channel without silent RRHs
    Transmission transmission;    // over H
    RankInfo rank;                // of H A
};

class Experiment {
public:
    explicit Experiment(ExperimentConfig config);

    const ExperimentConfig& config() const { return config_; }
    const GridCase& grid() const { return grid_; }
    const NormalizationConstants& normalization() const { return normalization_; }
    const Partition& partition() const { return partition_; }

    Index measurements_for(double redundancy) const;
    Index rrhs_for(double redundancy, double rrh_density) const;

    /// Seed shared by every stream of one trial at one sweep value.
    std::uint64_t trial_seed(double sweep_value, int trial) const;

    /// Draws configuration, state, measurements, placement, channel and,
    /// when `with_signal` is set, the received vector.
    TrialData simulate(double redundancy, double rrh_density, double sigma_n, std::uint64_t seed,
                       bool with_signal = true) const;

    /// GBP on the bi-layer graph plus the direct-delivery baseline.
    TrialResult run_trial(double redundancy, double rrh_density, double sigma_n, int trial,
                          bool check_oracle) const;

    Fig4Result run_fig4() const;
    Fig5Result run_fig5() const;

private:
    ExperimentConfig config_;
    GridCase grid_;
    NormalizationConstants normalization_;
    Partition partition_;
};

struct SingleRecord {
    TrialResult result;
    double sigma_n = 0.0;
    Eigen::VectorXd s_true;
    Eigen::VectorXd baseline;
    Eigen::VectorXcd gbp_means;
    Eigen::VectorXd gbp_variances;
    Eigen::VectorXcd oracle_means;
    std::vector<std::pair<int, double>> residual_trace;
    double final_residual = 0.0;
    std::string topology;   // write_topology text
    std::string edge_list;  // write_edge_list text
};

/// One trial at the first sweep value of every list, fully dumped.
SingleRecord run_single(const Experiment& experiment);

// Tabular output ------------------------------------------------------------

enum class CellType { Int, Real, Bool };
using Cell = std::variant<std::monostate, std::int64_t, double, bool>;

struct Table {
    std::vector<std::string> columns;
    std::vector<CellType> types;
    std::vector<std::vector<Cell>> rows;

    bool operator==(const Table&) const = default;
};

/// Column order: sigma_n, trial, observable, converged, iterations,
/// rmse_printed, rmse_conventional, rmse_cran_vs_truth,
/// rmse_baseline_vs_truth, oracle_max_abs_diff, redundancy, rrh_density,
/// n_measurements, n_rrh.
Table trial_table(const std::vector<TrialResult>& rows);
/// sigma_n, redundancy, rrh_density, count, unobservable, not_converged,
/// min, q1, median, q3, max, n_outliers.
Table summary_table(const std::vector<BoxStats>& summary);
/// redundancy, rrh_density, n_measurements, n_rrh, trials, unobservable, fraction.
Table fig5_table(const std::vector<Fig5Point>& points);

void write_table(std::ostream& out, const Table& table, OutputFormat format);
/// Writes to `path`; throws std::invalid_argument on an empty table (no
/// file is created) and std::runtime_error if the file cannot be written.
void emit_results(const Table& table, const std::filesystem::path& path, OutputFormat format);
/// Reads back a table written by write_table with the given schema.
Table parse_table(std::istream& in, OutputFormat format, const std::vector<std::string>& columns,
                  const std::vector<CellType>& types);

/// JSON document for a single-trial record.
std::string single_record_json(const SingleRecord& record);

}  // namespace crangbp
