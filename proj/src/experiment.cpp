#include "crangbp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "crangbp/random.hpp"

namespace crangbp {

// Configuration -------------------------------------------------------------

void ExperimentConfig::check() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
    if (trials < 1) fail("trials must be at least 1");
    if (redundancy.empty() || rrh_density.empty() || sigma_n.empty()) fail("sweep lists must be non-empty");
    for (double r : redundancy) {
        if (!(r >= 1.0)) fail("redundancy values must be >= 1");
    }
    for (double d : rrh_density) {
        if (!(d > 0.0)) fail("rrh_density values must be positive");
    }
    for (double s : sigma_n) {
        if (!(s > 0.0) || !std::isfinite(s)) fail("sigma_n values must be positive and finite");
    }
    if (!(snr_linear > 0.0) || !std::isfinite(snr_linear)) fail("snr must be positive and finite");
    if (partition && (partition->w < 1 || partition->q < 1)) fail("partition must be at least 1x1");
    if (!(alpha > 0.0)) fail("alpha must be positive");
    if (!(sigma_s_sq > 0.0) || !std::isfinite(sigma_s_sq)) fail("sigma_s_sq must be positive and finite");
    if (!(oracle_check_fraction >= 0.0 && oracle_check_fraction <= 1.0)) {
        fail("oracle_check_fraction must lie in [0, 1]");
    }
    if (threads < 0) fail("threads must be non-negative");
    gbp.check();
}

ExperimentKind parse_experiment_kind(const std::string& name) {
    if (name == "fig4") return ExperimentKind::Fig4;
    if (name == "fig5") return ExperimentKind::Fig5;
    if (name == "single") return ExperimentKind::Single;
    throw std::invalid_argument("unknown experiment '" + name + "' (expected fig4, fig5 or single)");
}

OutputFormat parse_output_format(const std::string& name) {
    if (name == "csv") return OutputFormat::Csv;
    if (name == "json") return OutputFormat::Json;
    throw std::invalid_argument("unknown format '" + name + "' (expected csv or json)");
}

namespace {

std::vector<double> as_list(const YAML::Node& node) {
    if (node.IsSequence()) return node.as<std::vector<double>>();
    return {node.as<double>()};
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig c;
    YAML::Node root;
    try {
        root = YAML::Load(in);
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    if (root.IsNull()) return c;
    if (!root.IsMap()) throw std::invalid_argument("config: expected key: value pairs");

    for (const auto& entry : root) {
        const auto key = entry.first.as<std::string>();
        const YAML::Node& v = entry.second;
        try {
            if (key == "experiment") c.experiment = parse_experiment_kind(v.as<std::string>());
            else if (key == "trials") c.trials = v.as<int>();
            else if (key == "redundancy") c.redundancy = as_list(v);
            else if (key == "rrh_density") c.rrh_density = as_list(v);
            else if (key == "snr") c.snr_linear = v.as<double>();
            else if (key == "sigma_n") c.sigma_n = as_list(v);
            else if (key == "partition") {
                const auto wq = v.as<std::vector<int>>();
                if (wq.size() != 2) throw std::invalid_argument("partition needs [w, q]");
                c.partition = Partition{wq[0], wq[1]};
            }
            else if (key == "alpha") c.alpha = v.as<double>();
            else if (key == "d0") c.d0 = v.as<double>();
            else if (key == "sigma_s_sq") c.sigma_s_sq = v.as<double>();
            else if (key == "max_iterations") c.gbp.max_iterations = v.as<int>();
            else if (key == "tolerance") c.gbp.tolerance = v.as<double>();
            else if (key == "damping") c.gbp.damping = v.as<double>();
            else if (key == "master_seed") c.master_seed = v.as<std::uint64_t>();
            else if (key == "case") c.case_path = v.as<std::string>();
            else if (key == "truth_mode") {
                const auto mode = v.as<std::string>();
                if (mode == "uniform") c.truth_mode = TrueStateMode::UniformAngles;
                else if (mode == "power_flow") c.truth_mode = TrueStateMode::DcPowerFlow;
                else throw std::invalid_argument("truth_mode must be uniform or power_flow");
            }
            else if (key == "oracle_check_fraction") c.oracle_check_fraction = v.as<double>();
            else if (key == "threads") c.threads = v.as<int>();
            else if (key == "output") c.output = v.as<std::string>();
            else if (key == "format") c.format = parse_output_format(v.as<std::string>());
            else throw std::invalid_argument("unknown key");
        } catch (const YAML::Exception& e) {
            throw std::invalid_argument("config: bad value for '" + key + "': " + e.what());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config: '" + key + "': " + e.what());
        }
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path.string());
    return parse_config(in);
}

// Metrics -------------------------------------------------------------------

double rmse_printed(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    if (a.size() != b.size()) throw std::invalid_argument("rmse: length mismatch");
    if (a.size() == 0) return 0.0;
    return (a - b).norm() / static_cast<double>(a.size());
}

double rmse_conventional(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    if (a.size() != b.size()) throw std::invalid_argument("rmse: length mismatch");
    if (a.size() == 0) return 0.0;
    return (a - b).norm() / std::sqrt(static_cast<double>(a.size()));
}

namespace {

double quantile(const std::vector<double>& sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

BoxStats box_stats(std::vector<double> values) {
    BoxStats s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        s.min = s.q1 = s.median = s.q3 = s.max = nan;
        return s;
    }
    std::sort(values.begin(), values.end());
    s.q1 = quantile(values, 0.25);
    s.median = quantile(values, 0.5);
    s.q3 = quantile(values, 0.75);
    const double iqr = s.q3 - s.q1;
    const double lo_fence = s.q1 - 1.5 * iqr;
    const double hi_fence = s.q3 + 1.5 * iqr;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    for (double v : values) {
        if (v < lo_fence || v > hi_fence) {
            s.outliers.push_back(v);
        } else {
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
        }
    }
    return s;
}

// Experiment ----------------------------------------------------------------

namespace {

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
    std::size_t workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                       : static_cast<std::size_t>(threads);
    workers = std::min(workers, std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                        next = count;
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

GridCase load_experiment_case(const ExperimentConfig& config) {
    return load_case(config.case_path.empty() ? shipped_case_path() : config.case_path);
}

bool select_for_oracle(std::uint64_t seed, double fraction) {
    if (fraction >= 1.0) return true;
    if (fraction <= 0.0) return false;
    const double u = static_cast<double>(splitmix64(seed ^ 0x6f7261636c65ULL) >> 11) * 0x1.0p-53;
    return u < fraction;
}

std::uint64_t sweep_seed(std::uint64_t master, std::initializer_list<double> sweep, int trial) {
    std::uint64_t h = master;
    for (double v : sweep) h = derive_seed(h, {value_tag(v)});
    return derive_seed(h, {static_cast<std::uint64_t>(trial)});
}

}  // namespace

Experiment::Experiment(ExperimentConfig config)
    : config_(std::move(config)),
      grid_(load_experiment_case(config_)),
      normalization_(reference_normalization(grid_)),
      partition_(config_.partition.value_or(Partition{grid_.rect_cols(), grid_.rect_rows()})) {
    config_.check();
    if (grid_.rect_cols() > partition_.w || grid_.rect_rows() > partition_.q) {
        throw std::invalid_argument("case rectangle map does not fit a " + std::to_string(partition_.w) + "x" +
                                    std::to_string(partition_.q) + " partition");
    }
}

Index Experiment::measurements_for(double redundancy) const {
    return static_cast<Index>(std::llround(redundancy * static_cast<double>(grid_.n_states())));
}

Index Experiment::rrhs_for(double redundancy, double rrh_density) const {
    return static_cast<Index>(std::llround(rrh_density * static_cast<double>(measurements_for(redundancy))));
}

std::uint64_t Experiment::trial_seed(double sweep_value, int trial) const {
    return sweep_seed(config_.master_seed, {sweep_value}, trial);
}

TrialData Experiment::simulate(double redundancy, double rrh_density, double sigma_n, std::uint64_t seed,
                               bool with_signal) const {
    TrialData d;
    d.config = generate_config(grid_, redundancy, derive_seed(seed, {tag(Stream::Config)}));
    d.A = normalize_rows(build_measurement_matrix(grid_, d.config.specs), d.config.specs, normalization_);
    d.s_true = generate_true_state(grid_, derive_seed(seed, {tag(Stream::TrueState)}), config_.truth_mode);
    d.x = simulate_measurements(d.A, d.s_true, sigma_n, derive_seed(seed, {tag(Stream::MeasurementNoise)}));

    const auto rects = ue_rectangles(grid_, d.config.specs);
    d.placement = place_devices(partition_, rects, rrhs_for(redundancy, rrh_density),
                                derive_seed(seed, {tag(Stream::UePlacement)}),
                                derive_seed(seed, {tag(Stream::RrhPlacement)}));
    d.channel = gen_channel(d.placement, partition_, {config_.alpha, config_.d0, 1e-3},
                            derive_seed(seed, {tag(Stream::Fading)}));
    d.H = drop_empty_rows(d.channel.H);

    if (d.H.rows() > 0) {
        const Eigen::MatrixXcd effective = Eigen::MatrixXcd(d.H) * Eigen::MatrixXd(d.A).cast<Complex>();
        d.rank = is_observable(effective);
        if (with_signal) {
            d.transmission = transmit(d.H, d.x.cast<Complex>(), config_.snr_linear,
                                      derive_seed(seed, {tag(Stream::ReceiverNoise)}));
        }
    }
    return d;
}

namespace {

struct Estimates {
    GbpResult<Complex> gbp;
    Eigen::VectorXd baseline;
    std::optional<Eigen::VectorXcd> oracle;
};

FactorGraph<Complex> graph_for(const TrialData& d, double sigma_n, double sigma_s_sq) {
    const SparseMatrix<Complex> A = d.A.cast<Complex>();
    return build_bilayer_graph<Complex>(A, d.H, d.transmission.y,
                                        {sigma_n * sigma_n, d.transmission.sigma_m_sq, sigma_s_sq, {}});
}

void fill_metrics(TrialResult& r, const TrialData& d, const Estimates& e) {
    const Eigen::VectorXcd baseline = e.baseline.cast<Complex>();
    const Eigen::VectorXcd truth = d.s_true.cast<Complex>();
    r.rmse_printed = rmse_printed(e.gbp.state_means, baseline);
    r.rmse_conventional = rmse_conventional(e.gbp.state_means, baseline);
    r.rmse_cran_vs_truth = rmse_printed(e.gbp.state_means, truth);
    r.rmse_baseline_vs_truth = rmse_printed(baseline, truth);
    if (e.oracle) r.oracle_max_abs_diff = (e.gbp.state_means - *e.oracle).cwiseAbs().maxCoeff();
}

}  // namespace

TrialResult Experiment::run_trial(double redundancy, double rrh_density, double sigma_n, int trial,
                                  bool check_oracle) const {
    TrialResult r;
    r.sigma_n = sigma_n;
    r.redundancy = redundancy;
    r.rrh_density = rrh_density;
    r.trial = trial;
    const std::uint64_t seed = sweep_seed(config_.master_seed, {sigma_n, redundancy, rrh_density}, trial);
    const TrialData d = simulate(redundancy, rrh_density, sigma_n, seed);
    r.n_measurements = d.A.rows();
    r.n_rrh = d.channel.H.rows();
    r.observable = d.rank.observable;
    if (!r.observable) return r;

    const auto graph = graph_for(d, sigma_n, config_.sigma_s_sq);
    Estimates e;
    e.gbp = run_to_convergence(graph, config_.gbp);
    r.converged = e.gbp.converged;
    r.iterations = e.gbp.iterations_used;
    if (!r.converged) return r;

    e.baseline = baseline_estimate_no_cran<double>(Eigen::MatrixXd(d.A), d.x, sigma_n * sigma_n, config_.sigma_s_sq);
    if (check_oracle || select_for_oracle(seed, config_.oracle_check_fraction)) {
        e.oracle = mmse_estimate(to_dense_model(graph));
    }
    fill_metrics(r, d, e);
    return r;
}

Fig4Result Experiment::run_fig4() const {
    struct Task {
        double redundancy, density, sigma_n;
        int trial;
    };
    std::vector<Task> tasks;
    for (double r : config_.redundancy) {
        for (double rho : config_.rrh_density) {
            for (double s : config_.sigma_n) {
                for (int t = 0; t < config_.trials; ++t) tasks.push_back({r, rho, s, t});
            }
        }
    }
    Fig4Result out;
    out.rows.resize(tasks.size());
    parallel_for(tasks.size(), config_.threads, [&](std::size_t i) {
        const Task& t = tasks[i];
        out.rows[i] = run_trial(t.redundancy, t.density, t.sigma_n, t.trial, false);
    });

    for (std::size_t begin = 0; begin < out.rows.size(); begin += static_cast<std::size_t>(config_.trials)) {
        std::vector<double> values;
        int unobservable = 0;
        int not_converged = 0;
        for (std::size_t i = begin; i < begin + static_cast<std::size_t>(config_.trials); ++i) {
            const auto& row = out.rows[i];
            if (!row.observable) ++unobservable;
            else if (!row.converged) ++not_converged;
            else values.push_back(*row.rmse_printed);
        }
        BoxStats s = box_stats(std::move(values));
        s.sigma_n = out.rows[begin].sigma_n;
        s.redundancy = out.rows[begin].redundancy;
        s.rrh_density = out.rows[begin].rrh_density;
        s.unobservable = unobservable;
        s.not_converged = not_converged;
        out.summary.push_back(std::move(s));
    }
    return out;
}

Fig5Result Experiment::run_fig5() const {
    // Seeds depend on (M/N, trial) only, so every density shares one
    // configuration and placement stream per trial.
    struct Task {
        double redundancy, density;
        int trial;
    };
    std::vector<Task> tasks;
    for (double r : config_.redundancy) {
        for (double rho : config_.rrh_density) {
            for (int t = 0; t < config_.trials; ++t) tasks.push_back({r, rho, t});
        }
    }
    Fig5Result out;
    out.rows.resize(tasks.size());
    const double sigma_n = config_.sigma_n.front();
    parallel_for(tasks.size(), config_.threads, [&](std::size_t i) {
        const Task& t = tasks[i];
        const std::uint64_t seed = sweep_seed(config_.master_seed, {t.redundancy}, t.trial);
        const TrialData d = simulate(t.redundancy, t.density, sigma_n, seed, false);
        TrialResult& r = out.rows[i];
        r.sigma_n = sigma_n;
        r.redundancy = t.redundancy;
        r.rrh_density = t.density;
        r.trial = t.trial;
        r.n_measurements = d.A.rows();
        r.n_rrh = d.channel.H.rows();
        r.observable = d.rank.observable;
    });

    for (std::size_t begin = 0; begin < out.rows.size(); begin += static_cast<std::size_t>(config_.trials)) {
        Fig5Point p;
        p.redundancy = out.rows[begin].redundancy;
        p.rrh_density = out.rows[begin].rrh_density;
        p.n_measurements = out.rows[begin].n_measurements;
        p.n_rrh = out.rows[begin].n_rrh;
        p.trials = config_.trials;
        for (std::size_t i = begin; i < begin + static_cast<std::size_t>(config_.trials); ++i) {
            if (!out.rows[i].observable) ++p.unobservable;
        }
        p.fraction = static_cast<double>(p.unobservable) / static_cast<double>(p.trials);
        out.points.push_back(p);
    }
    return out;
}

SingleRecord run_single(const Experiment& experiment) {
    const auto& cfg = experiment.config();
    SingleRecord rec;
    const double r = cfg.redundancy.front();
    const double rho = cfg.rrh_density.front();
    rec.sigma_n = cfg.sigma_n.front();

    TrialResult& res = rec.result;
    res.sigma_n = rec.sigma_n;
    res.redundancy = r;
    res.rrh_density = rho;
    const std::uint64_t seed = sweep_seed(cfg.master_seed, {rec.sigma_n, r, rho}, 0);
    const TrialData d = experiment.simulate(r, rho, rec.sigma_n, seed);
    res.n_measurements = d.A.rows();
    res.n_rrh = d.channel.H.rows();
    res.observable = d.rank.observable;
    rec.s_true = d.s_true;

    std::ostringstream topo;
    write_topology(topo, d.placement, d.channel.H);
    rec.topology = topo.str();
    if (!res.observable) return rec;

    const auto graph = graph_for(d, rec.sigma_n, cfg.sigma_s_sq);
    std::ostringstream edges;
    write_edge_list(graph, edges);
    rec.edge_list = edges.str();

    Estimates e;
    e.gbp = run_to_convergence(graph, cfg.gbp, [&](int it, double residual) {
        rec.residual_trace.emplace_back(it, residual);
    });
    res.converged = e.gbp.converged;
    res.iterations = e.gbp.iterations_used;
    rec.final_residual = e.gbp.final_residual;
    rec.gbp_means = e.gbp.state_means;
    rec.gbp_variances = e.gbp.state_variances;
    e.oracle = mmse_estimate(to_dense_model(graph));
    rec.oracle_means = *e.oracle;
    e.baseline = baseline_estimate_no_cran<double>(Eigen::MatrixXd(d.A), d.x, rec.sigma_n * rec.sigma_n,
                                                   cfg.sigma_s_sq);
    rec.baseline = e.baseline;
    if (res.converged) fill_metrics(res, d, e);
    return rec;
}

// Tables --------------------------------------------------------------------

namespace {

Cell opt(const std::optional<double>& v) {
    if (v && std::isfinite(*v)) return *v;
    return std::monostate{};
}

Cell real(double v) {
    if (std::isfinite(v)) return v;
    return std::monostate{};
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string cell_text(const Cell& c, OutputFormat format) {
    return std::visit(
        [&](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) return format == OutputFormat::Json ? "null" : "";
            else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(v);
            else return format_real(v);
        },
        c);
}

}  // namespace

Table trial_table(const std::vector<TrialResult>& rows) {
    Table t;
    t.columns = {"sigma_n", "trial", "observable", "converged", "iterations", "rmse_printed",
                 "rmse_conventional", "rmse_cran_vs_truth", "rmse_baseline_vs_truth", "oracle_max_abs_diff",
                 "redundancy", "rrh_density", "n_measurements", "n_rrh"};
    t.types = {CellType::Real, CellType::Int,  CellType::Bool, CellType::Bool, CellType::Int,
               CellType::Real, CellType::Real, CellType::Real, CellType::Real, CellType::Real,
               CellType::Real, CellType::Real, CellType::Int,  CellType::Int};
    for (const auto& r : rows) {
        t.rows.push_back({real(r.sigma_n), std::int64_t{r.trial}, r.observable, r.converged,
                          std::int64_t{r.iterations}, opt(r.rmse_printed), opt(r.rmse_conventional),
                          opt(r.rmse_cran_vs_truth), opt(r.rmse_baseline_vs_truth), opt(r.oracle_max_abs_diff),
                          real(r.redundancy), real(r.rrh_density), std::int64_t{r.n_measurements},
                          std::int64_t{r.n_rrh}});
    }
    return t;
}

Table summary_table(const std::vector<BoxStats>& summary) {
    Table t;
    t.columns = {"sigma_n", "redundancy", "rrh_density", "count", "unobservable", "not_converged",
                 "min", "q1", "median", "q3", "max", "n_outliers"};
    t.types = {CellType::Real, CellType::Real, CellType::Real, CellType::Int,  CellType::Int,  CellType::Int,
               CellType::Real, CellType::Real, CellType::Real, CellType::Real, CellType::Real, CellType::Int};
    for (const auto& s : summary) {
        t.rows.push_back({real(s.sigma_n), real(s.redundancy), real(s.rrh_density), std::int64_t{s.count},
                          std::int64_t{s.unobservable}, std::int64_t{s.not_converged}, real(s.min), real(s.q1),
                          real(s.median), real(s.q3), real(s.max), static_cast<std::int64_t>(s.outliers.size())});
    }
    return t;
}

Table fig5_table(const std::vector<Fig5Point>& points) {
    Table t;
    t.columns = {"redundancy", "rrh_density", "n_measurements", "n_rrh", "trials", "unobservable", "fraction"};
    t.types = {CellType::Real, CellType::Real, CellType::Int, CellType::Int, CellType::Int, CellType::Int,
               CellType::Real};
    for (const auto& p : points) {
        t.rows.push_back({real(p.redundancy), real(p.rrh_density), std::int64_t{p.n_measurements},
                          std::int64_t{p.n_rrh}, std::int64_t{p.trials}, std::int64_t{p.unobservable},
                          real(p.fraction)});
    }
    return t;
}

void write_table(std::ostream& out, const Table& table, OutputFormat format) {
    if (format == OutputFormat::Csv) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            out << (c ? "," : "") << table.columns[c];
        }
        out << '\n';
        for (const auto& row : table.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << cell_text(row[c], format);
            out << '\n';
        }
        return;
    }
    out << "[\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out << "  {";
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            out << (c ? ", " : "") << '"' << table.columns[c] << "\": " << cell_text(table.rows[r][c], format);
        }
        out << (r + 1 < table.rows.size() ? "},\n" : "}\n");
    }
    out << "]\n";
}

void emit_results(const Table& table, const std::filesystem::path& path, OutputFormat format) {
    if (table.rows.empty()) throw std::invalid_argument("refusing to write an empty result table");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_table(out, table, format);
    out.flush();
    if (!out) throw std::runtime_error("error while writing " + path.string());
}

namespace {

Cell parse_cell(const std::string& text, CellType type) {
    if (text.empty() || text == "null") return std::monostate{};
    switch (type) {
        case CellType::Int: return static_cast<std::int64_t>(std::stoll(text));
        case CellType::Real: return std::stod(text);
        case CellType::Bool:
            if (text == "true") return true;
            if (text == "false") return false;
            throw std::invalid_argument("bad boolean '" + text + "'");
    }
    return std::monostate{};
}

}  // namespace

Table parse_table(std::istream& in, OutputFormat format, const std::vector<std::string>& columns,
                  const std::vector<CellType>& types) {
    Table t{columns, types, {}};
    if (format == OutputFormat::Csv) {
        std::string line;
        if (!std::getline(in, line)) throw std::invalid_argument("missing CSV header");
        std::string expected;
        for (std::size_t c = 0; c < columns.size(); ++c) expected += (c ? "," : "") + columns[c];
        if (line != expected) throw std::invalid_argument("unexpected CSV header: " + line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<Cell> row;
            std::size_t start = 0;
            for (std::size_t c = 0; c < columns.size(); ++c) {
                const std::size_t end = line.find(',', start);
                row.push_back(parse_cell(line.substr(start, end - start), types[c]));
                start = end == std::string::npos ? line.size() : end + 1;
            }
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    const auto doc = nlohmann::json::parse(in);
    for (const auto& obj : doc) {
        std::vector<Cell> row;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto& v = obj.at(columns[c]);
            if (v.is_null()) row.emplace_back(std::monostate{});
            else if (types[c] == CellType::Bool) row.emplace_back(v.get<bool>());
            else if (types[c] == CellType::Int) row.emplace_back(v.get<std::int64_t>());
            else row.emplace_back(v.get<double>());
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string single_record_json(const SingleRecord& rec) {
    using nlohmann::ordered_json;
    auto num = [](double v) -> ordered_json { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
    auto opt_num = [&](const std::optional<double>& v) -> ordered_json { return v ? num(*v) : ordered_json(nullptr); };

    const auto& r = rec.result;
    ordered_json j;
    j["sigma_n"] = rec.sigma_n;
    j["redundancy"] = r.redundancy;
    j["rrh_density"] = r.rrh_density;
    j["n_measurements"] = r.n_measurements;
    j["n_rrh"] = r.n_rrh;
    j["observable"] = r.observable;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["final_residual"] = num(rec.final_residual);
    j["rmse_printed"] = opt_num(r.rmse_printed);
    j["rmse_conventional"] = opt_num(r.rmse_conventional);
    j["rmse_cran_vs_truth"] = opt_num(r.rmse_cran_vs_truth);
    j["rmse_baseline_vs_truth"] = opt_num(r.rmse_baseline_vs_truth);
    j["oracle_max_abs_diff"] = opt_num(r.oracle_max_abs_diff);
    if (r.observable) {
        ordered_json states = ordered_json::array();
        for (Index k = 0; k < rec.s_true.size(); ++k) {
            states.push_back({{"state", k},
                              {"truth", rec.s_true(k)},
                              {"gbp_re", rec.gbp_means(k).real()},
                              {"gbp_im", rec.gbp_means(k).imag()},
                              {"gbp_variance", num(rec.gbp_variances(k))},
                              {"oracle_re", rec.oracle_means(k).real()},
                              {"oracle_im", rec.oracle_means(k).imag()},
                              {"baseline", rec.baseline(k)}});
        }
        j["estimates"] = std::move(states);
        ordered_json trace = ordered_json::array();
        for (const auto& [it, res] : rec.residual_trace) trace.push_back({it, num(res)});
        j["residual_trace"] = std::move(trace);
    }
    return j.dump(2) + "\n";
}

}  // namespace crangbp
