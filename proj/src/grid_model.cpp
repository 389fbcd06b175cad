#include "crangbp/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/SparseCholesky>

#include "crangbp/linear_oracle.hpp"
#include "crangbp/random.hpp"

#ifndef CRANGBP_DATA_DIR
#define CRANGBP_DATA_DIR "data"
#endif

namespace crangbp {

GridCase::GridCase(std::vector<Bus> buses, std::vector<Branch> branches, int reference_bus,
                   std::map<int, double> injections)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      reference_bus_(reference_bus),
      injections_(std::move(injections)) {
    if (buses_.empty()) throw CaseError("case has no buses");
    for (std::size_t p = 0; p < buses_.size(); ++p) {
        if (!bus_pos_.emplace(buses_[p].id, p).second) {
            throw CaseError("duplicate bus " + std::to_string(buses_[p].id));
        }
    }
    if (!bus_pos_.contains(reference_bus_)) {
        throw CaseError("reference bus " + std::to_string(reference_bus_) + " is not a bus");
    }

    incident_.resize(buses_.size());
    std::set<std::pair<int, int>> seen;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
        const auto& br = branches_[b];
        if (!bus_pos_.contains(br.from) || !bus_pos_.contains(br.to)) {
            throw CaseError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " references an unknown bus");
        }
        if (br.from == br.to) throw CaseError("branch " + std::to_string(br.from) + " is a self-loop");
        if (br.susceptance == 0.0 || !std::isfinite(br.susceptance)) {
            throw CaseError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " has zero or non-finite susceptance");
        }
        if (!seen.emplace(std::minmax(br.from, br.to)).second) {
            throw CaseError("duplicate branch " + std::to_string(br.from) + "-" + std::to_string(br.to));
        }
        incident_[bus_pos_.at(br.from)].push_back(b);
        incident_[bus_pos_.at(br.to)].push_back(b);
    }

    // connectivity
    std::vector<bool> reached(buses_.size(), false);
    std::vector<std::size_t> stack{bus_pos_.at(reference_bus_)};
    reached[stack.back()] = true;
    while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        for (std::size_t b : incident_[p]) {
            const int other = branches_[b].from == buses_[p].id ? branches_[b].to : branches_[b].from;
            const std::size_t q = bus_pos_.at(other);
            if (!reached[q]) {
                reached[q] = true;
                stack.push_back(q);
            }
        }
    }
    for (std::size_t p = 0; p < buses_.size(); ++p) {
        if (!reached[p]) throw CaseError("bus " + std::to_string(buses_[p].id) + " is disconnected");
    }

    // state columns in ascending bus-id order, reference dropped
    std::vector<std::size_t> order(buses_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return buses_[a].id < buses_[b].id; });
    column_.assign(buses_.size(), std::nullopt);
    Index next = 0;
    for (std::size_t p : order) {
        if (buses_[p].id != reference_bus_) column_[p] = next++;
    }
    for (const auto& [bus_id, p] : injections_) {
        if (!bus_pos_.contains(bus_id)) throw CaseError("injection at unknown bus " + std::to_string(bus_id));
    }
}

std::optional<Index> GridCase::state_column(int bus_id) const {
    auto it = bus_pos_.find(bus_id);
    if (it == bus_pos_.end()) throw std::out_of_range("unknown bus " + std::to_string(bus_id));
    return column_[it->second];
}

const Bus& GridCase::bus(int bus_id) const {
    auto it = bus_pos_.find(bus_id);
    if (it == bus_pos_.end()) throw std::out_of_range("unknown bus " + std::to_string(bus_id));
    return buses_[it->second];
}

const std::vector<std::size_t>& GridCase::incident_branches(int bus_id) const {
    auto it = bus_pos_.find(bus_id);
    if (it == bus_pos_.end()) throw std::out_of_range("unknown bus " + std::to_string(bus_id));
    return incident_[it->second];
}

int GridCase::rect_rows() const {
    int r = 0;
    for (const auto& b : buses_) r = std::max(r, b.rect_row + 1);
    return r;
}

int GridCase::rect_cols() const {
    int c = 0;
    for (const auto& b : buses_) c = std::max(c, b.rect_col + 1);
    return c;
}

GridCase parse_case(std::istream& in, const std::string& source) {
    enum class Section { None, Bus, Branch, Ref, Injection };
    Section section = Section::None;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<int> refs;
    std::map<int, double> injections;

    auto fail = [&](int line_no, const std::string& what) -> CaseError {
        return CaseError(source + ":" + std::to_string(line_no) + ": " + what);
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string first;
        if (!(fields >> first)) continue;
        if (first == "BUS") { section = Section::Bus; continue; }
        if (first == "BRANCH") { section = Section::Branch; continue; }
        if (first == "REF") { section = Section::Ref; continue; }
        if (first == "INJECTION") { section = Section::Injection; continue; }

        std::istringstream row(line);
        std::string extra;
        switch (section) {
            case Section::None: throw fail(line_no, "data before any section header");
            case Section::Bus: {
                Bus b{};
                if (!(row >> b.id >> b.rect_row >> b.rect_col) || (row >> extra)) {
                    throw fail(line_no, "expected: id rect_row rect_col");
                }
                if (b.rect_row < 0 || b.rect_col < 0) throw fail(line_no, "negative sub-rectangle index");
                buses.push_back(b);
                break;
            }
            case Section::Branch: {
                Branch br{};
                if (!(row >> br.from >> br.to >> br.susceptance) || (row >> extra)) {
                    throw fail(line_no, "expected: from to susceptance");
                }
                for (const auto& other : branches) {
                    if (std::minmax(other.from, other.to) == std::minmax(br.from, br.to)) {
                        throw fail(line_no, "duplicate branch " + std::to_string(br.from) + "-" +
                                                std::to_string(br.to));
                    }
                }
                branches.push_back(br);
                break;
            }
            case Section::Ref: {
                int id = 0;
                if (!(row >> id) || (row >> extra)) throw fail(line_no, "expected: bus id");
                refs.push_back(id);
                break;
            }
            case Section::Injection: {
                int id = 0;
                double p = 0.0;
                if (!(row >> id >> p) || (row >> extra)) throw fail(line_no, "expected: bus p_pu");
                if (!injections.emplace(id, p).second) {
                    throw fail(line_no, "duplicate injection at bus " + std::to_string(id));
                }
                break;
            }
        }
    }
    if (refs.empty()) throw CaseError(source + ": missing REF section entry");
    if (refs.size() > 1) throw CaseError(source + ": more than one reference bus");
    try {
        return GridCase(std::move(buses), std::move(branches), refs.front(), std::move(injections));
    } catch (const CaseError& e) {
        throw CaseError(source + ": " + e.what());
    }
}

GridCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CaseError("cannot open case file " + path.string());
    return parse_case(in, path.string());
}

std::filesystem::path shipped_case_path() {
    return std::filesystem::path(CRANGBP_DATA_DIR) / "ieee30.case";
}

std::string_view to_string(MeasurementKind kind) {
    switch (kind) {
        case MeasurementKind::BranchFlow: return "flow";
        case MeasurementKind::Injection: return "injection";
        case MeasurementKind::Angle: return "angle";
    }
    return "?";
}

std::vector<MeasurementSpec> candidate_pool(const GridCase& grid) {
    std::vector<MeasurementSpec> pool;
    for (const auto& br : grid.branches()) {
        pool.push_back({MeasurementKind::BranchFlow, br.from, br.to});
        pool.push_back({MeasurementKind::BranchFlow, br.to, br.from});
    }
    for (const auto& b : grid.buses()) pool.push_back({MeasurementKind::Injection, b.id});
    for (const auto& b : grid.buses()) {
        if (b.id != grid.reference_bus()) pool.push_back({MeasurementKind::Angle, b.id});
    }
    return pool;
}

namespace {

const Branch& find_branch(const GridCase& grid, int from, int to) {
    for (std::size_t b : grid.incident_branches(from)) {
        const auto& br = grid.branches()[b];
        if ((br.from == from && br.to == to) || (br.from == to && br.to == from)) return br;
    }
    throw std::out_of_range("no branch " + std::to_string(from) + "-" + std::to_string(to));
}

int other_end(const Branch& br, int bus) {
    return br.from == bus ? br.to : br.from;
}

double angle(const GridCase& grid, int bus, const Eigen::VectorXd& s) {
    const auto col = grid.state_column(bus);
    return col ? s(*col) : 0.0;
}

}  // namespace

SparseMatrix<double> build_measurement_matrix(const GridCase& grid, std::span<const MeasurementSpec> specs) {
    std::vector<Eigen::Triplet<double>> triplets;
    auto add = [&](Index row, int bus, double value) {
        if (auto col = grid.state_column(bus)) triplets.emplace_back(row, *col, value);
    };
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto row = static_cast<Index>(i);
        const auto& m = specs[i];
        switch (m.kind) {
            case MeasurementKind::BranchFlow: {
                const double b = find_branch(grid, m.bus, m.to_bus).susceptance;
                add(row, m.bus, -b);
                add(row, m.to_bus, b);
                break;
            }
            case MeasurementKind::Injection: {
                for (std::size_t idx : grid.incident_branches(m.bus)) {
                    const auto& br = grid.branches()[idx];
                    add(row, m.bus, -br.susceptance);
                    add(row, other_end(br, m.bus), br.susceptance);
                }
                break;
            }
            case MeasurementKind::Angle:
                if (!grid.state_column(m.bus)) throw std::invalid_argument("angle measurement at the reference bus");
                add(row, m.bus, 1.0);
                break;
        }
    }
    SparseMatrix<double> A(static_cast<Index>(specs.size()), grid.n_states());
    A.setFromTriplets(triplets.begin(), triplets.end());  // duplicates are summed
    A.prune(0.0);
    return A;
}

MeasurementConfig generate_config(const GridCase& grid, double redundancy, std::uint64_t seed,
                                  int max_attempts) {
    if (!(redundancy >= 1.0)) throw std::invalid_argument("redundancy must be at least 1");
    const auto pool = candidate_pool(grid);
    const auto m = static_cast<std::size_t>(std::llround(redundancy * static_cast<double>(grid.n_states())));
    if (m > pool.size()) {
        throw std::invalid_argument("redundancy needs " + std::to_string(m) + " measurements but only " +
                                    std::to_string(pool.size()) + " candidates exist");
    }
    Rng rng(seed);
    std::vector<std::size_t> order(pool.size());
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        std::iota(order.begin(), order.end(), 0);
        // partial Fisher-Yates: the first m entries are a uniform m-subset
        for (std::size_t i = 0; i < m; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
            std::swap(order[i], order[pick(rng)]);
        }
        MeasurementConfig config{{}, redundancy};
        config.specs.reserve(m);
        for (std::size_t i = 0; i < m; ++i) config.specs.push_back(pool[order[i]]);
        const Eigen::MatrixXd A(build_measurement_matrix(grid, config.specs));
        if (is_observable(A).observable) return config;
    }
    throw std::runtime_error("no observable configuration found in " + std::to_string(max_attempts) +
                             " attempts");
}

Eigen::VectorXd simulate_measurements(const SparseMatrix<double>& A, const Eigen::VectorXd& s_true,
                                      double sigma_n, std::uint64_t seed) {
    if (s_true.size() != A.cols()) throw std::invalid_argument("state has the wrong length");
    if (!(sigma_n >= 0.0)) throw std::invalid_argument("sigma_n must be non-negative");
    Eigen::VectorXd x = A * s_true;
    if (sigma_n == 0.0) return x;
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, sigma_n);
    for (Index j = 0; j < x.size(); ++j) x(j) += noise(rng);
    return x;
}

Eigen::VectorXd generate_true_state(const GridCase& grid, std::uint64_t seed, TrueStateMode mode,
                                    double half_width) {
    if (mode == TrueStateMode::DcPowerFlow) return dc_power_flow(grid);
    Rng rng(seed);
    std::uniform_real_distribution<double> angle_dist(-half_width, half_width);
    Eigen::VectorXd s(grid.n_states());
    for (Index k = 0; k < s.size(); ++k) s(k) = angle_dist(rng);
    return s;
}

Eigen::VectorXd dc_power_flow(const GridCase& grid) {
    if (grid.injection_profile().empty()) throw CaseError("case has no injection profile");
    std::vector<MeasurementSpec> specs;
    Eigen::VectorXd p(grid.n_states());
    for (const auto& b : grid.buses()) {
        const auto col = grid.state_column(b.id);
        if (!col) continue;
        specs.push_back({MeasurementKind::Injection, b.id});
        auto it = grid.injection_profile().find(b.id);
        p(static_cast<Index>(specs.size()) - 1) = it == grid.injection_profile().end() ? 0.0 : it->second;
    }
    // rows of the injection matrix are ordered like grid.buses(); permute into state-column order
    const SparseMatrix<double> rows = build_measurement_matrix(grid, specs);
    Eigen::SparseMatrix<double> B(grid.n_states(), grid.n_states());
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd rhs(grid.n_states());
    Index r = 0;
    for (const auto& b : grid.buses()) {
        const auto col = grid.state_column(b.id);
        if (!col) continue;
        for (SparseMatrix<double>::InnerIterator it(rows, r); it; ++it) {
            triplets.emplace_back(*col, it.col(), it.value());
        }
        rhs(*col) = p(r);
        ++r;
    }
    B.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(B);
    if (solver.info() != Eigen::Success) throw std::runtime_error("DC power flow matrix is singular");
    return solver.solve(rhs);
}

double branch_flow(const GridCase& grid, int from, int to, const Eigen::VectorXd& s) {
    const double b = find_branch(grid, from, to).susceptance;
    return -b * (angle(grid, from, s) - angle(grid, to, s));
}

Eigen::VectorXd bus_injections(const GridCase& grid, const Eigen::VectorXd& s) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Index>(grid.buses().size()));
    for (std::size_t i = 0; i < grid.buses().size(); ++i) {
        const int r = grid.buses()[i].id;
        for (std::size_t idx : grid.incident_branches(r)) {
            p(static_cast<Index>(i)) += branch_flow(grid, r, other_end(grid.branches()[idx], r), s);
        }
    }
    return p;
}

double NormalizationConstants::of(MeasurementKind kind) const {
    switch (kind) {
        case MeasurementKind::BranchFlow: return flow;
        case MeasurementKind::Injection: return injection;
        case MeasurementKind::Angle: return angle;
    }
    return 1.0;
}

NormalizationConstants reference_normalization(const GridCase& grid, double half_width) {
    const double v = half_width * half_width / 3.0;  // variance of U[-h, h]
    auto var = [&](int bus) { return grid.state_column(bus) ? v : 0.0; };

    double flow_sum = 0.0;
    for (const auto& br : grid.branches()) {
        flow_sum += br.susceptance * br.susceptance * (var(br.from) + var(br.to));
    }
    double inj_sum = 0.0;
    for (const auto& b : grid.buses()) {
        double self = 0.0;
        double others = 0.0;
        for (std::size_t idx : grid.incident_branches(b.id)) {
            const auto& br = grid.branches()[idx];
            self += br.susceptance;
            others += br.susceptance * br.susceptance * var(other_end(br, b.id));
        }
        inj_sum += self * self * var(b.id) + others;
    }
    NormalizationConstants c;
    c.flow = std::sqrt(flow_sum / static_cast<double>(grid.branches().size()));
    c.injection = std::sqrt(inj_sum / static_cast<double>(grid.buses().size()));
    c.angle = std::sqrt(v);
    return c;
}

}  // namespace crangbp
