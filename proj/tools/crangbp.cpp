#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crangbp/experiment.hpp"

namespace fs = std::filesystem;
using namespace crangbp;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> threads;
    std::string out;
    std::string format;
    std::string dump_topology;
    std::string trace_residuals;
    std::string dump_graph;
    bool test_mode = false;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("error while writing " + path.string());
}

fs::path sibling(const fs::path& out, const std::string& suffix, OutputFormat format) {
    fs::path p = out;
    p.replace_extension();
    p += suffix;
    p += format == OutputFormat::Json ? ".json" : ".csv";
    return p;
}

void emit(const Table& table, const fs::path& path, OutputFormat format) {
    if (path.empty()) {
        write_table(std::cout, table, format);
    } else {
        emit_results(table, path, format);
    }
}

int run(ExperimentKind kind, const Options& opt) {
    ExperimentConfig cfg = opt.config.empty() ? ExperimentConfig{} : load_config(opt.config);
    cfg.experiment = kind;
    if (opt.seed) cfg.master_seed = *opt.seed;
    if (opt.trials) cfg.trials = *opt.trials;
    if (opt.threads) cfg.threads = *opt.threads;
    if (!opt.out.empty()) cfg.output = opt.out;
    if (!opt.format.empty()) cfg.format = parse_output_format(opt.format);
    if (opt.test_mode) cfg.oracle_check_fraction = 1.0;
    cfg.check();

    const Experiment experiment(cfg);
    switch (kind) {
        case ExperimentKind::Fig4: {
            const Fig4Result result = experiment.run_fig4();
            if (cfg.output.empty()) {
                write_table(std::cout, summary_table(result.summary), cfg.format);
            } else {
                emit_results(trial_table(result.rows), cfg.output, cfg.format);
                emit_results(summary_table(result.summary), sibling(cfg.output, ".summary", cfg.format),
                             cfg.format);
            }
            for (const auto& row : result.rows) {
                if (row.oracle_max_abs_diff && *row.oracle_max_abs_diff > 1e-6) {
                    std::cerr << "warning: trial " << row.trial << " at sigma_n " << row.sigma_n
                              << " differs from the dense oracle by " << *row.oracle_max_abs_diff << '\n';
                }
            }
            break;
        }
        case ExperimentKind::Fig5:
            emit(fig5_table(experiment.run_fig5().points), cfg.output, cfg.format);
            break;
        case ExperimentKind::Single: {
            const SingleRecord rec = run_single(experiment);
            if (!opt.dump_topology.empty()) write_text(opt.dump_topology, rec.topology);
            if (!opt.dump_graph.empty()) write_text(opt.dump_graph, rec.edge_list);
            if (!opt.trace_residuals.empty()) {
                std::string text = "iteration,residual\n";
                char buf[64];
                for (const auto& [it, r] : rec.residual_trace) {
                    std::snprintf(buf, sizeof buf, "%d,%.17g\n", it, r);
                    text += buf;
                }
                write_text(opt.trace_residuals, text);
            }
            const std::string json = single_record_json(rec);
            if (cfg.output.empty()) std::cout << json;
            else write_text(cfg.output, json);
            break;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"C-RAN power-system state estimation with Gaussian belief propagation"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "key: value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "master seed");
        sub->add_option("--trials", opt.trials, "trials per sweep point");
        sub->add_option("--threads", opt.threads, "worker threads, 0 for all cores");
        sub->add_option("--out", opt.out, "output file (stdout when omitted)");
        sub->add_option("--format", opt.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sub->add_flag("--test-mode", opt.test_mode, "check every converged trial against the dense oracle");
    };

    auto* fig4 = app.add_subcommand("fig4", "RMSE of the C-RAN estimate over sigma_n");
    auto* fig5 = app.add_subcommand("fig5", "unobservable fraction over M/N and L/M");
    auto* single = app.add_subcommand("single", "one fully dumped trial");
    for (auto* sub : {fig4, fig5, single}) add_common(sub);
    single->add_option("--dump-topology", opt.dump_topology, "write UE/RRH positions and H");
    single->add_option("--trace-residuals", opt.trace_residuals, "write the per-iteration residual");
    single->add_option("--dump-graph", opt.dump_graph, "write the factor graph edge list");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fig4->parsed()) return run(ExperimentKind::Fig4, opt);
        if (fig5->parsed()) return run(ExperimentKind::Fig5, opt);
        return run(ExperimentKind::Single, opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
