#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "netcpd/bench.hpp"
#include "netcpd/cascade_sim.hpp"
#include "netcpd/csv.hpp"
#include "netcpd/detector.hpp"
#include "netcpd/topology.hpp"

namespace fs = std::filesystem;
using namespace netcpd;

namespace {

struct Options {
    std::string graph;
    double alpha0 = 0.0;
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
    int trials = 0;
    int jobs = 0;

    // simulate
    int seed_node = 1;
    double seed_time = 0.0;
    double horizon = kNever;
    int ticks = 200;
    double mu = 1.0;
    double sigma = 1.0;

    // detect
    std::string panel;
    std::string threshold;

    // bench / calibrate
    std::string spec;
    std::string method;
    std::optional<std::uint64_t> spec_seed;
    double target = 1000.0;

    // convert
    std::string input;
    std::string format = "csv";
};

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return in;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

Network load_graph(const Options& o) {
    if (o.graph.empty()) {
        throw std::invalid_argument("--graph is required");
    }
    return load_network_file(o.graph, o.alpha0);
}

DetectorConfig load_config(const Options& o) {
    DetectorConfig config;
    if (!o.config.empty()) {
        auto in = open_in(o.config);
        config = DetectorConfig::parse(in);
    }
    if (!o.threshold.empty()) {
        double b = 0.0;
        if (!csv::parse_double(o.threshold, b)) {
            throw std::invalid_argument("--threshold must be a number or +-inf");
        }
        config.threshold = b;
    }
    return config;
}

void cmd_simulate(const Options& o) {
    const Network net = load_graph(o);
    if (o.seed_node < 1 || o.seed_node > net.num_nodes()) {
        throw std::invalid_argument("--seed-node out of range");
    }
    if (o.ticks < 1) {
        throw std::invalid_argument("--ticks must be >= 1");
    }
    if (o.out.empty()) {
        throw std::invalid_argument("--out directory is required");
    }
    Rng rng = stream_rng(o.seed, {0});
    const auto tau = sample_cascade(net, o.seed_node - 1, o.seed_time, o.horizon, rng);
    Rng data_rng = stream_rng(o.seed, {1});
    const auto panel =
        gen_measurements(tau, PostChangeParams::uniform(net.num_nodes(), o.mu, o.sigma), o.ticks, data_rng);
    const fs::path dir(o.out);
    auto cascade_out = open_out(dir / "cascade.csv");
    write_cascade_csv(cascade_out, tau);
    auto panel_out = open_out(dir / "panel.csv");
    write_panel_csv(panel_out, panel);
    std::cout << "cascade: " << tau.num_failed() << " of " << net.num_nodes() << " nodes failed\n";
}

// Accepts either N values or the panel layout `t,x_1..x_N`; skips headers.
TickSource line_source(std::istream& in, int n) {
    auto line_no = std::make_shared<std::size_t>(0);
    return [&in, n, line_no](std::vector<double>& x) {
        std::string line;
        while (std::getline(in, line)) {
            ++*line_no;
            const auto t = csv::trim(line);
            if (t.empty() || t.front() == '#' || t.front() == 't') {
                continue;
            }
            const auto fields = csv::split(t);
            const int skip = static_cast<int>(fields.size()) == n + 1 ? 1 : 0;
            if (static_cast<int>(fields.size()) - skip != n) {
                throw ParseError("tick has " + std::to_string(fields.size()) + " values, graph has " +
                                     std::to_string(n) + " nodes",
                                 *line_no);
            }
            x.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                if (!csv::parse_double(fields[static_cast<std::size_t>(i + skip)], x[static_cast<std::size_t>(i)])) {
                    throw ParseError("malformed tick value", *line_no);
                }
            }
            return true;
        }
        return false;
    };
}

void cmd_detect(const Options& o) {
    const Network net = load_graph(o);
    const DetectorConfig config = load_config(o);
    config.validate(net.num_nodes());
    Rng rng = stream_rng(o.seed, {2});

    std::ofstream file;
    std::ostream* trace_out = &std::cout;
    if (!o.out.empty()) {
        file = open_out(o.out);
        trace_out = &file;
    }
    std::ostream& alarm_out = o.out.empty() ? std::cerr : std::cout;

    std::ifstream panel_file;
    std::istream* in = &std::cin;
    if (!o.panel.empty() && o.panel != "-") {
        panel_file = open_in(o.panel);
        in = &panel_file;
    }
    *trace_out << "# " << config.describe() << "\nt,S_eta,alarm\n" << std::flush;
    const auto report = run_detector(line_source(*in, net.num_nodes()), net, config, rng, [&](const TracePoint& p) {
        *trace_out << p.tick << ',' << csv::format_double(p.statistic) << ',' << (p.alarm ? 1 : 0) << '\n'
                   << std::flush;
    });
    if (report.alarm_tick) {
        alarm_out << "alarm at tick " << *report.alarm_tick << '\n';
    } else {
        alarm_out << "no alarm through tick " << report.last_tick << '\n';
    }
}

ExperimentSpec load_spec(const Options& o) {
    if (o.spec.empty()) {
        throw std::invalid_argument("--spec is required");
    }
    auto in = open_in(o.spec);
    const auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw std::invalid_argument("experiment spec: malformed JSON");
    }
    ExperimentSpec spec = ExperimentSpec::from_json(doc);
    if (!spec.graph.path.empty() && fs::path(spec.graph.path).is_relative()) {
        spec.graph.path = (fs::path(o.spec).parent_path() / spec.graph.path).string();
    }
    if (o.trials > 0) {
        spec.trials = o.trials;
        spec.edd_trials = o.trials;
    }
    if (o.jobs > 0) {
        spec.jobs = o.jobs;
    }
    if (o.spec_seed) {
        spec.seed = *o.spec_seed;
    }
    spec.validate();
    return spec;
}

void cmd_bench(const Options& o) {
    const ExperimentSpec spec = load_spec(o);
    const auto report = run_experiment(spec, [](const std::string& line) { std::cerr << line << '\n'; });
    if (o.out.empty()) {
        write_report_csv(std::cout, report);
    } else {
        auto out = open_out(o.out);
        write_report_csv(out, report);
    }
}

void cmd_calibrate(const Options& o) {
    const ExperimentSpec spec = load_spec(o);
    const Network net = build_network(spec);
    const auto h0 = null_scenario(net, spec);
    for (const auto& method : spec.methods) {
        if (!o.method.empty() && method.name != o.method) {
            continue;
        }
        TrialSet trials(h0, make_procedure(method, net, spec.detector), spec.trials, spec.run_cap,
                        stream_rng(spec.seed, {0})(), spec.jobs);
        const auto result = calibrate_threshold(trials, o.target, spec.tolerance);
        std::cout << method.name << ",threshold=" << csv::format_double(result.threshold)
                  << ",arl=" << csv::format_double(result.arl.mean) << ",arl_se=" << csv::format_double(result.arl.se)
                  << ",converged=" << (result.converged ? 1 : 0) << '\n';
    }
}

std::string first_data_line(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto t = csv::trim(line);
        if (!t.empty() && t.front() != '#') {
            return std::string(t);
        }
    }
    return {};
}

void cmd_convert(const Options& o) {
    if (o.input.empty()) {
        throw std::invalid_argument("--in is required");
    }
    if (o.format != "csv" && o.format != "json") {
        throw std::invalid_argument("--format must be csv or json");
    }
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!o.out.empty()) {
        file = open_out(o.out);
        out = &file;
    }
    const auto ext = fs::path(o.input).extension().string();
    if (ext == ".m" || ext == ".json") {
        const Network net = load_network_file(o.input, o.alpha0);
        if (o.format == "json") {
            *out << to_json(net).dump(2) << '\n';
        } else {
            write_edge_list(*out, net);
        }
        return;
    }
    std::stringstream buf;
    buf << open_in(o.input).rdbuf();
    const std::string text = buf.str();
    const std::string header = first_data_line(text);
    std::istringstream in(text);
    if (header == "node,tau") {
        const auto tau = read_cascade_csv(in);
        if (o.format == "json") {
            nlohmann::json j = nlohmann::json::array();
            for (std::size_t i = 0; i < tau.tau.size(); ++i) {
                j.push_back({{"node", i + 1}, {"tau", csv::format_double(tau.tau[i])}});
            }
            *out << j.dump(2) << '\n';
        } else {
            write_cascade_csv(*out, tau);
        }
    } else if (header.rfind("t,x_", 0) == 0) {
        const auto panel = read_panel_csv(in);
        if (o.format == "json") {
            nlohmann::json j = nlohmann::json::array();
            for (int i = 0; i < panel.num_nodes(); ++i) {
                const auto row = panel.row(i);
                j.push_back(std::vector<double>(row.begin(), row.end()));
            }
            *out << nlohmann::json{{"nodes", panel.num_nodes()}, {"ticks", panel.num_ticks()}, {"rows", j}}.dump()
                 << '\n';
        } else {
            write_panel_csv(*out, panel);
        }
    } else if (header == "t,S_eta,alarm") {
        const auto trace = read_trace_csv(in);
        if (o.format == "json") {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& p : trace) {
                j.push_back({{"t", p.tick}, {"S_eta", csv::format_double(p.statistic)}, {"alarm", p.alarm}});
            }
            *out << j.dump(2) << '\n';
        } else {
            write_trace_csv(*out, trace);
        }
    } else if (header.rfind("method,", 0) == 0) {
        const auto report = read_report_csv(in);
        if (o.format == "json") {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : report.rows) {
                j.push_back({{"method", r.method},
                             {"threshold", csv::format_double(r.threshold)},
                             {"arl", r.arl},
                             {"arl_se", r.arl_se},
                             {"edd", r.edd},
                             {"edd_se", r.edd_se},
                             {"censored_frac", r.censored_frac}});
            }
            *out << j.dump(2) << '\n';
        } else {
            write_report_csv(*out, report);
        }
    } else {
        const Network net = load_network_file(o.input, o.alpha0);
        if (o.format == "json") {
            *out << to_json(net).dump(2) << '\n';
        } else {
            write_edge_list(*out, net);
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascading change-point detection on networks"};
    app.require_subcommand(1);
    Options o;

    auto* simulate = app.add_subcommand("simulate", "Sample a cascade and its measurement panel");
    simulate->add_option("--graph", o.graph, "Graph file (.m, .json or edge-list CSV)")->required();
    simulate->add_option("--alpha0", o.alpha0, "Uniform influence rate on every edge");
    simulate->add_option("--seed", o.seed, "RNG seed");
    simulate->add_option("--seed-node", o.seed_node, "First failing node (1-based)");
    simulate->add_option("--seed-time", o.seed_time, "Time of the first failure");
    simulate->add_option("--horizon", o.horizon, "Stop the cascade after this time");
    simulate->add_option("--ticks", o.ticks, "Panel length T");
    simulate->add_option("--mu", o.mu, "Post-change mean");
    simulate->add_option("--sigma", o.sigma, "Post-change standard deviation");
    simulate->add_option("--out", o.out, "Output directory for cascade.csv and panel.csv")->required();

    auto* detect = app.add_subcommand("detect", "Run the detector on a panel file or on stdin");
    detect->add_option("--graph", o.graph, "Graph file")->required();
    detect->add_option("--alpha0", o.alpha0, "Uniform influence rate on every edge");
    detect->add_option("--config", o.config, "Detector config (key=value lines or JSON)");
    detect->add_option("--panel", o.panel, "Panel CSV; stdin when omitted or '-'");
    detect->add_option("--threshold", o.threshold, "Alarm threshold b (overrides the config)");
    detect->add_option("--seed", o.seed, "RNG seed for risk-set sampling");
    detect->add_option("--out", o.out, "Trace CSV; stdout when omitted");

    auto* bench = app.add_subcommand("bench", "Estimate ARL and EDD for every method of an experiment");
    bench->add_option("--spec", o.spec, "Experiment spec JSON")->required();
    bench->add_option("--seed", o.spec_seed, "Master seed (overrides the spec)");
    bench->add_option("--trials", o.trials, "Override trial counts");
    bench->add_option("--jobs", o.jobs, "Worker threads");
    bench->add_option("--out", o.out, "Results CSV; stdout when omitted");

    auto* calibrate = app.add_subcommand("calibrate", "Find the threshold that meets a target ARL");
    calibrate->add_option("--spec", o.spec, "Experiment spec JSON")->required();
    calibrate->add_option("--method", o.method, "Only this method");
    calibrate->add_option("--target", o.target, "Target ARL");
    calibrate->add_option("--seed", o.spec_seed, "Master seed (overrides the spec)");
    calibrate->add_option("--trials", o.trials, "Override the trial count");
    calibrate->add_option("--jobs", o.jobs, "Worker threads");

    auto* convert = app.add_subcommand("convert", "Re-emit a graph or any produced CSV as CSV or JSON");
    convert->add_option("--in", o.input, "Input file");
    convert->add_option("--graph", o.input, "Alias of --in for graph files");
    convert->add_option("--alpha0", o.alpha0, "Uniform influence rate for graph inputs");
    convert->add_option("--format", o.format, "csv or json");
    convert->add_option("--out", o.out, "Output file; stdout when omitted");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*simulate) {
            cmd_simulate(o);
        } else if (*detect) {
            cmd_detect(o);
        } else if (*bench) {
            cmd_bench(o);
        } else if (*calibrate) {
            cmd_calibrate(o);
        } else if (*convert) {
            cmd_convert(o);
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& c : msg) {
            if (c == '\n') {
                c = ' ';
            }
        }
        std::cerr << "error: " << msg << '\n';
        return 1;
    }
    return 0;
}
