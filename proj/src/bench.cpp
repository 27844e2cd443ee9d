#include "netcpd/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "netcpd/baselines.hpp"
#include "netcpd/csv.hpp"

namespace netcpd {

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> workers;
    for (int w = 0; w < std::min(jobs, count); ++w) {
        workers.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    workers.clear();
    if (error) {
        std::rethrow_exception(error);
    }
}

class ProposedProcedure final : public Procedure {
public:
    ProposedProcedure(std::shared_ptr<const Network> net, const DetectorConfig& config, std::uint64_t seed)
        : net_(std::move(net)), detector_(*net_, config, Rng(seed)) {}

    std::optional<double> update(std::span<const double> x) override { return detector_.push(x); }

private:
    std::shared_ptr<const Network> net_;
    Detector detector_;
};

class CusumProcedure final : public Procedure {
public:
    CusumProcedure(int n, double mu1, int eta) : chart_(n, mu1, eta) {}
    std::optional<double> update(std::span<const double> x) override { return chart_.update(x); }

private:
    MultiChartCusum chart_;
};

class GlrProcedure final : public Procedure {
public:
    GlrProcedure(int n, int window, double sigma_floor) : chart_(n, window, sigma_floor) {}
    std::optional<double> update(std::span<const double> x) override { return chart_.update(x); }

private:
    WindowGlrChart chart_;
};

[[noreturn]] void spec_error(const std::string& what) {
    throw std::invalid_argument("experiment spec: " + what);
}

}  // namespace

void RunningStats::add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
}

void RunningStats::merge(const RunningStats& other) {
    if (other.count == 0) {
        return;
    }
    if (count == 0) {
        *this = other;
        return;
    }
    const long total = count + other.count;
    const double delta = other.mean - mean;
    mean += delta * static_cast<double>(other.count) / static_cast<double>(total);
    m2 += other.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(other.count) /
                         static_cast<double>(total);
    count = total;
}

double RunningStats::standard_error() const {
    return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
}

TrialTrace::TrialTrace(MeasurementStream stream, std::unique_ptr<Procedure> procedure, int run_cap)
    : stream_(std::move(stream)), procedure_(std::move(procedure)), run_cap_(run_cap) {
    if (run_cap < 1) {
        throw std::invalid_argument("run cap must be >= 1");
    }
    column_.resize(static_cast<std::size_t>(stream_.failure_times().size()));
}

void TrialTrace::extend_one() {
    stream_.next(column_);
    ++ticks_;
    const auto stat = procedure_->update(column_);
    if (stat && (record_values_.empty() || *stat > record_values_.back())) {
        record_ticks_.push_back(static_cast<int>(ticks_));
        record_values_.push_back(*stat);
    }
}

std::optional<int> TrialTrace::stopping_time(double b, int limit) {
    limit = std::min(limit, run_cap_);
    const auto it = std::upper_bound(record_values_.begin(), record_values_.end(), b);
    if (it != record_values_.end()) {
        const int tick = record_ticks_[static_cast<std::size_t>(it - record_values_.begin())];
        return tick <= limit ? std::optional<int>(tick) : std::nullopt;
    }
    while (ticks_ < limit) {
        extend_one();
        if (!record_values_.empty() && record_ticks_.back() == ticks_ && record_values_.back() > b) {
            return static_cast<int>(ticks_);
        }
    }
    return std::nullopt;
}

double TrialTrace::first_statistic() {
    while (record_values_.empty() && ticks_ < run_cap_) {
        extend_one();
    }
    return record_values_.empty() ? -kInf : record_values_.front();
}

TrialSet::TrialSet(const ScenarioFactory& scenario, const ProcedureFactory& procedure, int trials, int run_cap,
                   std::uint64_t seed, int jobs)
    : run_cap_(run_cap), jobs_(std::max(1, jobs)) {
    if (trials < 1) {
        throw std::invalid_argument("need at least one trial");
    }
    traces_.reserve(static_cast<std::size_t>(trials));
    for (int i = 0; i < trials; ++i) {
        const auto data_seed = stream_rng(seed, {static_cast<std::uint64_t>(i), 0})();
        const auto detector_seed = stream_rng(seed, {static_cast<std::uint64_t>(i), 1})();
        traces_.emplace_back(scenario(data_seed), procedure(detector_seed), run_cap);
    }
}

RunLengthEstimate TrialSet::run_length(double b) {
    std::vector<std::optional<int>> stops(traces_.size());
    parallel_for(size(), jobs_, [&](int i) { stops[static_cast<std::size_t>(i)] = traces_[static_cast<std::size_t>(i)].stopping_time(b); });
    RunningStats stats;
    int censored = 0;
    for (const auto& s : stops) {
        censored += s ? 0 : 1;
        stats.add(static_cast<double>(s.value_or(run_cap_)));
    }
    return {stats.mean, stats.standard_error(), static_cast<double>(censored) / size(), censored == size()};
}

RunLengthEstimate TrialSet::delay(double b, int change_tick) {
    std::vector<std::optional<int>> stops(traces_.size());
    parallel_for(size(), jobs_, [&](int i) { stops[static_cast<std::size_t>(i)] = traces_[static_cast<std::size_t>(i)].stopping_time(b); });
    RunningStats stats;
    int censored = 0;
    for (const auto& s : stops) {
        censored += s ? 0 : 1;
        stats.add(std::max(0.0, static_cast<double>(s.value_or(run_cap_) - change_tick)));
    }
    return {stats.mean, stats.standard_error(), static_cast<double>(censored) / size(), censored == size()};
}

bool TrialSet::run_length_exceeds(double b, double bound) {
    const double budget = bound * static_cast<double>(size());
    double sum = 0.0;
    for (auto& trace : traces_) {
        const double remaining = budget - sum;
        if (remaining < 1.0) {
            return true;
        }
        const int limit = static_cast<int>(std::min<double>(run_cap_, std::floor(remaining)));
        const auto stop = trace.stopping_time(b, limit);
        if (stop) {
            sum += *stop;
        } else if (limit >= run_cap_) {
            sum += run_cap_;
        } else {
            return true;
        }
    }
    return sum > budget;
}

double TrialSet::min_first_statistic() {
    double lowest = kInf;
    for (auto& trace : traces_) {
        const double s = trace.first_statistic();
        if (std::isfinite(s)) {
            lowest = std::min(lowest, s);
        }
    }
    return lowest;
}

CalibrationResult calibrate_threshold(TrialSet& null_trials, double target_arl, double tol) {
    if (!(tol > 0.0)) {
        throw std::invalid_argument("calibration tolerance must be positive");
    }
    const auto shortest = null_trials.run_length(-kInf);
    if (target_arl <= shortest.mean) {
        return {-kInf, shortest, true};
    }
    if (target_arl >= null_trials.run_cap()) {
        throw std::invalid_argument("target ARL must be below the run cap");
    }
    const double first = null_trials.min_first_statistic();
    double lo = std::isfinite(first) ? first - 1.0 : 0.0;
    double step = 1.0;
    double hi = lo + step;
    int widen = 0;
    while (!null_trials.run_length_exceeds(hi, target_arl)) {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
        if (++widen > 64) {
            throw std::runtime_error("calibration could not bracket the target ARL");
        }
    }
    const double upper = target_arl * (1.0 + tol);
    const double lower = target_arl * (1.0 - tol);
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (null_trials.run_length_exceeds(mid, upper)) {
            hi = mid;
        } else {
            const auto est = null_trials.run_length(mid);
            if (est.mean >= lower) {
                return {mid, est, true};
            }
            lo = mid;
        }
        if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
            break;
        }
    }
    // ARL jumps over the tolerance band: report the closest side.
    const auto at_lo = null_trials.run_length(lo);
    const auto at_hi = null_trials.run_length(hi);
    if (std::abs(std::log(at_hi.mean / target_arl)) < std::abs(std::log(at_lo.mean / target_arl))) {
        return {hi, at_hi, false};
    }
    return {lo, at_lo, false};
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        spec_error("top level must be a JSON object");
    }
    static const std::vector<std::string> known = {
        "name",   "graph",      "alpha0",    "post_change", "null_affected", "seed_node",
        "change_tick", "detector", "methods", "target_arls", "tolerance",     "trials",
        "edd_trials", "run_cap", "seed",     "jobs"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            spec_error("unknown key '" + key + "'");
        }
    }
    ExperimentSpec s;
    try {
        s.name = j.value("name", s.name);
        if (j.contains("graph")) {
            const auto& g = j.at("graph");
            s.graph.kind = g.value("kind", s.graph.kind);
            s.graph.n = g.value("n", s.graph.n);
            s.graph.path = g.value("path", s.graph.path);
            if (g.contains("subgraph")) {
                s.graph.subgraph_root = g.at("subgraph").value("root", 1);
                s.graph.subgraph_size = g.at("subgraph").at("size").get<int>();
            }
        }
        s.alpha0 = j.value("alpha0", s.alpha0);
        if (j.contains("post_change")) {
            s.post_mu = j.at("post_change").value("mu", s.post_mu);
            s.post_sigma = j.at("post_change").value("sigma", s.post_sigma);
        }
        s.null_affected = j.value("null_affected", s.null_affected);
        if (j.contains("seed_node") && !j.at("seed_node").is_null()) {
            s.seed_node = j.at("seed_node").get<int>();
        }
        s.change_tick = j.value("change_tick", s.change_tick);
        if (j.contains("detector")) {
            s.detector = DetectorConfig::from_json(j.at("detector"));
        }
        if (!j.contains("methods") || !j.at("methods").is_array() || j.at("methods").empty()) {
            spec_error("'methods' must be a non-empty array");
        }
        for (const auto& m : j.at("methods")) {
            MethodSpec method;
            method.kind = m.at("kind").get<std::string>();
            method.name = m.value("name", method.kind);
            method.mu1 = m.value("mu1", 1.0);
            method.eta = m.value("eta", method.kind == "multichart" ? s.detector.eta : 1);
            method.thresholds = m.value("thresholds", std::vector<double>{});
            s.methods.push_back(std::move(method));
        }
        s.target_arls = j.value("target_arls", s.target_arls);
        s.tolerance = j.value("tolerance", s.tolerance);
        s.trials = j.value("trials", s.trials);
        s.edd_trials = j.value("edd_trials", s.edd_trials);
        s.run_cap = j.value("run_cap", s.run_cap);
        s.seed = j.value("seed", s.seed);
        s.jobs = j.value("jobs", s.jobs);
    } catch (const nlohmann::json::exception& e) {
        spec_error(e.what());
    }
    s.validate();
    return s;
}

nlohmann::json ExperimentSpec::to_json() const {
    nlohmann::json methods_json = nlohmann::json::array();
    for (const auto& m : methods) {
        nlohmann::json mj = {{"name", m.name}, {"kind", m.kind}, {"mu1", m.mu1}, {"eta", m.eta}};
        if (!m.thresholds.empty()) {
            mj["thresholds"] = m.thresholds;
        }
        methods_json.push_back(std::move(mj));
    }
    nlohmann::json g = {{"kind", graph.kind}, {"n", graph.n}, {"path", graph.path}};
    if (graph.subgraph_size > 0) {
        g["subgraph"] = {{"root", graph.subgraph_root}, {"size", graph.subgraph_size}};
    }
    nlohmann::json j = {{"name", name},
                        {"graph", g},
                        {"alpha0", alpha0},
                        {"post_change", {{"mu", post_mu}, {"sigma", post_sigma}}},
                        {"null_affected", null_affected},
                        {"change_tick", change_tick},
                        {"detector", detector.to_json()},
                        {"methods", methods_json},
                        {"target_arls", target_arls},
                        {"tolerance", tolerance},
                        {"trials", trials},
                        {"edd_trials", edd_trials},
                        {"run_cap", run_cap},
                        {"seed", seed},
                        {"jobs", jobs}};
    if (seed_node) {
        j["seed_node"] = *seed_node;
    }
    return j;
}

void ExperimentSpec::validate() const {
    if (trials < 1 || edd_trials < 0) {
        spec_error("trials must be >= 1");
    }
    if (run_cap < detector.window) {
        spec_error("run_cap must be >= the detector window");
    }
    if (!(alpha0 > 0.0)) {
        spec_error("alpha0 must be positive");
    }
    if (!(post_sigma > 0.0)) {
        spec_error("post_change.sigma must be positive");
    }
    if (null_affected < 0) {
        spec_error("null_affected must be >= 0");
    }
    if (!(tolerance > 0.0 && tolerance < 1.0)) {
        spec_error("tolerance must lie in (0, 1)");
    }
    if (change_tick < 0 || effective_change_tick() >= run_cap) {
        spec_error("change_tick must lie before run_cap");
    }
    for (double t : target_arls) {
        if (!(t > 0.0) || t >= run_cap) {
            spec_error("target ARLs must lie in (0, run_cap)");
        }
    }
    static const std::vector<std::string> kinds = {"proposed", "cusum", "multichart", "glr"};
    for (const auto& m : methods) {
        if (std::find(kinds.begin(), kinds.end(), m.kind) == kinds.end()) {
            spec_error("unknown method kind '" + m.kind + "'");
        }
        if (m.name.empty() || m.name.find(',') != std::string::npos) {
            spec_error("method names must be non-empty and comma-free");
        }
        if (m.eta < 1) {
            spec_error("method eta must be >= 1");
        }
    }
    static const std::vector<std::string> graphs = {"complete", "star", "edge_list", "matpower", "json"};
    if (std::find(graphs.begin(), graphs.end(), graph.kind) == graphs.end()) {
        spec_error("unknown graph kind '" + graph.kind + "'");
    }
}

Network build_network(const ExperimentSpec& spec) {
    Network net = [&] {
        if (spec.graph.kind == "complete") {
            return Network(complete_graph(spec.graph.n));
        }
        if (spec.graph.kind == "star") {
            return Network(star_graph(spec.graph.n - 1));
        }
        if (spec.graph.path.empty()) {
            spec_error("graph kind '" + spec.graph.kind + "' needs a path");
        }
        return load_network_file(spec.graph.path, spec.alpha0);
    }();
    Graph graph = net.graph;
    if (spec.graph.subgraph_size > 0) {
        graph = bfs_subgraph(graph, spec.graph.subgraph_root - 1, spec.graph.subgraph_size);
    }
    auto alpha = uniform_alpha(graph, spec.alpha0);
    Network out(std::move(graph), std::move(alpha));
    spec.detector.validate(out.num_nodes());
    if (spec.null_affected > out.num_nodes()) {
        spec_error("null_affected exceeds node count");
    }
    if (spec.seed_node && (*spec.seed_node < 1 || *spec.seed_node > out.num_nodes())) {
        spec_error("seed_node out of range");
    }
    for (const auto& m : spec.methods) {
        if (m.kind == "multichart" && m.eta > out.num_nodes()) {
            spec_error("multichart eta exceeds node count");
        }
    }
    return out;
}

ScenarioFactory null_scenario(const Network& net, const ExperimentSpec& spec) {
    const int n = net.num_nodes();
    const int affected = spec.null_affected;
    const auto params = PostChangeParams::uniform(n, spec.post_mu, spec.post_sigma);
    return [n, affected, params](std::uint64_t seed) {
        Rng rng(seed);
        FailureTimes tau(n);
        std::vector<NodeId> nodes(static_cast<std::size_t>(n));
        std::iota(nodes.begin(), nodes.end(), 0);
        for (int k = 0; k < affected; ++k) {
            std::uniform_int_distribution<int> pick(k, n - 1);
            std::swap(nodes[static_cast<std::size_t>(k)], nodes[static_cast<std::size_t>(pick(rng))]);
            tau.tau[static_cast<std::size_t>(nodes[static_cast<std::size_t>(k)])] = 0.0;
        }
        return MeasurementStream(std::move(tau), params, Rng(rng()));
    };
}

ScenarioFactory change_scenario(const Network& net, const ExperimentSpec& spec) {
    auto shared = std::make_shared<const Network>(net);
    const auto params = PostChangeParams::uniform(net.num_nodes(), spec.post_mu, spec.post_sigma);
    const int change_tick = spec.effective_change_tick();
    const double horizon = static_cast<double>(spec.run_cap) + 1.0;
    const std::optional<int> seed_node = spec.seed_node;
    return [shared, params, change_tick, horizon, seed_node](std::uint64_t seed) {
        Rng rng(seed);
        const NodeId origin = seed_node ? *seed_node - 1
                                        : std::uniform_int_distribution<int>(0, shared->num_nodes() - 1)(rng);
        auto tau = sample_cascade(*shared, origin, static_cast<double>(change_tick), horizon, rng);
        return MeasurementStream(std::move(tau), params, Rng(rng()));
    };
}

ProcedureFactory make_procedure(const MethodSpec& method, const Network& net, const DetectorConfig& detector) {
    const int n = net.num_nodes();
    if (method.kind == "proposed") {
        auto shared = std::make_shared<const Network>(net);
        return [shared, detector](std::uint64_t seed) -> std::unique_ptr<Procedure> {
            return std::make_unique<ProposedProcedure>(shared, detector, seed);
        };
    }
    if (method.kind == "cusum" || method.kind == "multichart") {
        const double mu1 = method.mu1;
        const int eta = method.kind == "cusum" ? 1 : method.eta;
        return [n, mu1, eta](std::uint64_t) -> std::unique_ptr<Procedure> {
            return std::make_unique<CusumProcedure>(n, mu1, eta);
        };
    }
    if (method.kind == "glr") {
        const int window = detector.window;
        const double floor = detector.sigma_floor;
        return [n, window, floor](std::uint64_t) -> std::unique_ptr<Procedure> {
            return std::make_unique<GlrProcedure>(n, window, floor);
        };
    }
    spec_error("unknown method kind '" + method.kind + "'");
}

MetricReport run_experiment(const ExperimentSpec& spec, const std::function<void(const std::string&)>& progress) {
    spec.validate();
    const Network net = build_network(spec);
    const auto h0 = null_scenario(net, spec);
    const auto h1 = change_scenario(net, spec);
    const int change_tick = spec.effective_change_tick();
    const int edd_trials = spec.edd_trials > 0 ? spec.edd_trials : spec.trials;
    const auto null_seed = stream_rng(spec.seed, {0})();
    const auto change_seed = stream_rng(spec.seed, {1})();

    MetricReport report;
    for (const auto& method : spec.methods) {
        const auto factory = make_procedure(method, net, spec.detector);
        TrialSet null_trials(h0, factory, spec.trials, spec.run_cap, null_seed, spec.jobs);
        TrialSet change_trials(h1, factory, edd_trials, spec.run_cap, change_seed, spec.jobs);
        std::vector<double> thresholds = method.thresholds;
        if (thresholds.empty()) {
            for (double target : spec.target_arls) {
                thresholds.push_back(calibrate_threshold(null_trials, target, spec.tolerance).threshold);
            }
        }
        for (double b : thresholds) {
            const auto arl = null_trials.run_length(b);
            const auto edd = change_trials.delay(b, change_tick);
            report.rows.push_back({method.name, b, arl.mean, arl.se, edd.mean, edd.se, arl.censored_fraction});
            if (progress) {
                std::ostringstream line;
                line << method.name << " b=" << csv::format_double(b) << " arl=" << arl.mean << " (se " << arl.se
                     << ") edd=" << edd.mean << " (se " << edd.se << ")";
                progress(line.str());
            }
        }
    }
    return report;
}

void write_report_csv(std::ostream& out, const MetricReport& report) {
    out << "method,threshold,arl,arl_se,edd,edd_se,censored_frac\n";
    for (const auto& r : report.rows) {
        out << r.method << ',' << csv::format_double(r.threshold) << ',' << csv::format_double(r.arl) << ','
            << csv::format_double(r.arl_se) << ',' << csv::format_double(r.edd) << ','
            << csv::format_double(r.edd_se) << ',' << csv::format_double(r.censored_frac) << '\n';
    }
}

MetricReport read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != "method,threshold,arl,arl_se,edd,edd_se,censored_frac") {
        throw ParseError("results CSV header must be method,threshold,arl,arl_se,edd,edd_se,censored_frac", 1);
    }
    MetricReport report;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) {
            continue;
        }
        const auto f = csv::split(line);
        if (f.size() != 7) {
            throw ParseError("expected 7 columns", line_no);
        }
        MetricRow row;
        row.method = std::string(f[0]);
        double* slots[] = {&row.threshold, &row.arl, &row.arl_se, &row.edd, &row.edd_se, &row.censored_frac};
        for (std::size_t k = 0; k < 6; ++k) {
            if (!csv::parse_double(f[k + 1], *slots[k])) {
                throw ParseError("non-numeric field", line_no);
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace netcpd
