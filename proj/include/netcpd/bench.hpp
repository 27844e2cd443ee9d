#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "netcpd/cascade_sim.hpp"
#include "netcpd/detector.hpp"
#include "netcpd/topology.hpp"

namespace netcpd {

/// A sequential detector fed one tick at a time. update() returns the
/// statistic once one is defined (windowed methods stay silent until the
/// window is full).
class Procedure {
public:
    virtual ~Procedure() = default;
    virtual std::optional<double> update(std::span<const double> x) = 0;
};

/// Builds a fresh procedure for one trial; `seed` is that trial's detector
/// stream.
using ProcedureFactory = std::function<std::unique_ptr<Procedure>(std::uint64_t seed)>;

/// Builds the measurement stream of one trial from its data seed.
using ScenarioFactory = std::function<MeasurementStream(std::uint64_t seed)>;

/// Welford mean / variance accumulator; merge() combines partial results.
struct RunningStats {
    long count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x);
    void merge(const RunningStats& other);
    double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
    double standard_error() const;
};

/// Lazily simulated trial: the statistic sequence is extended only as far as
/// a query needs, so stopping times for different thresholds are coupled
/// through the same data (common random numbers).
class TrialTrace {
public:
    TrialTrace(MeasurementStream stream, std::unique_ptr<Procedure> procedure, int run_cap);

    /// First tick with statistic > b among ticks <= min(limit, run_cap);
    /// nullopt when none.
    std::optional<int> stopping_time(double b, int limit);
    std::optional<int> stopping_time(double b) { return stopping_time(b, run_cap_); }

    int ticks_simulated() const noexcept { return static_cast<int>(ticks_); }
    int run_cap() const noexcept { return run_cap_; }
    /// First statistic produced, extending the trace if needed (-inf if none by the cap).
    double first_statistic();

private:
    void extend_one();

    MeasurementStream stream_;
    std::unique_ptr<Procedure> procedure_;
    int run_cap_;
    long ticks_ = 0;
    std::vector<double> column_;
    // Ticks where the running maximum strictly increases, with the new maximum.
    std::vector<int> record_ticks_;
    std::vector<double> record_values_;
};

struct RunLengthEstimate {
    double mean = 0.0;
    double se = 0.0;
    double censored_fraction = 0.0;
    bool lower_bound = false;  // every trial censored
};

/// One Monte Carlo arm: `trials` coupled traces of one procedure on one scenario.
class TrialSet {
public:
    TrialSet(const ScenarioFactory& scenario, const ProcedureFactory& procedure, int trials, int run_cap,
             std::uint64_t seed, int jobs = 1);

    int size() const noexcept { return static_cast<int>(traces_.size()); }
    int run_cap() const noexcept { return run_cap_; }

    /// Mean of min(stopping time, cap) over trials; censored runs count as the cap.
    RunLengthEstimate run_length(double b);

    /// Mean of (stopping time - change_tick)^+ over trials.
    RunLengthEstimate delay(double b, int change_tick);

    /// True when the mean run length at b exceeds `bound`; simulates no further
    /// than needed to decide.
    bool run_length_exceeds(double b, double bound);

    double min_first_statistic();

private:
    std::vector<TrialTrace> traces_;
    int run_cap_;
    int jobs_;
};

struct CalibrationResult {
    double threshold = 0.0;
    RunLengthEstimate arl;
    bool converged = false;
};

/// Bisection on b for ARL(b) within tol * target. Returns b = -inf when the
/// target does not exceed the shortest possible run length.
CalibrationResult calibrate_threshold(TrialSet& null_trials, double target_arl, double tol);

/// Method description inside an experiment.
struct MethodSpec {
    std::string name;
    std::string kind;  // proposed | cusum | multichart | glr
    double mu1 = 1.0;  // cusum / multichart post-change mean
    int eta = 1;       // multichart charts summed
    std::vector<double> thresholds;  // explicit thresholds; calibrated when empty
};

struct GraphSpec {
    std::string kind = "complete";  // complete | star | edge_list | matpower | json
    int n = 4;
    std::string path;
    int subgraph_root = 1;  // 1-based
    int subgraph_size = 0;  // 0 keeps the whole graph
};

struct ExperimentSpec {
    std::string name = "experiment";
    GraphSpec graph;
    double alpha0 = 0.1;
    double post_mu = 1.0;
    double post_sigma = 1.0;
    int null_affected = 0;          // nodes changed from tick 1 under the null
    std::optional<int> seed_node;   // 1-based; random per trial when absent
    int change_tick = 0;            // first failure tick under H1; 0 means the window length
    DetectorConfig detector;
    std::vector<MethodSpec> methods;
    std::vector<double> target_arls{1000.0};
    double tolerance = 0.1;
    int trials = 200;
    int edd_trials = 0;             // 0 means `trials`
    int run_cap = 10000;
    std::uint64_t seed = 1;
    int jobs = 1;

    static ExperimentSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;
    int effective_change_tick() const { return change_tick > 0 ? change_tick : detector.window; }
};

struct MetricRow {
    std::string method;
    double threshold = 0.0;
    double arl = 0.0;
    double arl_se = 0.0;
    double edd = 0.0;
    double edd_se = 0.0;
    double censored_frac = 0.0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricReport {
    std::vector<MetricRow> rows;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

Network build_network(const ExperimentSpec& spec);
ScenarioFactory null_scenario(const Network& net, const ExperimentSpec& spec);
ScenarioFactory change_scenario(const Network& net, const ExperimentSpec& spec);
ProcedureFactory make_procedure(const MethodSpec& method, const Network& net, const DetectorConfig& detector);

/// Calibrates (or uses the given thresholds of) every method and reports ARL
/// and EDD per threshold. `progress` receives one line per finished row.
MetricReport run_experiment(const ExperimentSpec& spec, const std::function<void(const std::string&)>& progress = {});

/// `method,threshold,arl,arl_se,edd,edd_se,censored_frac`
void write_report_csv(std::ostream& out, const MetricReport& report);
MetricReport read_report_csv(std::istream& in);

}  // namespace netcpd
