#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "netcpd/likelihood.hpp"
#include "netcpd/rng.hpp"
#include "netcpd/topology.hpp"

namespace netcpd {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct DetectorConfig {
    int window = 100;           // L, ticks per sliding window
    int max_path = 5;           // m, longest propagation path searched
    int samples = 1;            // P, nodes drawn from the risk set per expansion
    double percentile = 0.8;    // q, per-node measurement thinning percentile
    double l1 = 0.006737946999085467;  // floor on the path propagation likelihood (e^-5)
    int eta = 1;                // changes required to alarm
    double threshold = kInf;    // b
    double sigma_floor = kDefaultSigmaFloor;

    /// Throws std::invalid_argument unless 1 <= eta <= max_path <= n, window >= 2,
    /// samples >= 1, 0 <= percentile < 1, 0 <= l1 <= 1 and sigma_floor > 0.
    void validate(int num_nodes) const;

    /// Ticks per node kept by the percentile rule: ceil(length (1 - q)).
    int percentile_keep(int length) const;

    nlohmann::json to_json() const;
    static DetectorConfig from_json(const nlohmann::json& j, DetectorConfig base);
    static DetectorConfig from_json(const nlohmann::json& j);

    /// `key=value` lines ('#' comments). Keys: window|L, max_path|m, samples|P,
    /// percentile|q, l1, eta, threshold|b, sigma_floor. A stream starting with
    /// '{' is read as JSON instead.
    static DetectorConfig parse(std::istream& in, DetectorConfig base);
    static DetectorConfig parse(std::istream& in);

    /// One-line `key=value ...` summary.
    std::string describe() const;
};

/// Ordered candidate propagation path: nodes sorted by change tick.
struct PathHypothesis {
    std::vector<NodeId> nodes;
    std::vector<int> ticks;  // absolute, strictly increasing
    double loglik = -kInf;

    std::size_t size() const noexcept { return nodes.size(); }
    bool contains(NodeId x) const;
};

struct SearchResult {
    double best_loglik = -kInf;
    PathHypothesis best_path;
    std::vector<double> best_tau;  // per node; kNever outside the path
};

enum class SearchSide {
    alternative,  // at least eta changes
    null,         // at most eta - 1 changes
};

/// Per-node candidate change ticks (absolute, ascending).
using CandidateSet = std::vector<std::vector<int>>;

/// Draws min(P, |R|) distinct nodes from the risk set R of `failed`, without
/// replacement, each draw proportional to the summed influence from `failed`.
/// Returns R itself (ascending) when P >= |R|.
std::vector<NodeId> sample_risk_set(const Network& net, std::span<const NodeId> failed, int samples, Rng& rng);

/// Search state for one window. Holds the per-node measurement table, the
/// percentile masks and per-node outgoing influence, and runs the pruned
/// depth-first enumeration of propagation paths.
class PathSearch {
public:
    PathSearch(const Network& net, const WindowView& w, const DetectorConfig& config);

    /// Candidate ticks for every node not on `partial`. With an empty path this
    /// is the percentile set of each node; otherwise ticks after the last path
    /// tick that pass the percentile rule, scanned upwards and cut at the first
    /// tick where the path's propagation likelihood falls below l1.
    CandidateSet thinning(const PathHypothesis& partial) const;
    std::vector<int> thin_node(const PathHypothesis& partial, NodeId x) const;

    /// Depth-first expansion below `partial` (depth = partial.size() + 1).
    /// Every visited path with at least `min_changes` nodes is scored.
    SearchResult gen_next(PathHypothesis& partial, int min_changes, int max_changes, Rng& rng) const;

    SearchResult search(SearchSide side, Rng& rng) const;

    /// Total log-likelihood of a path hypothesis (other nodes unchanged).
    double evaluate(const PathHypothesis& path) const;

    /// Sum of the hazard density terms of the path's non-first nodes.
    double path_propagation_loglik(const PathHypothesis& path) const;

    const MeasurementTable& table() const noexcept { return table_; }
    const WindowView& window() const noexcept { return window_; }

    /// Ticks of node x that pass the percentile rule (ascending, absolute).
    std::vector<int> percentile_ticks(NodeId x) const;

private:
    std::vector<double> expand_tau(const PathHypothesis& path) const;
    void keep_best(SearchResult& best, const PathHypothesis& path) const;

    const Network& net_;
    WindowView window_;
    DetectorConfig config_;
    MeasurementTable table_;
    std::vector<char> keep_;  // N x L percentile mask
    std::vector<double> out_rate_;
};

CandidateSet thinning(const Network& net, const WindowView& w, const DetectorConfig& config,
                      const PathHypothesis& partial);

SearchResult search_max_loglik(const Network& net, const WindowView& w, const DetectorConfig& config,
                               SearchSide side, Rng& rng);

struct GlrResult {
    double statistic = -kInf;
    SearchResult alternative;
    SearchResult null;
};

/// max over >= eta changes minus max over <= eta - 1 changes. -inf when no
/// feasible alternative exists.
GlrResult glr_evaluate(const Network& net, const WindowView& w, const DetectorConfig& config, Rng& rng);
double glr_statistic(const Network& net, const WindowView& w, const DetectorConfig& config, Rng& rng);

/// Online Shewhart detector: keeps the last L ticks and evaluates the GLR
/// statistic from tick L onwards.
class Detector {
public:
    Detector(const Network& net, DetectorConfig config, Rng rng);

    /// Feeds one tick (N values). Returns the statistic once the window is full.
    std::optional<double> push(std::span<const double> x);

    int tick() const noexcept { return tick_; }
    const GlrResult& last_result() const noexcept { return last_; }
    const DetectorConfig& config() const noexcept { return config_; }

private:
    const Network& net_;
    DetectorConfig config_;
    Rng rng_;
    std::vector<double> ring_;    // N x L, column (tick % L)
    std::vector<double> window_;  // N x L in time order
    int tick_ = 0;
    GlrResult last_;
};

struct TracePoint {
    int tick;
    double statistic;
    bool alarm;
};

struct StoppingReport {
    std::optional<int> alarm_tick;  // nullopt: censored
    int last_tick = 0;
    std::vector<TracePoint> trace;
    SearchResult alarm_result;
};

/// Fills its argument with the next tick; returns false at end of stream.
using TickSource = std::function<bool(std::vector<double>&)>;

/// Runs until the first tick with S > b or until the source is exhausted.
/// `on_point` (optional) sees each trace point as soon as it is computed.
StoppingReport run_detector(const TickSource& source, const Network& net, const DetectorConfig& config, Rng& rng,
                            const std::function<void(const TracePoint&)>& on_point = {});

/// `t,S_eta,alarm` rows, preceded by `# key=value ...` when a config is given.
void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace, const DetectorConfig* config = nullptr);
std::vector<TracePoint> read_trace_csv(std::istream& in);

}  // namespace netcpd
