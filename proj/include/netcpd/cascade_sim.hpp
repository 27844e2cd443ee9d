#pragma once

#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "netcpd/rng.hpp"
#include "netcpd/topology.hpp"

namespace netcpd {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

/// Per-node failure (change-point) times; kNever marks a node that never fails.
struct FailureTimes {
    std::vector<double> tau;

    FailureTimes() = default;
    explicit FailureTimes(int n) : tau(static_cast<std::size_t>(n), kNever) {}
    explicit FailureTimes(std::vector<double> t);

    int size() const noexcept { return static_cast<int>(tau.size()); }
    double operator[](NodeId i) const { return tau[static_cast<std::size_t>(i)]; }
    bool failed(NodeId i) const { return tau[static_cast<std::size_t>(i)] != kNever; }
    int num_failed() const;
    double first() const;  // kNever when nothing failed
};

/// Post-change Gaussian law per node.
struct PostChangeParams {
    std::vector<double> mu;
    std::vector<double> sigma;

    static PostChangeParams uniform(int n, double mu, double sigma);
    void validate(int n) const;
};

/// N x T matrix of observations; ticks are 1-based.
class MeasurementPanel {
public:
    MeasurementPanel(int num_nodes, int num_ticks);

    int num_nodes() const noexcept { return n_; }
    int num_ticks() const noexcept { return ticks_; }

    double& at(NodeId i, int tick) { return data_[offset(i, tick)]; }
    double at(NodeId i, int tick) const { return data_[offset(i, tick)]; }

    /// Row of node i, element k is tick k + 1.
    std::span<const double> row(NodeId i) const;

private:
    std::size_t offset(NodeId i, int tick) const;

    int n_;
    int ticks_;
    std::vector<double> data_;
};

/// Conditional hazard of node i at time t: sum of rate(j, i) over neighbours j
/// with tau_j < t, when the first failure precedes t and i has not failed
/// before t; zero otherwise.
double hazard(const Network& net, const FailureTimes& tau, NodeId i, double t);

/// Event-driven sampling of one cascade seeded at (seed_node, seed_time).
/// Nodes still standing at `horizon` get kNever.
FailureTimes sample_cascade(const Network& net, NodeId seed_node, double seed_time, double horizon, Rng& rng);

/// First tick at which the post-change law applies for a continuous failure
/// time: ceil(tau), clamped to >= 1; INT_MAX for kNever.
int first_affected_tick(double tau);

MeasurementPanel gen_measurements(const FailureTimes& tau, const PostChangeParams& params, int num_ticks, Rng& rng);

/// Incremental version of gen_measurements: produces one tick per call, in
/// the same draw order (node-major within a tick).
class MeasurementStream {
public:
    MeasurementStream(FailureTimes tau, PostChangeParams params, Rng rng);

    /// Fills `out` (size N) with the next tick and returns its 1-based index.
    int next(std::span<double> out);
    int ticks_emitted() const noexcept { return tick_; }
    const FailureTimes& failure_times() const noexcept { return tau_; }

private:
    FailureTimes tau_;
    std::vector<int> first_tick_;
    PostChangeParams params_;
    Rng rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    int tick_ = 0;
};

/// `node,tau` with `inf` for no failure; nodes 1-based.
void write_cascade_csv(std::ostream& out, const FailureTimes& tau);
FailureTimes read_cascade_csv(std::istream& in);

/// Header `t,x_1,...,x_N`, one row per tick.
void write_panel_csv(std::ostream& out, const MeasurementPanel& panel);
MeasurementPanel read_panel_csv(std::istream& in);

}  // namespace netcpd
