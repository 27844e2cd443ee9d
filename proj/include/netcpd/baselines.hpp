#pragma once

#include <optional>
#include <span>
#include <vector>

#include "netcpd/likelihood.hpp"

namespace netcpd {

/// One CuSum update for N(0,1) -> N(mu1,1): max(w + mu1 x - mu1^2 / 2, 0).
double cusum_step(double w, double x, double mu1);

struct CusumState {
    std::vector<double> w;  // one nonnegative statistic per stream

    explicit CusumState(int num_streams = 0) : w(static_cast<std::size_t>(num_streams), 0.0) {}
    void step(std::span<const double> x, double mu1);
};

/// Sum of the eta largest per-stream CuSum statistics. eta = 1 is the usual
/// max-of-charts rule.
double multichart_cusum(const CusumState& state, int eta);

struct WindowGlr {
    double statistic = 0.0;
    std::optional<int> change_offset;  // nullopt when "no change" wins
};

/// Gaussian GLR of one node's window with unknown post-change mean and
/// variance: max over change offsets k of the measurement log-likelihood
/// minus the no-change value, floored at 0 (the no-change hypothesis).
WindowGlr window_glr_node(std::span<const double> row, double sigma_floor = kDefaultSigmaFloor);

/// Multi-stream CuSum combined with multichart_cusum.
class MultiChartCusum {
public:
    MultiChartCusum(int num_streams, double mu1, int eta);

    double update(std::span<const double> x);
    const CusumState& state() const noexcept { return state_; }

private:
    CusumState state_;
    double mu1_;
    int eta_;
};

/// Max over nodes of window_glr_node on the last L ticks; no statistic until
/// the window is full.
class WindowGlrChart {
public:
    WindowGlrChart(int num_streams, int window, double sigma_floor = kDefaultSigmaFloor);

    std::optional<double> update(std::span<const double> x);
    /// Per-node statistics at the last evaluated tick.
    const std::vector<double>& node_statistics() const noexcept { return per_node_; }

private:
    int n_;
    int window_;
    double sigma_floor_;
    std::vector<double> ring_;
    std::vector<double> row_;
    std::vector<double> per_node_;
    int tick_ = 0;
};

struct BaselineReport {
    std::optional<int> stopping_tick;  // nullopt: censored
    int last_tick = 0;
    std::vector<std::vector<double>> node_traces;  // [tick - 1][node]
    std::vector<double> statistic;                 // combined statistic per tick
};

/// Runs a multi-chart CuSum over a panel-like tick sequence until the
/// combined statistic exceeds `threshold`.
BaselineReport run_cusum_baseline(std::span<const std::vector<double>> ticks, double mu1, int eta, double threshold);

}  // namespace netcpd
