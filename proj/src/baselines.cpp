#include "netcpd/baselines.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <string>

namespace netcpd {

double cusum_step(double w, double x, double mu1) {
    return std::max(w + mu1 * x - 0.5 * mu1 * mu1, 0.0);
}

void CusumState::step(std::span<const double> x, double mu1) {
    if (x.size() != w.size()) {
        throw std::invalid_argument("CuSum update needs one value per stream");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = cusum_step(w[i], x[i], mu1);
    }
}

double multichart_cusum(const CusumState& state, int eta) {
    if (eta < 1 || eta > static_cast<int>(state.w.size())) {
        throw std::invalid_argument("multi-chart CuSum needs 1 <= eta <= number of streams");
    }
    std::vector<double> top(static_cast<std::size_t>(eta));
    std::partial_sort_copy(state.w.begin(), state.w.end(), top.begin(), top.end(), std::greater<>());
    double sum = 0.0;
    for (double v : top) {
        sum += v;
    }
    return sum;
}

WindowGlr window_glr_node(std::span<const double> row, double sigma_floor) {
    thread_local std::vector<double> values;
    values.resize(row.size());
    measurement_loglik_all_offsets(row, sigma_floor, values);
    const double null = measurement_loglik_node(row, std::nullopt, sigma_floor);
    WindowGlr best;
    for (int k = 0; k < static_cast<int>(row.size()); ++k) {
        const double v = values[static_cast<std::size_t>(k)] - null;
        if (v > best.statistic) {
            best = {v, k};
        }
    }
    return best;
}

MultiChartCusum::MultiChartCusum(int num_streams, double mu1, int eta) : state_(num_streams), mu1_(mu1), eta_(eta) {
    if (eta < 1 || eta > num_streams) {
        throw std::invalid_argument("multi-chart CuSum needs 1 <= eta <= number of streams");
    }
}

double MultiChartCusum::update(std::span<const double> x) {
    state_.step(x, mu1_);
    return multichart_cusum(state_, eta_);
}

WindowGlrChart::WindowGlrChart(int num_streams, int window, double sigma_floor)
    : n_(num_streams), window_(window), sigma_floor_(sigma_floor) {
    if (num_streams < 1 || window < 2) {
        throw std::invalid_argument("window GLR needs at least one stream and a window of 2 ticks");
    }
    ring_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(window_), 0.0);
    row_.resize(static_cast<std::size_t>(window_));
    per_node_.assign(static_cast<std::size_t>(n_), 0.0);
}

std::optional<double> WindowGlrChart::update(std::span<const double> x) {
    if (static_cast<int>(x.size()) != n_) {
        throw std::invalid_argument("window GLR update needs one value per stream");
    }
    const auto column = static_cast<std::size_t>(tick_ % window_);
    for (int i = 0; i < n_; ++i) {
        ring_[static_cast<std::size_t>(i) * static_cast<std::size_t>(window_) + column] = x[static_cast<std::size_t>(i)];
    }
    ++tick_;
    if (tick_ < window_) {
        return std::nullopt;
    }
    double best = 0.0;
    const int origin = tick_ - window_ + 1;
    for (int i = 0; i < n_; ++i) {
        const auto base = static_cast<std::size_t>(i) * static_cast<std::size_t>(window_);
        for (int k = 0; k < window_; ++k) {
            row_[static_cast<std::size_t>(k)] = ring_[base + static_cast<std::size_t>((origin - 1 + k) % window_)];
        }
        per_node_[static_cast<std::size_t>(i)] = window_glr_node(row_, sigma_floor_).statistic;
        best = std::max(best, per_node_[static_cast<std::size_t>(i)]);
    }
    return best;
}

BaselineReport run_cusum_baseline(std::span<const std::vector<double>> ticks, double mu1, int eta, double threshold) {
    BaselineReport report;
    if (ticks.empty()) {
        return report;
    }
    MultiChartCusum chart(static_cast<int>(ticks.front().size()), mu1, eta);
    for (const auto& x : ticks) {
        const double s = chart.update(x);
        ++report.last_tick;
        report.node_traces.push_back(chart.state().w);
        report.statistic.push_back(s);
        if (s > threshold) {
            report.stopping_tick = report.last_tick;
            break;
        }
    }
    return report;
}

}  // namespace netcpd
