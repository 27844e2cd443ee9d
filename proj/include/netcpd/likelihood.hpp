#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "netcpd/cascade_sim.hpp"
#include "netcpd/topology.hpp"

namespace netcpd {

inline constexpr double kDefaultSigmaFloor = 0.1;

/// Read-only N x L slice of observations covering absolute ticks
/// origin .. origin + L - 1. Row-major: data[i * L + k] is node i at tick
/// origin + k.
class WindowView {
public:
    WindowView(std::span<const double> data, int num_nodes, int length, int origin);

    /// Window over ticks [end - length + 1, end] of a panel; the view owns a copy.
    static WindowView of_panel(const MeasurementPanel& panel, int end_tick, int length);

    int num_nodes() const noexcept { return n_; }
    int length() const noexcept { return length_; }
    int origin() const noexcept { return origin_; }
    int end_tick() const noexcept { return origin_ + length_ - 1; }

    std::span<const double> row(NodeId i) const;
    double at(NodeId i, int offset) const { return row(i)[static_cast<std::size_t>(offset)]; }

    /// Offset of an absolute tick inside the window, nullopt for kNever.
    /// Throws for finite ticks outside the window.
    std::optional<int> offset_of(double tick) const;

private:
    std::span<const double> data_;
    int n_;
    int length_;
    int origin_;
    std::shared_ptr<const std::vector<double>> owned_;
};

/// Maximum-likelihood post-change parameters of one node's segment.
struct NodeMle {
    double mu_hat = 0.0;
    double sigma_hat = 1.0;
    int n_post = 0;  // 0 is the no-change sentinel
};

/// Propagation log-likelihood of candidate failure times at horizon T: hazard
/// density and survival terms for failed non-first nodes plus survival up to
/// T for the rest. Returns -inf when a failed non-first node has no earlier
/// failed neighbour.
double propagation_loglik(const Network& net, std::span<const double> tau, double horizon);

/// MLE over row[change_offset ..]; sigma is clamped from below by sigma_floor.
NodeMle post_change_mle(std::span<const double> row, std::optional<int> change_offset,
                        double sigma_floor = kDefaultSigmaFloor);

/// Gaussian log-likelihood of one node's row with a standard-normal prefix and
/// MLE-fitted suffix starting at change_offset (nullopt: no change). Keeps the
/// 2*pi constant.
double measurement_loglik_node(std::span<const double> row, std::optional<int> change_offset,
                               double sigma_floor = kDefaultSigmaFloor);

/// Same, with the change given as an absolute tick (kNever for none).
double measurement_loglik_node(const WindowView& w, NodeId i, double tau_tick, double sigma_floor = kDefaultSigmaFloor);

/// measurement_loglik_node for every change offset 0..L-1 of one row, in O(L).
/// `out` must have row.size() slots.
void measurement_loglik_all_offsets(std::span<const double> row, double sigma_floor, std::span<double> out);

/// Log-likelihood of the window under "no change anywhere".
double null_loglik(const WindowView& w);

/// Propagation part at horizon w.end_tick() plus the measurement part of every node.
double total_loglik(const Network& net, std::span<const double> tau, const WindowView& w,
                    double sigma_floor = kDefaultSigmaFloor);

/// Per-window table of measurement_loglik_node for every node and every
/// candidate change offset, built from suffix sums in O(N L).
class MeasurementTable {
public:
    MeasurementTable(const WindowView& w, double sigma_floor);

    int num_nodes() const noexcept { return n_; }
    int length() const noexcept { return length_; }

    double at(NodeId i, int offset) const {
        return values_[static_cast<std::size_t>(i) * static_cast<std::size_t>(length_) + static_cast<std::size_t>(offset)];
    }
    double no_change(NodeId i) const { return null_[static_cast<std::size_t>(i)]; }
    double total_no_change() const noexcept { return total_null_; }

private:
    int n_;
    int length_;
    std::vector<double> values_;
    std::vector<double> null_;
    double total_null_ = 0.0;
};

}  // namespace netcpd
