#include "netcpd/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace netcpd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 * pi)

double gaussian_loglik(double pre_sq_sum, double ssr, int n_post, double sigma_hat, int length) {
    double ll = -0.5 * pre_sq_sum - 0.5 * static_cast<double>(length) * kLog2Pi;
    if (n_post > 0) {
        ll -= ssr / (2.0 * sigma_hat * sigma_hat) + static_cast<double>(n_post) * std::log(sigma_hat);
    }
    return ll;
}

}  // namespace

WindowView::WindowView(std::span<const double> data, int num_nodes, int length, int origin)
    : data_(data), n_(num_nodes), length_(length), origin_(origin) {
    if (num_nodes < 1 || length < 1) {
        throw std::invalid_argument("window needs at least one node and one tick");
    }
    if (data.size() != static_cast<std::size_t>(num_nodes) * static_cast<std::size_t>(length)) {
        throw std::invalid_argument("window data size does not match N x L");
    }
}

WindowView WindowView::of_panel(const MeasurementPanel& panel, int end_tick, int length) {
    if (end_tick > panel.num_ticks() || end_tick - length + 1 < 1) {
        throw std::out_of_range("window exceeds panel");
    }
    auto copy = std::make_shared<std::vector<double>>(static_cast<std::size_t>(panel.num_nodes()) *
                                                      static_cast<std::size_t>(length));
    const int origin = end_tick - length + 1;
    for (NodeId i = 0; i < panel.num_nodes(); ++i) {
        const auto r = panel.row(i).subspan(static_cast<std::size_t>(origin - 1), static_cast<std::size_t>(length));
        std::copy(r.begin(), r.end(), copy->begin() + static_cast<std::ptrdiff_t>(i) * length);
    }
    WindowView view(*copy, panel.num_nodes(), length, origin);
    view.owned_ = std::move(copy);
    return view;
}

std::span<const double> WindowView::row(NodeId i) const {
    if (i < 0 || i >= n_) {
        throw std::out_of_range("window row out of range");
    }
    return data_.subspan(static_cast<std::size_t>(i) * static_cast<std::size_t>(length_), static_cast<std::size_t>(length_));
}

std::optional<int> WindowView::offset_of(double tick) const {
    if (tick == kNever) {
        return std::nullopt;
    }
    if (tick != std::floor(tick) || tick < origin_ || tick > end_tick()) {
        throw std::out_of_range("change tick " + std::to_string(tick) + " outside window [" + std::to_string(origin_) +
                                ", " + std::to_string(end_tick()) + "]");
    }
    return static_cast<int>(tick) - origin_;
}

double propagation_loglik(const Network& net, std::span<const double> tau, double horizon) {
    const int n = net.num_nodes();
    if (static_cast<int>(tau.size()) != n) {
        throw std::invalid_argument("candidate failure times must have one entry per node");
    }
    double first = kNever;
    for (double t : tau) {
        if (t <= horizon) {
            first = std::min(first, t);
        }
    }
    double ll = 0.0;
    for (NodeId i = 0; i < n; ++i) {
        const double ti = tau[static_cast<std::size_t>(i)];
        if (ti <= horizon) {
            if (ti == first) {
                continue;
            }
            double rate = 0.0;
            double exposure = 0.0;
            for (NodeId j : net.graph.neighbors(i)) {
                const double tj = tau[static_cast<std::size_t>(j)];
                if (tj < ti) {
                    rate += net.alpha.rate(j, i);
                    exposure += net.alpha.rate(j, i) * (ti - tj);
                }
            }
            if (!(rate > 0.0)) {
                return -std::numeric_limits<double>::infinity();
            }
            ll += std::log(rate) - exposure;
        } else {
            for (NodeId j : net.graph.neighbors(i)) {
                const double tj = tau[static_cast<std::size_t>(j)];
                if (tj < horizon) {
                    ll -= net.alpha.rate(j, i) * (horizon - tj);
                }
            }
        }
    }
    return ll;
}

NodeMle post_change_mle(std::span<const double> row, std::optional<int> change_offset, double sigma_floor) {
    if (!change_offset) {
        return {};
    }
    const int k0 = *change_offset;
    if (k0 < 0 || k0 >= static_cast<int>(row.size())) {
        throw std::out_of_range("change offset outside row");
    }
    const auto seg = row.subspan(static_cast<std::size_t>(k0));
    double mean = 0.0;
    for (double x : seg) {
        mean += x;
    }
    mean /= static_cast<double>(seg.size());
    double ssr = 0.0;
    for (double x : seg) {
        ssr += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(ssr / static_cast<double>(seg.size()));
    return {mean, std::max(sd, sigma_floor), static_cast<int>(seg.size())};
}

double measurement_loglik_node(std::span<const double> row, std::optional<int> change_offset, double sigma_floor) {
    const int length = static_cast<int>(row.size());
    const int k0 = change_offset.value_or(length);
    const NodeMle mle = post_change_mle(row, change_offset, sigma_floor);
    double pre = 0.0;
    for (int k = 0; k < k0; ++k) {
        pre += row[static_cast<std::size_t>(k)] * row[static_cast<std::size_t>(k)];
    }
    double ssr = 0.0;
    for (int k = k0; k < length; ++k) {
        const double d = row[static_cast<std::size_t>(k)] - mle.mu_hat;
        ssr += d * d;
    }
    return gaussian_loglik(pre, ssr, mle.n_post, mle.sigma_hat, length);
}

double measurement_loglik_node(const WindowView& w, NodeId i, double tau_tick, double sigma_floor) {
    return measurement_loglik_node(w.row(i), w.offset_of(tau_tick), sigma_floor);
}

double null_loglik(const WindowView& w) {
    double ll = 0.0;
    for (NodeId i = 0; i < w.num_nodes(); ++i) {
        ll += measurement_loglik_node(w.row(i), std::nullopt);
    }
    return ll;
}

double total_loglik(const Network& net, std::span<const double> tau, const WindowView& w, double sigma_floor) {
    if (static_cast<int>(tau.size()) != w.num_nodes()) {
        throw std::invalid_argument("candidate failure times must have one entry per node");
    }
    double ll = propagation_loglik(net, tau, static_cast<double>(w.end_tick()));
    if (ll == -std::numeric_limits<double>::infinity()) {
        return ll;
    }
    for (NodeId i = 0; i < w.num_nodes(); ++i) {
        ll += measurement_loglik_node(w, i, tau[static_cast<std::size_t>(i)], sigma_floor);
    }
    return ll;
}

void measurement_loglik_all_offsets(std::span<const double> row, double sigma_floor, std::span<double> out) {
    const int length = static_cast<int>(row.size());
    if (out.size() != row.size()) {
        throw std::invalid_argument("output must have one slot per offset");
    }
    double prefix_sq = 0.0;
    for (double x : row) {
        prefix_sq += x * x;
    }
    // Welford over the suffix, growing leftwards; prefix sum shrinks alongside.
    double mean = 0.0;
    double m2 = 0.0;
    for (int k = length - 1; k >= 0; --k) {
        const int count = length - k;
        const double x = row[static_cast<std::size_t>(k)];
        prefix_sq -= x * x;
        const double delta = x - mean;
        mean += delta / count;
        m2 += delta * (x - mean);
        const double ssr = std::max(m2, 0.0);
        const double sd = std::sqrt(ssr / count);
        out[static_cast<std::size_t>(k)] =
            gaussian_loglik(std::max(prefix_sq, 0.0), ssr, count, std::max(sd, sigma_floor), length);
    }
}

MeasurementTable::MeasurementTable(const WindowView& w, double sigma_floor)
    : n_(w.num_nodes()), length_(w.length()) {
    values_.resize(static_cast<std::size_t>(n_) * static_cast<std::size_t>(length_));
    null_.resize(static_cast<std::size_t>(n_));
    for (NodeId i = 0; i < n_; ++i) {
        const auto row = w.row(i);
        double sq = 0.0;
        for (double x : row) {
            sq += x * x;
        }
        null_[static_cast<std::size_t>(i)] = gaussian_loglik(sq, 0.0, 0, 1.0, length_);
        total_null_ += null_[static_cast<std::size_t>(i)];
        measurement_loglik_all_offsets(
            row, sigma_floor,
            std::span<double>(values_).subspan(static_cast<std::size_t>(i) * static_cast<std::size_t>(length_),
                                               static_cast<std::size_t>(length_)));
    }
}

}  // namespace netcpd
