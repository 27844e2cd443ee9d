#pragma once

// Term-by-term likelihoods used as independent references in tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "netcpd/cascade_sim.hpp"
#include "netcpd/topology.hpp"

namespace oracle {

using netcpd::kNever;
using netcpd::Network;

inline constexpr double kLog2Pi = 1.8378770664093454836;

// Straight transcription of the propagation log-likelihood.
inline double naive_propagation(const Network& net, const std::vector<double>& tau, double T) {
    const int n = net.num_nodes();
    double first = kNever;
    for (double t : tau) {
        first = std::min(first, t);
    }
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        const double ti = tau[static_cast<std::size_t>(i)];
        if (ti <= T) {
            if (ti == first) {
                continue;
            }
            double rate = 0.0;
            double decay = 0.0;
            for (int j = 0; j < n; ++j) {
                const double a = net.alpha.rate(j, i);
                const double tj = tau[static_cast<std::size_t>(j)];
                if (a > 0.0 && tj < ti) {
                    rate += a;
                    decay += a * (ti - tj);
                }
            }
            if (rate == 0.0) {
                return -std::numeric_limits<double>::infinity();
            }
            ll += std::log(rate) - decay;
        } else {
            for (int j = 0; j < n; ++j) {
                const double a = net.alpha.rate(j, i);
                const double tj = tau[static_cast<std::size_t>(j)];
                if (a > 0.0 && tj < T) {
                    ll -= a * (T - tj);
                }
            }
        }
    }
    return ll;
}

// Gaussian log-likelihood of a row with a change at `offset` (nullopt: none),
// MLE plug-ins with a floor on sigma, computed term by term.
inline double naive_measurement(const std::vector<double>& row, std::optional<int> offset, double floor) {
    const int L = static_cast<int>(row.size());
    const int k = offset.value_or(L);
    double ll = -0.5 * L * kLog2Pi;
    for (int t = 0; t < k; ++t) {
        ll -= 0.5 * row[static_cast<std::size_t>(t)] * row[static_cast<std::size_t>(t)];
    }
    if (k < L) {
        double mu = 0.0;
        for (int t = k; t < L; ++t) {
            mu += row[static_cast<std::size_t>(t)];
        }
        mu /= (L - k);
        double var = 0.0;
        for (int t = k; t < L; ++t) {
            var += (row[static_cast<std::size_t>(t)] - mu) * (row[static_cast<std::size_t>(t)] - mu);
        }
        var /= (L - k);
        const double sigma = std::max(std::sqrt(var), floor);
        for (int t = k; t < L; ++t) {
            const double z = (row[static_cast<std::size_t>(t)] - mu) / sigma;
            ll -= 0.5 * z * z + std::log(sigma);
        }
    }
    return ll;
}

// Propagation plus per-node measurement terms over a row-major window.
inline double naive_total(const Network& net, const std::vector<double>& tau, const std::vector<double>& data, int L,
                          int origin, double floor = 0.1) {
    const int n = net.num_nodes();
    double ll = naive_propagation(net, tau, origin + L - 1);
    if (std::isinf(ll)) {
        return ll;
    }
    for (int i = 0; i < n; ++i) {
        const std::vector<double> row(data.begin() + i * L, data.begin() + (i + 1) * L);
        const double ti = tau[static_cast<std::size_t>(i)];
        ll += naive_measurement(row, ti == kNever ? std::nullopt : std::optional<int>(static_cast<int>(ti) - origin),
                                floor);
    }
    return ll;
}

}  // namespace oracle
