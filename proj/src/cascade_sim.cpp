#include "netcpd/cascade_sim.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "netcpd/csv.hpp"

namespace netcpd {

FailureTimes::FailureTimes(std::vector<double> t) : tau(std::move(t)) {
    for (double v : tau) {
        if (std::isnan(v) || v < 0.0) {
            throw std::invalid_argument("failure times must be >= 0 or infinite");
        }
    }
}

int FailureTimes::num_failed() const {
    return static_cast<int>(std::count_if(tau.begin(), tau.end(), [](double v) { return v != kNever; }));
}

double FailureTimes::first() const {
    return tau.empty() ? kNever : *std::min_element(tau.begin(), tau.end());
}

PostChangeParams PostChangeParams::uniform(int n, double mu, double sigma) {
    PostChangeParams p{std::vector<double>(static_cast<std::size_t>(n), mu),
                       std::vector<double>(static_cast<std::size_t>(n), sigma)};
    p.validate(n);
    return p;
}

void PostChangeParams::validate(int n) const {
    if (static_cast<int>(mu.size()) != n || static_cast<int>(sigma.size()) != n) {
        throw std::invalid_argument("post-change parameters must have one entry per node");
    }
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!std::isfinite(mu[i]) || !(sigma[i] > 0.0) || !std::isfinite(sigma[i])) {
            throw std::invalid_argument("post-change parameters need finite mu and sigma > 0");
        }
    }
}

MeasurementPanel::MeasurementPanel(int num_nodes, int num_ticks) : n_(num_nodes), ticks_(num_ticks) {
    if (num_nodes < 1 || num_ticks < 1) {
        throw std::invalid_argument("panel needs at least one node and one tick");
    }
    data_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(ticks_), 0.0);
}

std::size_t MeasurementPanel::offset(NodeId i, int tick) const {
    if (i < 0 || i >= n_ || tick < 1 || tick > ticks_) {
        throw std::out_of_range("panel index out of range");
    }
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(ticks_) + static_cast<std::size_t>(tick - 1);
}

std::span<const double> MeasurementPanel::row(NodeId i) const {
    return std::span<const double>(data_).subspan(offset(i, 1), static_cast<std::size_t>(ticks_));
}

double hazard(const Network& net, const FailureTimes& tau, NodeId i, double t) {
    if (!net.graph.contains(i)) {
        throw std::out_of_range("hazard: node out of range");
    }
    if (!(t > tau.first()) || tau[i] < t) {
        return 0.0;
    }
    double rate = 0.0;
    for (NodeId j : net.graph.neighbors(i)) {
        if (tau[j] < t) {
            rate += net.alpha.rate(j, i);
        }
    }
    return rate;
}

FailureTimes sample_cascade(const Network& net, NodeId seed_node, double seed_time, double horizon, Rng& rng) {
    if (!net.graph.contains(seed_node)) {
        throw std::out_of_range("seed node out of range");
    }
    if (!(seed_time < horizon) || seed_time < 0.0) {
        throw std::invalid_argument("seed time must be >= 0 and before the horizon");
    }
    const int n = net.num_nodes();
    FailureTimes tau(n);
    std::vector<double> rate(static_cast<std::size_t>(n), 0.0);

    auto fail = [&](NodeId i, double t) {
        tau.tau[static_cast<std::size_t>(i)] = t;
        rate[static_cast<std::size_t>(i)] = 0.0;
        for (NodeId k : net.graph.neighbors(i)) {
            if (!tau.failed(k)) {
                rate[static_cast<std::size_t>(k)] += net.alpha.rate(i, k);
            }
        }
    };
    fail(seed_node, seed_time);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double now = seed_time;
    while (true) {
        double total = 0.0;
        for (double r : rate) {
            total += r;
        }
        if (!(total > 0.0)) {
            break;
        }
        now += std::exponential_distribution<double>(total)(rng);
        if (!(now < horizon)) {
            break;
        }
        double pick = unit(rng) * total;
        NodeId next = -1;
        for (NodeId i = 0; i < n; ++i) {
            const double r = rate[static_cast<std::size_t>(i)];
            if (r <= 0.0) {
                continue;
            }
            next = i;
            if (pick < r) {
                break;
            }
            pick -= r;
        }
        fail(next, now);
    }
    return tau;
}

int first_affected_tick(double tau) {
    if (tau == kNever) {
        return INT_MAX;
    }
    const double c = std::ceil(tau);
    if (c >= static_cast<double>(INT_MAX)) {
        return INT_MAX;
    }
    return std::max(1, static_cast<int>(c));
}

MeasurementPanel gen_measurements(const FailureTimes& tau, const PostChangeParams& params, int num_ticks, Rng& rng) {
    params.validate(tau.size());
    MeasurementPanel panel(tau.size(), num_ticks);
    std::vector<int> first_tick;
    for (double t : tau.tau) {
        first_tick.push_back(first_affected_tick(t));
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 1; t <= num_ticks; ++t) {
        for (NodeId i = 0; i < tau.size(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double z = normal(rng);
            panel.at(i, t) = t >= first_tick[k] ? params.mu[k] + params.sigma[k] * z : z;
        }
    }
    return panel;
}

MeasurementStream::MeasurementStream(FailureTimes tau, PostChangeParams params, Rng rng)
    : tau_(std::move(tau)), params_(std::move(params)), rng_(std::move(rng)) {
    params_.validate(tau_.size());
    first_tick_.reserve(tau_.tau.size());
    for (double t : tau_.tau) {
        first_tick_.push_back(first_affected_tick(t));
    }
}

int MeasurementStream::next(std::span<double> out) {
    if (static_cast<int>(out.size()) != tau_.size()) {
        throw std::invalid_argument("output span must have one slot per node");
    }
    ++tick_;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double z = normal_(rng_);
        out[i] = tick_ >= first_tick_[i] ? params_.mu[i] + params_.sigma[i] * z : z;
    }
    return tick_;
}

void write_cascade_csv(std::ostream& out, const FailureTimes& tau) {
    out << "node,tau\n";
    for (NodeId i = 0; i < tau.size(); ++i) {
        out << (i + 1) << ',' << csv::format_double(tau[i]) << '\n';
    }
}

FailureTimes read_cascade_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != "node,tau") {
        throw ParseError("cascade CSV must start with header node,tau", 1);
    }
    std::vector<double> tau;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) {
            continue;
        }
        const auto f = csv::split(line);
        long node = 0;
        double t = 0.0;
        if (f.size() != 2 || !csv::parse_long(f[0], node) || !csv::parse_double(f[1], t)) {
            throw ParseError("expected node,tau", line_no);
        }
        if (node != static_cast<long>(tau.size()) + 1) {
            throw ParseError("nodes must be listed in order 1..n", line_no);
        }
        tau.push_back(t);
    }
    return FailureTimes(std::move(tau));
}

void write_panel_csv(std::ostream& out, const MeasurementPanel& panel) {
    out << 't';
    for (int i = 1; i <= panel.num_nodes(); ++i) {
        out << ",x_" << i;
    }
    out << '\n';
    for (int t = 1; t <= panel.num_ticks(); ++t) {
        out << t;
        for (NodeId i = 0; i < panel.num_nodes(); ++i) {
            out << ',' << csv::format_double(panel.at(i, t));
        }
        out << '\n';
    }
}

MeasurementPanel read_panel_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty panel CSV");
    }
    const auto header = csv::split(csv::trim(line));
    if (header.size() < 2 || header[0] != "t") {
        throw ParseError("panel CSV header must be t,x_1,...,x_N", 1);
    }
    const int n = static_cast<int>(header.size()) - 1;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) {
            continue;
        }
        const auto f = csv::split(line);
        if (static_cast<int>(f.size()) != n + 1) {
            throw ParseError("expected " + std::to_string(n + 1) + " columns", line_no);
        }
        std::vector<double> row(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            if (!csv::parse_double(f[static_cast<std::size_t>(i + 1)], row[static_cast<std::size_t>(i)]) ||
                !std::isfinite(row[static_cast<std::size_t>(i)])) {
                throw ParseError("non-numeric measurement", line_no);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ParseError("panel CSV has no ticks");
    }
    MeasurementPanel panel(n, static_cast<int>(rows.size()));
    for (int t = 1; t <= panel.num_ticks(); ++t) {
        for (NodeId i = 0; i < n; ++i) {
            panel.at(i, t) = rows[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)];
        }
    }
    return panel;
}

}  // namespace netcpd
