#include "netcpd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "netcpd/csv.hpp"

namespace netcpd {

void DetectorConfig::validate(int num_nodes) const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("detector config: " + what); };
    if (window < 2) {
        fail("window must be >= 2");
    }
    if (eta < 1 || eta > max_path) {
        fail("need 1 <= eta <= max_path");
    }
    if (max_path > num_nodes) {
        fail("max_path exceeds node count");
    }
    if (samples < 1) {
        fail("samples must be >= 1");
    }
    if (!(percentile >= 0.0 && percentile < 1.0)) {
        fail("percentile must lie in [0, 1)");
    }
    if (!(l1 >= 0.0 && l1 <= 1.0)) {
        fail("l1 must lie in [0, 1]");
    }
    if (!(sigma_floor > 0.0) || !std::isfinite(sigma_floor)) {
        fail("sigma_floor must be positive");
    }
    if (std::isnan(threshold)) {
        fail("threshold is NaN");
    }
}

int DetectorConfig::percentile_keep(int length) const {
    const double keep = static_cast<double>(length) * (1.0 - percentile);
    return std::clamp(static_cast<int>(std::ceil(keep - 1e-9)), 1, length);
}

nlohmann::json DetectorConfig::to_json() const {
    auto real = [](double v) -> nlohmann::json {
        if (std::isinf(v)) {
            return v > 0 ? "inf" : "-inf";
        }
        return v;
    };
    return {{"window", window},     {"max_path", max_path}, {"samples", samples},
            {"percentile", percentile}, {"l1", l1},         {"eta", eta},
            {"threshold", real(threshold)}, {"sigma_floor", sigma_floor}};
}

namespace {

double json_real(const nlohmann::json& v) {
    if (v.is_string()) {
        double out = 0.0;
        if (!csv::parse_double(v.get<std::string>(), out)) {
            throw std::invalid_argument("not a number: " + v.get<std::string>());
        }
        return out;
    }
    return v.get<double>();
}

void apply_key(DetectorConfig& c, const std::string& key, const std::string& value) {
    double v = 0.0;
    if (!csv::parse_double(value, v)) {
        throw std::invalid_argument("detector config: value of '" + key + "' is not a number");
    }
    auto as_int = [&] {
        if (v != std::floor(v) || std::isinf(v)) {
            throw std::invalid_argument("detector config: '" + key + "' must be an integer");
        }
        return static_cast<int>(v);
    };
    if (key == "window" || key == "L") {
        c.window = as_int();
    } else if (key == "max_path" || key == "m") {
        c.max_path = as_int();
    } else if (key == "samples" || key == "P") {
        c.samples = as_int();
    } else if (key == "percentile" || key == "q") {
        c.percentile = v;
    } else if (key == "l1") {
        c.l1 = v;
    } else if (key == "eta") {
        c.eta = as_int();
    } else if (key == "threshold" || key == "b") {
        c.threshold = v;
    } else if (key == "sigma_floor") {
        c.sigma_floor = v;
    } else {
        throw std::invalid_argument("detector config: unknown key '" + key + "'");
    }
}

}  // namespace

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j, DetectorConfig base) {
    if (!j.is_object()) {
        throw std::invalid_argument("detector config: expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        const double v = json_real(value);
        apply_key(base, key, csv::format_double(v));
    }
    return base;
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
    return from_json(j, DetectorConfig{});
}

DetectorConfig DetectorConfig::parse(std::istream& in) {
    return parse(in, DetectorConfig{});
}

DetectorConfig DetectorConfig::parse(std::istream& in, DetectorConfig base) {
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto body = csv::trim(text);
    if (!body.empty() && body.front() == '{') {
        auto doc = nlohmann::json::parse(body, nullptr, false);
        if (doc.is_discarded()) {
            throw ParseError("detector config: malformed JSON");
        }
        return from_json(doc, base);
    }
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const auto t = csv::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError("expected key=value", line_no);
        }
        try {
            apply_key(base, std::string(csv::trim(t.substr(0, eq))), std::string(csv::trim(t.substr(eq + 1))));
        } catch (const std::invalid_argument& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return base;
}

std::string DetectorConfig::describe() const {
    std::ostringstream s;
    s << "window=" << window << " max_path=" << max_path << " samples=" << samples
      << " percentile=" << csv::format_double(percentile) << " l1=" << csv::format_double(l1) << " eta=" << eta
      << " threshold=" << csv::format_double(threshold) << " sigma_floor=" << csv::format_double(sigma_floor);
    return s.str();
}

bool PathHypothesis::contains(NodeId x) const {
    return std::find(nodes.begin(), nodes.end(), x) != nodes.end();
}

std::vector<NodeId> sample_risk_set(const Network& net, std::span<const NodeId> failed, int samples, Rng& rng) {
    const int n = net.num_nodes();
    std::vector<double> weight(static_cast<std::size_t>(n), 0.0);
    std::vector<char> is_failed(static_cast<std::size_t>(n), 0);
    for (NodeId j : failed) {
        is_failed[static_cast<std::size_t>(j)] = 1;
    }
    for (NodeId j : failed) {
        for (NodeId i : net.graph.neighbors(j)) {
            if (!is_failed[static_cast<std::size_t>(i)]) {
                weight[static_cast<std::size_t>(i)] += net.alpha.rate(j, i);
            }
        }
    }
    std::vector<NodeId> risk;
    for (NodeId i = 0; i < n; ++i) {
        if (weight[static_cast<std::size_t>(i)] > 0.0) {
            risk.push_back(i);
        }
    }
    if (samples >= static_cast<int>(risk.size())) {
        return risk;
    }
    std::vector<double> w;
    w.reserve(risk.size());
    for (NodeId i : risk) {
        w.push_back(weight[static_cast<std::size_t>(i)]);
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<NodeId> picked;
    picked.reserve(static_cast<std::size_t>(samples));
    for (int draw = 0; draw < samples; ++draw) {
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        double u = unit(rng) * total;
        std::size_t chosen = w.size();
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (w[k] <= 0.0) {
                continue;
            }
            chosen = k;
            if (u < w[k]) {
                break;
            }
            u -= w[k];
        }
        picked.push_back(risk[chosen]);
        w[chosen] = 0.0;
    }
    return picked;
}

PathSearch::PathSearch(const Network& net, const WindowView& w, const DetectorConfig& config)
    : net_(net), window_(w), config_(config), table_(w, config.sigma_floor) {
    if (w.num_nodes() != net.num_nodes()) {
        throw std::invalid_argument("window width does not match the network");
    }
    config_.validate(net.num_nodes());
    const int n = net.num_nodes();
    const int len = w.length();
    const int keep = config_.percentile_keep(len);
    keep_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(len), 0);
    std::vector<int> order(static_cast<std::size_t>(len));
    for (NodeId i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return table_.at(i, a) > table_.at(i, b); });
        for (int r = 0; r < keep; ++r) {
            keep_[static_cast<std::size_t>(i) * static_cast<std::size_t>(len) + static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = 1;
        }
    }
    out_rate_.resize(static_cast<std::size_t>(n));
    for (NodeId i = 0; i < n; ++i) {
        out_rate_[static_cast<std::size_t>(i)] = net.alpha.out_rate(i);
    }
}

std::vector<int> PathSearch::percentile_ticks(NodeId x) const {
    std::vector<int> ticks;
    const int len = window_.length();
    for (int k = 0; k < len; ++k) {
        if (keep_[static_cast<std::size_t>(x) * static_cast<std::size_t>(len) + static_cast<std::size_t>(k)]) {
            ticks.push_back(window_.origin() + k);
        }
    }
    return ticks;
}

double PathSearch::path_propagation_loglik(const PathHypothesis& path) const {
    double ll = 0.0;
    for (std::size_t k = 1; k < path.size(); ++k) {
        const int tk = path.ticks[k];
        if (tk == path.ticks.front()) {
            continue;
        }
        double rate = 0.0;
        double exposure = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (path.ticks[j] < tk) {
                const double a = net_.alpha.rate(path.nodes[j], path.nodes[k]);
                rate += a;
                exposure += a * static_cast<double>(tk - path.ticks[j]);
            }
        }
        if (!(rate > 0.0)) {
            return -kInf;
        }
        ll += std::log(rate) - exposure;
    }
    return ll;
}

std::vector<int> PathSearch::thin_node(const PathHypothesis& partial, NodeId x) const {
    if (partial.size() == 0) {
        return percentile_ticks(x);
    }
    if (partial.contains(x)) {
        return {};
    }
    double rate = 0.0;
    double weighted_ticks = 0.0;
    for (std::size_t j = 0; j < partial.size(); ++j) {
        const double a = net_.alpha.rate(partial.nodes[j], x);
        rate += a;
        weighted_ticks += a * static_cast<double>(partial.ticks[j]);
    }
    if (!(rate > 0.0)) {
        return {};
    }
    const double log_floor = config_.l1 > 0.0 ? std::log(config_.l1) : -kInf;
    const double base = path_propagation_loglik(partial);
    if (base < log_floor) {
        return {};
    }
    const double log_rate = std::log(rate);
    const int len = window_.length();
    const char* mask = keep_.data() + static_cast<std::size_t>(x) * static_cast<std::size_t>(len);
    std::vector<int> ticks;
    for (int t = partial.ticks.back() + 1; t <= window_.end_tick(); ++t) {
        // Appending x at t adds log(rate) - sum_j a_j (t - t_j), nonincreasing in t.
        const double ll = base + log_rate - (rate * static_cast<double>(t) - weighted_ticks);
        if (ll < log_floor) {
            break;
        }
        if (mask[t - window_.origin()]) {
            ticks.push_back(t);
        }
    }
    return ticks;
}

CandidateSet PathSearch::thinning(const PathHypothesis& partial) const {
    CandidateSet out(static_cast<std::size_t>(net_.num_nodes()));
    for (NodeId x = 0; x < net_.num_nodes(); ++x) {
        out[static_cast<std::size_t>(x)] = thin_node(partial, x);
    }
    return out;
}

double PathSearch::evaluate(const PathHypothesis& path) const {
    double ll = table_.total_no_change();
    if (path.size() == 0) {
        return ll;
    }
    const double density = path_propagation_loglik(path);
    if (density == -kInf) {
        return -kInf;
    }
    ll += density;
    const double horizon = static_cast<double>(window_.end_tick());
    for (std::size_t j = 0; j < path.size(); ++j) {
        const NodeId node = path.nodes[j];
        double to_outside = out_rate_[static_cast<std::size_t>(node)];
        for (NodeId other : path.nodes) {
            to_outside -= net_.alpha.rate(node, other);
        }
        ll -= (horizon - static_cast<double>(path.ticks[j])) * to_outside;
        ll += table_.at(node, path.ticks[j] - window_.origin()) - table_.no_change(node);
    }
    return ll;
}

std::vector<double> PathSearch::expand_tau(const PathHypothesis& path) const {
    std::vector<double> tau(static_cast<std::size_t>(net_.num_nodes()), kNever);
    for (std::size_t k = 0; k < path.size(); ++k) {
        tau[static_cast<std::size_t>(path.nodes[k])] = static_cast<double>(path.ticks[k]);
    }
    return tau;
}

void PathSearch::keep_best(SearchResult& best, const PathHypothesis& path) const {
    const double ll = evaluate(path);
    if (ll > best.best_loglik) {
        best.best_loglik = ll;
        best.best_path = path;
        best.best_path.loglik = ll;
        best.best_tau = expand_tau(path);
    }
}

SearchResult PathSearch::gen_next(PathHypothesis& partial, int min_changes, int max_changes, Rng& rng) const {
    SearchResult best;
    if (static_cast<int>(partial.size()) >= min_changes) {
        keep_best(best, partial);
    }
    if (static_cast<int>(partial.size()) >= max_changes) {
        return best;
    }
    const auto picked = sample_risk_set(net_, partial.nodes, config_.samples, rng);
    for (NodeId x : picked) {
        for (int t : thin_node(partial, x)) {
            partial.nodes.push_back(x);
            partial.ticks.push_back(t);
            auto sub = gen_next(partial, min_changes, max_changes, rng);
            partial.nodes.pop_back();
            partial.ticks.pop_back();
            if (sub.best_loglik > best.best_loglik) {
                best = std::move(sub);
            }
        }
    }
    return best;
}

SearchResult PathSearch::search(SearchSide side, Rng& rng) const {
    const int min_changes = side == SearchSide::alternative ? config_.eta : 0;
    const int max_changes = side == SearchSide::alternative ? config_.max_path : config_.eta - 1;
    SearchResult best;
    if (side == SearchSide::null) {
        keep_best(best, PathHypothesis{});
    }
    if (max_changes == 0) {
        return best;
    }
    PathHypothesis partial;
    for (NodeId x = 0; x < net_.num_nodes(); ++x) {
        for (int t : percentile_ticks(x)) {
            partial.nodes.assign(1, x);
            partial.ticks.assign(1, t);
            auto sub = gen_next(partial, min_changes, max_changes, rng);
            if (sub.best_loglik > best.best_loglik) {
                best = std::move(sub);
            }
        }
    }
    return best;
}

CandidateSet thinning(const Network& net, const WindowView& w, const DetectorConfig& config,
                      const PathHypothesis& partial) {
    return PathSearch(net, w, config).thinning(partial);
}

SearchResult search_max_loglik(const Network& net, const WindowView& w, const DetectorConfig& config,
                               SearchSide side, Rng& rng) {
    return PathSearch(net, w, config).search(side, rng);
}

GlrResult glr_evaluate(const Network& net, const WindowView& w, const DetectorConfig& config, Rng& rng) {
    const PathSearch search(net, w, config);
    GlrResult out;
    out.alternative = search.search(SearchSide::alternative, rng);
    out.null = search.search(SearchSide::null, rng);
    out.statistic = out.alternative.best_loglik == -kInf ? -kInf
                                                          : out.alternative.best_loglik - out.null.best_loglik;
    return out;
}

double glr_statistic(const Network& net, const WindowView& w, const DetectorConfig& config, Rng& rng) {
    return glr_evaluate(net, w, config, rng).statistic;
}

Detector::Detector(const Network& net, DetectorConfig config, Rng rng)
    : net_(net), config_(config), rng_(std::move(rng)) {
    config_.validate(net.num_nodes());
    const auto size = static_cast<std::size_t>(net.num_nodes()) * static_cast<std::size_t>(config_.window);
    ring_.assign(size, 0.0);
    window_.assign(size, 0.0);
}

std::optional<double> Detector::push(std::span<const double> x) {
    const int n = net_.num_nodes();
    const int len = config_.window;
    if (static_cast<int>(x.size()) != n) {
        throw std::invalid_argument("tick has " + std::to_string(x.size()) + " values, expected " + std::to_string(n));
    }
    const auto column = static_cast<std::size_t>(tick_ % len);
    for (int i = 0; i < n; ++i) {
        ring_[static_cast<std::size_t>(i) * static_cast<std::size_t>(len) + column] = x[static_cast<std::size_t>(i)];
    }
    ++tick_;
    if (tick_ < len) {
        return std::nullopt;
    }
    const int origin = tick_ - len + 1;
    for (int i = 0; i < n; ++i) {
        const auto row = static_cast<std::size_t>(i) * static_cast<std::size_t>(len);
        for (int k = 0; k < len; ++k) {
            window_[row + static_cast<std::size_t>(k)] =
                ring_[row + static_cast<std::size_t>((origin - 1 + k) % len)];
        }
    }
    const WindowView view(window_, n, len, origin);
    last_ = glr_evaluate(net_, view, config_, rng_);
    return last_.statistic;
}

StoppingReport run_detector(const TickSource& source, const Network& net, const DetectorConfig& config, Rng& rng,
                            const std::function<void(const TracePoint&)>& on_point) {
    Detector detector(net, config, Rng(rng()));
    StoppingReport report;
    std::vector<double> tick(static_cast<std::size_t>(net.num_nodes()));
    while (source(tick)) {
        const auto stat = detector.push(tick);
        report.last_tick = detector.tick();
        if (!stat) {
            continue;
        }
        const bool alarm = *stat > config.threshold;
        report.trace.push_back({detector.tick(), *stat, alarm});
        if (on_point) {
            on_point(report.trace.back());
        }
        if (alarm) {
            report.alarm_tick = detector.tick();
            report.alarm_result = detector.last_result().alternative;
            break;
        }
    }
    return report;
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace, const DetectorConfig* config) {
    if (config != nullptr) {
        out << "# " << config->describe() << '\n';
    }
    out << "t,S_eta,alarm\n";
    for (const auto& p : trace) {
        out << p.tick << ',' << csv::format_double(p.statistic) << ',' << (p.alarm ? 1 : 0) << '\n';
    }
}

std::vector<TracePoint> read_trace_csv(std::istream& in) {
    std::vector<TracePoint> trace;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = csv::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        if (!header) {
            if (t != "t,S_eta,alarm") {
                throw ParseError("trace CSV header must be t,S_eta,alarm", line_no);
            }
            header = true;
            continue;
        }
        const auto f = csv::split(t);
        long tick = 0;
        long alarm = 0;
        double stat = 0.0;
        if (f.size() != 3 || !csv::parse_long(f[0], tick) || !csv::parse_double(f[1], stat) ||
            !csv::parse_long(f[2], alarm) || (alarm != 0 && alarm != 1)) {
            throw ParseError("expected t,S_eta,alarm", line_no);
        }
        trace.push_back({static_cast<int>(tick), stat, alarm == 1});
    }
    if (!header) {
        throw ParseError("trace CSV has no header");
    }
    return trace;
}

}  // namespace netcpd
