#include "netcpd/topology.hpp"

#include "netcpd/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>

namespace netcpd {

using csv::parse_double;
using csv::parse_long;
using csv::split;
using csv::trim;

ParseError::ParseError(const std::string& what, std::size_t line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

Graph::Graph(int num_nodes) {
    if (num_nodes < 1) {
        throw std::invalid_argument("graph must have at least one node");
    }
    adjacency_.resize(static_cast<std::size_t>(num_nodes));
}

void Graph::check_node(NodeId i) const {
    if (!contains(i)) {
        throw std::out_of_range("node " + std::to_string(i) + " out of range [0, " +
                                std::to_string(num_nodes()) + ")");
    }
}

bool Graph::add_edge(NodeId i, NodeId j) {
    check_node(i);
    check_node(j);
    if (i == j) {
        throw std::invalid_argument("self-loop on node " + std::to_string(i));
    }
    auto& ni = adjacency_[static_cast<std::size_t>(i)];
    const auto it = std::lower_bound(ni.begin(), ni.end(), j);
    if (it != ni.end() && *it == j) {
        return false;
    }
    ni.insert(it, j);
    auto& nj = adjacency_[static_cast<std::size_t>(j)];
    nj.insert(std::lower_bound(nj.begin(), nj.end(), i), i);
    ++num_edges_;
    return true;
}

bool Graph::has_edge(NodeId i, NodeId j) const {
    const auto& ni = neighbors(i);
    return std::binary_search(ni.begin(), ni.end(), j);
}

const std::vector<NodeId>& Graph::neighbors(NodeId i) const {
    check_node(i);
    return adjacency_[static_cast<std::size_t>(i)];
}

std::vector<std::pair<NodeId, NodeId>> Graph::edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(num_edges_);
    for (NodeId i = 0; i < num_nodes(); ++i) {
        for (NodeId j : adjacency_[static_cast<std::size_t>(i)]) {
            if (i < j) {
                out.emplace_back(i, j);
            }
        }
    }
    return out;
}

InfluenceMatrix::InfluenceMatrix(const Graph& graph)
    : n_(graph.num_nodes()),
      rates_(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0.0),
      is_edge_(rates_.size(), 0) {
    for (auto [i, j] : graph.edges()) {
        is_edge_[index(i, j)] = 1;
        is_edge_[index(j, i)] = 1;
    }
}

std::size_t InfluenceMatrix::index(NodeId from, NodeId to) const {
    if (from < 0 || from >= n_ || to < 0 || to >= n_) {
        throw std::out_of_range("influence index out of range");
    }
    return static_cast<std::size_t>(from) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(to);
}

void InfluenceMatrix::set(NodeId from, NodeId to, double value) {
    const auto k = index(from, to);
    if (!std::isfinite(value) || value < 0.0) {
        throw std::invalid_argument("influence rate must be finite and >= 0");
    }
    if (!is_edge_[k]) {
        throw std::invalid_argument("influence rate on non-edge (" + std::to_string(from + 1) + "," +
                                    std::to_string(to + 1) + ")");
    }
    rates_[k] = value;
}

double InfluenceMatrix::out_rate(NodeId from) const {
    const auto row = index(from, 0);
    double total = 0.0;
    for (int k = 0; k < n_; ++k) {
        total += rates_[row + static_cast<std::size_t>(k)];
    }
    return total;
}

Network::Network(Graph g, InfluenceMatrix a) : graph(std::move(g)), alpha(std::move(a)) {
    if (alpha.num_nodes() != graph.num_nodes()) {
        throw std::invalid_argument("influence matrix size does not match graph");
    }
}

Network load_edge_list(std::istream& in) {
    struct Row {
        NodeId i, j;
        double forward, backward;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t line_no = 0;
    long max_node = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(std::string_view(line).substr(0, line.find('#')));
        if (text.empty()) {
            continue;
        }
        const auto fields = split(text, ',');
        if (fields.size() != 3 && fields.size() != 4) {
            throw ParseError("expected i,j,alpha_ij[,alpha_ji]", line_no);
        }
        long i = 0;
        long j = 0;
        double fwd = 0.0;
        double bwd = 0.0;
        if (!parse_long(fields[0], i) || !parse_long(fields[1], j) || i < 1 || j < 1) {
            throw ParseError("node indices must be positive integers", line_no);
        }
        if (!parse_double(fields[2], fwd) || (fields.size() == 4 && !parse_double(fields[3], bwd))) {
            throw ParseError("rate is not a number", line_no);
        }
        if (fields.size() == 3) {
            bwd = fwd;
        }
        if (i == j) {
            throw ParseError("self-loop on node " + std::to_string(i), line_no);
        }
        if (!(fwd >= 0.0) || !(bwd >= 0.0) || !std::isfinite(fwd) || !std::isfinite(bwd)) {
            throw ParseError("rates must be finite and >= 0", line_no);
        }
        max_node = std::max({max_node, i, j});
        rows.push_back({static_cast<NodeId>(i - 1), static_cast<NodeId>(j - 1), fwd, bwd});
    }
    if (rows.empty()) {
        throw ParseError("empty graph rejected");
    }
    Graph graph(static_cast<int>(max_node));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!graph.add_edge(rows[k].i, rows[k].j)) {
            throw ParseError("duplicate edge (" + std::to_string(rows[k].i + 1) + "," +
                             std::to_string(rows[k].j + 1) + ")");
        }
    }
    Network net(std::move(graph));
    for (const auto& r : rows) {
        net.alpha.set(r.i, r.j, r.forward);
        net.alpha.set(r.j, r.i, r.backward);
    }
    return net;
}

void write_edge_list(std::ostream& out, const Network& net) {
    for (auto [i, j] : net.graph.edges()) {
        out << (i + 1) << ',' << (j + 1) << ',' << csv::format_double(net.alpha.rate(i, j)) << ','
            << csv::format_double(net.alpha.rate(j, i)) << '\n';
    }
}

MatpowerTopology parse_matpower_branches(std::string_view text) {
    std::size_t pos = 0;
    std::size_t block_start = std::string_view::npos;
    while ((pos = text.find("mpc.branch", pos)) != std::string_view::npos) {
        std::size_t k = pos + std::string_view("mpc.branch").size();
        while (k < text.size() && (text[k] == ' ' || text[k] == '\t')) {
            ++k;
        }
        if (k < text.size() && text[k] == '=') {
            const auto open = text.find('[', k);
            if (open != std::string_view::npos) {
                block_start = open + 1;
                break;
            }
        }
        pos = k;
    }
    if (block_start == std::string_view::npos) {
        throw ParseError("missing mpc.branch block");
    }
    const auto block_end = text.find(']', block_start);
    if (block_end == std::string_view::npos) {
        throw ParseError("unterminated mpc.branch block");
    }
    std::size_t line_no = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + block_start, '\n'));

    std::vector<std::pair<long, long>> branches;
    std::string_view body = text.substr(block_start, block_end - block_start);
    std::size_t start = 0;
    while (start <= body.size()) {
        auto stop = body.find('\n', start);
        if (stop == std::string_view::npos) {
            stop = body.size();
        }
        std::string_view line = body.substr(start, stop - start);
        if (const auto pct = line.find('%'); pct != std::string_view::npos) {
            line = line.substr(0, pct);
        }
        for (auto row : split(line, ';')) {
            if (row.empty()) {
                continue;
            }
            std::vector<std::string_view> cols;
            std::size_t c = 0;
            while (c < row.size()) {
                while (c < row.size() && (row[c] == ' ' || row[c] == '\t' || row[c] == ',')) {
                    ++c;
                }
                const auto b = c;
                while (c < row.size() && row[c] != ' ' && row[c] != '\t' && row[c] != ',') {
                    ++c;
                }
                if (c > b) {
                    cols.push_back(row.substr(b, c - b));
                }
            }
            if (cols.size() < 2) {
                throw ParseError("branch row needs from-bus and to-bus columns", line_no);
            }
            long from = 0;
            long to = 0;
            double fval = 0.0;
            double tval = 0.0;
            if (!parse_long(cols[0], from)) {
                if (!parse_double(cols[0], fval) || fval != std::floor(fval)) {
                    throw ParseError("non-numeric bus id '" + std::string(cols[0]) + "'", line_no);
                }
                from = static_cast<long>(fval);
            }
            if (!parse_long(cols[1], to)) {
                if (!parse_double(cols[1], tval) || tval != std::floor(tval)) {
                    throw ParseError("non-numeric bus id '" + std::string(cols[1]) + "'", line_no);
                }
                to = static_cast<long>(tval);
            }
            if (from == to) {
                throw ParseError("branch connects bus " + std::to_string(from) + " to itself", line_no);
            }
            branches.emplace_back(from, to);
        }
        start = stop + 1;
        ++line_no;
    }
    if (branches.empty()) {
        throw ParseError("mpc.branch block has no rows");
    }

    std::map<long, NodeId> dense;
    for (auto [f, t] : branches) {
        dense.emplace(f, 0);
        dense.emplace(t, 0);
    }
    std::vector<long> bus_ids;
    bus_ids.reserve(dense.size());
    for (auto& [bus, id] : dense) {
        id = static_cast<NodeId>(bus_ids.size());
        bus_ids.push_back(bus);
    }
    Graph graph(static_cast<int>(bus_ids.size()));
    for (auto [f, t] : branches) {
        graph.add_edge(dense.at(f), dense.at(t));
    }
    return {std::move(graph), std::move(bus_ids)};
}

InfluenceMatrix uniform_alpha(const Graph& graph, double a0) {
    if (!(a0 > 0.0) || !std::isfinite(a0)) {
        throw std::invalid_argument("uniform influence rate must be positive");
    }
    InfluenceMatrix alpha(graph);
    for (auto [i, j] : graph.edges()) {
        alpha.set(i, j, a0);
        alpha.set(j, i, a0);
    }
    return alpha;
}

Graph complete_graph(int n) {
    Graph g(n);
    for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = i + 1; j < n; ++j) {
            g.add_edge(i, j);
        }
    }
    return g;
}

Graph star_graph(int num_leaves) {
    Graph g(num_leaves + 1);
    for (NodeId leaf = 1; leaf <= num_leaves; ++leaf) {
        g.add_edge(0, leaf);
    }
    return g;
}

Graph bfs_subgraph(const Graph& graph, NodeId root, int count, std::vector<NodeId>* kept) {
    if (count < 1) {
        throw std::invalid_argument("subgraph size must be positive");
    }
    std::vector<NodeId> order;
    std::vector<NodeId> new_id(static_cast<std::size_t>(graph.num_nodes()), -1);
    std::queue<NodeId> frontier;
    frontier.push(root);
    if (!graph.contains(root)) {
        throw std::out_of_range("subgraph root out of range");
    }
    new_id[static_cast<std::size_t>(root)] = 0;
    order.push_back(root);
    while (!frontier.empty() && static_cast<int>(order.size()) < count) {
        const NodeId u = frontier.front();
        frontier.pop();
        for (NodeId v : graph.neighbors(u)) {
            if (new_id[static_cast<std::size_t>(v)] < 0 && static_cast<int>(order.size()) < count) {
                new_id[static_cast<std::size_t>(v)] = static_cast<NodeId>(order.size());
                order.push_back(v);
                frontier.push(v);
            }
        }
    }
    Graph sub(static_cast<int>(order.size()));
    for (auto [i, j] : graph.edges()) {
        const auto a = new_id[static_cast<std::size_t>(i)];
        const auto b = new_id[static_cast<std::size_t>(j)];
        if (a >= 0 && b >= 0) {
            sub.add_edge(a, b);
        }
    }
    if (kept != nullptr) {
        *kept = std::move(order);
    }
    return sub;
}

nlohmann::json to_json(const Network& net) {
    nlohmann::json edges = nlohmann::json::array();
    for (auto [i, j] : net.graph.edges()) {
        edges.push_back({{"i", i + 1}, {"j", j + 1}, {"alpha_ij", net.alpha.rate(i, j)},
                         {"alpha_ji", net.alpha.rate(j, i)}});
    }
    return {{"nodes", net.num_nodes()}, {"edges", std::move(edges)}};
}

Network network_from_json(const nlohmann::json& j) {
    try {
        Graph graph(j.at("nodes").get<int>());
        for (const auto& e : j.at("edges")) {
            if (!graph.add_edge(e.at("i").get<int>() - 1, e.at("j").get<int>() - 1)) {
                throw ParseError("duplicate edge in JSON network");
            }
        }
        Network net(std::move(graph));
        for (const auto& e : j.at("edges")) {
            const int a = e.at("i").get<int>() - 1;
            const int b = e.at("j").get<int>() - 1;
            const double fwd = e.at("alpha_ij").get<double>();
            net.alpha.set(a, b, fwd);
            net.alpha.set(b, a, e.contains("alpha_ji") ? e.at("alpha_ji").get<double>() : fwd);
        }
        return net;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("invalid network JSON: ") + ex.what());
    }
}

Network load_network_file(const std::string& path, double a0) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    auto ends_with = [&](std::string_view suffix) {
        return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".m")) {
        std::stringstream buf;
        buf << in.rdbuf();
        auto topo = parse_matpower_branches(buf.str());
        if (!(a0 > 0.0)) {
            throw std::invalid_argument("MATPOWER topology needs a positive --alpha0");
        }
        auto alpha = uniform_alpha(topo.graph, a0);
        return Network(std::move(topo.graph), std::move(alpha));
    }
    Network net = [&] {
        if (!ends_with(".json")) {
            return load_edge_list(in);
        }
        auto doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded()) {
            throw ParseError("malformed JSON in " + path);
        }
        return network_from_json(doc);
    }();
    if (a0 > 0.0) {
        net.alpha = uniform_alpha(net.graph, a0);
    }
    return net;
}

}  // namespace netcpd
