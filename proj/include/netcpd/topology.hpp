#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace netcpd {

/// Nodes are 0-based internally. All text formats use 1-based indices.
using NodeId = int;

/// Raised for malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Undirected simple graph.
class Graph {
public:
    explicit Graph(int num_nodes);

    /// Returns false when the edge already exists. Throws on self-loops and
    /// out-of-range endpoints.
    bool add_edge(NodeId i, NodeId j);

    int num_nodes() const noexcept { return static_cast<int>(adjacency_.size()); }
    std::size_t num_edges() const noexcept { return num_edges_; }
    bool has_edge(NodeId i, NodeId j) const;

    /// Sorted neighbor list C(i).
    const std::vector<NodeId>& neighbors(NodeId i) const;
    int degree(NodeId i) const { return static_cast<int>(neighbors(i).size()); }

    /// Edges as (i, j) with i < j, lexicographically sorted.
    std::vector<std::pair<NodeId, NodeId>> edges() const;

    bool contains(NodeId i) const noexcept { return i >= 0 && i < num_nodes(); }

    friend bool operator==(const Graph&, const Graph&) = default;

private:
    void check_node(NodeId i) const;

    std::vector<std::vector<NodeId>> adjacency_;
    std::size_t num_edges_ = 0;
};

/// Pairwise influence rates. `rate(from, to)` is the hazard contribution of a
/// failed `from` on a not-yet-failed `to`. Rates are only stored on edges.
class InfluenceMatrix {
public:
    explicit InfluenceMatrix(const Graph& graph);

    double rate(NodeId from, NodeId to) const { return rates_[index(from, to)]; }

    /// Throws on negative or non-finite values, or when (from, to) is not an edge.
    void set(NodeId from, NodeId to, double value);

    int num_nodes() const noexcept { return n_; }

    /// Sum of rate(from, k) over all k.
    double out_rate(NodeId from) const;

    friend bool operator==(const InfluenceMatrix&, const InfluenceMatrix&) = default;

private:
    std::size_t index(NodeId from, NodeId to) const;

    int n_;
    std::vector<double> rates_;
    std::vector<char> is_edge_;
};

/// Graph bundled with its influence rates.
struct Network {
    Graph graph;
    InfluenceMatrix alpha;

    explicit Network(Graph g) : graph(std::move(g)), alpha(graph) {}
    Network(Graph g, InfluenceMatrix a);

    int num_nodes() const noexcept { return graph.num_nodes(); }

    friend bool operator==(const Network&, const Network&) = default;
};

/// Parses `i,j,alpha_ij[,alpha_ji]` lines. Blank lines and lines starting with
/// '#' are skipped. A missing reverse rate copies the forward rate.
Network load_edge_list(std::istream& in);

/// Emits one `i,j,alpha_ij,alpha_ji` line per edge, readable by load_edge_list.
void write_edge_list(std::ostream& out, const Network& net);

struct MatpowerTopology {
    Graph graph;
    /// bus_ids[k] is the original bus number of dense node k.
    std::vector<long> bus_ids;
};

/// Extracts the topology from the `mpc.branch = [ ... ];` block of a MATPOWER
/// case file. Buses are renumbered densely in increasing bus-id order and
/// parallel branches collapse to one edge.
MatpowerTopology parse_matpower_branches(std::string_view text);

/// Same rate `a0` on both directions of every edge.
InfluenceMatrix uniform_alpha(const Graph& graph, double a0);

Graph complete_graph(int n);
Graph star_graph(int num_leaves);  // node 0 is the hub

/// Induced subgraph on the first `count` nodes reached by BFS from `root`.
/// `kept` receives the original ids of the retained nodes in new-id order.
Graph bfs_subgraph(const Graph& graph, NodeId root, int count, std::vector<NodeId>* kept = nullptr);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

/// Loads a network from an edge-list CSV, MATPOWER `.m` or JSON file, chosen
/// by extension. MATPOWER input has no rates; `a0 > 0` assigns uniform rates
/// (and overrides rates from other formats).
Network load_network_file(const std::string& path, double a0 = 0.0);

}  // namespace netcpd
