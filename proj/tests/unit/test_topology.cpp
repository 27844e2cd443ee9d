#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "netcpd/topology.hpp"

using namespace netcpd;

namespace {

Network parse(const std::string& text) {
    std::istringstream in(text);
    return load_edge_list(in);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("single edge list line gives a symmetric pair") {
    const auto net = parse("1,2,0.5\n");
    CHECK(net.num_nodes() == 2);
    CHECK(net.graph.num_edges() == 1);
    CHECK(net.graph.has_edge(0, 1));
    CHECK(net.alpha.rate(0, 1) == 0.5);
    CHECK(net.alpha.rate(1, 0) == 0.5);
}

TEST_CASE("two edges give four directed rates") {
    const auto net = parse("1,2,0.2\n1,3,0.3\n");
    CHECK(net.num_nodes() == 3);
    CHECK(net.graph.num_edges() == 2);
    CHECK(net.alpha.rate(0, 1) == 0.2);
    CHECK(net.alpha.rate(1, 0) == 0.2);
    CHECK(net.alpha.rate(0, 2) == 0.3);
    CHECK(net.alpha.rate(2, 0) == 0.3);
    CHECK(net.alpha.rate(1, 2) == 0.0);
    CHECK_FALSE(net.graph.has_edge(1, 2));
}

TEST_CASE("asymmetric rates and comments") {
    const auto net = parse("# header\n\n1,2,0.5,0.25  # trailing\n");
    CHECK(net.alpha.rate(0, 1) == 0.5);
    CHECK(net.alpha.rate(1, 0) == 0.25);
}

TEST_CASE("edge list errors carry line numbers") {
    CHECK_THROWS_AS(parse(""), ParseError);
    CHECK_THROWS_AS(parse("# only comments\n"), ParseError);
    try {
        parse("1,2,0.5\n2,2,0.1\n");
        FAIL("self-loop accepted");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    try {
        parse("1,2,0.5\n\n1,3,-0.1\n");
        FAIL("negative rate accepted");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse("1,2\n"), ParseError);
    CHECK_THROWS_AS(parse("1,x,0.5\n"), ParseError);
    CHECK_THROWS_AS(parse("0,1,0.5\n"), ParseError);
    CHECK_THROWS_AS(parse("1,2,0.5\n2,1,0.5\n"), ParseError);
}

TEST_CASE("edge list round trip") {
    const auto net = parse("1,2,0.5,0.125\n2,3,0.3\n1,4,1e-3\n3,4,0.7,0.1\n");
    std::ostringstream out;
    write_edge_list(out, net);
    const auto again = parse(out.str());
    CHECK(again == net);
}

TEST_CASE("matpower branch block") {
    const std::string two = R"(function mpc = tiny
mpc.bus = [
  1 3 0 0;
  2 1 0 0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1	-360	360;
	2	3	0.01	0.1	0	0	0	0	0	0	1	-360	360; % comment
];
)";
    const auto topo = parse_matpower_branches(two);
    CHECK(topo.graph.num_nodes() == 3);
    CHECK(topo.graph.num_edges() == 2);
    CHECK(topo.graph.has_edge(0, 1));
    CHECK(topo.graph.has_edge(1, 2));
    CHECK(topo.bus_ids == std::vector<long>{1, 2, 3});

    const auto parallel = parse_matpower_branches("mpc.branch = [\n1 2 0;\n1 2 0;\n];\n");
    CHECK(parallel.graph.num_nodes() == 2);
    CHECK(parallel.graph.num_edges() == 1);

    const auto sparse_ids = parse_matpower_branches("mpc.branch = [ 10 7 0; 7 300 0 ];");
    CHECK(sparse_ids.bus_ids == std::vector<long>{7, 10, 300});
    CHECK(sparse_ids.graph.has_edge(0, 1));
    CHECK(sparse_ids.graph.has_edge(0, 2));

    CHECK_THROWS_AS(parse_matpower_branches("mpc.bus = [1 2 3];"), ParseError);
    CHECK_THROWS_AS(parse_matpower_branches("mpc.branch = [\n1 abc 0;\n];"), ParseError);
}

TEST_CASE("case300 fixture") {
    const auto text = slurp(std::string(NETCPD_DATA_DIR) + "/case300.m");
    REQUIRE_FALSE(text.empty());
    const auto topo = parse_matpower_branches(text);
    CHECK(topo.graph.num_nodes() == 300);

    // Independent count of distinct unordered bus pairs in the branch block.
    const auto start = text.find("mpc.branch = [");
    const auto stop = text.find("];", start);
    std::istringstream block(text.substr(start, stop - start));
    std::string line;
    std::getline(block, line);
    std::set<std::pair<long, long>> pairs;
    while (std::getline(block, line)) {
        std::istringstream fields(line);
        long a = 0;
        long b = 0;
        if (fields >> a >> b) {
            pairs.insert({std::min(a, b), std::max(a, b)});
        }
    }
    CHECK(topo.graph.num_edges() == pairs.size());
    CHECK(topo.graph.num_edges() == 409);

    for (int i = 0; i < topo.graph.num_nodes(); ++i) {
        CHECK(topo.graph.degree(i) > 0);
    }
}

TEST_CASE("uniform alpha") {
    const auto g2 = complete_graph(2);
    const auto a2 = uniform_alpha(g2, 0.5);
    CHECK(a2.rate(0, 1) == 0.5);

    const auto g15 = complete_graph(15);
    const auto a15 = uniform_alpha(g15, 0.1);
    int directed = 0;
    for (int i = 0; i < 15; ++i) {
        for (int j = 0; j < 15; ++j) {
            if (a15.rate(i, j) > 0.0) {
                ++directed;
                CHECK(g15.has_edge(i, j));
            }
        }
    }
    CHECK(g15.num_edges() == 105);
    CHECK(directed == 15 * 14);

    CHECK_THROWS_AS(uniform_alpha(g2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(uniform_alpha(g2, -1.0), std::invalid_argument);
}

TEST_CASE("influence only on edges") {
    const auto g = star_graph(3);
    InfluenceMatrix a(g);
    CHECK_THROWS_AS(a.set(1, 2, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(a.set(0, 1, -0.1), std::invalid_argument);
    a.set(0, 1, 0.4);
    a.set(0, 2, 0.1);
    CHECK(a.out_rate(0) == Catch::Approx(0.5));
    CHECK(a.out_rate(1) == 0.0);
}

TEST_CASE("graph construction rules") {
    Graph g(3);
    CHECK(g.add_edge(0, 1));
    CHECK_FALSE(g.add_edge(1, 0));
    CHECK_THROWS(g.add_edge(1, 1));
    CHECK_THROWS(g.add_edge(0, 3));
    CHECK(g.neighbors(1) == std::vector<NodeId>{0});

    const auto star = star_graph(4);
    CHECK(star.num_nodes() == 5);
    CHECK(star.degree(0) == 4);
}

TEST_CASE("bfs subgraph keeps connectivity") {
    const auto text = slurp(std::string(NETCPD_DATA_DIR) + "/case300.m");
    const auto topo = parse_matpower_branches(text);
    std::vector<NodeId> kept;
    const auto sub = bfs_subgraph(topo.graph, 0, 30, &kept);
    CHECK(sub.num_nodes() == 30);
    CHECK(kept.size() == 30);
    CHECK(kept.front() == 0);
    // A BFS prefix is connected: walk it.
    std::vector<char> seen(30, 0);
    std::vector<NodeId> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        const NodeId v = stack.back();
        stack.pop_back();
        for (NodeId u : sub.neighbors(v)) {
            if (!seen[static_cast<std::size_t>(u)]) {
                seen[static_cast<std::size_t>(u)] = 1;
                ++reached;
                stack.push_back(u);
            }
        }
    }
    CHECK(reached == 30);
    for (const auto& [i, j] : sub.edges()) {
        CHECK(topo.graph.has_edge(kept[static_cast<std::size_t>(i)], kept[static_cast<std::size_t>(j)]));
    }
}

TEST_CASE("json round trip and file loading") {
    const auto net = parse("1,2,0.5,0.125\n2,3,0.3\n");
    const auto again = network_from_json(to_json(net));
    CHECK(again == net);

    const auto dir = std::filesystem::temp_directory_path() / "netcpd_topology_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "g.json");
        out << to_json(net).dump();
    }
    CHECK(load_network_file((dir / "g.json").string()) == net);
    const auto overridden = load_network_file((dir / "g.json").string(), 0.9);
    CHECK(overridden.alpha.rate(1, 0) == 0.9);

    const auto grid = load_network_file(std::string(NETCPD_DATA_DIR) + "/case300.m", 0.1);
    CHECK(grid.num_nodes() == 300);
    CHECK_THROWS(load_network_file(std::string(NETCPD_DATA_DIR) + "/case300.m"));
    CHECK_THROWS(load_network_file((dir / "missing.csv").string()));
}
