#include <deque>
#include <map>

#include "doctest.h"
#include "kclnet/cktgraph.hpp"
#include "kclnet/synthdata.hpp"

using namespace kclnet;

namespace {

// Two-coloring oracle for bipartiteness, independent of the builder.
bool is_bipartite(const CircuitGraph& g) {
    std::vector<int> color(g.nodes.size(), -1);
    std::vector<std::vector<int>> adj(g.nodes.size());
    for (const BipartiteEdge& e : g.edges) {
        adj[e.device_node].push_back(e.net_node);
        adj[e.net_node].push_back(e.device_node);
    }
    for (size_t s = 0; s < g.nodes.size(); ++s) {
        if (color[s] >= 0) continue;
        color[s] = 0;
        std::deque<int> q{static_cast<int>(s)};
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (int w : adj[u]) {
                if (color[w] < 0) {
                    color[w] = 1 - color[u];
                    q.push_back(w);
                } else if (color[w] == color[u]) {
                    return false;
                }
            }
        }
    }
    return true;
}

// DFS three-coloring cycle oracle, independent of the Kahn check inside
// to_dag.
bool has_cycle(const CircuitDag& dag) {
    enum { White, Gray, Black };
    std::vector<int> state(dag.nodes.size(), White);
    std::vector<std::pair<int, size_t>> stack;
    for (size_t s = 0; s < dag.nodes.size(); ++s) {
        if (state[s] != White) continue;
        stack.push_back({static_cast<int>(s), 0});
        state[s] = Gray;
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            if (next < dag.succs[u].size()) {
                int w = dag.arcs[dag.succs[u][next++]].dst;
                if (state[w] == Gray) return true;
                if (state[w] == White) {
                    state[w] = Gray;
                    stack.push_back({w, 0});
                }
            } else {
                state[u] = Black;
                stack.pop_back();
            }
        }
    }
    return false;
}

// Reverse breadth-first reachability, independent of ancestors().
std::set<int> reverse_bfs(const CircuitDag& dag, int node) {
    std::set<int> seen;
    std::deque<int> q{node};
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (const DagArc& a : dag.arcs) {
            if (a.dst == u && !seen.count(a.src)) {
                seen.insert(a.src);
                q.push_back(a.src);
            }
        }
    }
    seen.erase(node);
    return seen;
}

const char* kSeriesChain =
    "V1 vdd 0 5\n"
    "R1 vdd mid 1k\n"
    "R2 mid 0 2k\n";

}  // namespace

TEST_CASE("bipartite graph of the series chain") {
    Circuit c = parse_netlist(kSeriesChain);
    CircuitGraph g = build_bipartite(c);
    CHECK(g.device_count == 3);
    CHECK(g.net_count == 3);
    CHECK(g.edges.size() == 6);  // sum of pin arities
    CHECK(is_bipartite(g));
    for (const BipartiteEdge& e : g.edges) {
        CHECK(g.nodes[e.device_node].kind != NodeKind::Net);
        CHECK(g.nodes[e.net_node].kind == NodeKind::Net);
    }
}

TEST_CASE("build_bipartite rejects invalid circuits") {
    Circuit c = parse_netlist("R1 a 0 1k\nR2 a 0 2k\n");  // no source
    CHECK_THROWS_AS(build_bipartite(c), GraphError);
}

TEST_CASE("series chain converts to the expected arc chain") {
    Circuit c = parse_netlist(kSeriesChain);
    CircuitDag dag = to_dag(build_bipartite(c), c);
    CHECK(dag.nodes.size() == 7);  // V1 vdd R1 mid R2 net0 GND
    CHECK(dag.arcs.size() == 6);

    auto arc_exists = [&dag](const std::string& src, const std::string& dst) {
        for (const DagArc& a : dag.arcs)
            if (dag.nodes[a.src].id == src && dag.nodes[a.dst].id == dst) return true;
        return false;
    };
    CHECK(arc_exists("V1", "vdd"));
    CHECK(arc_exists("vdd", "R1"));
    CHECK(arc_exists("R1", "mid"));
    CHECK(arc_exists("mid", "R2"));
    CHECK(arc_exists("R2", "0"));
    CHECK(arc_exists("0", "GND"));
    CHECK_FALSE(has_cycle(dag));

    DepthAssignment da = assign_depths(dag);
    std::map<std::string, int> depth;
    for (size_t i = 0; i < dag.nodes.size(); ++i) depth[dag.nodes[i].id] = da.depth[i];
    CHECK(depth["V1"] == 0);
    CHECK(depth["vdd"] == 1);
    CHECK(depth["R1"] == 2);
    CHECK(depth["mid"] == 3);
    CHECK(depth["R2"] == 4);
    CHECK(depth["0"] == 5);
    CHECK(depth["GND"] == 6);
    CHECK(da.max_depth == 6);
    CHECK(rank_check(dag, da));
}

TEST_CASE("parallel resistors orient source side to ground side") {
    Circuit c = parse_netlist("V1 vdd 0 5\nR1 vdd 0 1k\nR2 vdd 0 2k\n");
    CircuitDag dag = to_dag(build_bipartite(c), c);
    CHECK_FALSE(has_cycle(dag));
    DepthAssignment da = assign_depths(dag);
    int r1 = dag.node_index("R1");
    int r2 = dag.node_index("R2");
    int vdd = dag.node_index("vdd");
    int net0 = dag.node_index("0");
    CHECK(da.depth[vdd] < da.depth[r1]);
    CHECK(da.depth[r1] < da.depth[net0]);
    CHECK(da.depth[r1] == da.depth[r2]);
    CHECK(rank_check(dag, da));
}

TEST_CASE("voltage sources have no incoming arcs, ground no outgoing") {
    Circuit c = parse_netlist(kSeriesChain);
    CircuitDag dag = to_dag(build_bipartite(c), c);
    for (int s : dag.source_nodes) CHECK(dag.preds[s].empty());
    CHECK(dag.succs[dag.ground_node].empty());
    CHECK(dag.nodes[dag.ground_node].kind == NodeKind::Ground);
}

TEST_CASE("rank_check detects injected violations") {
    Circuit c = parse_netlist(kSeriesChain);
    CircuitDag dag = to_dag(build_bipartite(c), c);
    DepthAssignment da = assign_depths(dag);
    CHECK(rank_check(dag, da));

    CircuitDag reversed = dag;
    std::swap(reversed.arcs[2].src, reversed.arcs[2].dst);
    CHECK_FALSE(rank_check(reversed, da));

    CircuitDag looped = dag;
    looped.arcs.push_back({3, 3, "loop", 1});
    CHECK_FALSE(rank_check(looped, da));
}

TEST_CASE("ancestors of the chain") {
    Circuit c = parse_netlist(kSeriesChain);
    CircuitDag dag = to_dag(build_bipartite(c), c);
    std::set<int> anc = ancestors(dag, dag.ground_node);
    CHECK(anc.size() == 6);  // everything above GND
    CHECK(ancestors(dag, dag.source_nodes[0]).empty());
    CHECK_THROWS_AS(ancestors(dag, 99), GraphError);

    for (size_t n = 0; n < dag.nodes.size(); ++n)
        CHECK(ancestors(dag, static_cast<int>(n)) == reverse_bfs(dag, static_cast<int>(n)));
}

TEST_CASE("unreachable islands are dropped and reported") {
    // Two capacitors forming an island with no path from the source.
    Circuit c = parse_netlist("V1 vdd 0 5\nR1 vdd 0 1k\nC1 islanda islandb 1p\nC2 islanda islandb 2p\n");
    CircuitDag dag = to_dag(build_bipartite(c), c);
    CHECK(dag.dropped.size() == 4);  // C1 C2 islanda islandb
    CHECK(dag.node_index("C1") == -1);
    CHECK_FALSE(has_cycle(dag));
}

TEST_CASE("parallel pins collapse into one arc with multiplicity") {
    Circuit c = parse_netlist("V1 vdd 0 5\nR1 vdd mid 1k\nM1 mid mid 0 0 NMOS\n");
    CircuitDag dag = to_dag(build_bipartite(c), c);
    int m1 = dag.node_index("M1");
    int mid = dag.node_index("mid");
    int found = 0;
    for (const DagArc& a : dag.arcs)
        if (a.src == mid && a.dst == m1) {
            ++found;
            CHECK(a.multiplicity == 2);  // drain and gate share the net
        }
    CHECK(found == 1);
}

TEST_CASE("graph properties over random generated circuits") {
    for (int i = 0; i < 100; ++i) {
        Circuit c = gen_circuit(i % kNumClasses, GenParams{2, 8}, 1000 + i);
        CircuitGraph g = build_bipartite(c);
        CHECK(is_bipartite(g));
        CircuitDag dag = to_dag(g, c);
        CHECK_FALSE(has_cycle(dag));
        DepthAssignment da = assign_depths(dag);
        CHECK(rank_check(dag, da));
        for (const DagArc& a : dag.arcs) {
            CHECK(da.depth[a.src] < da.depth[a.dst]);
            // bipartite alternation survives conversion
            bool src_devlike = dag.nodes[a.src].kind != NodeKind::Net;
            bool dst_devlike = dag.nodes[a.dst].kind != NodeKind::Net;
            CHECK(src_devlike != dst_devlike);
        }
        // layers partition the node set
        size_t total = 0;
        for (const auto& layer : da.layers) total += layer.size();
        CHECK(total == dag.nodes.size());
        // ground is the unique deepest node
        CHECK(da.layers[da.max_depth].size() == 1);
        CHECK(da.layers[da.max_depth][0] == dag.ground_node);
    }
}

TEST_CASE("compilation is deterministic") {
    Circuit c1 = gen_circuit(3, GenParams{}, 42);
    Circuit c2 = gen_circuit(3, GenParams{}, 42);
    CircuitDag d1 = to_dag(build_bipartite(c1), c1);
    CircuitDag d2 = to_dag(build_bipartite(c2), c2);
    DepthAssignment a1 = assign_depths(d1);
    DepthAssignment a2 = assign_depths(d2);
    CHECK(dag_to_json(c1, d1, a1) == dag_to_json(c2, d2, a2));
}

TEST_CASE("graph json round-trips through the label statements") {
    Circuit c = parse_netlist(kSeriesChain);
    CircuitDag dag = to_dag(build_bipartite(c), c);
    DepthAssignment da = assign_depths(dag);
    std::string json = dag_to_json(c, dag, da);
    Circuit back = circuit_from_graph_json(json);
    CHECK(back.devices.size() == c.devices.size());
    CHECK(back.nets.size() == c.nets.size());
    CHECK(serialize_circuit(back) == serialize_circuit(c));
}
