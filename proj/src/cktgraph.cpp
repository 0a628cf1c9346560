#include "kclnet/cktgraph.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "json.hpp"

namespace kclnet {

const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Device: return "device";
        case NodeKind::Net: return "net";
        case NodeKind::Vsource: return "vsource";
        case NodeKind::Ground: return "ground";
    }
    return "?";
}

int CircuitDag::in_weight(int node) const {
    int w = 0;
    for (int a : preds[node]) w += arcs[a].multiplicity;
    return w;
}

int CircuitDag::out_weight(int node) const {
    int w = 0;
    for (int a : succs[node]) w += arcs[a].multiplicity;
    return w;
}

int CircuitDag::node_index(const std::string& id) const {
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return static_cast<int>(i);
    return -1;
}

CircuitGraph build_bipartite(const Circuit& c) {
    ValidationReport rep = validate_circuit(c);
    if (!rep.ok) {
        std::string detail;
        for (const Issue& i : rep.issues)
            if (i.severity == Severity::Error) detail += i.code + "(" + i.location + ") ";
        throw GraphError("InvalidCircuit", detail);
    }

    CircuitGraph g;
    for (size_t i = 0; i < c.devices.size(); ++i) {
        NodeKind kind =
            c.devices[i].kind == DeviceKind::Vsource ? NodeKind::Vsource : NodeKind::Device;
        g.nodes.push_back({kind, c.devices[i].id, static_cast<int>(i)});
    }
    g.device_count = static_cast<int>(c.devices.size());
    for (size_t i = 0; i < c.nets.size(); ++i)
        g.nodes.push_back({NodeKind::Net, c.nets[i].id, static_cast<int>(i)});
    g.net_count = static_cast<int>(c.nets.size());

    for (size_t i = 0; i < c.devices.size(); ++i) {
        for (const Pin& p : c.devices[i].pins) {
            int ni = c.net_index(p.net);
            g.edges.push_back({static_cast<int>(i), g.device_count + ni, p.role});
        }
    }
    return g;
}

CircuitDag to_dag(const CircuitGraph& g, const Circuit& c) {
    if (std::none_of(g.nodes.begin(), g.nodes.end(),
                     [](const CircuitGraph::Node& n) { return n.kind == NodeKind::Vsource; }))
        throw GraphError("NoSource", "no voltage source node");
    int ground_net = -1;
    for (size_t i = 0; i < g.nodes.size(); ++i)
        if (g.nodes[i].kind == NodeKind::Net && c.nets[g.nodes[i].circuit_index].is_ground)
            ground_net = static_cast<int>(i);
    if (ground_net < 0) throw GraphError("NoGround", "no ground net");

    const int n_bip = static_cast<int>(g.nodes.size());
    const int ground_sink = n_bip;  // appended sink node

    // Undirected working edges, with the voltage-source return edges to the
    // ground net removed; their role is taken over by the sink attachment.
    // Parallel pins between the same device/net pair collapse with a count.
    std::map<std::pair<int, int>, std::pair<std::string, int>> undirected;
    for (const BipartiteEdge& e : g.edges) {
        if (g.nodes[e.device_node].kind == NodeKind::Vsource && e.net_node == ground_net) continue;
        auto key = std::make_pair(e.device_node, e.net_node);
        auto it = undirected.find(key);
        if (it == undirected.end())
            undirected.emplace(key, std::make_pair(e.pin_role, 1));
        else
            it->second.second += 1;
    }

    std::vector<std::vector<int>> adj(n_bip + 1);
    for (const auto& [key, val] : undirected) {
        adj[key.first].push_back(key.second);
        adj[key.second].push_back(key.first);
    }
    adj[ground_net].push_back(ground_sink);
    adj[ground_sink].push_back(ground_net);

    // Multi-source BFS layering of H; all voltage nodes sit in layer 0.
    std::vector<int> layer(n_bip + 1, -1);
    std::deque<int> queue;
    for (int i = 0; i < n_bip; ++i) {
        if (g.nodes[i].kind == NodeKind::Vsource) {
            layer[i] = 0;
            queue.push_back(i);
        }
    }
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (int w : adj[u]) {
            if (layer[w] < 0) {
                layer[w] = layer[u] + 1;
                queue.push_back(w);
            }
        }
    }
    if (layer[ground_net] < 0)
        throw GraphError("Disconnected", "ground net unreachable from every source");

    CircuitDag dag;
    std::vector<int> remap(n_bip + 1, -1);
    for (int i = 0; i < n_bip; ++i) {
        if (layer[i] < 0) {
            dag.dropped.push_back(g.nodes[i].id);
            continue;
        }
        remap[i] = static_cast<int>(dag.nodes.size());
        dag.nodes.push_back({g.nodes[i].kind, g.nodes[i].id, g.nodes[i].circuit_index});
        if (g.nodes[i].kind == NodeKind::Vsource) dag.source_nodes.push_back(remap[i]);
    }
    remap[ground_sink] = static_cast<int>(dag.nodes.size());
    dag.nodes.push_back({NodeKind::Ground, "GND", -1});
    dag.ground_node = remap[ground_sink];

    auto orient = [&layer](int u, int w) {
        if (layer[u] < layer[w]) return std::make_pair(u, w);
        if (layer[w] < layer[u]) return std::make_pair(w, u);
        // Same-layer ties cannot occur with the bipartite layering; the
        // deterministic fallback keeps the construction total anyway.
        return std::make_pair(std::min(u, w), std::max(u, w));
    };

    for (const auto& [key, val] : undirected) {
        if (remap[key.first] < 0 || remap[key.second] < 0) continue;
        auto [src, dst] = orient(key.first, key.second);
        dag.arcs.push_back({remap[src], remap[dst], val.first, val.second});
    }
    dag.arcs.push_back({remap[ground_net], dag.ground_node, "gnd", 1});
    std::sort(dag.arcs.begin(), dag.arcs.end(), [](const DagArc& a, const DagArc& b) {
        return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
    });

    dag.preds.assign(dag.nodes.size(), {});
    dag.succs.assign(dag.nodes.size(), {});
    for (size_t i = 0; i < dag.arcs.size(); ++i) {
        dag.preds[dag.arcs[i].dst].push_back(static_cast<int>(i));
        dag.succs[dag.arcs[i].src].push_back(static_cast<int>(i));
    }

    // Kahn count-down; any leftover node means an orientation bug.
    std::vector<int> indeg(dag.nodes.size());
    for (size_t i = 0; i < dag.nodes.size(); ++i) indeg[i] = static_cast<int>(dag.preds[i].size());
    std::deque<int> ready;
    for (size_t i = 0; i < dag.nodes.size(); ++i)
        if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
    size_t seen = 0;
    while (!ready.empty()) {
        int u = ready.front();
        ready.pop_front();
        ++seen;
        for (int a : dag.succs[u])
            if (--indeg[dag.arcs[a].dst] == 0) ready.push_back(dag.arcs[a].dst);
    }
    if (seen != dag.nodes.size()) throw GraphError("CycleDetected", "orientation produced a cycle");
    return dag;
}

DepthAssignment assign_depths(const CircuitDag& dag) {
    const int n = static_cast<int>(dag.nodes.size());
    DepthAssignment da;
    da.depth.assign(n, 0);

    std::vector<int> indeg(n);
    for (int i = 0; i < n; ++i) indeg[i] = static_cast<int>(dag.preds[i].size());
    std::deque<int> ready;
    for (int i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push_back(i);
    int seen = 0;
    while (!ready.empty()) {
        int u = ready.front();
        ready.pop_front();
        ++seen;
        for (int a : dag.succs[u]) {
            int w = dag.arcs[a].dst;
            da.depth[w] = std::max(da.depth[w], da.depth[u] + 1);
            if (--indeg[w] == 0) ready.push_back(w);
        }
    }
    if (seen != n) throw GraphError("CycleDetected", "depth assignment on cyclic input");

    // Ground is pinned one past the deepest regular node, making it the
    // unique deepest layer.
    int deepest = 0;
    for (int i = 0; i < n; ++i)
        if (i != dag.ground_node) deepest = std::max(deepest, da.depth[i]);
    if (dag.ground_node >= 0) da.depth[dag.ground_node] = deepest + 1;
    da.max_depth = deepest + (dag.ground_node >= 0 ? 1 : 0);

    da.layers.assign(da.max_depth + 1, {});
    for (int i = 0; i < n; ++i) da.layers[da.depth[i]].push_back(i);
    return da;
}

bool rank_check(const CircuitDag& dag, const DepthAssignment& da) {
    for (const DagArc& a : dag.arcs)
        if (!(da.depth[a.src] < da.depth[a.dst])) return false;
    for (size_t i = 0; i < dag.nodes.size(); ++i) {
        if (dag.nodes[i].kind == NodeKind::Vsource && !dag.preds[i].empty()) return false;
        if (dag.nodes[i].kind == NodeKind::Ground && !dag.succs[i].empty()) return false;
    }
    return true;
}

std::set<int> ancestors(const CircuitDag& dag, int node) {
    if (node < 0 || node >= static_cast<int>(dag.nodes.size()))
        throw GraphError("UnknownNode", std::to_string(node));
    std::set<int> out;
    std::deque<int> stack{node};
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int a : dag.preds[u]) {
            int p = dag.arcs[a].src;
            if (out.insert(p).second) stack.push_back(p);
        }
    }
    out.erase(node);
    return out;
}

std::string dag_to_json(const Circuit& c, const CircuitDag& dag, const DepthAssignment& da) {
    nlohmann::ordered_json j;
    j["nodes"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < dag.nodes.size(); ++i) {
        const auto& n = dag.nodes[i];
        nlohmann::ordered_json jn;
        jn["id"] = n.id;
        jn["kind"] = node_kind_name(n.kind);
        jn["depth"] = da.depth[i];
        std::string label;
        if (n.kind == NodeKind::Net)
            label = "net " + n.id;
        else if (n.kind == NodeKind::Ground)
            label = "ground";
        else {
            Circuit one;
            one.devices.push_back(c.devices[n.circuit_index]);
            label = serialize_circuit(one);
            if (!label.empty() && label.back() == '\n') label.pop_back();
        }
        jn["label"] = label;
        j["nodes"].push_back(std::move(jn));
    }
    j["arcs"] = nlohmann::ordered_json::array();
    for (const DagArc& a : dag.arcs) {
        nlohmann::ordered_json ja;
        ja["src"] = dag.nodes[a.src].id;
        ja["dst"] = dag.nodes[a.dst].id;
        ja["pin_role"] = a.pin_role;
        ja["multiplicity"] = a.multiplicity;
        j["arcs"].push_back(std::move(ja));
    }
    j["max_depth"] = da.max_depth;
    return j.dump(2) + "\n";
}

Circuit circuit_from_graph_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    std::string netlist;
    for (const auto& jn : j.at("nodes")) {
        std::string kind = jn.at("kind").get<std::string>();
        if (kind == "device" || kind == "vsource")
            netlist += jn.at("label").get<std::string>() + "\n";
    }
    return parse_netlist(netlist);
}

}  // namespace kclnet
