#pragma once

#include <set>
#include <string>
#include <vector>

#include "kclnet/netlist.hpp"

namespace kclnet {

struct GraphError : std::runtime_error {
    GraphError(std::string error_code, const std::string& msg)
        : std::runtime_error(error_code + ": " + msg), code(std::move(error_code)) {}
    std::string code;  // InvalidCircuit | NoSource | NoGround | Disconnected | CycleDetected | UnknownNode
};

enum class NodeKind { Device, Net, Vsource, Ground };

const char* node_kind_name(NodeKind k);

struct BipartiteEdge {
    int device_node;  // index into CircuitGraph nodes
    int net_node;
    std::string pin_role;
};

// Undirected device/net incidence graph. Device nodes come first, then nets.
struct CircuitGraph {
    struct Node {
        NodeKind kind;       // Device or Vsource on the device side, Net on the other
        std::string id;
        int circuit_index;   // into Circuit::devices or Circuit::nets
    };
    std::vector<Node> nodes;
    std::vector<BipartiteEdge> edges;
    int device_count = 0;
    int net_count = 0;
};

struct DagArc {
    int src;
    int dst;
    std::string pin_role;
    int multiplicity = 1;
};

struct CircuitDag {
    struct Node {
        NodeKind kind;
        std::string id;
        int circuit_index;  // -1 for the ground sink
    };
    std::vector<Node> nodes;
    std::vector<DagArc> arcs;
    std::vector<std::vector<int>> preds;  // arc indexes, per node
    std::vector<std::vector<int>> succs;
    std::vector<int> source_nodes;        // voltage nodes
    int ground_node = -1;
    std::vector<std::string> dropped;     // ids unreachable from every source

    int in_weight(int node) const;   // sum of incoming multiplicities
    int out_weight(int node) const;
    int node_index(const std::string& id) const;  // -1 if absent
};

struct DepthAssignment {
    std::vector<int> depth;               // per dag node
    std::vector<std::vector<int>> layers; // L_0 .. L_d
    int max_depth = 0;
};

CircuitGraph build_bipartite(const Circuit& c);
CircuitDag to_dag(const CircuitGraph& g, const Circuit& c);
DepthAssignment assign_depths(const CircuitDag& dag);
bool rank_check(const CircuitDag& dag, const DepthAssignment& da);
std::set<int> ancestors(const CircuitDag& dag, int node);

// Stable-key-order JSON with nodes/arcs/max_depth; device labels carry the
// canonical netlist statement so a graph file is self-contained.
std::string dag_to_json(const Circuit& c, const CircuitDag& dag, const DepthAssignment& da);

// Rebuilds the circuit from the device statements embedded in a graph JSON
// file, so compiled graphs can be fed back in wherever netlists are accepted.
Circuit circuit_from_graph_json(const std::string& json_text);

}  // namespace kclnet
