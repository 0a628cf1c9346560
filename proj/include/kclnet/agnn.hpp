#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kclnet/autodiff.hpp"
#include "kclnet/cktgraph.hpp"
#include "kclnet/tensor.hpp"

namespace kclnet {

// 11 node kinds (8 device kinds + net + vsource + ground), 6 parameter
// slots, 2 degree slots.
constexpr int kNodeKinds = 11;
constexpr int kFeatureDim = kNodeKinds + 6 + 2;

struct AgnnConfig {
    int hidden_size = 64;
    int num_layers = 3;
    std::string activation = "relu";
    double dropout_rate = 0.6;  // finetuning head path only
    int feature_dim = kFeatureDim;
};

struct AgnnParams {
    Matrix w_in;  // hidden x feature_dim
    Matrix b_in;  // hidden x 1
    struct Layer {
        Matrix w_msg;   // hidden x hidden, message transform
        Matrix w_init;  // hidden x hidden, initial-feature transform
        Matrix bias;    // hidden x 1
    };
    std::vector<Layer> layers;

    static AgnnParams init(const AgnnConfig& cfg, uint64_t seed);
    void visit(const std::function<void(Matrix&)>& fn);
    void visit(const std::function<void(const Matrix&)>& fn) const;
    int matrix_count() const { return 2 + 3 * static_cast<int>(layers.size()); }
};

// Tape leaves for one forward pass, bound in visit order.
struct BoundAgnn {
    int w_in = -1;
    int b_in = -1;
    struct Layer {
        int w_msg, w_init, bias;
    };
    std::vector<Layer> layers;
};

BoundAgnn bind_agnn(Tape& tape, const AgnnParams& p);

// Reassembles a binding from leaves created in visit order (w_in, b_in, then
// w_msg/w_init/bias per layer).
BoundAgnn bound_from_ids(const std::vector<int>& ids);

struct CompiledCircuit {
    Circuit circuit;
    CircuitGraph graph;
    CircuitDag dag;
    DepthAssignment depths;
    Matrix features;  // nodes x feature_dim
    std::string name;
};

CompiledCircuit compile_circuit(Circuit c, const std::string& name = "");

Matrix node_features(const CircuitDag& dag, const Circuit& c);

struct ForwardTrace {
    std::vector<std::pair<int, int>> writes;  // (node, sweep)
};

// Depth-ordered sweeps over the DAG. Within sweep s every node aggregates
// its predecessors' sweep s-1 embeddings (sweep 0 reads the projected input
// features), normalized by 1/sqrt((in(i)+1)(out(u)+1)); the combine step
// re-injects the projected input feature each sweep. Returns one tape var
// per node.
std::vector<int> forward_async(Tape& tape, const BoundAgnn& p, const CircuitDag& dag,
                               const DepthAssignment& da, const Matrix& features,
                               ForwardTrace* trace = nullptr);

// Synchronous baseline: every node updates simultaneously per layer over the
// undirected view of the same graph, same combine form.
std::vector<int> forward_sync(Tape& tape, const BoundAgnn& p, const CircuitDag& dag,
                              const Matrix& features);

int graph_readout(Tape& tape, const std::vector<int>& node_vars);

}  // namespace kclnet
