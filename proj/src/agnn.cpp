#include "kclnet/agnn.hpp"

#include <cmath>

#include "kclnet/rng.hpp"

namespace kclnet {

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    double s = std::sqrt(6.0 / (rows + cols));
    for (size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.uniform(-s, s);
    return m;
}

int kind_slot(const CircuitDag::Node& n, const Circuit& c) {
    switch (n.kind) {
        case NodeKind::Net: return 8;
        case NodeKind::Vsource: return 9;
        case NodeKind::Ground: return 10;
        case NodeKind::Device:
            switch (c.devices[n.circuit_index].kind) {
                case DeviceKind::Nmos: return 0;
                case DeviceKind::Pmos: return 1;
                case DeviceKind::Npn: return 2;
                case DeviceKind::Pnp: return 3;
                case DeviceKind::Diode: return 4;
                case DeviceKind::Resistor: return 5;
                case DeviceKind::Capacitor: return 6;
                case DeviceKind::Inductor: return 7;
                default: return 0;
            }
    }
    return 0;
}

}  // namespace

AgnnParams AgnnParams::init(const AgnnConfig& cfg, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x494e4954ull));
    AgnnParams p;
    p.w_in = glorot(cfg.hidden_size, cfg.feature_dim, rng);
    p.b_in = Matrix(cfg.hidden_size, 1);
    for (int l = 0; l < cfg.num_layers; ++l) {
        Layer layer;
        layer.w_msg = glorot(cfg.hidden_size, cfg.hidden_size, rng);
        layer.w_init = glorot(cfg.hidden_size, cfg.hidden_size, rng);
        layer.bias = Matrix(cfg.hidden_size, 1);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

void AgnnParams::visit(const std::function<void(Matrix&)>& fn) {
    fn(w_in);
    fn(b_in);
    for (Layer& l : layers) {
        fn(l.w_msg);
        fn(l.w_init);
        fn(l.bias);
    }
}

void AgnnParams::visit(const std::function<void(const Matrix&)>& fn) const {
    fn(w_in);
    fn(b_in);
    for (const Layer& l : layers) {
        fn(l.w_msg);
        fn(l.w_init);
        fn(l.bias);
    }
}

BoundAgnn bind_agnn(Tape& tape, const AgnnParams& p) {
    BoundAgnn b;
    b.w_in = tape.leaf(p.w_in);
    b.b_in = tape.leaf(p.b_in);
    for (const AgnnParams::Layer& l : p.layers)
        b.layers.push_back({tape.leaf(l.w_msg), tape.leaf(l.w_init), tape.leaf(l.bias)});
    return b;
}

BoundAgnn bound_from_ids(const std::vector<int>& ids) {
    if (ids.size() < 2 || (ids.size() - 2) % 3 != 0)
        throw ShapeError("bound_from_ids needs 2 + 3k leaves");
    BoundAgnn b;
    b.w_in = ids[0];
    b.b_in = ids[1];
    for (size_t i = 2; i + 3 <= ids.size(); i += 3)
        b.layers.push_back({ids[i], ids[i + 1], ids[i + 2]});
    return b;
}

CompiledCircuit compile_circuit(Circuit c, const std::string& name) {
    CompiledCircuit out;
    out.name = name.empty() ? c.name : name;
    out.graph = build_bipartite(c);
    out.dag = to_dag(out.graph, c);
    out.depths = assign_depths(out.dag);
    out.features = node_features(out.dag, c);
    out.circuit = std::move(c);
    return out;
}

Matrix node_features(const CircuitDag& dag, const Circuit& c) {
    const int n = static_cast<int>(dag.nodes.size());
    Matrix x(n, kFeatureDim);
    for (int i = 0; i < n; ++i) {
        const auto& node = dag.nodes[i];
        x(i, kind_slot(node, c)) = 1.0;
        if (node.kind == NodeKind::Device || node.kind == NodeKind::Vsource) {
            const Device& d = c.devices[node.circuit_index];
            if (auto w = d.param("W")) x(i, kNodeKinds + 0) = std::log10(1.0 + *w / 1e-9);
            if (auto l = d.param("L")) x(i, kNodeKinds + 1) = std::log10(1.0 + *l / 1e-9);
            if (auto r = d.param("resistance")) x(i, kNodeKinds + 2) = std::log10(1.0 + *r);
            if (auto cp = d.param("capacitance")) x(i, kNodeKinds + 3) = std::log10(1.0 + *cp * 1e12);
            if (auto li = d.param("inductance")) x(i, kNodeKinds + 4) = std::log10(1.0 + *li * 1e9);
            if (auto v = d.param("volts")) x(i, kNodeKinds + 5) = *v;
        }
        x(i, kNodeKinds + 6) = dag.in_weight(i) / 10.0;
        x(i, kNodeKinds + 7) = dag.out_weight(i) / 10.0;
    }
    return x;
}

namespace {

std::vector<int> project_inputs(Tape& tape, const BoundAgnn& p, const Matrix& features) {
    std::vector<int> x0(features.rows());
    for (int i = 0; i < features.rows(); ++i) {
        Matrix row(features.cols(), 1);
        for (int j = 0; j < features.cols(); ++j) row(j, 0) = features(i, j);
        x0[i] = tape.affine(p.w_in, tape.leaf(std::move(row)), p.b_in);
    }
    return x0;
}

}  // namespace

std::vector<int> forward_async(Tape& tape, const BoundAgnn& p, const CircuitDag& dag,
                               const DepthAssignment& da, const Matrix& features,
                               ForwardTrace* trace) {
    const int n = static_cast<int>(dag.nodes.size());
    if (features.rows() != n) throw ShapeError("feature rows != node count");
    if (static_cast<int>(da.depth.size()) != n)
        throw GraphError("UnassignedDepth", "depth table does not match graph");
    const int hidden = tape.value(p.b_in).rows();

    std::vector<int> inw(n), outw(n);
    for (int i = 0; i < n; ++i) {
        inw[i] = dag.in_weight(i);
        outw[i] = dag.out_weight(i);
    }

    std::vector<int> x0 = project_inputs(tape, p, features);
    std::vector<int> h_prev = x0;
    std::vector<int> h_next(n, -1);

    for (size_t sweep = 0; sweep < p.layers.size(); ++sweep) {
        const auto& lp = p.layers[sweep];
        for (const std::vector<int>& layer_nodes : da.layers) {
            for (int i : layer_nodes) {
                std::vector<int> msgs;
                std::vector<double> coeffs;
                for (int a : dag.preds[i]) {
                    int u = dag.arcs[a].src;
                    double norm = std::sqrt(static_cast<double>(inw[i] + 1) *
                                            static_cast<double>(outw[u] + 1));
                    msgs.push_back(h_prev[u]);
                    coeffs.push_back(dag.arcs[a].multiplicity / norm);
                }
                int e = tape.weighted_sum(std::move(msgs), std::move(coeffs), hidden, 1);
                h_next[i] = tape.gcn_combine(lp.w_msg, e, lp.w_init, x0[i], lp.bias);
                if (trace) trace->writes.emplace_back(i, static_cast<int>(sweep));
            }
        }
        h_prev = h_next;
    }
    return h_prev;
}

std::vector<int> forward_sync(Tape& tape, const BoundAgnn& p, const CircuitDag& dag,
                              const Matrix& features) {
    const int n = static_cast<int>(dag.nodes.size());
    if (features.rows() != n) throw ShapeError("feature rows != node count");
    const int hidden = tape.value(p.b_in).rows();

    std::vector<std::vector<std::pair<int, int>>> nbrs(n);  // (neighbor, multiplicity)
    for (const DagArc& a : dag.arcs) {
        nbrs[a.src].emplace_back(a.dst, a.multiplicity);
        nbrs[a.dst].emplace_back(a.src, a.multiplicity);
    }
    std::vector<int> deg(n, 0);
    for (int i = 0; i < n; ++i)
        for (const auto& [w, m] : nbrs[i]) deg[i] += m;

    std::vector<int> x0 = project_inputs(tape, p, features);
    std::vector<int> h_prev = x0;
    std::vector<int> h_next(n, -1);

    for (const auto& lp : p.layers) {
        for (int i = 0; i < n; ++i) {
            std::vector<int> msgs;
            std::vector<double> coeffs;
            for (const auto& [u, mult] : nbrs[i]) {
                double norm = std::sqrt(static_cast<double>(deg[i] + 1) *
                                        static_cast<double>(deg[u] + 1));
                msgs.push_back(h_prev[u]);
                coeffs.push_back(mult / norm);
            }
            int e = tape.weighted_sum(std::move(msgs), std::move(coeffs), hidden, 1);
            h_next[i] = tape.gcn_combine(lp.w_msg, e, lp.w_init, x0[i], lp.bias);
        }
        h_prev = h_next;
    }
    return h_prev;
}

int graph_readout(Tape& tape, const std::vector<int>& node_vars) {
    if (node_vars.empty()) throw GraphError("EmptyGraph", "readout of an empty graph");
    const Matrix& first = tape.value(node_vars.front());
    std::vector<double> coeffs(node_vars.size(), 1.0 / static_cast<double>(node_vars.size()));
    return tape.weighted_sum(node_vars, std::move(coeffs), first.rows(), first.cols());
}

}  // namespace kclnet
