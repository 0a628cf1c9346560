#include "kclnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "kclnet/cktgraph.hpp"
#include "kclnet/rng.hpp"

namespace kclnet {

namespace {

// cos(pi x), exact at integer and half-integer points.
double cospi(double x) {
    x = std::fabs(std::fmod(x, 2.0));
    if (x == 0.0) return 1.0;
    if (x == 0.5 || x == 1.5) return 0.0;
    if (x == 1.0) return -1.0;
    return std::cos(3.14159265358979323846 * x);
}

nlohmann::ordered_json matrix_to_json(const Matrix& m) {
    nlohmann::ordered_json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data(m.data(), m.data() + m.size());
    j["data"] = data;
    return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) throw HarnessError("BadConfig", "matrix payload size mismatch");
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

std::vector<int> bound_ids(const BoundAgnn& b) {
    std::vector<int> ids{b.w_in, b.b_in};
    for (const auto& l : b.layers) {
        ids.push_back(l.w_msg);
        ids.push_back(l.w_init);
        ids.push_back(l.bias);
    }
    return ids;
}

std::vector<Matrix*> collect_params(AgnnParams& p) {
    std::vector<Matrix*> out;
    p.visit([&out](Matrix& m) { out.push_back(&m); });
    return out;
}

void accumulate(std::vector<Matrix>& into, const std::vector<Matrix>& grads, double scale_by) {
    if (into.empty()) {
        into = grads;
        for (Matrix& g : into)
            for (size_t i = 0; i < g.size(); ++i) g.at_flat(i) *= scale_by;
        return;
    }
    for (size_t i = 0; i < into.size(); ++i) axpy(into[i], scale_by, grads[i]);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

LossConfig PretrainConfig::loss_config() const {
    LossConfig lc;
    lc.temperature = tau;
    lc.top_k = top_k;
    lc.variant = variant;
    lc.augmentation_strength = augmentation_strength;
    lc.positive_in_denominator = !literal_denominator;
    lc.exclude_endpoint_depths = exclude_endpoints;
    lc.gamma = gamma;
    return lc;
}

FinetuneConfig FinetuneConfig::for_task(const std::string& task) {
    FinetuneConfig cfg;
    cfg.task = task;
    if (task == "cls") {
        cfg.lr0 = 0.01;
        cfg.weight_decay = 0.005;
    } else if (task == "det") {
        cfg.lr0 = 0.03;
        cfg.weight_decay = 0.005;
    } else if (task == "ged") {
        cfg.lr0 = 0.01;
        cfg.weight_decay = 0.0025;
    } else {
        throw HarnessError("TaskMismatch", "unknown task " + task);
    }
    return cfg;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    nlohmann::ordered_json j;
    j["config"]["hidden_size"] = ckpt.config.hidden_size;
    j["config"]["num_layers"] = ckpt.config.num_layers;
    j["config"]["activation"] = ckpt.config.activation;
    j["config"]["dropout_rate"] = ckpt.config.dropout_rate;
    j["config"]["feature_dim"] = ckpt.config.feature_dim;
    j["epoch"] = ckpt.epoch;
    j["seed"] = ckpt.seed;
    j["variant"] = ckpt.variant;
    j["loss_history"] = ckpt.loss_history;
    j["encoder"]["w_in"] = matrix_to_json(ckpt.params.w_in);
    j["encoder"]["b_in"] = matrix_to_json(ckpt.params.b_in);
    j["encoder"]["layers"] = nlohmann::ordered_json::array();
    for (const auto& l : ckpt.params.layers) {
        nlohmann::ordered_json jl;
        jl["w_msg"] = matrix_to_json(l.w_msg);
        jl["w_init"] = matrix_to_json(l.w_init);
        jl["bias"] = matrix_to_json(l.bias);
        j["encoder"]["layers"].push_back(std::move(jl));
    }
    if (ckpt.has_cls_head) {
        j["cls_head"]["w"] = matrix_to_json(ckpt.cls_head.w);
        j["cls_head"]["b"] = matrix_to_json(ckpt.cls_head.b);
    }
    if (ckpt.has_det_head) {
        j["det_head"]["w"] = matrix_to_json(ckpt.det_head.w);
        j["det_head"]["b"] = matrix_to_json(ckpt.det_head.b);
    }
    if (ckpt.has_ged_head) {
        j["ged_head"]["w"] = matrix_to_json(ckpt.ged_head.w);
        j["ged_head"]["b"] = matrix_to_json(ckpt.ged_head.b);
    }
    return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Checkpoint ckpt;
    ckpt.config.hidden_size = j.at("config").at("hidden_size").get<int>();
    ckpt.config.num_layers = j.at("config").at("num_layers").get<int>();
    ckpt.config.activation = j.at("config").at("activation").get<std::string>();
    ckpt.config.dropout_rate = j.at("config").at("dropout_rate").get<double>();
    ckpt.config.feature_dim = j.at("config").at("feature_dim").get<int>();
    ckpt.epoch = j.at("epoch").get<int>();
    ckpt.seed = j.at("seed").get<uint64_t>();
    ckpt.variant = j.at("variant").get<std::string>();
    ckpt.loss_history = j.at("loss_history").get<std::vector<double>>();
    ckpt.params.w_in = matrix_from_json(j.at("encoder").at("w_in"));
    ckpt.params.b_in = matrix_from_json(j.at("encoder").at("b_in"));
    for (const auto& jl : j.at("encoder").at("layers")) {
        AgnnParams::Layer l;
        l.w_msg = matrix_from_json(jl.at("w_msg"));
        l.w_init = matrix_from_json(jl.at("w_init"));
        l.bias = matrix_from_json(jl.at("bias"));
        ckpt.params.layers.push_back(std::move(l));
    }
    if (j.contains("cls_head")) {
        ckpt.has_cls_head = true;
        ckpt.cls_head.w = matrix_from_json(j.at("cls_head").at("w"));
        ckpt.cls_head.b = matrix_from_json(j.at("cls_head").at("b"));
    }
    if (j.contains("det_head")) {
        ckpt.has_det_head = true;
        ckpt.det_head.w = matrix_from_json(j.at("det_head").at("w"));
        ckpt.det_head.b = matrix_from_json(j.at("det_head").at("b"));
    }
    if (j.contains("ged_head")) {
        ckpt.has_ged_head = true;
        ckpt.ged_head.w = matrix_from_json(j.at("ged_head").at("w"));
        ckpt.ged_head.b = matrix_from_json(j.at("ged_head").at("b"));
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw HarnessError("BadConfig", "cannot write " + path);
    out << checkpoint_to_json(ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("BadConfig", "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

double cosine_lr(int epoch, int total_epochs, double lr0) {
    if (epoch < 0 || epoch > total_epochs || total_epochs < 1)
        throw HarnessError("BadConfig", "cosine_lr epoch out of range");
    return lr0 * (1.0 + cospi(static_cast<double>(epoch) / total_epochs)) / 2.0;
}

void sgd_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr,
              double momentum, double weight_decay, SgdState& state) {
    if (params.size() != grads.size()) throw ShapeError("sgd_step params/grads");
    if (state.velocity.empty()) {
        for (const Matrix* p : params) state.velocity.emplace_back(p->rows(), p->cols());
    }
    for (size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        Matrix& v = state.velocity[i];
        if (!p.same_shape(grads[i])) throw ShapeError("sgd_step grad shape");
        for (size_t k = 0; k < p.size(); ++k) {
            double g = grads[i].at_flat(k) + weight_decay * p.at_flat(k);
            v.at_flat(k) = momentum * v.at_flat(k) + g;
            p.at_flat(k) -= lr * v.at_flat(k);
        }
    }
}

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
    std::ostringstream os;
    os << "epoch,mean_loss,mean_pos_sim,mean_neg_sim,pair_count\n";
    os.precision(17);
    for (const TraceRow& r : rows)
        os << r.epoch << "," << r.mean_loss << "," << r.mean_pos_sim << "," << r.mean_neg_sim
           << "," << r.pair_count << "\n";
    return os.str();
}

namespace {

struct SampleOut {
    double loss = 0.0;
    LossStats stats;
    std::vector<Matrix> grads;
};

SampleOut pretrain_sample(const CompiledCircuit& cc, const AgnnParams& params,
                          const PretrainConfig& cfg, uint64_t sample_seed) {
    LossConfig lc = cfg.loss_config();
    Tape tape;
    BoundAgnn bound = bind_agnn(tape, params);
    int loss;
    SampleOut out;
    if (cfg.variant == LossVariant::NoPos) {
        Rng rng(sample_seed);
        AugmentedViews views = ablation_positives(tape, bound, cc, lc, rng);
        loss = no_pos_loss(tape, views, cc.depths, lc, &out.stats);
    } else {
        std::vector<int> nodes = forward_async(tape, bound, cc.dag, cc.depths, cc.features);
        std::vector<DepthCurrent> currents = depth_current_embeddings(tape, nodes, cc.depths);
        std::vector<NegativeEmbedding> negatives =
            hard_negatives(tape, nodes, cc.depths, lc.top_k);
        loss = kcl_loss(tape, currents, negatives, lc, &out.stats);
    }
    tape.backward(loss);
    out.loss = tape.scalar(loss);
    for (int id : bound_ids(bound)) out.grads.push_back(tape.take_grad(id));
    return out;
}

BatchResult pretrain_batch_no_neg(const std::vector<CompiledCircuit>& circuits,
                                  const std::vector<int>& batch, const AgnnParams& params,
                                  const PretrainConfig& cfg) {
    // Cross-graph negatives couple the whole batch, so it shares one tape.
    LossConfig lc = cfg.loss_config();
    Tape tape;
    BoundAgnn bound = bind_agnn(tape, params);
    std::vector<std::vector<DepthCurrent>> per_graph;
    for (int idx : batch) {
        const CompiledCircuit& cc = circuits[idx];
        std::vector<int> nodes = forward_async(tape, bound, cc.dag, cc.depths, cc.features);
        per_graph.push_back(depth_current_embeddings(tape, nodes, cc.depths));
    }
    BatchResult out;
    std::vector<int> losses;
    for (size_t g = 0; g < batch.size(); ++g) {
        std::vector<NegativeEmbedding> negs = batch_negatives(per_graph, static_cast<int>(g));
        losses.push_back(kcl_loss(tape, per_graph[g], negs, lc, &out.stats));
        out.loss_sum += tape.scalar(losses.back());
    }
    int total = tape.weighted_sum(losses, std::vector<double>(losses.size(), 1.0), 1, 1);
    tape.backward(total);
    for (int id : bound_ids(bound)) out.grads.push_back(tape.take_grad(id));
    return out;
}

}  // namespace

BatchResult pretrain_batch(const std::vector<CompiledCircuit>& circuits,
                           const std::vector<int>& batch, const AgnnParams& params,
                           const PretrainConfig& cfg, int epoch, ExecMode mode) {
    if (cfg.variant == LossVariant::NoNeg) {
        if (batch.size() < 2)
            throw LossError("BatchTooSmall", "no_neg variant needs batches of at least two");
        return pretrain_batch_no_neg(circuits, batch, params, cfg);
    }

    std::vector<SampleOut> slots(batch.size());
    parallel_for(static_cast<int>(batch.size()), mode, [&](int i) {
        uint64_t sample_seed =
            derive_seed(cfg.seed, 0xa09ull + static_cast<uint64_t>(epoch), batch[i]);
        slots[i] = pretrain_sample(circuits[batch[i]], params, cfg, sample_seed);
    });

    BatchResult out;
    for (const SampleOut& s : slots) {
        out.loss_sum += s.loss;
        out.stats.pos_sim_sum += s.stats.pos_sim_sum;
        out.stats.neg_sim_sum += s.stats.neg_sim_sum;
        out.stats.pos_terms += s.stats.pos_terms;
        out.stats.neg_terms += s.stats.neg_terms;
        out.stats.pair_count += s.stats.pair_count;
        accumulate(out.grads, s.grads, 1.0);
    }
    return out;
}

PretrainResult pretrain(const std::vector<CompiledCircuit>& circuits, const PretrainConfig& cfg,
                        ExecMode mode) {
    PretrainResult result;
    AgnnConfig acfg;
    result.checkpoint.config = acfg;
    result.checkpoint.params = AgnnParams::init(acfg, cfg.seed);
    result.checkpoint.seed = cfg.seed;
    result.checkpoint.variant = loss_variant_name(cfg.variant);
    if (cfg.variant == LossVariant::None || circuits.empty()) return result;

    std::vector<Matrix*> params = collect_params(result.checkpoint.params);
    SgdState sgd;

    std::vector<int> order(circuits.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5affull, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        LossStats stats;
        int samples = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + stop);
            if (cfg.variant == LossVariant::NoNeg && batch.size() < 2) continue;
            BatchResult br =
                pretrain_batch(circuits, batch, result.checkpoint.params, cfg, epoch, mode);
            std::vector<Matrix> grads = std::move(br.grads);
            double inv = 1.0 / static_cast<double>(batch.size());
            for (Matrix& g : grads)
                for (size_t i = 0; i < g.size(); ++i) g.at_flat(i) *= inv;
            sgd_step(params, grads, lr, cfg.momentum, cfg.weight_decay, sgd);

            loss_sum += br.loss_sum;
            samples += static_cast<int>(batch.size());
            stats.pos_sim_sum += br.stats.pos_sim_sum;
            stats.neg_sim_sum += br.stats.neg_sim_sum;
            stats.pos_terms += br.stats.pos_terms;
            stats.neg_terms += br.stats.neg_terms;
            stats.pair_count += br.stats.pair_count;
        }
        TraceRow row;
        row.epoch = epoch;
        row.mean_loss = samples ? loss_sum / samples : 0.0;
        row.mean_pos_sim = stats.pos_terms ? stats.pos_sim_sum / stats.pos_terms : 0.0;
        row.mean_neg_sim = stats.neg_terms ? stats.neg_sim_sum / stats.neg_terms : 0.0;
        row.pair_count = stats.pair_count;
        result.trace.push_back(row);
        result.checkpoint.loss_history.push_back(row.mean_loss);
        result.checkpoint.epoch = epoch + 1;
    }
    return result;
}

std::vector<CompiledCircuit> compile_entries(const std::vector<DatasetEntry>& entries,
                                             ExecMode mode) {
    std::vector<CompiledCircuit> out(entries.size());
    parallel_for(static_cast<int>(entries.size()), mode, [&](int i) {
        std::ifstream in(entries[i].path);
        if (!in) throw HarnessError("BadConfig", "cannot read " + entries[i].path);
        std::stringstream ss;
        ss << in.rdbuf();
        Circuit c = entries[i].path.ends_with(".json") ? circuit_from_graph_json(ss.str())
                                                       : parse_netlist(ss.str());
        out[i] = compile_circuit(std::move(c), entries[i].path);
    });
    return out;
}

TaskData load_task_data(const std::vector<DatasetEntry>& entries, ExecMode mode) {
    if (entries.empty()) throw HarnessError("TaskMismatch", "empty dataset");
    TaskData data;
    data.task = entries[0].task;
    data.circuits.resize(entries.size());
    if (data.task == "ged") data.circuits_b.resize(entries.size());
    data.labels.resize(entries.size());
    data.node_labels.resize(entries.size());
    data.node_mask.resize(entries.size());

    parallel_for(static_cast<int>(entries.size()), mode, [&](int i) {
        const DatasetEntry& e = entries[i];
        if (e.task != data.task) throw HarnessError("TaskMismatch", "mixed tasks in manifest");
        auto read = [](const std::string& path) {
            std::ifstream in(path);
            if (!in) throw HarnessError("BadConfig", "cannot read " + path);
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        data.circuits[i] = compile_circuit(parse_netlist(read(e.path)), e.path);
        data.labels[i] = e.label;
        if (data.task == "ged") {
            if (e.path2.empty()) throw HarnessError("TaskMismatch", "ged entry without pair");
            data.circuits_b[i] = compile_circuit(parse_netlist(read(e.path2)), e.path2);
        }
        if (data.task == "det") {
            const CircuitDag& dag = data.circuits[i].dag;
            std::vector<uint8_t> labels(dag.nodes.size(), 0);
            std::vector<uint8_t> mask(dag.nodes.size(), 1);
            for (const std::string& id : e.positive_nodes) {
                int idx = dag.node_index(id);
                if (idx >= 0) labels[idx] = 1;
            }
            for (size_t k = 0; k < dag.nodes.size(); ++k)
                if (dag.nodes[k].kind == NodeKind::Vsource ||
                    dag.nodes[k].kind == NodeKind::Ground)
                    mask[k] = 0;
            data.node_labels[i] = std::move(labels);
            data.node_mask[i] = std::move(mask);
        }
    });

    std::vector<int> train, val, test;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].split == "train")
            train.push_back(static_cast<int>(i));
        else if (entries[i].split == "val")
            val.push_back(static_cast<int>(i));
        else
            test.push_back(static_cast<int>(i));
    }
    data.splits = {train, val, test};
    return data;
}

namespace {

struct ModelView {
    const AgnnConfig* config;
    AgnnParams* encoder;
    ClassifierHead* cls;
    DetectorHead* det;
    GedHead* ged;
};

std::vector<Matrix*> trainable(ModelView& m, const std::string& task, bool freeze_encoder) {
    std::vector<Matrix*> out;
    if (!freeze_encoder) m.encoder->visit([&out](Matrix& x) { out.push_back(&x); });
    auto push = [&out](Matrix& x) { out.push_back(&x); };
    if (task == "cls") m.cls->visit(push);
    if (task == "det") m.det->visit(push);
    if (task == "ged") m.ged->visit(push);
    return out;
}

// Forward + task loss + gradient for one finetune sample. Dropout (inverted,
// on the head path) fires only when a dropout rng is supplied.
struct TaskSampleOut {
    double loss = 0.0;
    std::vector<Matrix> grads;  // encoder grads then head grads
};

Matrix dropout_mask(int rows, double rate, Rng& rng) {
    Matrix m(rows, 1);
    for (int i = 0; i < rows; ++i) m(i, 0) = rng.bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
    return m;
}

TaskSampleOut task_sample_step(const TaskData& data, int idx, ModelView& model,
                               const FinetuneConfig& cfg, bool train, uint64_t dropout_seed) {
    Tape tape;
    BoundAgnn bound = bind_agnn(tape, *model.encoder);
    const CompiledCircuit& cc = data.circuits[idx];
    std::vector<int> nodes = forward_async(tape, bound, cc.dag, cc.depths, cc.features);

    Rng drop_rng(dropout_seed);
    const int hidden = model.config->hidden_size;
    int loss = -1;
    std::vector<int> head_ids;
    if (data.task == "cls") {
        int w = tape.leaf(model.cls->w);
        int b = tape.leaf(model.cls->b);
        head_ids = {w, b};
        int z = graph_readout(tape, nodes);
        if (train && cfg.dropout > 0.0)
            z = tape.hadamard(z, tape.leaf(dropout_mask(hidden, cfg.dropout, drop_rng)));
        loss = loss_cls(tape, {cls_logits(tape, w, b, z)}, {data.labels[idx]});
    } else if (data.task == "det") {
        int w = tape.leaf(model.det->w);
        int b = tape.leaf(model.det->b);
        head_ids = {w, b};
        std::vector<int> logits;
        std::vector<double> targets;
        for (size_t k = 0; k < nodes.size(); ++k) {
            if (!data.node_mask[idx][k]) continue;
            int z = nodes[k];
            if (train && cfg.dropout > 0.0)
                z = tape.hadamard(z, tape.leaf(dropout_mask(hidden, cfg.dropout, drop_rng)));
            logits.push_back(det_logit(tape, w, b, z, data.labels[idx], data.classes));
            targets.push_back(data.node_labels[idx][k]);
        }
        loss = loss_det(tape, logits, targets);
    } else {
        int w = tape.leaf(model.ged->w);
        int b = tape.leaf(model.ged->b);
        head_ids = {w, b};
        const CompiledCircuit& cc2 = data.circuits_b[idx];
        std::vector<int> nodes2 = forward_async(tape, bound, cc2.dag, cc2.depths, cc2.features);
        int z1 = graph_readout(tape, nodes);
        int z2 = graph_readout(tape, nodes2);
        if (train && cfg.dropout > 0.0) {
            z1 = tape.hadamard(z1, tape.leaf(dropout_mask(hidden, cfg.dropout, drop_rng)));
            z2 = tape.hadamard(z2, tape.leaf(dropout_mask(hidden, cfg.dropout, drop_rng)));
        }
        loss = loss_ged(tape, {ged_predict(tape, w, b, z1, z2)},
                        {static_cast<double>(data.labels[idx])});
    }

    tape.backward(loss);
    TaskSampleOut out;
    out.loss = tape.scalar(loss);
    if (!cfg.freeze_encoder)
        for (int id : bound_ids(bound)) out.grads.push_back(tape.take_grad(id));
    for (int id : head_ids) out.grads.push_back(tape.take_grad(id));
    return out;
}

}  // namespace

MetricsReport evaluate_model(const Checkpoint& model, const TaskData& data,
                             const std::vector<int>& indices, ExecMode mode) {
    if (indices.empty()) throw TaskError("EmptyEvaluation", "no samples in split");
    const AgnnParams& enc = model.params;

    if (data.task == "cls") {
        std::vector<std::vector<double>> logits(indices.size());
        parallel_for(static_cast<int>(indices.size()), mode, [&](int i) {
            const CompiledCircuit& cc = data.circuits[indices[i]];
            Tape tape;
            BoundAgnn bound = bind_agnn(tape, enc);
            std::vector<int> nodes = forward_async(tape, bound, cc.dag, cc.depths, cc.features);
            int z = graph_readout(tape, nodes);
            int lg = cls_logits(tape, tape.leaf(model.cls_head.w), tape.leaf(model.cls_head.b), z);
            const Matrix& v = tape.value(lg);
            logits[i].assign(v.data(), v.data() + v.size());
        });
        std::vector<int> labels;
        for (int idx : indices) labels.push_back(data.labels[idx]);
        return compute_metrics_cls(logits, labels, data.classes);
    }
    if (data.task == "det") {
        std::vector<DetEval> evals(indices.size());
        parallel_for(static_cast<int>(indices.size()), mode, [&](int i) {
            int idx = indices[i];
            const CompiledCircuit& cc = data.circuits[idx];
            Tape tape;
            BoundAgnn bound = bind_agnn(tape, enc);
            std::vector<int> nodes = forward_async(tape, bound, cc.dag, cc.depths, cc.features);
            int w = tape.leaf(model.det_head.w);
            int b = tape.leaf(model.det_head.b);
            DetEval ev;
            ev.block_class = data.labels[idx];
            for (size_t k = 0; k < nodes.size(); ++k) {
                int lg = det_logit(tape, w, b, nodes[k], data.labels[idx], data.classes);
                ev.scores.push_back(sigmoid(tape.scalar(lg)));
                ev.labels.push_back(data.node_labels[idx][k]);
                ev.mask.push_back(data.node_mask[idx][k]);
            }
            evals[i] = std::move(ev);
        });
        return compute_metrics_det(evals, data.classes);
    }
    std::vector<double> preds(indices.size());
    std::vector<double> targets(indices.size());
    parallel_for(static_cast<int>(indices.size()), mode, [&](int i) {
        int idx = indices[i];
        Tape tape;
        BoundAgnn bound = bind_agnn(tape, enc);
        const CompiledCircuit& a = data.circuits[idx];
        const CompiledCircuit& b = data.circuits_b[idx];
        std::vector<int> na = forward_async(tape, bound, a.dag, a.depths, a.features);
        std::vector<int> nb = forward_async(tape, bound, b.dag, b.depths, b.features);
        int pred = ged_predict(tape, tape.leaf(model.ged_head.w), tape.leaf(model.ged_head.b),
                               graph_readout(tape, na), graph_readout(tape, nb));
        preds[i] = tape.scalar(pred);
        targets[i] = static_cast<double>(data.labels[idx]);
    });
    return compute_metrics_ged(preds, targets);
}

FinetuneResult finetune(const Checkpoint& start, const TaskData& data, const FinetuneConfig& cfg,
                        ExecMode mode) {
    if (data.task != cfg.task) throw HarnessError("TaskMismatch", data.task + " vs " + cfg.task);
    if (data.splits.train.empty()) throw HarnessError("TaskMismatch", "empty train split");

    FinetuneResult result;
    result.model = start;
    result.model.loss_history.clear();
    const int hidden = start.config.hidden_size;
    if (cfg.task == "cls") {
        result.model.has_cls_head = true;
        result.model.cls_head = ClassifierHead::init(hidden, data.classes, cfg.seed);
    } else if (cfg.task == "det") {
        result.model.has_det_head = true;
        result.model.det_head = DetectorHead::init(hidden, data.classes, cfg.seed);
    } else {
        result.model.has_ged_head = true;
        result.model.ged_head = GedHead::init(hidden, cfg.seed);
    }

    ModelView view{&result.model.config, &result.model.params, &result.model.cls_head,
                   &result.model.det_head, &result.model.ged_head};
    std::vector<Matrix*> params = trainable(view, cfg.task, cfg.freeze_encoder);
    SgdState sgd;

    auto val_metric = [&](const MetricsReport& m) {
        if (cfg.task == "cls") return m.at("acc@1");
        if (cfg.task == "det") return m.at("map");
        return -m.at("mae");  // lower is better
    };

    Checkpoint best = result.model;
    double best_score = -1e300;
    int best_epoch = -1;

    std::vector<int> order = data.splits.train;
    const int batch_size = 32;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
        Rng shuffle_rng(derive_seed(cfg.seed, 0xf17ull, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (size_t s = 0; s < order.size(); s += batch_size) {
            size_t stop = std::min(order.size(), s + batch_size);
            std::vector<int> batch(order.begin() + s, order.begin() + stop);
            std::vector<TaskSampleOut> slots(batch.size());
            parallel_for(static_cast<int>(batch.size()), mode, [&](int i) {
                uint64_t dseed = derive_seed(cfg.seed, 0xd0ull + epoch, batch[i]);
                slots[i] = task_sample_step(data, batch[i], view, cfg, true, dseed);
            });
            std::vector<Matrix> grads;
            for (const TaskSampleOut& so : slots) {
                epoch_loss += so.loss;
                accumulate(grads, so.grads, 1.0 / static_cast<double>(batch.size()));
            }
            sgd_step(params, grads, lr, 0.0, cfg.weight_decay, sgd);
        }
        result.model.loss_history.push_back(epoch_loss / order.size());
        result.model.epoch = epoch + 1;

        if (!data.splits.val.empty()) {
            MetricsReport val = evaluate_model(result.model, data, data.splits.val, mode);
            double score = val_metric(val);
            if (score > best_score) {
                best_score = score;
                best = result.model;
                best_epoch = epoch;
                result.val_best = val;
            }
        }
    }
    if (best_epoch < 0) {
        best = result.model;
        best_epoch = cfg.epochs - 1;
    }
    result.model = std::move(best);
    result.best_epoch = best_epoch;
    if (!data.splits.test.empty())
        result.test = evaluate_model(result.model, data, data.splits.test, mode);
    return result;
}

}  // namespace kclnet
