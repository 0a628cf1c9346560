#pragma once

#include <string>
#include <vector>

#include "kclnet/agnn.hpp"
#include "kclnet/kclloss.hpp"
#include "kclnet/parallel.hpp"
#include "kclnet/synthdata.hpp"
#include "kclnet/tasks.hpp"

namespace kclnet {

struct HarnessError : std::runtime_error {
    HarnessError(std::string error_code, const std::string& msg)
        : std::runtime_error(error_code + ": " + msg), code(std::move(error_code)) {}
    std::string code;  // TaskMismatch | BadConfig
};

struct PretrainConfig {
    double lr0 = 0.025;
    double momentum = 0.0;
    double weight_decay = 0.00125;
    int epochs = 200;
    int batch_size = 32;
    double tau = 0.5;
    int top_k = 1;
    LossVariant variant = LossVariant::Full;
    uint64_t seed = 0;
    double augmentation_strength = 0.2;
    double gamma = 0.1;
    bool literal_denominator = false;
    bool exclude_endpoints = false;

    LossConfig loss_config() const;
};

struct FinetuneConfig {
    std::string task = "cls";
    double lr0 = 0.01;
    double weight_decay = 0.005;
    int epochs = 20;
    double dropout = 0.6;
    bool freeze_encoder = false;
    uint64_t seed = 0;

    // Task-matched defaults: cls 0.01/0.005, det 0.03/0.005, ged 0.01/0.0025.
    static FinetuneConfig for_task(const std::string& task);
};

struct Checkpoint {
    AgnnConfig config;
    AgnnParams params;
    int epoch = 0;
    uint64_t seed = 0;
    std::string variant = "full";
    std::vector<double> loss_history;

    bool has_cls_head = false;
    ClassifierHead cls_head;
    bool has_det_head = false;
    DetectorHead det_head;
    bool has_ged_head = false;
    GedHead ged_head;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// lr0 * (1 + cos(pi * epoch / total)) / 2, exact at the endpoints and the
// midpoint.
double cosine_lr(int epoch, int total_epochs, double lr0);

struct SgdState {
    std::vector<Matrix> velocity;
};

// p <- p - lr * (g + weight_decay * p), through a momentum buffer that is
// inert at momentum 0.
void sgd_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr,
              double momentum, double weight_decay, SgdState& state);

struct TraceRow {
    int epoch;
    double mean_loss;
    double mean_pos_sim;
    double mean_neg_sim;
    long pair_count;
};

std::string trace_to_csv(const std::vector<TraceRow>& rows);

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<TraceRow> trace;
};

// Accumulated encoder gradients and diagnostics for one batch; identical in
// serial and parallel mode (per-sample gradients reduce in index order).
struct BatchResult {
    double loss_sum = 0.0;
    LossStats stats;
    std::vector<Matrix> grads;
};

BatchResult pretrain_batch(const std::vector<CompiledCircuit>& circuits,
                           const std::vector<int>& batch, const AgnnParams& params,
                           const PretrainConfig& cfg, int epoch, ExecMode mode);

PretrainResult pretrain(const std::vector<CompiledCircuit>& circuits, const PretrainConfig& cfg,
                        ExecMode mode = ExecMode::Parallel);

// One sample per entry; ged entries hold the pair in circuits/circuits_b.
struct TaskData {
    std::string task;
    int classes = kNumClasses;
    std::vector<CompiledCircuit> circuits;
    std::vector<CompiledCircuit> circuits_b;
    std::vector<int> labels;
    std::vector<std::vector<uint8_t>> node_labels;  // det
    std::vector<std::vector<uint8_t>> node_mask;    // det: vsource/ground excluded
    Splits splits;
};

TaskData load_task_data(const std::vector<DatasetEntry>& entries,
                        ExecMode mode = ExecMode::Parallel);

std::vector<CompiledCircuit> compile_entries(const std::vector<DatasetEntry>& entries,
                                             ExecMode mode = ExecMode::Parallel);

struct FinetuneResult {
    Checkpoint model;
    MetricsReport val_best;
    MetricsReport test;
    int best_epoch = 0;
};

FinetuneResult finetune(const Checkpoint& start, const TaskData& data, const FinetuneConfig& cfg,
                        ExecMode mode = ExecMode::Parallel);

MetricsReport evaluate_model(const Checkpoint& model, const TaskData& data,
                             const std::vector<int>& indices,
                             ExecMode mode = ExecMode::Parallel);

}  // namespace kclnet
