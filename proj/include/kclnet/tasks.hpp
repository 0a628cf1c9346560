#pragma once

#include <map>
#include <string>
#include <vector>

#include "kclnet/autodiff.hpp"
#include "kclnet/tensor.hpp"

namespace kclnet {

struct TaskError : std::runtime_error {
    TaskError(std::string error_code, const std::string& msg)
        : std::runtime_error(error_code + ": " + msg), code(std::move(error_code)) {}
    std::string code;  // LabelOutOfRange | EmptyEvaluation | TaskMismatch
};

struct ClassifierHead {
    Matrix w;  // classes x hidden
    Matrix b;  // classes x 1
    static ClassifierHead init(int hidden, int classes, uint64_t seed);
    void visit(const std::function<void(Matrix&)>& fn) {
        fn(w);
        fn(b);
    }
};

struct DetectorHead {
    Matrix w;  // 1 x (hidden + classes), node embedding then class one-hot
    Matrix b;  // 1 x 1
    static DetectorHead init(int hidden, int classes, uint64_t seed);
    void visit(const std::function<void(Matrix&)>& fn) {
        fn(w);
        fn(b);
    }
};

struct GedHead {
    Matrix w;  // 1 x (2 * hidden), over symmetric pair features
    Matrix b;  // 1 x 1
    static GedHead init(int hidden, uint64_t seed);
    void visit(const std::function<void(Matrix&)>& fn) {
        fn(w);
        fn(b);
    }
};

int cls_logits(Tape& tape, int w, int b, int z);
int det_logit(Tape& tape, int w, int b, int z_node, int block_class, int classes);
// [ |z1-z2| ; z1 (.) z2 ], symmetric in the two arguments.
int ged_pair_features(Tape& tape, int z1, int z2);
int ged_predict(Tape& tape, int w, int b, int z1, int z2);

// Mean softmax cross-entropy over the batch.
int loss_cls(Tape& tape, const std::vector<int>& logits, const std::vector<int>& labels);
// Mean binary cross-entropy over nodes, from logits.
int loss_det(Tape& tape, const std::vector<int>& logits, const std::vector<double>& labels);
// Mean squared error.
int loss_ged(Tape& tape, const std::vector<int>& preds, const std::vector<double>& targets);

struct MetricsReport {
    std::map<std::string, double> values;
    double at(const std::string& key) const;
};

MetricsReport compute_metrics_cls(const std::vector<std::vector<double>>& logits,
                                  const std::vector<int>& labels, int classes);

struct DetEval {
    int block_class = 0;
    std::vector<double> scores;   // per node, probability
    std::vector<uint8_t> labels;  // per node
    std::vector<uint8_t> mask;    // 1 = node participates in evaluation
};

MetricsReport compute_metrics_det(const std::vector<DetEval>& samples, int classes);

MetricsReport compute_metrics_ged(const std::vector<double>& preds,
                                  const std::vector<double>& targets);

std::string metrics_to_json(const MetricsReport& m);
std::string metrics_to_csv(const MetricsReport& m, const std::string& task, uint64_t seed);

}  // namespace kclnet
