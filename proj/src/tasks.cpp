#include "kclnet/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "kclnet/rng.hpp"

namespace kclnet {

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    double s = std::sqrt(6.0 / (rows + cols));
    for (size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.uniform(-s, s);
    return m;
}

}  // namespace

ClassifierHead ClassifierHead::init(int hidden, int classes, uint64_t seed) {
    Rng rng(derive_seed(seed, 0xc15ull));
    return {glorot(classes, hidden, rng), Matrix(classes, 1)};
}

DetectorHead DetectorHead::init(int hidden, int classes, uint64_t seed) {
    Rng rng(derive_seed(seed, 0xde7ull));
    return {glorot(1, hidden + classes, rng), Matrix(1, 1)};
}

GedHead GedHead::init(int hidden, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x9edull));
    return {glorot(1, 2 * hidden, rng), Matrix(1, 1)};
}

int cls_logits(Tape& tape, int w, int b, int z) { return tape.affine(w, z, b); }

int det_logit(Tape& tape, int w, int b, int z_node, int block_class, int classes) {
    if (block_class < 0 || block_class >= classes)
        throw TaskError("LabelOutOfRange", std::to_string(block_class));
    Matrix onehot(classes, 1);
    onehot(block_class, 0) = 1.0;
    int feat = tape.concat_rows(z_node, tape.leaf(std::move(onehot)));
    return tape.affine(w, feat, b);
}

int ged_pair_features(Tape& tape, int z1, int z2) {
    if (!tape.value(z1).same_shape(tape.value(z2))) throw ShapeError("ged_pair_features");
    int diff = tape.abs(tape.sub(z1, z2));
    int prod = tape.hadamard(z1, z2);
    return tape.concat_rows(diff, prod);
}

int ged_predict(Tape& tape, int w, int b, int z1, int z2) {
    return tape.affine(w, ged_pair_features(tape, z1, z2), b);
}

int loss_cls(Tape& tape, const std::vector<int>& logits, const std::vector<int>& labels) {
    if (logits.size() != labels.size() || logits.empty())
        throw TaskError("EmptyEvaluation", "loss_cls");
    std::vector<int> terms;
    for (size_t i = 0; i < logits.size(); ++i)
        terms.push_back(tape.softmax_cross_entropy(logits[i], labels[i]));
    return tape.weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / terms.size()), 1, 1);
}

int loss_det(Tape& tape, const std::vector<int>& logits, const std::vector<double>& labels) {
    if (logits.size() != labels.size() || logits.empty()) throw ShapeError("loss_det");
    std::vector<int> terms;
    for (size_t i = 0; i < logits.size(); ++i)
        terms.push_back(tape.bce_with_logit(logits[i], labels[i]));
    return tape.weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / terms.size()), 1, 1);
}

int loss_ged(Tape& tape, const std::vector<int>& preds, const std::vector<double>& targets) {
    if (preds.size() != targets.size() || preds.empty()) throw ShapeError("loss_ged");
    std::vector<int> terms;
    for (size_t i = 0; i < preds.size(); ++i) {
        int t = tape.leaf(Matrix(1, 1, targets[i]));
        terms.push_back(tape.square(tape.sub(preds[i], t)));
    }
    return tape.weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / terms.size()), 1, 1);
}

double MetricsReport::at(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw TaskError("EmptyEvaluation", "missing metric " + key);
    return it->second;
}

namespace {

// Macro-averaged recall and F1 over classes with at least one instance.
void macro_prf(const std::vector<int>& pred, const std::vector<int>& truth, int classes,
               double& recall_out, double& f1_out) {
    double recall_sum = 0.0;
    double f1_sum = 0.0;
    int counted = 0;
    for (int c = 0; c < classes; ++c) {
        long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            if (truth[i] == c && pred[i] == c) ++tp;
            if (truth[i] != c && pred[i] == c) ++fp;
            if (truth[i] == c && pred[i] != c) ++fn;
        }
        if (tp + fn == 0) continue;  // class absent from the evaluation set
        double recall = static_cast<double>(tp) / (tp + fn);
        double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        double f1 = precision + recall == 0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        recall_sum += recall;
        f1_sum += f1;
        ++counted;
    }
    recall_out = counted ? recall_sum / counted : 0.0;
    f1_out = counted ? f1_sum / counted : 0.0;
}

// Average precision with all-points interpolation over a pooled ranking.
double average_precision(std::vector<std::pair<double, int>> scored /* (score, label) */) {
    long positives = 0;
    for (const auto& [s, y] : scored) positives += y;
    if (positives == 0) return 0.0;
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    // precision at each rank, then interpolate p(r) = max_{r' >= r} p(r')
    std::vector<double> prec, rec;
    long tp = 0;
    for (size_t i = 0; i < scored.size(); ++i) {
        tp += scored[i].second;
        prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
        rec.push_back(static_cast<double>(tp) / positives);
    }
    for (int i = static_cast<int>(prec.size()) - 2; i >= 0; --i)
        prec[i] = std::max(prec[i], prec[i + 1]);
    double ap = 0.0;
    double prev_rec = 0.0;
    for (size_t i = 0; i < prec.size(); ++i) {
        if (rec[i] > prev_rec) {
            ap += (rec[i] - prev_rec) * prec[i];
            prev_rec = rec[i];
        }
    }
    return ap;
}

// Mann-Whitney statistic with tie correction (average ranks).
double roc_auc(const std::vector<std::pair<double, int>>& scored) {
    long pos = 0, neg = 0;
    for (const auto& [s, y] : scored) (y ? pos : neg) += 1;
    if (pos == 0 || neg == 0) return 0.5;
    std::vector<std::pair<double, int>> sorted = scored;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < sorted.size()) {
        size_t j = i;
        while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (sorted[k].second) rank_sum_pos += avg_rank;
        i = j;
    }
    double u = rank_sum_pos - static_cast<double>(pos) * (pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace

MetricsReport compute_metrics_cls(const std::vector<std::vector<double>>& logits,
                                  const std::vector<int>& labels, int classes) {
    if (logits.empty() || logits.size() != labels.size())
        throw TaskError("EmptyEvaluation", "cls metrics need aligned predictions");
    const int n = static_cast<int>(logits.size());

    auto topk_hit = [&](int i, int k) {
        // rank classes by (logit desc, class asc)
        std::vector<int> order(classes);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return logits[i][a] > logits[i][b];
        });
        for (int j = 0; j < k && j < classes; ++j)
            if (order[j] == labels[i]) return true;
        return false;
    };

    MetricsReport rep;
    for (int k : {1, 2, 5}) {
        int hits = 0;
        for (int i = 0; i < n; ++i) hits += topk_hit(i, k);
        rep.values["acc@" + std::to_string(k)] = static_cast<double>(hits) / n;
    }
    std::vector<int> pred(n);
    for (int i = 0; i < n; ++i)
        pred[i] = static_cast<int>(std::max_element(logits[i].begin(), logits[i].end()) -
                                   logits[i].begin());
    double recall, f1;
    macro_prf(pred, labels, classes, recall, f1);
    rep.values["recall"] = recall;
    rep.values["f1"] = f1;
    return rep;
}

MetricsReport compute_metrics_det(const std::vector<DetEval>& samples, int classes) {
    if (samples.empty()) throw TaskError("EmptyEvaluation", "det metrics need samples");

    std::vector<std::vector<std::pair<double, int>>> pooled(classes);
    std::vector<std::pair<double, int>> all;
    double iou_sum = 0.0;
    long tp = 0, fp = 0, fn = 0;
    for (const DetEval& s : samples) {
        long inter = 0, uni = 0;
        for (size_t i = 0; i < s.scores.size(); ++i) {
            if (!s.mask[i]) continue;
            int y = s.labels[i] ? 1 : 0;
            pooled[s.block_class].emplace_back(s.scores[i], y);
            all.emplace_back(s.scores[i], y);
            int p = s.scores[i] >= 0.5 ? 1 : 0;
            if (p && y) ++tp;
            if (p && !y) ++fp;
            if (!p && y) ++fn;
            if (p && y) ++inter;
            if (p || y) ++uni;
        }
        iou_sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    }

    MetricsReport rep;
    double ap_sum = 0.0;
    int ap_classes = 0;
    for (int c = 0; c < classes; ++c) {
        bool has_pos = std::any_of(pooled[c].begin(), pooled[c].end(),
                                   [](const auto& p) { return p.second == 1; });
        if (!has_pos) continue;
        ap_sum += average_precision(pooled[c]);
        ++ap_classes;
    }
    rep.values["map"] = ap_classes ? ap_sum / ap_classes : 0.0;
    double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    rep.values["recall"] = recall;
    rep.values["f1"] =
        precision + recall == 0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    rep.values["auc"] = roc_auc(all);
    rep.values["iou"] = iou_sum / static_cast<double>(samples.size());
    return rep;
}

MetricsReport compute_metrics_ged(const std::vector<double>& preds,
                                  const std::vector<double>& targets) {
    if (preds.empty() || preds.size() != targets.size())
        throw TaskError("EmptyEvaluation", "ged metrics need aligned predictions");
    double mae = 0.0, mse = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) {
        double d = preds[i] - targets[i];
        mae += std::abs(d);
        mse += d * d;
    }
    MetricsReport rep;
    rep.values["mae"] = mae / preds.size();
    rep.values["mse"] = mse / preds.size();
    return rep;
}

std::string metrics_to_json(const MetricsReport& m) {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : m.values) j[k] = v;
    return j.dump(2) + "\n";
}

std::string metrics_to_csv(const MetricsReport& m, const std::string& task, uint64_t seed) {
    std::ostringstream os;
    os << "seed,task,metric,value\n";
    os.precision(17);
    for (const auto& [k, v] : m.values) os << seed << "," << task << "," << k << "," << v << "\n";
    return os.str();
}

}  // namespace kclnet
