#include "kclnet/kclloss.hpp"

#include <algorithm>
#include <cmath>

namespace kclnet {

LossVariant loss_variant_from_string(const std::string& s) {
    if (s == "full") return LossVariant::Full;
    if (s == "no_pos") return LossVariant::NoPos;
    if (s == "no_neg") return LossVariant::NoNeg;
    if (s == "none") return LossVariant::None;
    throw LossError("BadVariant", s);
}

const char* loss_variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::Full: return "full";
        case LossVariant::NoPos: return "no_pos";
        case LossVariant::NoNeg: return "no_neg";
        case LossVariant::None: return "none";
    }
    return "?";
}

std::vector<DepthCurrent> depth_current_embeddings(Tape& tape, const std::vector<int>& node_vars,
                                                   const DepthAssignment& da) {
    std::vector<DepthCurrent> out;
    for (int depth = 0; depth <= da.max_depth; ++depth) {
        const std::vector<int>& layer = da.layers[depth];
        if (layer.empty()) continue;
        std::vector<int> vars;
        vars.reserve(layer.size());
        for (int node : layer) vars.push_back(node_vars[node]);
        const Matrix& first = tape.value(vars.front());
        int sum = tape.weighted_sum(vars, std::vector<double>(layer.size(), 1.0), first.rows(),
                                    first.cols());
        out.push_back({depth, sum, static_cast<int>(layer.size())});
    }
    return out;
}

std::vector<NegativeEmbedding> hard_negatives(Tape& tape, const std::vector<int>& node_vars,
                                              const DepthAssignment& da, int k) {
    std::vector<NegativeEmbedding> out;
    for (int depth = 0; depth <= da.max_depth; ++depth) {
        const std::vector<int>& layer = da.layers[depth];
        if (static_cast<int>(layer.size()) <= k) continue;

        std::vector<std::pair<double, int>> ranked;  // (norm, node)
        for (int node : layer) ranked.emplace_back(norm2(tape.value(node_vars[node])), node);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });

        NegativeEmbedding neg;
        neg.depth = depth;
        std::vector<int> keep;
        for (size_t i = 0; i < ranked.size(); ++i) {
            if (static_cast<int>(i) < k)
                neg.masked_nodes.push_back(ranked[i].second);
            else
                keep.push_back(node_vars[ranked[i].second]);
        }
        const Matrix& first = tape.value(keep.front());
        neg.var = tape.weighted_sum(keep, std::vector<double>(keep.size(), 1.0), first.rows(),
                                    first.cols());
        out.push_back(std::move(neg));
    }
    return out;
}

int kcl_loss(Tape& tape, const std::vector<DepthCurrent>& currents,
             const std::vector<NegativeEmbedding>& negatives, const LossConfig& cfg,
             LossStats* stats) {
    if (cfg.temperature <= 0.0) throw LossError("BadTemperature", "tau must be positive");
    std::vector<const DepthCurrent*> used;
    for (const DepthCurrent& c : currents) used.push_back(&c);
    if (cfg.exclude_endpoint_depths && used.size() > 2) {
        used.erase(used.begin());
        used.pop_back();
    }
    const int m = static_cast<int>(used.size());
    if (m < 2) throw LossError("TooFewDepths", "need at least two depth embeddings");

    std::vector<int> terms;
    for (int i = 0; i < m; ++i) {
        // Negative similarities are anchored at I_i and shared by every pair
        // (i, j), so compute them once per anchor.
        std::vector<int> neg_z;
        for (const NegativeEmbedding& neg : negatives) {
            int s = tape.cos_sim(used[i]->var, neg.var);
            if (stats) {
                stats->neg_sim_sum += tape.scalar(s);
                stats->neg_terms += 1;
            }
            neg_z.push_back(tape.scale(s, 1.0 / cfg.temperature));
        }
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            int pos = tape.cos_sim(used[i]->var, used[j]->var);
            if (stats) {
                stats->pos_sim_sum += tape.scalar(pos);
                stats->pos_terms += 1;
            }
            int z_pos = tape.scale(pos, 1.0 / cfg.temperature);
            std::vector<int> denom = neg_z;
            if (cfg.positive_in_denominator || denom.empty())
                denom.insert(denom.begin(), z_pos);
            terms.push_back(tape.sub(tape.log_sum_exp(std::move(denom)), z_pos));
        }
    }
    if (stats) stats->pair_count += static_cast<long>(terms.size());
    return tape.weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / terms.size()), 1, 1);
}

AugmentedViews ablation_positives(Tape& tape, const BoundAgnn& p, const CompiledCircuit& cc,
                                  const LossConfig& cfg, Rng& rng) {
    const int n = static_cast<int>(cc.dag.nodes.size());
    AugmentedViews out;
    out.dropped1.resize(n);
    out.dropped2.resize(n);
    Matrix x1 = cc.features;
    Matrix x2 = cc.features;
    for (int i = 0; i < n; ++i) {
        out.dropped1[i] = rng.bernoulli(cfg.augmentation_strength);
        out.dropped2[i] = rng.bernoulli(cfg.augmentation_strength);
        if (out.dropped1[i])
            for (int j = 0; j < x1.cols(); ++j) x1(i, j) = 0.0;
        if (out.dropped2[i])
            for (int j = 0; j < x2.cols(); ++j) x2(i, j) = 0.0;
    }
    out.view1_nodes = forward_async(tape, p, cc.dag, cc.depths, x1);
    std::vector<int> view2 = forward_async(tape, p, cc.dag, cc.depths, x2);
    out.z1 = graph_readout(tape, out.view1_nodes);
    out.z2 = graph_readout(tape, view2);
    return out;
}

int no_pos_loss(Tape& tape, const AugmentedViews& views, const DepthAssignment& da,
                const LossConfig& cfg, LossStats* stats) {
    std::vector<NegativeEmbedding> negatives =
        hard_negatives(tape, views.view1_nodes, da, cfg.top_k);

    int pos = tape.cos_sim(views.z1, views.z2);
    if (stats) {
        stats->pos_sim_sum += tape.scalar(pos);
        stats->pos_terms += 1;
        stats->pair_count += 1;
    }
    int z_pos = tape.scale(pos, 1.0 / cfg.temperature);
    std::vector<int> denom{z_pos};
    for (const NegativeEmbedding& neg : negatives) {
        int s = tape.cos_sim(views.z1, neg.var);
        if (stats) {
            stats->neg_sim_sum += tape.scalar(s);
            stats->neg_terms += 1;
        }
        denom.push_back(tape.scale(s, 1.0 / cfg.temperature));
    }
    int nce = tape.sub(tape.log_sum_exp(std::move(denom)), z_pos);

    // gamma-weighted alignment: gamma * (1 - sim(z1, z2))
    int one = tape.leaf(Matrix(1, 1, 1.0));
    int align = tape.scale(tape.sub(one, pos), cfg.gamma);
    return tape.add(nce, align);
}

std::vector<NegativeEmbedding> batch_negatives(
    const std::vector<std::vector<DepthCurrent>>& per_graph, int self) {
    if (per_graph.size() < 2)
        throw LossError("BatchTooSmall", "batch negatives need at least two graphs");
    std::vector<NegativeEmbedding> out;
    for (size_t g = 0; g < per_graph.size(); ++g) {
        if (static_cast<int>(g) == self) continue;
        for (const DepthCurrent& c : per_graph[g]) out.push_back({c.depth, c.var, {}});
    }
    return out;
}

}  // namespace kclnet
