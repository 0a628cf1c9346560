#pragma once

#include <string>
#include <vector>

#include "kclnet/agnn.hpp"
#include "kclnet/autodiff.hpp"
#include "kclnet/rng.hpp"

namespace kclnet {

struct LossError : std::runtime_error {
    LossError(std::string error_code, const std::string& msg)
        : std::runtime_error(error_code + ": " + msg), code(std::move(error_code)) {}
    std::string code;  // TooFewDepths | BatchTooSmall
};

enum class LossVariant { Full, NoPos, NoNeg, None };

LossVariant loss_variant_from_string(const std::string& s);
const char* loss_variant_name(LossVariant v);

struct LossConfig {
    double temperature = 0.5;
    int top_k = 1;
    LossVariant variant = LossVariant::Full;
    double augmentation_strength = 0.2;
    // Standard InfoNCE keeps the positive term in the denominator; the
    // literal flag drops it, which permits negative loss values.
    bool positive_in_denominator = true;
    bool exclude_endpoint_depths = false;
    double gamma = 0.1;  // auxiliary alignment weight, no_pos variant only
};

struct DepthCurrent {
    int depth;
    int var;  // tape id of the layer-sum vector
    int node_count;
};

struct NegativeEmbedding {
    int depth;
    int var;
    std::vector<int> masked_nodes;  // dag node indexes removed by the top-k mask
};

struct LossStats {
    double pos_sim_sum = 0.0;
    double neg_sim_sum = 0.0;
    long pos_terms = 0;
    long neg_terms = 0;
    long pair_count = 0;
};

// One layer-sum vector per non-empty depth, ascending.
std::vector<DepthCurrent> depth_current_embeddings(Tape& tape, const std::vector<int>& node_vars,
                                                   const DepthAssignment& da);

// Per depth with more than k nodes: mask the k largest-norm embeddings
// (ties to the smaller node index) and sum the rest. Depths with <= k nodes
// emit nothing.
std::vector<NegativeEmbedding> hard_negatives(Tape& tape, const std::vector<int>& node_vars,
                                              const DepthAssignment& da, int k);

// Mean InfoNCE over all ordered depth pairs; negatives are shared across
// pairs of the same graph.
int kcl_loss(Tape& tape, const std::vector<DepthCurrent>& currents,
             const std::vector<NegativeEmbedding>& negatives, const LossConfig& cfg,
             LossStats* stats = nullptr);

struct AugmentedViews {
    int z1 = -1;  // graph readouts of the two node-dropped views
    int z2 = -1;
    std::vector<int> view1_nodes;
    std::vector<bool> dropped1;
    std::vector<bool> dropped2;
};

// Two independently node-dropped views (features zeroed, arcs kept) encoded
// with the same parameters.
AugmentedViews ablation_positives(Tape& tape, const BoundAgnn& p, const CompiledCircuit& cc,
                                  const LossConfig& cfg, Rng& rng);

// Augmented-positive objective with KCL hard negatives, plus the
// gamma-weighted alignment term.
int no_pos_loss(Tape& tape, const AugmentedViews& views, const DepthAssignment& da,
                const LossConfig& cfg, LossStats* stats = nullptr);

// Batch negatives for graph `self`: every depth current of every other graph.
std::vector<NegativeEmbedding> batch_negatives(
    const std::vector<std::vector<DepthCurrent>>& per_graph, int self);

}  // namespace kclnet
