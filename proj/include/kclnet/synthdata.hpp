#pragma once

#include <string>
#include <vector>

#include "kclnet/netlist.hpp"
#include "kclnet/parallel.hpp"

namespace kclnet {

struct SynthError : std::runtime_error {
    SynthError(std::string error_code, const std::string& msg)
        : std::runtime_error(error_code + ": " + msg), code(std::move(error_code)) {}
    std::string code;  // InvalidTemplateParams | NoSpliceSite | ExhaustedEdits | TooFewSamples
};

constexpr int kNumClasses = 12;

const char* class_name(int class_id);

struct GenParams {
    int min_stages = 2;
    int max_stages = 10;
};

// Deterministic per (class_id, params, seed); always one voltage source and
// a ground net, device count set by the template's stage range.
Circuit gen_circuit(int class_id, const GenParams& params, uint64_t seed);

struct Injection {
    Circuit merged;
    int block_class = -1;
    std::vector<std::string> positive_nodes;  // injected device + internal net ids
};

Injection inject_subcircuit(const Circuit& host, int block_class, uint64_t seed);

struct Mutation {
    Circuit mutated;
    int ged = 0;  // applied edit count, an upper bound on the true distance
};

Mutation mutate(const Circuit& c, int n_edits, uint64_t seed);

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
    uint64_t seed = 0;
};

SplitSpec split_spec_for_task(const std::string& task);

struct Splits {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

// Disjoint, class-stratified, deterministic per seed.
Splits make_splits(const std::vector<int>& class_of_sample, const SplitSpec& spec);

struct DatasetEntry {
    std::string path;
    std::string path2;  // second of a ged pair
    std::string task;
    int label = -1;     // class id, block class, or edit count
    std::vector<std::string> positive_nodes;
    std::string split;
};

std::vector<DatasetEntry> generate_dataset(const std::string& dir, const std::string& task, int n,
                                           uint64_t seed, const GenParams& params = {},
                                           ExecMode mode = ExecMode::Parallel);

void write_manifest(const std::string& path, const std::vector<DatasetEntry>& entries);
std::vector<DatasetEntry> load_manifest(const std::string& path);

}  // namespace kclnet
