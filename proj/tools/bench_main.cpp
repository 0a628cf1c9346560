#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "kclnet/harness.hpp"
#include "kclnet/kclverify.hpp"

using namespace kclnet;

namespace {

double seconds(const std::function<void()>& fn) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

void row(const char* name, double serial, double parallel) {
    std::printf("%-28s %10.3fs %10.3fs %8.2fx\n", name, serial, parallel,
                parallel > 0 ? serial / parallel : 0.0);
}

}  // namespace

int main() {
    std::printf("workers: %d\n", worker_count());
    std::printf("%-28s %11s %11s %9s\n", "kernel", "serial", "openmp", "speedup");

    const std::string dir = "bench_data";
    std::vector<DatasetEntry> entries;
    double t_gen_serial = seconds([&] {
        entries = generate_dataset(dir + "/serial", "cls", 96, 1, GenParams{}, ExecMode::Serial);
    });
    double t_gen_parallel = seconds([&] {
        entries = generate_dataset(dir + "/par", "cls", 96, 1, GenParams{}, ExecMode::Parallel);
    });
    row("dataset generation", t_gen_serial, t_gen_parallel);

    std::vector<CompiledCircuit> circuits;
    double t_compile_serial =
        seconds([&] { circuits = compile_entries(entries, ExecMode::Serial); });
    double t_compile_parallel =
        seconds([&] { circuits = compile_entries(entries, ExecMode::Parallel); });
    row("netlist compile", t_compile_serial, t_compile_parallel);

    PretrainConfig cfg;
    cfg.epochs = 3;
    AgnnParams params = AgnnParams::init(AgnnConfig{}, 0);
    std::vector<int> batch(circuits.size());
    std::iota(batch.begin(), batch.end(), 0);

    BatchResult serial_result, parallel_result;
    double t_batch_serial = seconds([&] {
        for (int rep = 0; rep < 3; ++rep)
            serial_result = pretrain_batch(circuits, batch, params, cfg, rep, ExecMode::Serial);
    });
    double t_batch_parallel = seconds([&] {
        for (int rep = 0; rep < 3; ++rep)
            parallel_result =
                pretrain_batch(circuits, batch, params, cfg, rep, ExecMode::Parallel);
    });
    row("pretrain batch fwd+bwd", t_batch_serial, t_batch_parallel);

    bool identical = serial_result.loss_sum == parallel_result.loss_sum &&
                     serial_result.grads.size() == parallel_result.grads.size();
    for (size_t i = 0; identical && i < serial_result.grads.size(); ++i)
        identical = serial_result.grads[i] == parallel_result.grads[i];
    std::printf("serial/openmp results identical: %s\n", identical ? "yes" : "NO");

    std::filesystem::remove_all(dir);
    return identical ? 0 : 1;
}
