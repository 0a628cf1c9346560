#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kclnet/harness.hpp"
#include "kclnet/kclverify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitCheckFailed = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

kclnet::Circuit load_circuit(const std::string& path) {
    std::string text = read_file(path);
    return path.ends_with(".json") ? kclnet::circuit_from_graph_json(text)
                                   : kclnet::parse_netlist(text);
}

int run_gen(const std::string& task, int n, uint64_t seed, const std::string& out_dir,
            int min_stages, int max_stages) {
    kclnet::GenParams params{min_stages, max_stages};
    auto entries = kclnet::generate_dataset(out_dir, task, n, seed, params);
    kclnet::write_manifest((std::filesystem::path(out_dir) / "manifest.json").string(), entries);
    std::cout << "wrote " << entries.size() << " " << task << " samples to " << out_dir << "\n";
    return kExitOk;
}

int run_compile(const std::string& in_path, const std::string& out_path) {
    kclnet::Circuit c = load_circuit(in_path);
    kclnet::ValidationReport rep = kclnet::validate_circuit(c);
    for (const kclnet::Issue& issue : rep.issues)
        std::cerr << (issue.severity == kclnet::Severity::Error ? "ERROR " : "WARNING ")
                  << issue.code << " " << issue.location << ": " << issue.message << "\n";
    if (!rep.ok) return kExitValidation;
    kclnet::CompiledCircuit cc = kclnet::compile_circuit(std::move(c), in_path);
    for (const std::string& id : cc.dag.dropped)
        std::cerr << "WARNING dropped unreachable node " << id << "\n";
    std::string json = kclnet::dag_to_json(cc.circuit, cc.dag, cc.depths);
    if (out_path.empty())
        std::cout << json;
    else
        write_file(out_path, json);
    return kExitOk;
}

int run_pretrain(const std::string& data, const std::string& out, const std::string& trace_path,
                 kclnet::PretrainConfig cfg, const std::string& variant) {
    cfg.variant = kclnet::loss_variant_from_string(variant);
    auto entries = kclnet::load_manifest(data);
    auto circuits = kclnet::compile_entries(entries);
    kclnet::PretrainResult res = kclnet::pretrain(circuits, cfg);
    kclnet::save_checkpoint(out, res.checkpoint);
    if (!trace_path.empty()) write_file(trace_path, kclnet::trace_to_csv(res.trace));
    double last = res.trace.empty() ? 0.0 : res.trace.back().mean_loss;
    std::cout << "pretrained " << variant << " for " << res.checkpoint.epoch
              << " epochs, final mean loss " << last << ", saved " << out << "\n";
    return kExitOk;
}

int run_finetune(const std::string& ckpt_path, const std::string& data, const std::string& task,
                 const std::string& out, const std::string& metrics_prefix,
                 kclnet::FinetuneConfig cfg) {
    kclnet::Checkpoint ckpt = kclnet::load_checkpoint(ckpt_path);
    kclnet::TaskData td = kclnet::load_task_data(kclnet::load_manifest(data));
    kclnet::FinetuneResult res = kclnet::finetune(ckpt, td, cfg);
    if (!out.empty()) kclnet::save_checkpoint(out, res.model);
    std::cout << "best epoch " << res.best_epoch << "\n";
    std::cout << kclnet::metrics_to_json(res.test);
    if (!metrics_prefix.empty()) {
        write_file(metrics_prefix + ".json", kclnet::metrics_to_json(res.test));
        write_file(metrics_prefix + ".csv", kclnet::metrics_to_csv(res.test, task, cfg.seed));
    }
    return kExitOk;
}

int run_eval(const std::string& model_path, const std::string& data, const std::string& split,
             const std::string& metrics_prefix, uint64_t seed) {
    kclnet::Checkpoint model = kclnet::load_checkpoint(model_path);
    kclnet::TaskData td = kclnet::load_task_data(kclnet::load_manifest(data));
    const std::vector<int>& idx = split == "train" ? td.splits.train
                                  : split == "val" ? td.splits.val
                                                   : td.splits.test;
    kclnet::MetricsReport m = kclnet::evaluate_model(model, td, idx);
    std::cout << kclnet::metrics_to_json(m);
    if (!metrics_prefix.empty()) {
        write_file(metrics_prefix + ".json", kclnet::metrics_to_json(m));
        write_file(metrics_prefix + ".csv", kclnet::metrics_to_csv(m, td.task, seed));
    }
    return kExitOk;
}

int run_verify(const std::string& ckpt_path, const std::string& circuit_path,
               const std::string& out) {
    kclnet::Checkpoint ckpt = kclnet::load_checkpoint(ckpt_path);
    kclnet::Circuit c = load_circuit(circuit_path);
    kclnet::VerifyReport rep =
        kclnet::verify_trained_model(ckpt.config, ckpt.params, c, circuit_path);
    std::string json = kclnet::verify_report_json(rep);
    std::cout << json;
    if (!out.empty()) write_file(out, json);
    return rep.pass ? kExitOk : kExitCheckFailed;
}

int run_gradcheck(double eps, double tolerance) {
    using namespace kclnet;
    bool ok = true;
    auto report = [&ok, tolerance](const std::string& name, double err) {
        bool pass = err < tolerance;
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << name << " max rel err " << err << "\n";
    };

    // KCL loss through the encoder on a small parallel circuit.
    Circuit c = gen_circuit(0, GenParams{2, 2}, 7);
    CompiledCircuit cc = compile_circuit(std::move(c));
    AgnnConfig acfg;
    acfg.hidden_size = 8;
    acfg.num_layers = 2;
    AgnnParams ap = AgnnParams::init(acfg, 1);
    std::vector<Matrix> flat;
    ap.visit([&flat](const Matrix& m) { flat.push_back(m); });
    report("kcl_loss(forward_async)", grad_check(
        [&cc](Tape& tape, const std::vector<int>& ids) {
            BoundAgnn bound = bound_from_ids(ids);
            std::vector<int> nodes = forward_async(tape, bound, cc.dag, cc.depths, cc.features);
            auto currents = depth_current_embeddings(tape, nodes, cc.depths);
            auto negatives = hard_negatives(tape, nodes, cc.depths, 1);
            return kcl_loss(tape, currents, negatives, LossConfig{});
        },
        flat, eps));

    Rng rng(11);
    Matrix z(8, 1);
    for (size_t i = 0; i < z.size(); ++i) z.at_flat(i) = rng.normal();
    ClassifierHead ch = ClassifierHead::init(8, 5, 3);
    report("loss_cls", grad_check(
        [&z](Tape& tape, const std::vector<int>& ids) {
            int lg = cls_logits(tape, ids[0], ids[1], tape.leaf(z));
            return loss_cls(tape, {lg}, {2});
        },
        {ch.w, ch.b}, eps));

    DetectorHead dh = DetectorHead::init(8, 5, 4);
    report("loss_det", grad_check(
        [&z](Tape& tape, const std::vector<int>& ids) {
            int lg = det_logit(tape, ids[0], ids[1], tape.leaf(z), 1, 5);
            return loss_det(tape, {lg}, {1.0});
        },
        {dh.w, dh.b}, eps));

    GedHead gh = GedHead::init(8, 5);
    Matrix z2(8, 1);
    for (size_t i = 0; i < z2.size(); ++i) z2.at_flat(i) = rng.normal();
    report("loss_ged", grad_check(
        [&z, &z2](Tape& tape, const std::vector<int>& ids) {
            int pred = ged_predict(tape, ids[0], ids[1], tape.leaf(z), tape.leaf(z2));
            return loss_ged(tape, {pred}, {3.0});
        },
        {gh.w, gh.b}, eps));

    return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"analog circuit representation toolkit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_task = "cls", gen_out = "dataset";
    int gen_n = 120, gen_min_stages = 2, gen_max_stages = 10;
    uint64_t gen_seed = 0;
    gen->add_option("--task", gen_task, "cls|det|ged")->required();
    gen->add_option("--n", gen_n, "sample count");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--min-stages", gen_min_stages);
    gen->add_option("--max-stages", gen_max_stages);

    auto* compile = app.add_subcommand("compile", "netlist to layered graph JSON");
    std::string compile_in, compile_out;
    compile->add_option("--in", compile_in, "input .cir (or graph .json)")->required();
    compile->add_option("--out", compile_out, "output JSON path (default stdout)");

    auto* pretrain = app.add_subcommand("pretrain", "self-supervised pretraining");
    std::string pt_data, pt_out = "checkpoint.json", pt_trace, pt_variant = "full";
    kclnet::PretrainConfig pt_cfg;
    pretrain->add_option("--data", pt_data, "dataset manifest")->required();
    pretrain->add_option("--out", pt_out, "checkpoint path");
    pretrain->add_option("--trace", pt_trace, "loss trace CSV path");
    pretrain->add_option("--variant", pt_variant, "full|no_pos|no_neg|none");
    pretrain->add_option("--lr0", pt_cfg.lr0);
    pretrain->add_option("--momentum", pt_cfg.momentum);
    pretrain->add_option("--weight-decay", pt_cfg.weight_decay);
    pretrain->add_option("--epochs", pt_cfg.epochs);
    pretrain->add_option("--batch-size", pt_cfg.batch_size);
    pretrain->add_option("--tau", pt_cfg.tau);
    pretrain->add_option("--topk", pt_cfg.top_k);
    pretrain->add_option("--seed", pt_cfg.seed);
    pretrain->add_option("--augment", pt_cfg.augmentation_strength);
    pretrain->add_option("--gamma", pt_cfg.gamma);
    pretrain->add_flag("--literal-loss", pt_cfg.literal_denominator,
                       "negatives-only denominator");
    pretrain->add_flag("--exclude-endpoints", pt_cfg.exclude_endpoints,
                       "drop source/sink depths from positive pairs");

    auto* finetune = app.add_subcommand("finetune", "train a task head on a checkpoint");
    std::string ft_ckpt, ft_data, ft_task = "cls", ft_out, ft_metrics;
    kclnet::FinetuneConfig ft_cfg;
    bool ft_has_lr = false, ft_has_wd = false;
    double ft_lr = 0.0, ft_wd = 0.0;
    finetune->add_option("--ckpt", ft_ckpt, "pretrained checkpoint")->required();
    finetune->add_option("--data", ft_data, "dataset manifest")->required();
    finetune->add_option("--task", ft_task, "cls|det|ged")->required();
    finetune->add_option("--out", ft_out, "trained model path");
    finetune->add_option("--metrics-out", ft_metrics, "metrics file prefix");
    finetune->add_option("--lr0", ft_lr)->each([&ft_has_lr](const std::string&) { ft_has_lr = true; });
    finetune->add_option("--weight-decay", ft_wd)->each([&ft_has_wd](const std::string&) { ft_has_wd = true; });
    finetune->add_option("--epochs", ft_cfg.epochs);
    finetune->add_option("--dropout", ft_cfg.dropout);
    finetune->add_option("--seed", ft_cfg.seed);
    finetune->add_flag("--freeze-encoder", ft_cfg.freeze_encoder);

    auto* eval = app.add_subcommand("eval", "evaluate a trained model");
    std::string ev_model, ev_data, ev_split = "test", ev_metrics;
    uint64_t ev_seed = 0;
    eval->add_option("--model", ev_model, "trained model checkpoint")->required();
    eval->add_option("--data", ev_data, "dataset manifest")->required();
    eval->add_option("--split", ev_split, "train|val|test");
    eval->add_option("--metrics-out", ev_metrics, "metrics file prefix");
    eval->add_option("--seed", ev_seed, "seed column for the CSV");

    auto* verify = app.add_subcommand("verify-kcl", "layer-sum witness report");
    std::string vk_ckpt, vk_circuit, vk_out;
    verify->add_option("--ckpt", vk_ckpt, "checkpoint")->required();
    verify->add_option("--circuit", vk_circuit, "netlist or graph JSON")->required();
    verify->add_option("--out", vk_out, "report path");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    double gc_eps = 1e-5, gc_tol = 1e-4;
    gradcheck->add_option("--eps", gc_eps, "finite-difference step");
    gradcheck->add_option("--tolerance", gc_tol, "max relative error allowed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen(gen_task, gen_n, gen_seed, gen_out, gen_min_stages,
                                          gen_max_stages);
        if (compile->parsed()) return run_compile(compile_in, compile_out);
        if (pretrain->parsed()) return run_pretrain(pt_data, pt_out, pt_trace, pt_cfg, pt_variant);
        if (finetune->parsed()) {
            kclnet::FinetuneConfig cfg = kclnet::FinetuneConfig::for_task(ft_task);
            cfg.epochs = ft_cfg.epochs;
            cfg.dropout = ft_cfg.dropout;
            cfg.seed = ft_cfg.seed;
            cfg.freeze_encoder = ft_cfg.freeze_encoder;
            if (ft_has_lr) cfg.lr0 = ft_lr;
            if (ft_has_wd) cfg.weight_decay = ft_wd;
            return run_finetune(ft_ckpt, ft_data, ft_task, ft_out, ft_metrics, cfg);
        }
        if (eval->parsed()) return run_eval(ev_model, ev_data, ev_split, ev_metrics, ev_seed);
        if (verify->parsed()) return run_verify(vk_ckpt, vk_circuit, vk_out);
        if (gradcheck->parsed()) return run_gradcheck(gc_eps, gc_tol);
    } catch (const kclnet::VerifyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
