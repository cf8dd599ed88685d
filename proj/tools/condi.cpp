// condi: data generation, training, distillation, and evaluation CLI.

#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "condi/bench.hpp"
#include "condi/common.hpp"
#include "condi/distill.hpp"
#include "condi/inference.hpp"
#include "condi/nets.hpp"
#include "condi/trainer.hpp"
#include "condi/videodata.hpp"

namespace fs = std::filesystem;
using namespace condi;

namespace {

nlohmann::json load_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open config: " + path.string());
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
}

TrainConfig resolve_train_config(const std::string& method, const std::string& config_path,
                                 bool seed_given, std::uint64_t seed) {
    TrainConfig cfg = default_train_config(method);
    if (!config_path.empty()) {
        cfg = train_config_from_json(load_json(config_path), cfg);
        cfg.method = method;
    }
    if (seed_given) cfg.seed = seed;
    return cfg;
}

// Train log and resolved config land next to the checkpoint.
void write_train_artifacts(const TrainResult& result, const TrainConfig& cfg,
                           const fs::path& ckpt) {
    const fs::path dir = ckpt.parent_path();
    const std::string stem = ckpt.stem().string();
    save_train_log(result.log, dir / (stem + ".train_log.csv"));
    write_resolved_config(cfg, dir / (stem + ".config.json"));
}

NetworkF load_net(const fs::path& path) { return load_checkpoint(path).net; }

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confidence-distilled video action recognition toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic video corpus");
    std::string gen_out, gen_config;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Output corpus directory")->required();
    gen->add_option("--config", gen_config, "Corpus parameters (JSON)");
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Generator seed");

    // train-teacher
    auto* teach = app.add_subcommand("train-teacher", "Train the teacher on clip labels");
    std::string teach_data, teach_out, teach_config;
    std::uint64_t teach_seed = 0;
    teach->add_option("--data", teach_data, "Corpus directory")->required();
    teach->add_option("--out", teach_out, "Checkpoint path")->required();
    teach->add_option("--config", teach_config, "Training config (JSON)");
    auto* teach_seed_opt = teach->add_option("--seed", teach_seed, "Training seed");

    // make-labels
    auto* labels = app.add_subcommand("make-labels",
                                      "Write teacher-correctness pseudo labels");
    std::string lab_data, lab_teacher, lab_out;
    labels->add_option("--data", lab_data, "Corpus directory")->required();
    labels->add_option("--teacher", lab_teacher, "Teacher checkpoint")->required();
    labels->add_option("--out", lab_out, "Label table path (JSONL)")->required();

    // distill
    auto* dist = app.add_subcommand("distill", "Distill a student from the teacher");
    std::string dist_method, dist_data, dist_teacher, dist_labels, dist_out, dist_config;
    std::uint64_t dist_seed = 0;
    dist->add_option("--method", dist_method, "Distillation loss")
        ->required()
        ->check(CLI::IsMember({"condi-sr", "st-ent", "st-conf", "naive-bce"}));
    dist->add_option("--data", dist_data, "Corpus directory")->required();
    dist->add_option("--teacher", dist_teacher, "Teacher checkpoint")->required();
    dist->add_option("--labels", dist_labels, "Pseudo-label table (JSONL)");
    dist->add_option("--out", dist_out, "Student checkpoint path")->required();
    dist->add_option("--config", dist_config, "Training config (JSON)");
    auto* dist_seed_opt = dist->add_option("--seed", dist_seed, "Training seed");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Evaluate an inference regime on a corpus");
    std::string eval_data, eval_teacher, eval_student, eval_regime, eval_out;
    std::string eval_sampler = "confidence";
    int eval_k = 1, eval_ks = 0;
    std::uint64_t eval_seed = 0;
    bool eval_weighted = false;
    eval->add_option("--data", eval_data, "Corpus directory")->required();
    eval->add_option("--teacher", eval_teacher, "Teacher checkpoint")->required();
    eval->add_option("--student", eval_student, "Student checkpoint");
    eval->add_option("--regime", eval_regime, "Inference regime")
        ->required()
        ->check(CLI::IsMember({"dense", "topk", "divided"}));
    eval->add_option("--sampler", eval_sampler, "Clip sampler")
        ->check(CLI::IsMember({"random", "equidistant", "oracle", "confidence", "entropy"}));
    eval->add_option("--k", eval_k, "Clips per video");
    eval->add_option("--ks", eval_ks, "Student share of the k clips (divided)");
    eval->add_option("--seed", eval_seed, "Sampler seed");
    eval->add_flag("--weighted", eval_weighted,
                   "Confidence-weighted aggregation for learned samplers");
    eval->add_option("--out", eval_out, "Append metrics row to this CSV");

    // bench
    auto* bench = app.add_subcommand("bench", "Run a full experiment grid");
    std::string bench_spec, bench_out = "bench_out";
    bench->add_option("--spec", bench_spec, "Experiment spec (JSON)")->required();
    bench->add_option("--out", bench_out, "Working/output directory");

    // report
    auto* report = app.add_subcommand("report", "Re-render a metrics CSV");
    std::string report_in, report_format = "csv", report_out;
    report->add_option("--in", report_in, "Metrics CSV")->required();
    report->add_option("--format", report_format, "Output format")
        ->check(CLI::IsMember({"csv", "md"}));
    report->add_option("--out", report_out, "Output path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) {
            GenParams params;
            params.num_videos = 500;
            params.num_classes = 6;
            params.frames_per_video = 128;
            params.corrupt_prob = 0.3;
            if (!gen_config.empty()) {
                params = gen_params_from_json(load_json(gen_config), params);
            }
            if (*gen_seed_opt) params.seed = gen_seed;
            generate_corpus(params, gen_out);
            std::cout << "wrote " << params.num_videos << " videos to " << gen_out << "\n";
        } else if (*teach) {
            const TrainConfig cfg =
                resolve_train_config("teacher", teach_config, !!*teach_seed_opt, teach_seed);
            const DatasetManifest manifest = load_corpus(teach_data);
            const TrainResult result = train_teacher(cfg, teach_data, manifest);
            save_checkpoint(teach_out, result.net, cfg.seed);
            write_train_artifacts(result, cfg, teach_out);
            std::cout << "teacher checkpoint: " << teach_out << "\n";
        } else if (*labels) {
            const DatasetManifest manifest = load_corpus(lab_data);
            const NetTeacher teacher(std::make_shared<NetworkF>(load_net(lab_teacher)));
            const PseudoLabelTable table = make_pseudo_labels(teacher, lab_data, manifest);
            save_pseudo_labels(table, lab_out);
            std::cout << "wrote " << table.size() << " pseudo labels to " << lab_out << "\n";
        } else if (*dist) {
            const TrainConfig cfg =
                resolve_train_config(dist_method, dist_config, !!*dist_seed_opt, dist_seed);
            const DatasetManifest manifest = load_corpus(dist_data);
            const NetworkF teacher_net = load_net(dist_teacher);
            std::unique_ptr<PseudoLabelTable> table;
            if (!dist_labels.empty()) {
                table = std::make_unique<PseudoLabelTable>(load_pseudo_labels(dist_labels));
            }
            const TrainResult result =
                distill_student(cfg, teacher_net, table.get(), dist_data, manifest);
            save_checkpoint(dist_out, result.net, cfg.seed);
            write_train_artifacts(result, cfg, dist_out);
            std::cout << "student checkpoint: " << dist_out << "\n";
        } else if (*eval) {
            EvalConfig cfg;
            cfg.regime = regime_from_name(eval_regime);
            cfg.sampler = sampler_from_name(eval_sampler);
            cfg.k = eval_k;
            cfg.k_s = eval_ks;
            cfg.seed = eval_seed;
            cfg.weighted = eval_weighted;
            const DatasetManifest manifest = load_corpus(eval_data);
            const NetTeacher teacher(std::make_shared<NetworkF>(load_net(eval_teacher)));
            std::unique_ptr<NetStudent> student;
            if (!eval_student.empty()) {
                student = std::make_unique<NetStudent>(
                    std::make_shared<NetworkF>(load_net(eval_student)));
            }
            const bool needs_student =
                cfg.regime == Regime::divided ||
                (cfg.regime == Regime::topk && (cfg.sampler == SamplerKind::confidence ||
                                                cfg.sampler == SamplerKind::entropy));
            if (needs_student && !student) {
                throw ConfigError("this regime/sampler needs --student");
            }
            const EvalResult result =
                evaluate_split(teacher, student.get(), eval_data, manifest, cfg);
            const std::string row = metrics_csv_row(result, cfg);
            std::cout << kMetricsHeader << "\n" << row << "\n";
            if (!eval_out.empty()) {
                const bool fresh = !fs::exists(eval_out);
                std::ofstream out(eval_out, std::ios::binary | std::ios::app);
                if (fresh) out << kMetricsHeader << "\n";
                out << row << "\n";
                if (!out) {
                    throw DataError("failed writing " + eval_out);
                }
            }
        } else if (*bench) {
            const ExperimentSpec spec = load_experiment_spec(bench_spec);
            fs::create_directories(bench_out);
            const ReportTable table = run_experiment(spec, bench_out, std::cout);
            const fs::path dir(bench_out);
            write_text(dir / "report.csv", render_csv(table));
            write_text(dir / "report.md", render_markdown(table));
            write_accuracy_vs_k_svg(table, dir / "accuracy_vs_k.svg");
            write_accuracy_vs_flops_svg(table, dir / "accuracy_vs_flops.svg");
            std::cout << "report: " << (dir / "report.csv").string() << "\n";
        } else if (*report) {
            const ReportTable table = load_report_csv(report_in);
            const std::string text =
                report_format == "md" ? render_markdown(table) : render_csv(table);
            if (report_out.empty()) {
                std::cout << text;
            } else {
                write_text(report_out, text);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
