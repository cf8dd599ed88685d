#ifndef CONDI_BENCH_HPP
#define CONDI_BENCH_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "condi/inference.hpp"
#include "condi/trainer.hpp"
#include "condi/videodata.hpp"

namespace condi {

struct CorpusSpec {
    int train_videos = 500;
    int test_videos = 200;
    int num_classes = 6;
    int clips_per_video = 8;
    int clip_length = 16;
    int frame_size = 32;
    double corrupt_prob = 0.3;
    std::uint64_t seed = 0;
    TextureParams texture;
};

struct ExperimentSpec {
    CorpusSpec corpus;
    TrainConfig teacher = default_train_config("teacher");
    std::vector<TrainConfig> students; // one per method to distill
    std::vector<std::string> regimes = {"dense", "topk"};
    std::vector<std::string> samplers = {"random", "equidistant", "confidence"};
    std::vector<int> k_values = {3};
    std::vector<int> ks_values = {0};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::string eval_student = "condi-sr"; // drives learned samplers / divided
};

GenParams gen_params_from_json(const nlohmann::json& j, GenParams base);
ExperimentSpec experiment_from_json(const nlohmann::json& j);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct ReportRow {
    std::string regime;
    std::string sampler;
    int k = 0;
    int k_s = 0;
    double top1 = 0.0;
    double mean_flops = 0.0;
    double mean_wall_s = 0.0;
    double auroc = std::numeric_limits<double>::quiet_NaN();
    std::string seed; // seed number, or "mean" for aggregate rows
    std::string dataset_hash;
};

struct ReportTable {
    std::vector<ReportRow> rows;
};

// Staged generate -> train -> label -> distill -> evaluate pipeline.
// Upstream stages are cached content-addressed under workdir/cache;
// evaluation always runs. Progress and stage keys go to log.
ReportTable run_experiment(const ExperimentSpec& spec, const std::filesystem::path& workdir,
                           std::ostream& log);

std::string render_csv_row(const ReportRow& row);
std::string render_csv(const ReportTable& table);
std::string render_markdown(const ReportTable& table);
ReportTable parse_csv(std::istream& in, const std::string& context);
ReportTable load_report_csv(const std::filesystem::path& path);

void write_accuracy_vs_k_svg(const ReportTable& table, const std::filesystem::path& path);
void write_accuracy_vs_flops_svg(const ReportTable& table, const std::filesystem::path& path);

// Trained artifacts produced (or reused) by the pipeline stages; exposed
// so callers can run extra evaluations against the same cache.
struct PipelineArtifacts {
    std::filesystem::path train_corpus;
    std::filesystem::path test_corpus;
    std::filesystem::path teacher_checkpoint;
    std::filesystem::path label_table;
    std::vector<std::pair<std::string, std::filesystem::path>> student_checkpoints;
};

PipelineArtifacts run_pipeline_stages(const ExperimentSpec& spec,
                                      const std::filesystem::path& workdir, std::ostream& log,
                                      bool use_cache = true);

} // namespace condi

#endif
