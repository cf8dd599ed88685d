#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "condi/bench.hpp"
#include "condi/common.hpp"

using namespace condi;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

ExperimentSpec tiny_spec() {
    ExperimentSpec spec = experiment_from_json(json::parse(R"({
        "corpus": {"train_videos": 8, "test_videos": 6, "num_classes": 3,
                   "clips_per_video": 2, "clip_length": 16, "frame_size": 32,
                   "corrupt_prob": 0.25, "seed": 3},
        "teacher": {"epochs": 1},
        "students": {"condi-sr": {"epochs": 1}},
        "regimes": ["dense", "topk"],
        "samplers": ["equidistant"],
        "k": [2],
        "seeds": [0]
    })"));
    return spec;
}

struct TempDir {
    fs::path dir;
    explicit TempDir(const char* tag) {
        dir = fs::temp_directory_path() /
              (std::string("condi_bench_") + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

} // namespace

TEST_SUITE("bench") {

TEST_CASE("gen_params_from_json overlays and validates") {
    GenParams base;
    base.num_videos = 1;
    base.num_classes = 2;
    base.frames_per_video = 16;
    base.clip_length = 16;
    base.frame_size = 16;

    GenParams p = gen_params_from_json(
        json{{"num_videos", 4}, {"texture", {{"bg_level", 0.2}, {"occluder_count", 5}}}}, base);
    CHECK(p.num_videos == 4);
    CHECK(p.texture.bg_level == 0.2);
    CHECK(p.texture.occluder_count == 5);
    CHECK(p.num_classes == 2);

    CHECK_THROWS_AS(gen_params_from_json(json{{"zzz", 1}}, base), ConfigError);
    CHECK_THROWS_AS(gen_params_from_json(json{{"texture", {{"zzz", 1}}}}, base), ConfigError);
    CHECK_THROWS_AS(gen_params_from_json(json::array(), base), ConfigError);
    CHECK_THROWS_AS(gen_params_from_json(json{{"num_videos", "four"}}, base), ConfigError);
}

TEST_CASE("experiment_from_json validates structure") {
    CHECK_THROWS_AS(experiment_from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(json{{"zzz", 1}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(json{{"corpus", {{"zzz", 1}}}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(json{{"regimes", {"warp"}}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(json{{"samplers", {"psychic"}}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(json{{"seeds", json::array()}}), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(json{{"students", {{"bogus", json::object()}}}}),
                    ConfigError);

    const ExperimentSpec spec = experiment_from_json(json::object());
    REQUIRE(spec.students.size() == 1);
    CHECK(spec.students[0].method == "condi-sr");
    CHECK(spec.corpus.train_videos == 500);
    CHECK(spec.eval_student == "condi-sr");
}

TEST_CASE("pipeline caches stages and detects tampering") {
    TempDir work("cache");
    const ExperimentSpec spec = tiny_spec();

    std::ostringstream log1;
    const PipelineArtifacts art = run_pipeline_stages(spec, work.dir, log1);
    CHECK(log1.str().find("[stage] built") != std::string::npos);
    CHECK(log1.str().find("[cache] reuse") == std::string::npos);
    CHECK(fs::exists(art.teacher_checkpoint));
    CHECK(fs::exists(art.label_table));
    REQUIRE(art.student_checkpoints.size() == 1);
    CHECK(art.student_checkpoints[0].first == "condi-sr");

    std::ostringstream log2;
    const PipelineArtifacts again = run_pipeline_stages(spec, work.dir, log2);
    CHECK(log2.str().find("[cache] reuse") != std::string::npos);
    CHECK(log2.str().find("[stage] built") == std::string::npos);
    CHECK(again.teacher_checkpoint == art.teacher_checkpoint);

    // Changing the eval_student to a method that was never distilled is a
    // config error surfaced before any evaluation runs.
    ExperimentSpec wrong = spec;
    wrong.eval_student = "st-ent";
    std::ostringstream log3;
    CHECK_THROWS_AS(run_experiment(wrong, work.dir, log3), ConfigError);

    {
        std::ofstream tamper(art.teacher_checkpoint, std::ios::binary | std::ios::app);
        tamper << "junk";
    }
    std::ostringstream log4;
    CHECK_THROWS_AS(run_pipeline_stages(spec, work.dir, log4), DataError);
}

TEST_CASE("svg plots carry axes and series") {
    TempDir work("svg");
    ReportTable table;
    ReportRow dense;
    dense.regime = "dense";
    dense.sampler = "none";
    dense.top1 = 0.9;
    dense.mean_flops = 4000;
    dense.seed = "0";
    table.rows.push_back(dense);
    for (int k = 1; k <= 3; ++k) {
        ReportRow row;
        row.regime = "topk";
        row.sampler = "confidence";
        row.k = k;
        row.top1 = 0.5 + 0.1 * k;
        row.mean_flops = 1000.0 * k;
        row.seed = "0";
        table.rows.push_back(row);
    }

    const fs::path by_k = work.dir / "k.svg";
    write_accuracy_vs_k_svg(table, by_k);
    std::ifstream in(by_k);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string svg = buf.str();
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("confidence") != std::string::npos);
    CHECK(svg.find("dense") != std::string::npos);

    const fs::path by_flops = work.dir / "flops.svg";
    write_accuracy_vs_flops_svg(table, by_flops);
    std::ifstream in2(by_flops);
    std::stringstream buf2;
    buf2 << in2.rdbuf();
    CHECK(buf2.str().find("<svg") != std::string::npos);

    // An empty table still renders a well-formed file.
    const fs::path empty_svg = work.dir / "empty.svg";
    write_accuracy_vs_k_svg(ReportTable{}, empty_svg);
    std::ifstream in3(empty_svg);
    std::stringstream buf3;
    buf3 << in3.rdbuf();
    CHECK(buf3.str().find("no data") != std::string::npos);
}

TEST_CASE("report csv round-trips through parse and render") {
    ReportTable table;
    ReportRow row;
    row.regime = "topk";
    row.sampler = "random";
    row.k = 3;
    row.k_s = 0;
    row.top1 = 1.0 / 3.0;
    row.mean_flops = 123456.789;
    row.mean_wall_s = 0.0125;
    row.seed = "mean";
    row.dataset_hash = "feed";
    table.rows.push_back(row);

    const std::string csv = render_csv(table);
    std::istringstream in(csv);
    const ReportTable back = parse_csv(in, "unit");
    REQUIRE(back.rows.size() == 1);
    CHECK(back.rows[0].top1 == row.top1);
    CHECK(back.rows[0].mean_flops == row.mean_flops);
    CHECK(back.rows[0].seed == "mean");
    CHECK(render_csv(back) == csv);

    std::istringstream bad("not,a,header\n");
    CHECK_THROWS_AS(parse_csv(bad, "unit"), DataError);

    std::istringstream short_row(std::string(kMetricsHeader) + "\ntopk,random,3\n");
    CHECK_THROWS_AS(parse_csv(short_row, "unit"), DataError);
}

} // TEST_SUITE
