#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "condi/common.hpp"
#include "condi/inference.hpp"
#include "condi/nets.hpp"
#include "condi/videodata.hpp"

using namespace condi;
namespace fs = std::filesystem;

namespace {

class FixedTeacher : public ClipModel {
public:
    FixedTeacher(std::vector<float> logits, std::uint64_t flops)
        : logits_(std::move(logits)), flops_(flops) {}
    std::vector<float> class_logits(const Clip&) const override { return logits_; }
    std::uint64_t flops_per_clip() const override { return flops_; }
    int num_classes() const override { return static_cast<int>(logits_.size()); }

private:
    std::vector<float> logits_;
    std::uint64_t flops_;
};

class FixedStudent : public StudentClipModel {
public:
    FixedStudent(std::vector<float> logits, float conf, std::uint64_t flops)
        : logits_(std::move(logits)), conf_(conf), flops_(flops) {}
    StudentScores score(const Clip&) const override { return {logits_, conf_}; }
    std::uint64_t flops_per_clip() const override { return flops_; }
    int num_classes() const override { return static_cast<int>(logits_.size()); }

private:
    std::vector<float> logits_;
    float conf_;
    std::uint64_t flops_;
};

// Six 16px videos with four clips each; stub models never read the pixels.
struct TempCorpus {
    fs::path dir;
    DatasetManifest manifest;

    explicit TempCorpus(unsigned tag) {
        dir = fs::temp_directory_path() /
              ("condi_inf_" + std::to_string(::getpid()) + "_" + std::to_string(tag));
        fs::create_directories(dir);
        GenParams p;
        p.num_videos = 6;
        p.num_classes = 3;
        p.frames_per_video = 32;
        p.clip_length = 8;
        p.frame_size = 16;
        p.corrupt_prob = 0.25;
        p.seed = 404 + tag;
        manifest = generate_corpus(p, dir);
    }
    ~TempCorpus() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

EvalConfig make_cfg(Regime regime, SamplerKind sampler, int k, int k_s) {
    EvalConfig cfg;
    cfg.regime = regime;
    cfg.sampler = sampler;
    cfg.k = k;
    cfg.k_s = k_s;
    cfg.seed = 11;
    return cfg;
}

std::vector<std::string> split_fields(const std::string& row) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : row) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

TEST_SUITE("inference") {

TEST_CASE("auroc matches hand-computed rank statistics") {
    CHECK(auroc({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(auroc({0.9, 0.8, 0.3, 0.2}, {0, 0, 1, 1}) == doctest::Approx(0.0).epsilon(1e-12));
    // Pairs: (.35,.1) ok, (.35,.4) bad, (.8,.1) ok, (.8,.4) ok.
    CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("auroc handles ties by midrank") {
    CHECK(auroc({0.5, 0.5}, {1, 0}) == doctest::Approx(0.5).epsilon(1e-12));
    // The tied pair contributes half a win: (1*1 + 0.5) / 2.
    CHECK(auroc({0.7, 0.3, 0.3}, {1, 1, 0}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("auroc degenerate inputs") {
    CHECK(std::isnan(auroc({0.4, 0.6}, {1, 1})));
    CHECK(std::isnan(auroc({0.4, 0.6}, {0, 0})));
    CHECK(std::isnan(auroc({}, {})));
    CHECK_THROWS_AS(auroc({0.1, 0.2}, {1}), NumericError);
}

TEST_CASE("metrics_csv_row field layout") {
    EvalResult res;
    res.top1 = 0.625;
    res.mean_flops = 1234.5;
    res.mean_wall_s = 0.25;
    res.auroc = std::numeric_limits<double>::quiet_NaN();
    res.seed = 7;
    res.dataset_hash = "abcd";

    EvalConfig dense = make_cfg(Regime::dense, SamplerKind::random, 5, 2);
    auto fields = split_fields(metrics_csv_row(res, dense));
    REQUIRE(fields.size() == 10);
    CHECK(fields[0] == "dense");
    CHECK(fields[1] == "none");
    CHECK(fields[2] == "0");
    CHECK(fields[3] == "0");
    CHECK(std::stod(fields[4]) == 0.625);
    CHECK(fields[7] == "nan");
    CHECK(fields[8] == "7");
    CHECK(fields[9] == "abcd");

    res.auroc = 0.875;
    EvalConfig div = make_cfg(Regime::divided, SamplerKind::confidence, 3, 2);
    fields = split_fields(metrics_csv_row(res, div));
    CHECK(fields[0] == "divided");
    CHECK(fields[1] == "confidence");
    CHECK(fields[2] == "3");
    CHECK(fields[3] == "2");
    CHECK(std::stod(fields[7]) == 0.875);

    EvalConfig topk = make_cfg(Regime::topk, SamplerKind::equidistant, 2, 2);
    fields = split_fields(metrics_csv_row(res, topk));
    CHECK(fields[1] == "equidistant");
    CHECK(fields[2] == "2");
    CHECK(fields[3] == "0");
}

TEST_CASE("evaluate_split accounts flops per regime") {
    TempCorpus corpus(1);
    FixedTeacher teacher({0.0f, 2.0f, 0.0f}, 1000);
    FixedStudent student({0.1f, 0.2f, 0.3f}, 0.4f, 7);

    auto dense = evaluate_split(teacher, nullptr, corpus.dir, corpus.manifest,
                                make_cfg(Regime::dense, SamplerKind::random, 0, 0));
    CHECK(dense.mean_flops == doctest::Approx(4000.0).epsilon(1e-12));
    // Labels cycle through the classes, the stub always answers class 1.
    CHECK(dense.top1 == doctest::Approx(2.0 / 6.0).epsilon(1e-12));

    auto trivial = evaluate_split(teacher, nullptr, corpus.dir, corpus.manifest,
                                  make_cfg(Regime::topk, SamplerKind::equidistant, 2, 0));
    CHECK(trivial.mean_flops == doctest::Approx(2000.0).epsilon(1e-12));

    auto learned = evaluate_split(teacher, &student, corpus.dir, corpus.manifest,
                                  make_cfg(Regime::topk, SamplerKind::confidence, 2, 0));
    CHECK(learned.mean_flops == doctest::Approx(4 * 7 + 2000.0).epsilon(1e-12));

    auto divided = evaluate_split(teacher, &student, corpus.dir, corpus.manifest,
                                  make_cfg(Regime::divided, SamplerKind::confidence, 3, 1));
    CHECK(divided.mean_flops == doctest::Approx(4 * 7 + 2000.0).epsilon(1e-12));

    CHECK(dense.dataset_hash == corpus_hash(corpus.dir));
}

TEST_CASE("evaluate_split clamps oversized budgets per video") {
    TempCorpus corpus(2);
    FixedTeacher teacher({1.0f, 0.0f, 0.0f}, 1000);
    auto res = evaluate_split(teacher, nullptr, corpus.dir, corpus.manifest,
                              make_cfg(Regime::topk, SamplerKind::equidistant, 99, 0));
    CHECK(res.mean_flops == doctest::Approx(4000.0).epsilon(1e-12));

    Clip clip;
    std::vector<Clip> clips(4, clip);
    TopKOptions opts;
    opts.sampler = SamplerKind::equidistant;
    opts.k = 99;
    CHECK_THROWS_AS(predict_topk(teacher, nullptr, clips, opts), ConfigError);
}

TEST_CASE("evaluate_split rejects an empty split") {
    TempCorpus corpus(3);
    DatasetManifest empty = corpus.manifest;
    empty.entries.clear();
    FixedTeacher teacher({1.0f, 0.0f, 0.0f}, 10);
    CHECK_THROWS_AS(evaluate_split(teacher, nullptr, corpus.dir, empty,
                                   make_cfg(Regime::dense, SamplerKind::random, 0, 0)),
                    DataError);
}

TEST_CASE("sampler and weighting preconditions") {
    FixedTeacher teacher({1.0f, 0.0f}, 10);
    FixedStudent student({0.5f, 0.5f}, 0.0f, 1);
    Clip clip;
    std::vector<Clip> clips(4, clip);

    TopKOptions opts;
    opts.k = 2;
    opts.sampler = SamplerKind::confidence;
    CHECK_THROWS_AS(predict_topk(teacher, nullptr, clips, opts), ConfigError);

    opts.sampler = SamplerKind::equidistant;
    opts.weighted = true;
    CHECK_THROWS_AS(predict_topk(teacher, &student, clips, opts), ConfigError);

    opts.sampler = SamplerKind::oracle;
    opts.weighted = false;
    opts.label = -1;
    CHECK_THROWS_AS(predict_topk(teacher, nullptr, clips, opts), ConfigError);

    CHECK_THROWS_AS(predict_dense(teacher, {}), DataError);
}

TEST_CASE("confidence auroc is computed only on request") {
    TempCorpus corpus(4);
    FixedTeacher teacher({0.0f, 2.0f, 0.0f}, 1000);
    FixedStudent student({0.1f, 0.2f, 0.3f}, 0.4f, 7);

    EvalConfig cfg = make_cfg(Regime::topk, SamplerKind::confidence, 2, 0);
    cfg.compute_auroc = false;
    auto off = evaluate_split(teacher, &student, corpus.dir, corpus.manifest, cfg);
    CHECK(std::isnan(off.auroc));

    cfg.compute_auroc = true;
    auto on = evaluate_split(teacher, &student, corpus.dir, corpus.manifest, cfg);
    // Constant confidence on mixed teacher correctness ranks at chance.
    CHECK(on.auroc == doctest::Approx(0.5).epsilon(1e-12));
}

} // TEST_SUITE
