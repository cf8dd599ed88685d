#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "condi/common.hpp"
#include "condi/distill.hpp"
#include "condi/nets.hpp"
#include "condi/trainer.hpp"
#include "condi/videodata.hpp"

using namespace condi;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// 32px, two clips per video; just enough for the four pool stages.
struct TrainCorpus {
    fs::path dir;
    DatasetManifest manifest;

    explicit TrainCorpus(unsigned tag) {
        dir = fs::temp_directory_path() /
              ("condi_trn_" + std::to_string(::getpid()) + "_" + std::to_string(tag));
        fs::create_directories(dir);
        GenParams p;
        p.num_videos = 12;
        p.num_classes = 3;
        p.frames_per_video = 32;
        p.clip_length = 16;
        p.frame_size = 32;
        p.corrupt_prob = 0.25;
        p.seed = 909 + tag;
        manifest = generate_corpus(p, dir);
    }
    ~TrainCorpus() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning-rate schedules decay from the base rate") {
    CHECK(main_lr(0.01, 0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(main_lr(0.01, 1) == doctest::Approx(0.008).epsilon(1e-12));
    CHECK(main_lr(0.01, 2) == doctest::Approx(0.0064).epsilon(1e-12));
    CHECK(conf_lr(0.01, 0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(conf_lr(0.01, 1) == doctest::Approx(0.002).epsilon(1e-12));
    CHECK(conf_lr(0.01, 2) == doctest::Approx(0.0004).epsilon(1e-12));
}

TEST_CASE("train config survives a json round-trip") {
    TrainConfig cfg = default_train_config("condi-sr");
    cfg.epochs = 4;
    cfg.base_lr = 0.05;
    cfg.seed = 99;
    cfg.loss.lambda = 2.0;
    cfg.conf_weight = 0.25;

    TrainConfig back = train_config_from_json(train_config_to_json(cfg),
                                              default_train_config("teacher"));
    CHECK(back.method == "condi-sr");
    CHECK(back.epochs == 4);
    CHECK(back.base_lr == 0.05);
    CHECK(back.seed == 99);
    CHECK(back.loss.lambda == 2.0);
    CHECK(back.loss.tau == cfg.loss.tau);
    CHECK(back.conf_weight == 0.25);
}

TEST_CASE("train config rejects unknown and invalid fields") {
    const TrainConfig base = default_train_config("teacher");
    CHECK_THROWS_AS(train_config_from_json(json{{"zzz", 1}}, base), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(json{{"loss", {{"zeta", 1.0}}}}, base), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(json{{"epochs", 0}}, base), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(json{{"batch_size", 0}}, base), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(json{{"loss", {{"tau", 0.0}}}}, base), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(json{{"loss", {{"mu", 0.5}}}}, base), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(json{{"method", "bogus"}}, base), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(json::array({1, 2}), base), ConfigError);
}

TEST_CASE("corpus_input_shape reads the stored volumes") {
    TrainCorpus corpus(1);
    const InputShape in = corpus_input_shape(corpus.dir, corpus.manifest);
    CHECK(in.channels == 3);
    CHECK(in.frames == 16);
    CHECK(in.height == 32);
    CHECK(in.width == 32);

    DatasetManifest empty = corpus.manifest;
    empty.entries.clear();
    CHECK_THROWS_AS(corpus_input_shape(corpus.dir, empty), DataError);
}

TEST_CASE("hyperparameter_grid expands keys lexicographically") {
    TrainConfig base = default_train_config("condi-sr");
    base.seed = 123;

    const auto none = hyperparameter_grid(base, json::object());
    REQUIRE(none.size() == 1);
    CHECK(none[0].seed == 123);

    const json grid = {{"epochs", {1, 2}}, {"base_lr", {0.1}}};
    const auto cfgs = hyperparameter_grid(base, grid);
    REQUIRE(cfgs.size() == 2);
    CHECK(cfgs[0].base_lr == 0.1);
    CHECK(cfgs[0].epochs == 1);
    CHECK(cfgs[1].epochs == 2);
    CHECK(cfgs[0].seed == 123);

    const auto seeded = hyperparameter_grid(base, json{{"seed", {5}}});
    REQUIRE(seeded.size() == 1);
    CHECK(seeded[0].seed == 5);
}

TEST_CASE("method routing is enforced") {
    TrainCorpus corpus(2);
    TrainConfig cfg = default_train_config("condi-sr");
    cfg.epochs = 1;
    CHECK_THROWS_AS(train_teacher(cfg, corpus.dir, corpus.manifest), ConfigError);

    const InputShape in = corpus_input_shape(corpus.dir, corpus.manifest);
    NetworkF teacher(reference_teacher(corpus.manifest.num_classes, in));
    teacher.init_params(1);
    CHECK_THROWS_AS(distill_student(default_train_config("teacher"), teacher, nullptr,
                                    corpus.dir, corpus.manifest),
                    ConfigError);
    CHECK_THROWS_AS(distill_student(cfg, teacher, nullptr, corpus.dir, corpus.manifest),
                    ConfigError);
}

TEST_CASE("teacher training logs the schedule and stays finite") {
    TrainCorpus corpus(3);
    TrainConfig cfg = default_train_config("teacher");
    cfg.epochs = 2;
    cfg.seed = 5;
    const TrainResult res = train_teacher(cfg, corpus.dir, corpus.manifest);

    REQUIRE(res.log.epochs.size() == 2);
    for (int e = 0; e < 2; ++e) {
        const EpochRecord& rec = res.log.epochs[static_cast<std::size_t>(e)];
        CHECK(rec.epoch == e + 1);
        CHECK(rec.lr_main == doctest::Approx(main_lr(cfg.base_lr, e)).epsilon(1e-12));
        CHECK(rec.lr_conf == 0.0);
        CHECK(rec.mean_total == rec.mean_total); // finite, not NaN
        CHECK(rec.clip_acc >= 0.0);
        CHECK(rec.clip_acc <= 1.0);
    }
}

TEST_CASE("distillation logs both learning-rate branches deterministically") {
    TrainCorpus corpus(4);
    TrainConfig tcfg = default_train_config("teacher");
    tcfg.epochs = 1;
    tcfg.seed = 5;
    const TrainResult teacher = train_teacher(tcfg, corpus.dir, corpus.manifest);
    NetTeacher teacher_model(std::make_shared<NetworkF>(teacher.net));
    const PseudoLabelTable labels =
        make_pseudo_labels(teacher_model, corpus.dir, corpus.manifest);

    TrainConfig scfg = default_train_config("condi-sr");
    scfg.epochs = 2;
    scfg.seed = 9;
    const TrainResult a = distill_student(scfg, teacher.net, &labels, corpus.dir, corpus.manifest);
    const TrainResult b = distill_student(scfg, teacher.net, &labels, corpus.dir, corpus.manifest);

    REQUIRE(a.log.epochs.size() == 2);
    for (int e = 0; e < 2; ++e) {
        const EpochRecord& rec = a.log.epochs[static_cast<std::size_t>(e)];
        CHECK(rec.lr_main == doctest::Approx(main_lr(scfg.base_lr, e)).epsilon(1e-12));
        CHECK(rec.lr_conf == doctest::Approx(conf_lr(scfg.base_lr, e)).epsilon(1e-12));
    }

    // Bitwise identical runs, including the logged losses.
    CHECK(a.log.epochs.back().mean_total == b.log.epochs.back().mean_total);
    const Video v = load_videos(corpus.dir, corpus.manifest).front();
    const Clip clip = cut_clip(v, 0, corpus.manifest.clip_length);
    const auto oa = a.net.forward(clip.volume);
    const auto ob = b.net.forward(clip.volume);
    REQUIRE(oa.class_logits.size() == ob.class_logits.size());
    for (std::size_t i = 0; i < oa.class_logits.size(); ++i) {
        CHECK(oa.class_logits[i] == ob.class_logits[i]);
    }
    CHECK(oa.confidence_logit == ob.confidence_logit);
}

} // TEST_SUITE
