#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "condi/distill.hpp"
#include "condi/rng.hpp"

using namespace condi;
namespace fs = std::filesystem;

namespace {

std::vector<double> random_logits(Rng& rng, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.uniform(-3.0, 3.0);
    return v;
}

// Central-difference check of a LossValue-producing callable against its
// reported class-logit and confidence-logit gradients.
template <typename LossFn>
double max_rel_grad_err(LossFn&& fn, std::vector<double> logits, double conf, bool check_conf) {
    const LossValue base = fn(logits, conf);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        std::vector<double> hi = logits, lo = logits;
        hi[k] += h;
        lo[k] -= h;
        const double fd = (fn(hi, conf).total - fn(lo, conf).total) / (2 * h);
        const double got = base.d_class_logits[k];
        worst = std::max(worst,
                         std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1e-8}));
    }
    if (check_conf) {
        const double fd = (fn(logits, conf + h).total - fn(logits, conf - h).total) / (2 * h);
        const double got = base.d_conf_logit;
        worst = std::max(worst,
                         std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1e-8}));
    }
    return worst;
}

} // namespace

TEST_SUITE("distill") {

TEST_CASE("condi-sr gradients treat the mixed target as a constant") {
    // The analytic confidence gradient flows only through the BCE term, so
    // the finite-difference probe must also freeze the mixed target at the
    // base point. The full-loss probe below checks the class logits, whose
    // target dependence really is constant.
    Rng rng(301);
    LossConfig cfg;
    for (int i = 0; i < 25; ++i) {
        const auto teacher = random_logits(rng, 5);
        const auto student = random_logits(rng, 5);
        const double conf = rng.uniform(-4.0, 4.0);
        const int z = static_cast<int>(rng.below(2));

        const double class_err = max_rel_grad_err(
            [&](const std::vector<double>& s, double c) {
                return condi_sr_loss(teacher, s, c, z, cfg);
            },
            student, conf, false);
        CHECK(class_err < 1e-4);

        // Frozen-target probe for the confidence logit: replay the BCE part
        // around the base point.
        const LossValue base = condi_sr_loss(teacher, student, conf, z, cfg);
        const double h = 1e-5;
        const double hi = confidence_bce(sigmoid(conf + h), z, cfg.mu);
        const double lo = confidence_bce(sigmoid(conf - h), z, cfg.mu);
        const double fd = cfg.lambda * (hi - lo) / (2 * h);
        CHECK(std::abs(fd - base.d_conf_logit) /
                  std::max({std::abs(fd), std::abs(base.d_conf_logit), 1e-8}) <
              1e-4);
    }
}

TEST_CASE("st-ent gradients match finite differences") {
    Rng rng(302);
    for (int i = 0; i < 25; ++i) {
        const auto teacher = random_logits(rng, 4);
        const auto student = random_logits(rng, 4);
        const double err = max_rel_grad_err(
            [&](const std::vector<double>& s, double) {
                return st_ent_loss(teacher, s, 0.9);
            },
            student, 0.0, false);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("st-conf gradients match finite differences") {
    Rng rng(303);
    for (int i = 0; i < 25; ++i) {
        const auto student = random_logits(rng, 4);
        const double conf = rng.uniform(-4.0, 4.0);
        const int y = static_cast<int>(rng.below(4));
        const double err = max_rel_grad_err(
            [&](const std::vector<double>& s, double c) {
                return st_conf_loss(s, c, y, 0.5);
            },
            student, conf, true);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("naive-bce gradients match finite differences") {
    Rng rng(304);
    for (int i = 0; i < 25; ++i) {
        const auto student = random_logits(rng, 4);
        const double conf = rng.uniform(-4.0, 4.0);
        const int z = static_cast<int>(rng.below(2));
        const LossValue v = naive_bce_loss(student, conf, z, 1.5);
        for (double g : v.d_class_logits) CHECK(g == 0.0);
        const double err = max_rel_grad_err(
            [&](const std::vector<double>& s, double c) {
                return naive_bce_loss(s, c, z, 1.5);
            },
            student, conf, true);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("st-ent leaves the confidence head untouched") {
    const LossValue v = st_ent_loss({1.0, 0.0}, {0.2, 0.3}, 0.9);
    CHECK(v.d_conf_logit == 0.0);
    CHECK(v.conf_part == 0.0);
}

TEST_CASE("pseudo label table rejects duplicates and unknown keys") {
    PseudoLabelTable t;
    PseudoLabelRow row;
    row.video_id = "vid_0";
    row.clip_index = 2;
    row.z = 1;
    t.add(row);
    CHECK_THROWS_AS(t.add(row), DataError);
    CHECK_THROWS_AS(t.at("vid_0", 3), DataError);
    CHECK(t.at("vid_0", 2).z == 1);
}

TEST_CASE("pseudo label persistence round-trips and validates") {
    const fs::path dir = fs::temp_directory_path() / "condi_distill_test";
    fs::create_directories(dir);
    PseudoLabelTable t;
    for (int i = 0; i < 4; ++i) {
        PseudoLabelRow row;
        row.video_id = "vid_" + std::to_string(i / 2);
        row.clip_index = i % 2;
        row.z = i % 2;
        row.teacher_top1 = i;
        row.teacher_prob_true_class = 0.25 * i;
        t.add(row);
    }
    const fs::path path = dir / "labels.jsonl";
    save_pseudo_labels(t, path);
    const PseudoLabelTable back = load_pseudo_labels(path);
    REQUIRE(back.size() == t.size());
    for (const auto& row : t.rows()) {
        const PseudoLabelRow& b = back.at(row.video_id, row.clip_index);
        CHECK(b.z == row.z);
        CHECK(b.teacher_top1 == row.teacher_top1);
        CHECK(b.teacher_prob_true_class == doctest::Approx(row.teacher_prob_true_class));
    }

    {
        std::ofstream out(dir / "bad.jsonl", std::ios::binary);
        out << R"({"video_id":"v","clip_index":0,"z":2,"teacher_top1":0,"teacher_prob_true_class":0.5})"
            << "\n";
    }
    CHECK_THROWS_AS(load_pseudo_labels(dir / "bad.jsonl"), DataError);
    {
        std::ofstream out(dir / "garbled.jsonl", std::ios::binary);
        out << "not json\n";
    }
    CHECK_THROWS_AS(load_pseudo_labels(dir / "garbled.jsonl"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("softened softmax validates tau and emptiness") {
    CHECK_THROWS_AS(softened_softmax({}, 1.0), NumericError);
    CHECK_THROWS_AS(softened_softmax({1.0, 2.0}, 0.0), ConfigError);
}

} // TEST_SUITE
