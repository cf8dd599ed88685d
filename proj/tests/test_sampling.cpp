#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "condi/sampling.hpp"

using namespace condi;
namespace fs = std::filesystem;

TEST_SUITE("sampling") {

TEST_CASE("samplers clamp oversized budgets to the clip count") {
    CHECK(sample_random(3, 10, 5) == std::vector<int>({0, 1, 2}));
    CHECK(sample_equidistant(3, 10) == std::vector<int>({0, 1, 2}));
}

TEST_CASE("random samples are ascending and duplicate-free") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const std::vector<int> s = sample_random(12, 5, seed);
        REQUIRE(s.size() == 5);
        for (std::size_t i = 1; i < s.size(); ++i) {
            CHECK(s[i] > s[i - 1]);
        }
        CHECK(s.front() >= 0);
        CHECK(s.back() < 12);
    }
}

TEST_CASE("oracle validates the label range") {
    const std::vector<std::vector<double>> probs = {{0.5, 0.5}, {0.2, 0.8}};
    CHECK_THROWS_AS(sample_oracle(probs, 2), ConfigError);
    CHECK_THROWS_AS(sample_oracle(probs, -1), ConfigError);
    CHECK(sample_oracle({}, 0).indices.empty());
}

TEST_CASE("rank_scores is a stable descending sort") {
    const RankedClipList r = rank_scores({0.5, 0.9, 0.5, 0.1}, ScoreKind::confidence);
    CHECK(r.indices == std::vector<int>({1, 0, 2, 3}));
    CHECK(r.scores == std::vector<double>({0.9, 0.5, 0.5, 0.1}));
    CHECK(r.score_kind == ScoreKind::confidence);
}

TEST_CASE("selection plan validates its inputs") {
    RankedClipList conf = rank_scores({0.3, 0.2, 0.1}, ScoreKind::confidence);
    RankedClipList ent = rank_scores({-0.5, -0.1, -0.9}, ScoreKind::neg_entropy);
    CHECK_THROWS_AS(make_selection_plan(conf, ent, 2, 3), ConfigError); // k_s > k
    const SelectionPlan empty = make_selection_plan(conf, ent, 0, 0);
    CHECK(empty.teacher_clips.empty());
    CHECK(empty.student_clips.empty());
    RankedClipList short_ent = rank_scores({-0.5, -0.1}, ScoreKind::neg_entropy);
    CHECK_THROWS_AS(make_selection_plan(conf, short_ent, 2, 1), ConfigError);
}

TEST_CASE("selection plan outputs are ascending and disjoint") {
    RankedClipList conf = rank_scores({0.9, 0.8, 0.7, 0.6, 0.5, 0.4}, ScoreKind::confidence);
    RankedClipList ent = rank_scores({-0.1, -0.9, -0.2, -0.8, -0.3, -0.7},
                                     ScoreKind::neg_entropy);
    const SelectionPlan plan = make_selection_plan(conf, ent, 4, 2);
    REQUIRE(plan.teacher_clips.size() == 2);
    REQUIRE(plan.student_clips.size() == 2);
    for (std::size_t i = 1; i < plan.teacher_clips.size(); ++i) {
        CHECK(plan.teacher_clips[i] > plan.teacher_clips[i - 1]);
    }
    for (std::size_t i = 1; i < plan.student_clips.size(); ++i) {
        CHECK(plan.student_clips[i] > plan.student_clips[i - 1]);
    }
    for (int t : plan.teacher_clips) {
        for (int s : plan.student_clips) CHECK(t != s);
    }
}

TEST_CASE("rankings serialize one JSON object per video") {
    const fs::path dir = fs::temp_directory_path() / "condi_sampling_test";
    fs::create_directories(dir);
    const fs::path path = dir / "rankings.jsonl";
    std::vector<std::pair<std::string, RankedClipList>> all;
    all.emplace_back("vid_0", rank_scores({0.1, 0.9}, ScoreKind::confidence));
    all.emplace_back("vid_1", rank_scores({-0.2, -0.1, -0.3}, ScoreKind::neg_entropy));
    write_rankings(path, all);

    std::ifstream in(path);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        const nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j.contains("video_id"));
        CHECK(j.contains("indices"));
        CHECK(j.contains("scores"));
        CHECK(j.contains("score_kind"));
        ++rows;
    }
    CHECK(rows == 2);
    fs::remove_all(dir);
}

} // TEST_SUITE
