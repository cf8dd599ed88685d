#include "condi/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "condi/common.hpp"
#include "condi/distill.hpp"
#include "condi/rng.hpp"

namespace condi {

std::vector<int> sample_random(int n, int k, std::uint64_t seed) {
    if (n < 0 || k < 0) {
        throw ConfigError("sample_random needs non-negative n and k");
    }
    k = std::min(k, n);
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    Rng rng(seed);
    // Partial Fisher-Yates: the first k slots end up a uniform sample.
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.below(std::uint64_t(n - i)));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<int> sample_equidistant(int n, int k) {
    if (n < 0 || k < 0) {
        throw ConfigError("sample_equidistant needs non-negative n and k");
    }
    k = std::min(k, n);
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) {
        out[i] = static_cast<int>(std::int64_t(i) * n / k);
    }
    return out;
}

RankedClipList rank_scores(std::vector<double> scores, ScoreKind kind) {
    RankedClipList list;
    list.score_kind = kind;
    list.indices.resize(scores.size());
    std::iota(list.indices.begin(), list.indices.end(), 0);
    std::stable_sort(list.indices.begin(), list.indices.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    list.scores.resize(scores.size());
    for (std::size_t i = 0; i < list.indices.size(); ++i) {
        list.scores[i] = scores[list.indices[i]];
    }
    return list;
}

RankedClipList sample_oracle(const std::vector<std::vector<double>>& clip_probs, int y) {
    std::vector<double> p_true(clip_probs.size());
    for (std::size_t i = 0; i < clip_probs.size(); ++i) {
        if (y < 0 || y >= static_cast<int>(clip_probs[i].size())) {
            throw ConfigError("sample_oracle label out of range");
        }
        p_true[i] = clip_probs[i][y];
    }
    return rank_scores(std::move(p_true), ScoreKind::true_class_prob);
}

double neg_entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return -h;
}

RankedClipList rank_by_confidence(const StudentClipModel& student,
                                  const std::vector<Clip>& clips) {
    std::vector<double> scores(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        scores[i] = sigmoid(student.score(clips[i]).confidence_logit);
    }
    return rank_scores(std::move(scores), ScoreKind::confidence);
}

RankedClipList rank_by_entropy(const StudentClipModel& student, const std::vector<Clip>& clips) {
    std::vector<double> scores(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const StudentScores s = student.score(clips[i]);
        std::vector<double> logits(s.class_logits.begin(), s.class_logits.end());
        scores[i] = neg_entropy(softened_softmax(logits, 1.0));
    }
    return rank_scores(std::move(scores), ScoreKind::neg_entropy);
}

SelectionPlan make_selection_plan(const RankedClipList& confidence,
                                  const RankedClipList& entropy, int k, int k_s) {
    const int n = static_cast<int>(confidence.indices.size());
    if (k > n) {
        throw ConfigError("selection budget k exceeds clip count");
    }
    if (k_s > k || k_s < 0 || k < 0) {
        throw ConfigError("student share k_s must lie in [0, k]");
    }
    std::vector<int> candidates(confidence.indices.begin(), confidence.indices.begin() + k);

    // neg-entropy score per clip index; higher = lower entropy = student work
    std::vector<double> ne(n, 0.0);
    if (entropy.indices.size() != std::size_t(n)) {
        throw ConfigError("confidence and entropy rankings cover different clip counts");
    }
    for (std::size_t i = 0; i < entropy.indices.size(); ++i) {
        ne[entropy.indices[i]] = entropy.scores[i];
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        if (ne[a] != ne[b]) return ne[a] > ne[b];
        return a < b;
    });

    SelectionPlan plan;
    plan.student_clips.assign(candidates.begin(), candidates.begin() + k_s);
    plan.teacher_clips.assign(candidates.begin() + k_s, candidates.end());
    std::sort(plan.student_clips.begin(), plan.student_clips.end());
    std::sort(plan.teacher_clips.begin(), plan.teacher_clips.end());
    return plan;
}

void write_rankings(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, RankedClipList>>& rankings) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open ranking file for writing: " + path.string());
    }
    for (const auto& [video_id, list] : rankings) {
        nlohmann::json j{
            {"video_id", video_id},
            {"indices", list.indices},
            {"scores", list.scores},
            {"score_kind", score_kind_name(list.score_kind)},
        };
        out << j.dump() << '\n';
    }
    if (!out) {
        throw DataError("failed writing ranking file: " + path.string());
    }
}

const char* score_kind_name(ScoreKind kind) {
    switch (kind) {
    case ScoreKind::confidence: return "confidence";
    case ScoreKind::neg_entropy: return "neg_entropy";
    case ScoreKind::true_class_prob: return "true_class_prob";
    case ScoreKind::none: return "none";
    }
    return "?";
}

} // namespace condi
