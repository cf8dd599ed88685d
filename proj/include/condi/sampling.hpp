#ifndef CONDI_SAMPLING_HPP
#define CONDI_SAMPLING_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "condi/nets.hpp"
#include "condi/videodata.hpp"

namespace condi {

enum class ScoreKind { confidence, neg_entropy, true_class_prob, none };

// Clip indices ordered best-first with their scores; ties resolve to the
// lower clip index so rankings are reproducible.
struct RankedClipList {
    std::vector<int> indices;
    std::vector<double> scores;
    ScoreKind score_kind = ScoreKind::none;
};

struct SelectionPlan {
    std::vector<int> teacher_clips; // ascending
    std::vector<int> student_clips; // ascending
};

// Uniform draw of min(k, n) indices without replacement, ascending.
std::vector<int> sample_random(int n, int k, std::uint64_t seed);

// floor(i * n / k) for i = 0..k-1 (k clamped to n).
std::vector<int> sample_equidistant(int n, int k);

// Ranks clips by the probability assigned to the true class y; clip_probs
// holds one distribution per clip. Returns the full ranking; callers take
// the first k.
RankedClipList sample_oracle(const std::vector<std::vector<double>>& clip_probs, int y);

// Rankings from raw per-clip scores (shared by model-driven variants).
RankedClipList rank_scores(std::vector<double> scores, ScoreKind kind);

// -H(p) with H in nats.
double neg_entropy(const std::vector<double>& probs);

RankedClipList rank_by_confidence(const StudentClipModel& student,
                                  const std::vector<Clip>& clips);
RankedClipList rank_by_entropy(const StudentClipModel& student, const std::vector<Clip>& clips);

// Candidates are the top-k of the confidence ranking; the k_s candidates
// with the lowest student entropy go to the student, the rest to the
// teacher.
SelectionPlan make_selection_plan(const RankedClipList& confidence,
                                  const RankedClipList& entropy, int k, int k_s);

// One JSON object per line: video_id, indices, scores, score_kind.
void write_rankings(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, RankedClipList>>& rankings);

const char* score_kind_name(ScoreKind kind);

} // namespace condi

#endif
