#ifndef CONDI_DISTILL_HPP
#define CONDI_DISTILL_HPP

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "condi/nets.hpp"
#include "condi/videodata.hpp"

namespace condi {

// Index of the largest entry; ties resolve to the lowest index.
template <typename V>
int argmax_lowest(const V& values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

struct LossConfig {
    double tau = 0.9;
    double lambda = 1.5;
    double mu = 1.5;
};

struct PseudoLabelRow {
    std::string video_id;
    int clip_index = 0;
    int z = 0;
    int teacher_top1 = 0;
    double teacher_prob_true_class = 0.0;
};

// Per-clip teacher-correctness table, keyed by (video id, clip index).
class PseudoLabelTable {
public:
    void add(PseudoLabelRow row);
    const PseudoLabelRow& at(const std::string& video_id, int clip_index) const;
    const std::vector<PseudoLabelRow>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

private:
    std::vector<PseudoLabelRow> rows_;
    std::unordered_map<std::string, std::size_t> index_;
};

PseudoLabelTable make_pseudo_labels(const ClipModel& teacher,
                                    const std::filesystem::path& corpus_dir,
                                    const DatasetManifest& manifest);

void save_pseudo_labels(const PseudoLabelTable& table, const std::filesystem::path& path);
PseudoLabelTable load_pseudo_labels(const std::filesystem::path& path);

// p_k = exp(s_k / tau) / sum_j exp(s_j / tau), max-subtracted.
std::vector<double> softened_softmax(const std::vector<double>& logits, double tau);

// Convex blend of the softened teacher distribution with the uniform
// categorical vector, steered by the confidence score and pseudo label:
// z=1 keeps the teacher where the student trusts it, z=0 keeps the teacher
// only where the student correctly distrusts it.
std::vector<double> mix_teacher_targets(const std::vector<double>& p_teacher, double z_tilde,
                                        int z);

// tau^2 * KL(target || student), student probabilities floored at 1e-12
// inside the logarithm.
double kd_loss(const std::vector<double>& target, const std::vector<double>& student,
               double tau);

// -[mu * z * log(zt) + (1 - z) * log(1 - zt)], zt clamped away from {0,1}.
double confidence_bce(double z_tilde, int z, double mu);

struct LossValue {
    double total = 0.0;
    double kd_part = 0.0;
    double conf_part = 0.0;
    std::vector<double> d_class_logits; // d total / d student class logits
    double d_conf_logit = 0.0;          // d total / d student confidence logit
};

// KD against the confidence-mixed teacher target plus lambda-weighted BCE
// on the confidence head. The mixed target is a constant for
// differentiation; the confidence logit receives gradient only through the
// BCE term.
LossValue condi_sr_loss(const std::vector<double>& teacher_logits,
                        const std::vector<double>& student_class_logits,
                        double confidence_logit, int z, const LossConfig& cfg);

// BCE on the confidence head alone.
LossValue naive_bce_loss(const std::vector<double>& student_class_logits,
                         double confidence_logit, int z, double mu);

// Plain distillation; the confidence logit is unused and gets zero gradient.
LossValue st_ent_loss(const std::vector<double>& teacher_logits,
                      const std::vector<double>& student_class_logits, double tau);

// Confidence-interpolated cross entropy: p' = c * softmax(s) + (1-c) *
// onehot(y) with c = sigmoid(confidence_logit); loss = CE(p', y) +
// conf_weight * (-log c).
LossValue st_conf_loss(const std::vector<double>& student_class_logits,
                       double confidence_logit, int y, double conf_weight);

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

} // namespace condi

#endif
