#ifndef CONDI_INFERENCE_HPP
#define CONDI_INFERENCE_HPP

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "condi/nets.hpp"
#include "condi/sampling.hpp"
#include "condi/videodata.hpp"

namespace condi {

enum class Regime { dense, topk, divided };
enum class SamplerKind { random, equidistant, oracle, confidence, entropy };

struct VideoPrediction {
    std::vector<double> class_probs;
    int predicted_class = 0;
    std::vector<int> teacher_clips;
    std::vector<int> student_clips;
    std::uint64_t flops_spent = 0;
    double wall_time_s = 0.0;
};

VideoPrediction predict_dense(const ClipModel& teacher, const std::vector<Clip>& clips);

struct TopKOptions {
    SamplerKind sampler = SamplerKind::confidence;
    int k = 1;
    std::uint64_t seed = 0; // random sampler only
    int label = -1;         // oracle sampler only
    // Optional confidence-weighted averaging of the teacher outputs;
    // the normative aggregation is the unweighted mean.
    bool weighted = false;
};

// Select k clips, classify them with the teacher, average. Learned
// samplers score all clips with the student first and are charged for it;
// the oracle scores all clips with the teacher.
VideoPrediction predict_topk(const ClipModel& teacher, const StudentClipModel* student,
                             const std::vector<Clip>& clips, const TopKOptions& opts);

// Divide the top-k confidence candidates: the student answers for its k_s
// lowest-entropy clips (weight 1 - H/H_max), the teacher for the rest
// (weight z-tilde); weights renormalize to one.
VideoPrediction predict_divided(const ClipModel& teacher, const StudentClipModel& student,
                                const std::vector<Clip>& clips, int k, int k_s);

struct EvalConfig {
    Regime regime = Regime::dense;
    SamplerKind sampler = SamplerKind::confidence;
    int k = 1;
    int k_s = 0;
    std::uint64_t seed = 0;
    bool weighted = false;
    // Skip the extra full teacher pass behind the AUROC metric.
    bool compute_auroc = true;
};

struct EvalResult {
    double top1 = 0.0;
    double mean_flops = 0.0;
    double mean_wall_s = 0.0;
    double median_wall_s = 0.0;
    double auroc = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    std::string dataset_hash;
    std::vector<VideoPrediction> per_video;
};

// Runs the configured regime over every video of the corpus. Wall time is
// measured around the prediction call only. AUROC scores the student's
// confidence against teacher clip-correctness over all clips and is
// reported when a confidence student is supplied.
EvalResult evaluate_split(const ClipModel& teacher, const StudentClipModel* student,
                          const std::filesystem::path& corpus_dir,
                          const DatasetManifest& manifest, const EvalConfig& cfg);

// Rank-based AUROC (Mann-Whitney) of scores against binary labels, with
// midrank tie handling. NaN when either class is absent.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// AUROC of the student's confidence against teacher clip-correctness over
// every clip of the corpus.
double confidence_auroc(const ClipModel& teacher, const StudentClipModel& student,
                        const std::filesystem::path& corpus_dir,
                        const DatasetManifest& manifest);

const char* regime_name(Regime regime);
const char* sampler_name(SamplerKind sampler);
Regime regime_from_name(const std::string& name);
SamplerKind sampler_from_name(const std::string& name);

// Metrics CSV: fixed column set, one row per evaluation.
inline constexpr const char* kMetricsHeader =
    "regime,sampler,K,K_s,top1,mean_flops,mean_wall_s,auroc,seed,dataset_hash";

std::string metrics_csv_row(const EvalResult& result, const EvalConfig& cfg);

} // namespace condi

#endif
