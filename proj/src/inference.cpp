#include "condi/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "condi/common.hpp"
#include "condi/distill.hpp"
#include "condi/rng.hpp"

namespace condi {

namespace {

std::vector<double> teacher_probs(const ClipModel& teacher, const Clip& clip) {
    const std::vector<float> logits = teacher.class_logits(clip);
    std::vector<double> ld(logits.begin(), logits.end());
    return softened_softmax(ld, 1.0);
}

// Weighted average over (probs, weight) pairs accumulated in ascending
// clip order; weights renormalize to one, degenerating to uniform when
// they vanish.
VideoPrediction aggregate(std::vector<std::vector<double>> probs, std::vector<double> weights) {
    if (probs.empty()) {
        throw NumericError("no clip contributions to aggregate");
    }
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total <= 1e-12) {
        std::fill(weights.begin(), weights.end(), 1.0);
        total = static_cast<double>(weights.size());
    }
    VideoPrediction out;
    out.class_probs.assign(probs[0].size(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double w = weights[i] / total;
        for (std::size_t c = 0; c < out.class_probs.size(); ++c) {
            out.class_probs[c] += w * probs[i][c];
        }
    }
    out.predicted_class = argmax_lowest(out.class_probs);
    return out;
}

} // namespace

VideoPrediction predict_dense(const ClipModel& teacher, const std::vector<Clip>& clips) {
    if (clips.empty()) {
        throw DataError("predict_dense on a video with no clips");
    }
    std::vector<std::vector<double>> probs;
    probs.reserve(clips.size());
    std::vector<int> used;
    for (const Clip& clip : clips) {
        probs.push_back(teacher_probs(teacher, clip));
        used.push_back(clip.index);
    }
    VideoPrediction out = aggregate(std::move(probs), std::vector<double>(clips.size(), 1.0));
    out.teacher_clips = std::move(used);
    out.flops_spent = std::uint64_t(clips.size()) * teacher.flops_per_clip();
    return out;
}

VideoPrediction predict_topk(const ClipModel& teacher, const StudentClipModel* student,
                             const std::vector<Clip>& clips, const TopKOptions& opts) {
    const int n = static_cast<int>(clips.size());
    if (opts.k > n) {
        throw ConfigError("top-k budget exceeds the video's clip count");
    }
    if (opts.k < 1) {
        throw ConfigError("top-k budget must be at least 1");
    }
    const bool learned =
        opts.sampler == SamplerKind::confidence || opts.sampler == SamplerKind::entropy;
    if (learned && !student) {
        throw ConfigError("learned sampler requires a student model");
    }
    if (opts.weighted && !learned) {
        throw ConfigError("weighted aggregation requires a confidence student sampler");
    }

    std::uint64_t flops = 0;
    std::vector<int> selected;
    std::vector<double> conf; // sigmoid confidence per clip, learned samplers
    std::vector<std::vector<double>> oracle_probs;

    switch (opts.sampler) {
    case SamplerKind::random:
        selected = sample_random(n, opts.k, opts.seed);
        break;
    case SamplerKind::equidistant:
        selected = sample_equidistant(n, opts.k);
        break;
    case SamplerKind::oracle: {
        if (opts.label < 0) {
            throw ConfigError("oracle sampler needs the ground-truth label");
        }
        oracle_probs.reserve(clips.size());
        for (const Clip& clip : clips) {
            oracle_probs.push_back(teacher_probs(teacher, clip));
        }
        flops += std::uint64_t(n) * teacher.flops_per_clip();
        const RankedClipList ranked = sample_oracle(oracle_probs, opts.label);
        selected.assign(ranked.indices.begin(), ranked.indices.begin() + opts.k);
        std::sort(selected.begin(), selected.end());
        break;
    }
    case SamplerKind::confidence:
    case SamplerKind::entropy: {
        conf.resize(clips.size());
        std::vector<double> score(clips.size());
        for (std::size_t i = 0; i < clips.size(); ++i) {
            const StudentScores s = student->score(clips[i]);
            conf[i] = sigmoid(s.confidence_logit);
            if (opts.sampler == SamplerKind::entropy) {
                std::vector<double> logits(s.class_logits.begin(), s.class_logits.end());
                score[i] = neg_entropy(softened_softmax(logits, 1.0));
            } else {
                score[i] = conf[i];
            }
        }
        flops += std::uint64_t(n) * student->flops_per_clip();
        const RankedClipList ranked = rank_scores(
            std::move(score), opts.sampler == SamplerKind::entropy ? ScoreKind::neg_entropy
                                                                   : ScoreKind::confidence);
        selected.assign(ranked.indices.begin(), ranked.indices.begin() + opts.k);
        std::sort(selected.begin(), selected.end());
        break;
    }
    }

    std::vector<std::vector<double>> probs;
    std::vector<double> weights;
    probs.reserve(selected.size());
    for (int idx : selected) {
        if (opts.sampler == SamplerKind::oracle) {
            probs.push_back(oracle_probs[idx]);
        } else {
            probs.push_back(teacher_probs(teacher, clips[idx]));
            flops += teacher.flops_per_clip();
        }
        weights.push_back(opts.weighted ? conf[idx] : 1.0);
    }
    VideoPrediction out = aggregate(std::move(probs), std::move(weights));
    out.teacher_clips = selected;
    out.flops_spent = flops;
    return out;
}

VideoPrediction predict_divided(const ClipModel& teacher, const StudentClipModel& student,
                                const std::vector<Clip>& clips, int k, int k_s) {
    const int n = static_cast<int>(clips.size());
    if (k > n) {
        throw ConfigError("divided budget exceeds the video's clip count");
    }
    if (k_s > k || k_s < 0 || k < 1) {
        throw ConfigError("divided split needs 0 <= k_s <= k, k >= 1");
    }
    const int num_classes = student.num_classes();
    const double h_max = std::log(static_cast<double>(num_classes));

    std::vector<double> conf(n), ne(n);
    std::vector<std::vector<double>> student_probs(n);
    for (int i = 0; i < n; ++i) {
        const StudentScores s = student.score(clips[i]);
        conf[i] = sigmoid(s.confidence_logit);
        std::vector<double> logits(s.class_logits.begin(), s.class_logits.end());
        student_probs[i] = softened_softmax(logits, 1.0);
        ne[i] = neg_entropy(student_probs[i]);
    }
    const SelectionPlan plan =
        make_selection_plan(rank_scores(conf, ScoreKind::confidence),
                            rank_scores(ne, ScoreKind::neg_entropy), k, k_s);

    std::vector<std::vector<double>> probs;
    std::vector<double> weights;
    for (int idx : plan.teacher_clips) {
        probs.push_back(teacher_probs(teacher, clips[idx]));
        weights.push_back(conf[idx]);
    }
    for (int idx : plan.student_clips) {
        probs.push_back(student_probs[idx]);
        weights.push_back(1.0 - (-ne[idx]) / h_max);
    }
    VideoPrediction out = aggregate(std::move(probs), std::move(weights));
    out.teacher_clips = plan.teacher_clips;
    out.student_clips = plan.student_clips;
    out.flops_spent = std::uint64_t(n) * student.flops_per_clip() +
                      std::uint64_t(plan.teacher_clips.size()) * teacher.flops_per_clip();
    return out;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw NumericError("auroc needs one label per score");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Midranks over ties.
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * (double(i + 1) + double(j + 1));
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }
    double pos = 0, rank_sum = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (labels[t] == 1) {
            pos += 1;
            rank_sum += rank[t];
        }
    }
    const double neg = double(n) - pos;
    if (pos == 0 || neg == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

double confidence_auroc(const ClipModel& teacher, const StudentClipModel& student,
                        const std::filesystem::path& corpus_dir,
                        const DatasetManifest& manifest) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const ManifestEntry& entry : manifest.entries) {
        const Video video = load_video(corpus_dir, entry);
        for (const Clip& clip : segment(video, manifest.clip_length)) {
            const std::vector<double> tp = teacher_probs(teacher, clip);
            labels.push_back(argmax_lowest(tp) == video.label ? 1 : 0);
            scores.push_back(sigmoid(student.score(clip).confidence_logit));
        }
    }
    return auroc(scores, labels);
}

EvalResult evaluate_split(const ClipModel& teacher, const StudentClipModel* student,
                          const std::filesystem::path& corpus_dir,
                          const DatasetManifest& manifest, const EvalConfig& cfg) {
    EvalResult res;
    res.seed = cfg.seed;
    res.dataset_hash = corpus_hash(corpus_dir);

    std::vector<double> wall;
    wall.reserve(manifest.entries.size());
    double correct = 0.0, flops_sum = 0.0;
    std::vector<double> conf_scores;
    std::vector<int> teacher_correct;

    for (std::size_t vi = 0; vi < manifest.entries.size(); ++vi) {
        const ManifestEntry& entry = manifest.entries[vi];
        const Video video = load_video(corpus_dir, entry);
        const std::vector<Clip> clips = segment(video, manifest.clip_length);

        VideoPrediction pred;
        const auto t0 = std::chrono::steady_clock::now();
        switch (cfg.regime) {
        case Regime::dense:
            pred = predict_dense(teacher, clips);
            break;
        case Regime::topk: {
            TopKOptions opts;
            opts.sampler = cfg.sampler;
            opts.k = std::min(cfg.k, static_cast<int>(clips.size()));
            opts.seed = hash_combine(cfg.seed, vi);
            opts.label = video.label;
            opts.weighted = cfg.weighted;
            pred = predict_topk(teacher, student, clips, opts);
            break;
        }
        case Regime::divided: {
            if (!student) {
                throw ConfigError("divided regime requires a student model");
            }
            const int k = std::min(cfg.k, static_cast<int>(clips.size()));
            pred = predict_divided(teacher, *student, clips, k, std::min(cfg.k_s, k));
            break;
        }
        }
        const auto t1 = std::chrono::steady_clock::now();
        pred.wall_time_s = std::chrono::duration<double>(t1 - t0).count();

        wall.push_back(pred.wall_time_s);
        flops_sum += static_cast<double>(pred.flops_spent);
        if (pred.predicted_class == video.label) correct += 1.0;

        if (student && cfg.compute_auroc) {
            for (const Clip& clip : clips) {
                const std::vector<double> tp = teacher_probs(teacher, clip);
                teacher_correct.push_back(argmax_lowest(tp) == video.label ? 1 : 0);
                conf_scores.push_back(sigmoid(student->score(clip).confidence_logit));
            }
        }
        res.per_video.push_back(std::move(pred));
    }

    const double nv = static_cast<double>(manifest.entries.size());
    if (nv == 0) {
        throw DataError("evaluation split is empty");
    }
    res.top1 = correct / nv;
    res.mean_flops = flops_sum / nv;
    res.mean_wall_s = std::accumulate(wall.begin(), wall.end(), 0.0) / nv;
    std::sort(wall.begin(), wall.end());
    res.median_wall_s = wall.size() % 2 == 1
        ? wall[wall.size() / 2]
        : 0.5 * (wall[wall.size() / 2 - 1] + wall[wall.size() / 2]);
    if (!conf_scores.empty()) {
        res.auroc = auroc(conf_scores, teacher_correct);
    }
    return res;
}

const char* regime_name(Regime regime) {
    switch (regime) {
    case Regime::dense: return "dense";
    case Regime::topk: return "topk";
    case Regime::divided: return "divided";
    }
    return "?";
}

const char* sampler_name(SamplerKind sampler) {
    switch (sampler) {
    case SamplerKind::random: return "random";
    case SamplerKind::equidistant: return "equidistant";
    case SamplerKind::oracle: return "oracle";
    case SamplerKind::confidence: return "confidence";
    case SamplerKind::entropy: return "entropy";
    }
    return "?";
}

Regime regime_from_name(const std::string& name) {
    if (name == "dense") return Regime::dense;
    if (name == "topk") return Regime::topk;
    if (name == "divided") return Regime::divided;
    throw ConfigError("unknown regime '" + name + "'");
}

SamplerKind sampler_from_name(const std::string& name) {
    if (name == "random") return SamplerKind::random;
    if (name == "equidistant") return SamplerKind::equidistant;
    if (name == "oracle") return SamplerKind::oracle;
    if (name == "confidence") return SamplerKind::confidence;
    if (name == "entropy") return SamplerKind::entropy;
    throw ConfigError("unknown sampler '" + name + "'");
}

std::string metrics_csv_row(const EvalResult& result, const EvalConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << regime_name(cfg.regime) << ',';
    out << (cfg.regime == Regime::dense ? "none" : sampler_name(cfg.sampler)) << ',';
    out << (cfg.regime == Regime::dense ? 0 : cfg.k) << ',';
    out << (cfg.regime == Regime::divided ? cfg.k_s : 0) << ',';
    out << result.top1 << ',' << result.mean_flops << ',' << result.mean_wall_s << ',';
    if (std::isnan(result.auroc)) {
        out << "nan";
    } else {
        out << result.auroc;
    }
    out << ',' << result.seed << ',' << result.dataset_hash;
    return out.str();
}

} // namespace condi
