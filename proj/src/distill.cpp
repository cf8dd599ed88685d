#include "condi/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "condi/common.hpp"

namespace condi {

namespace {

constexpr double kLogFloor = 1e-12;

std::string table_key(const std::string& video_id, int clip_index) {
    return video_id + "#" + std::to_string(clip_index);
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string("non-finite ") + what);
        }
    }
}

} // namespace

void PseudoLabelTable::add(PseudoLabelRow row) {
    const std::string key = table_key(row.video_id, row.clip_index);
    if (index_.count(key)) {
        throw DataError("duplicate pseudo-label row for " + key);
    }
    index_[key] = rows_.size();
    rows_.push_back(std::move(row));
}

const PseudoLabelRow& PseudoLabelTable::at(const std::string& video_id, int clip_index) const {
    auto it = index_.find(table_key(video_id, clip_index));
    if (it == index_.end()) {
        throw DataError("missing pseudo-label row for video '" + video_id + "' clip " +
                        std::to_string(clip_index));
    }
    return rows_[it->second];
}

PseudoLabelTable make_pseudo_labels(const ClipModel& teacher,
                                    const std::filesystem::path& corpus_dir,
                                    const DatasetManifest& manifest) {
    PseudoLabelTable table;
    for (const ManifestEntry& entry : manifest.entries) {
        const Video video = load_video(corpus_dir, entry);
        for (const Clip& clip : segment(video, manifest.clip_length)) {
            const std::vector<float> logits = teacher.class_logits(clip);
            std::vector<double> ld(logits.begin(), logits.end());
            const std::vector<double> p = softened_softmax(ld, 1.0);
            PseudoLabelRow row;
            row.video_id = entry.id;
            row.clip_index = clip.index;
            row.teacher_top1 = argmax_lowest(p);
            row.z = row.teacher_top1 == video.label ? 1 : 0;
            row.teacher_prob_true_class = p[video.label];
            table.add(std::move(row));
        }
    }
    return table;
}

void save_pseudo_labels(const PseudoLabelTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open pseudo-label file for writing: " + path.string());
    }
    for (const PseudoLabelRow& row : table.rows()) {
        nlohmann::json j{
            {"video_id", row.video_id},
            {"clip_index", row.clip_index},
            {"z", row.z},
            {"teacher_top1", row.teacher_top1},
            {"teacher_prob_true_class", row.teacher_prob_true_class},
        };
        out << j.dump() << '\n';
    }
    if (!out) {
        throw DataError("failed writing pseudo-label file: " + path.string());
    }
}

PseudoLabelTable load_pseudo_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open pseudo-label file: " + path.string());
    }
    PseudoLabelTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            PseudoLabelRow row;
            row.video_id = j.at("video_id").get<std::string>();
            row.clip_index = j.at("clip_index").get<int>();
            row.z = j.at("z").get<int>();
            row.teacher_top1 = j.at("teacher_top1").get<int>();
            row.teacher_prob_true_class = j.at("teacher_prob_true_class").get<double>();
            if (row.z != 0 && row.z != 1) {
                throw DataError("pseudo label z must be 0 or 1");
            }
            table.add(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("malformed pseudo-label row at " + path.string() + ":" +
                            std::to_string(lineno) + ": " + e.what());
        }
    }
    return table;
}

std::vector<double> softened_softmax(const std::vector<double>& logits, double tau) {
    if (tau <= 0.0) {
        throw ConfigError("softmax temperature must be positive");
    }
    if (logits.empty()) {
        throw NumericError("softmax over empty logits");
    }
    check_finite(logits, "logits in softened_softmax");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - mx) / tau);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

std::vector<double> mix_teacher_targets(const std::vector<double>& p_teacher, double z_tilde,
                                        int z) {
    const double u = 1.0 / static_cast<double>(p_teacher.size());
    const double w = z == 1 ? z_tilde : 1.0 - z_tilde;
    std::vector<double> out(p_teacher.size());
    for (std::size_t i = 0; i < p_teacher.size(); ++i) {
        out[i] = w * p_teacher[i] + (1.0 - w) * u;
    }
    return out;
}

double kd_loss(const std::vector<double>& target, const std::vector<double>& student,
               double tau) {
    if (target.size() != student.size()) {
        throw NumericError("kd_loss distribution length mismatch");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] <= 0.0) continue;
        kl += target[i] * (std::log(target[i]) - std::log(std::max(student[i], kLogFloor)));
    }
    const double out = tau * tau * kl;
    if (!std::isfinite(out)) {
        throw NumericError("kd_loss produced a non-finite value");
    }
    return out;
}

double confidence_bce(double z_tilde, int z, double mu) {
    const double zt = std::clamp(z_tilde, kLogFloor, 1.0 - kLogFloor);
    return -(mu * z * std::log(zt) + (1 - z) * std::log(1.0 - zt));
}

LossValue condi_sr_loss(const std::vector<double>& teacher_logits,
                        const std::vector<double>& student_class_logits,
                        double confidence_logit, int z, const LossConfig& cfg) {
    if (teacher_logits.size() != student_class_logits.size()) {
        throw NumericError("condi_sr_loss class count mismatch");
    }
    const double zt = sigmoid(confidence_logit);
    const std::vector<double> p_teacher = softened_softmax(teacher_logits, cfg.tau);
    const std::vector<double> target = mix_teacher_targets(p_teacher, zt, z);
    const std::vector<double> p_student = softened_softmax(student_class_logits, cfg.tau);

    LossValue out;
    out.kd_part = kd_loss(target, p_student, cfg.tau);
    out.conf_part = confidence_bce(zt, z, cfg.mu);
    out.total = out.kd_part + cfg.lambda * out.conf_part;

    out.d_class_logits.resize(student_class_logits.size());
    for (std::size_t i = 0; i < p_student.size(); ++i) {
        out.d_class_logits[i] = cfg.tau * (p_student[i] - target[i]);
    }
    // The mixed target is a constant for the KD term, so the confidence
    // logit sees only the BCE gradient.
    out.d_conf_logit = cfg.lambda * (-cfg.mu * z * (1.0 - zt) + (1 - z) * zt);
    return out;
}

LossValue naive_bce_loss(const std::vector<double>& student_class_logits,
                         double confidence_logit, int z, double mu) {
    const double zt = sigmoid(confidence_logit);
    LossValue out;
    out.conf_part = confidence_bce(zt, z, mu);
    out.total = out.conf_part;
    out.d_class_logits.assign(student_class_logits.size(), 0.0);
    out.d_conf_logit = -mu * z * (1.0 - zt) + (1 - z) * zt;
    return out;
}

LossValue st_ent_loss(const std::vector<double>& teacher_logits,
                      const std::vector<double>& student_class_logits, double tau) {
    if (teacher_logits.size() != student_class_logits.size()) {
        throw NumericError("st_ent_loss class count mismatch");
    }
    const std::vector<double> target = softened_softmax(teacher_logits, tau);
    const std::vector<double> p_student = softened_softmax(student_class_logits, tau);
    LossValue out;
    out.kd_part = kd_loss(target, p_student, tau);
    out.total = out.kd_part;
    out.d_class_logits.resize(student_class_logits.size());
    for (std::size_t i = 0; i < p_student.size(); ++i) {
        out.d_class_logits[i] = tau * (p_student[i] - target[i]);
    }
    return out;
}

LossValue st_conf_loss(const std::vector<double>& student_class_logits,
                       double confidence_logit, int y, double conf_weight) {
    if (y < 0 || y >= static_cast<int>(student_class_logits.size())) {
        throw NumericError("st_conf_loss label out of range");
    }
    const double c = std::clamp(sigmoid(confidence_logit), kLogFloor, 1.0 - kLogFloor);
    const std::vector<double> p = softened_softmax(student_class_logits, 1.0);
    const double py_mixed = c * p[y] + (1.0 - c);
    LossValue out;
    out.kd_part = -std::log(std::max(py_mixed, kLogFloor));
    out.conf_part = -std::log(c);
    out.total = out.kd_part + conf_weight * out.conf_part;

    // d CE / d s_j through p'_y = c*p_y + (1-c)
    out.d_class_logits.resize(p.size());
    const double dl_dpy = -c / std::max(py_mixed, kLogFloor);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double dpy_dsj = p[y] * ((static_cast<int>(j) == y ? 1.0 : 0.0) - p[j]);
        out.d_class_logits[j] = dl_dpy * dpy_dsj;
    }
    const double dl_dc = -(p[y] - 1.0) / std::max(py_mixed, kLogFloor) - conf_weight / c;
    out.d_conf_logit = dl_dc * c * (1.0 - c);
    return out;
}

} // namespace condi
