#include "condi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "condi/array_io.hpp"
#include "condi/common.hpp"
#include "condi/rng.hpp"

namespace condi {

namespace {

struct ClipRef {
    int video = 0;
    int clip = 0;
};

bool is_student_method(const std::string& method) {
    return method == "condi-sr" || method == "st-ent" || method == "st-conf" ||
           method == "naive-bce";
}

// Per-class shuffle then round-robin merge: every batch sees a near-uniform
// class mix while the within-class order is fresh each epoch.
std::vector<ClipRef> stratified_order(const std::vector<Video>& videos, int clip_length,
                                      int num_classes, std::uint64_t seed, int epoch) {
    std::vector<std::vector<ClipRef>> per_class(num_classes);
    for (std::size_t v = 0; v < videos.size(); ++v) {
        const int n = clip_count(videos[v].frames, clip_length);
        for (int c = 0; c < n; ++c) {
            per_class[videos[v].label].push_back(ClipRef{static_cast<int>(v), c});
        }
    }
    Rng rng(hash_combine(hash_combine(seed, 0x5b0c), static_cast<std::uint64_t>(epoch)));
    std::vector<ClipRef> order;
    std::size_t remaining = 0;
    for (auto& group : per_class) {
        rng.shuffle(group.data(), group.size());
        remaining += group.size();
    }
    order.reserve(remaining);
    std::vector<std::size_t> cursor(num_classes, 0);
    while (remaining > 0) {
        for (int c = 0; c < num_classes; ++c) {
            if (cursor[c] < per_class[c].size()) {
                order.push_back(per_class[c][cursor[c]++]);
                --remaining;
            }
        }
    }
    return order;
}

void sgd_update(NetworkF& net, NetworkF::Params& velocity, const NetworkF::Params& grads,
                double inv_batch, double lr_main_v, double lr_conf_v,
                const std::vector<bool>& conf_mask, double momentum) {
    auto& params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double lr = conf_mask[i] ? lr_conf_v : lr_main_v;
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const float g = static_cast<float>(grads[i][j] * inv_batch);
            velocity[i][j] = static_cast<float>(momentum) * velocity[i][j] + g;
            params[i][j] -= static_cast<float>(lr) * velocity[i][j];
        }
    }
}

void zero_params(NetworkF::Params& p) {
    for (auto& t : p) std::fill(t.begin(), t.end(), 0.0f);
}

void check_epoch_finite(const EpochRecord& rec) {
    if (!std::isfinite(rec.mean_total) || !std::isfinite(rec.mean_kd) ||
        !std::isfinite(rec.mean_conf)) {
        throw NumericError("training diverged: non-finite epoch loss");
    }
}

} // namespace

TrainConfig default_train_config(const std::string& method) {
    TrainConfig c;
    c.method = method;
    if (method == "teacher") {
        c.epochs = 15;
    } else if (is_student_method(method)) {
        c.epochs = 10;
    } else {
        throw ConfigError("unknown training method '" + method + "'");
    }
    return c;
}

double main_lr(double base_lr, int epoch_index) {
    return base_lr * std::pow(1.25, -epoch_index);
}

double conf_lr(double base_lr, int epoch_index) {
    return base_lr * std::pow(5.0, -epoch_index);
}

void save_train_log(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open train log for writing: " + path.string());
    }
    out << "epoch,mean_total,mean_kd,mean_conf,clip_acc,lr_main,lr_conf\n";
    out.precision(17);
    for (const EpochRecord& r : log.epochs) {
        out << r.epoch << ',' << r.mean_total << ',' << r.mean_kd << ',' << r.mean_conf << ','
            << r.clip_acc << ',' << r.lr_main << ',' << r.lr_conf << '\n';
    }
    if (!out) {
        throw DataError("failed writing train log: " + path.string());
    }
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{
        {"method", c.method},
        {"epochs", c.epochs},
        {"base_lr", c.base_lr},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
        {"loss", {{"tau", c.loss.tau}, {"lambda", c.loss.lambda}, {"mu", c.loss.mu}}},
        {"momentum", c.momentum},
        {"conf_weight", c.conf_weight},
        {"init_from", c.init_from},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
    if (!j.is_object()) {
        throw ConfigError("training config must be a JSON object");
    }
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "method") base.method = value.get<std::string>();
            else if (key == "epochs") base.epochs = value.get<int>();
            else if (key == "base_lr") base.base_lr = value.get<double>();
            else if (key == "batch_size") base.batch_size = value.get<int>();
            else if (key == "seed") base.seed = value.get<std::uint64_t>();
            else if (key == "momentum") base.momentum = value.get<double>();
            else if (key == "conf_weight") base.conf_weight = value.get<double>();
            else if (key == "init_from") base.init_from = value.get<std::string>();
            else if (key == "loss") {
                for (const auto& [lk, lv] : value.items()) {
                    if (lk == "tau") base.loss.tau = lv.get<double>();
                    else if (lk == "lambda") base.loss.lambda = lv.get<double>();
                    else if (lk == "mu") base.loss.mu = lv.get<double>();
                    else throw ConfigError("unknown loss config field '" + lk + "'");
                }
            } else {
                throw ConfigError("unknown training config field '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed training config: ") + e.what());
    }
    if (base.method != "teacher" && !is_student_method(base.method)) {
        throw ConfigError("unknown training method '" + base.method + "'");
    }
    if (base.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (base.base_lr < 0) throw ConfigError("base_lr must be >= 0");
    if (base.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (base.loss.tau <= 0) throw ConfigError("tau must be > 0");
    if (base.loss.lambda < 0) throw ConfigError("lambda must be >= 0");
    if (base.loss.mu < 1) throw ConfigError("mu must be >= 1");
    return base;
}

void write_resolved_config(const TrainConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write resolved config: " + path.string());
    }
    out << train_config_to_json(config).dump(2) << '\n';
}

InputShape corpus_input_shape(const std::filesystem::path& corpus_dir,
                              const DatasetManifest& manifest) {
    if (manifest.entries.empty()) {
        throw DataError("corpus manifest has no entries");
    }
    const std::filesystem::path file = corpus_dir / manifest.entries.front().path;
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw DataError("cannot open video file: " + file.string());
    }
    const ArrayInfo info = peek_info(in, file.string());
    if (info.dims.size() != 4 || info.dims[1] != 3) {
        throw DataError("video file is not a (T,3,H,W) volume: " + file.string());
    }
    return InputShape{3, manifest.clip_length, static_cast<int>(info.dims[2]),
                      static_cast<int>(info.dims[3])};
}

TrainResult train_teacher(const TrainConfig& config, const std::filesystem::path& corpus_dir,
                          const DatasetManifest& manifest) {
    if (config.method != "teacher") {
        throw ConfigError("train_teacher got method '" + config.method + "'");
    }
    const std::vector<Video> videos = load_videos(corpus_dir, manifest);
    const InputShape input = corpus_input_shape(corpus_dir, manifest);

    TrainResult result{NetworkF(reference_teacher(manifest.num_classes, input)), {}};
    NetworkF& net = result.net;
    if (!config.init_from.empty()) {
        load_checkpoint_into(config.init_from, net);
    } else {
        net.init_params(hash_combine(config.seed, 0x7e33));
    }

    auto velocity = net.zeros_like();
    auto grads = net.zeros_like();
    const std::vector<bool> conf_mask = net.confidence_param_mask();
    NetworkF::Cache cache;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = main_lr(config.base_lr, epoch);
        const std::vector<ClipRef> order = stratified_order(
            videos, manifest.clip_length, manifest.num_classes, config.seed, epoch);

        double loss_sum = 0.0, acc_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            zero_params(grads);
            for (std::size_t s = start; s < stop; ++s) {
                const Video& video = videos[order[s].video];
                const Clip clip = cut_clip(video, order[s].clip, manifest.clip_length);
                const NetworkF::Output out = net.forward(clip.volume, cache);
                std::vector<double> logits(out.class_logits.begin(), out.class_logits.end());
                const std::vector<double> p = softened_softmax(logits, 1.0);
                loss_sum += -std::log(std::max(p[video.label], 1e-12));
                acc_sum += argmax_lowest(p) == video.label ? 1.0 : 0.0;
                std::vector<float> dlogits(p.size());
                for (std::size_t c = 0; c < p.size(); ++c) {
                    dlogits[c] = static_cast<float>(p[c]) -
                                 (static_cast<int>(c) == video.label ? 1.0f : 0.0f);
                }
                net.backward(cache, dlogits, 0.0f, grads);
            }
            sgd_update(net, velocity, grads, 1.0 / double(stop - start), lr, lr, conf_mask,
                       config.momentum);
            seen += stop - start;
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.mean_total = loss_sum / double(seen);
        rec.clip_acc = acc_sum / double(seen);
        rec.lr_main = lr;
        rec.lr_conf = 0.0;
        check_epoch_finite(rec);
        result.log.epochs.push_back(rec);
    }
    return result;
}

TrainResult distill_student(const TrainConfig& config, const NetworkF& teacher,
                            const PseudoLabelTable* labels,
                            const std::filesystem::path& corpus_dir,
                            const DatasetManifest& manifest) {
    if (!is_student_method(config.method)) {
        throw ConfigError("distill_student got method '" + config.method + "'");
    }
    const bool needs_labels = config.method == "condi-sr" || config.method == "naive-bce";
    if (needs_labels && !labels) {
        throw ConfigError("method '" + config.method + "' needs a pseudo-label table");
    }
    const bool needs_teacher_logits =
        config.method == "condi-sr" || config.method == "st-ent";
    if (teacher.descriptor().num_classes != manifest.num_classes) {
        throw DataError("teacher class count does not match the corpus");
    }

    const std::vector<Video> videos = load_videos(corpus_dir, manifest);
    const InputShape input = corpus_input_shape(corpus_dir, manifest);

    TrainResult result{NetworkF(reference_student(manifest.num_classes, input)), {}};
    NetworkF& net = result.net;
    if (!config.init_from.empty()) {
        load_checkpoint_into(config.init_from, net);
    } else {
        net.init_params(hash_combine(config.seed, 0x57d3));
    }

    // The teacher is frozen, so its logits per clip are fixed for the whole
    // run; score every clip once up front.
    std::vector<std::vector<std::vector<double>>> teacher_logits(videos.size());
    if (needs_teacher_logits) {
        for (std::size_t v = 0; v < videos.size(); ++v) {
            const int n = clip_count(videos[v].frames, manifest.clip_length);
            teacher_logits[v].resize(n);
            for (int c = 0; c < n; ++c) {
                const Clip clip = cut_clip(videos[v], c, manifest.clip_length);
                const auto out = teacher.forward(clip.volume);
                teacher_logits[v][c].assign(out.class_logits.begin(), out.class_logits.end());
            }
        }
    }

    auto velocity = net.zeros_like();
    auto grads = net.zeros_like();
    const std::vector<bool> conf_mask = net.confidence_param_mask();
    NetworkF::Cache cache;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr_m = main_lr(config.base_lr, epoch);
        const double lr_c = conf_lr(config.base_lr, epoch);
        const std::vector<ClipRef> order = stratified_order(
            videos, manifest.clip_length, manifest.num_classes, config.seed, epoch);

        double total_sum = 0.0, kd_sum = 0.0, conf_sum = 0.0, acc_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            zero_params(grads);
            for (std::size_t s = start; s < stop; ++s) {
                const ClipRef ref = order[s];
                const Video& video = videos[ref.video];
                const Clip clip = cut_clip(video, ref.clip, manifest.clip_length);
                const NetworkF::Output out = net.forward(clip.volume, cache);
                std::vector<double> slogits(out.class_logits.begin(), out.class_logits.end());

                LossValue loss;
                if (config.method == "condi-sr") {
                    const int z = labels->at(video.id, ref.clip).z;
                    loss = condi_sr_loss(teacher_logits[ref.video][ref.clip], slogits,
                                         out.confidence_logit, z, config.loss);
                } else if (config.method == "st-ent") {
                    loss = st_ent_loss(teacher_logits[ref.video][ref.clip], slogits,
                                       config.loss.tau);
                } else if (config.method == "st-conf") {
                    loss = st_conf_loss(slogits, out.confidence_logit, video.label,
                                        config.conf_weight);
                } else { // naive-bce
                    const int z = labels->at(video.id, ref.clip).z;
                    loss = naive_bce_loss(slogits, out.confidence_logit, z, config.loss.mu);
                }
                total_sum += loss.total;
                kd_sum += loss.kd_part;
                conf_sum += loss.conf_part;
                acc_sum += argmax_lowest(slogits) == video.label ? 1.0 : 0.0;

                std::vector<float> dclass(loss.d_class_logits.begin(),
                                          loss.d_class_logits.end());
                net.backward(cache, dclass, static_cast<float>(loss.d_conf_logit), grads);
            }
            sgd_update(net, velocity, grads, 1.0 / double(stop - start), lr_m, lr_c, conf_mask,
                       config.momentum);
            seen += stop - start;
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.mean_total = total_sum / double(seen);
        rec.mean_kd = kd_sum / double(seen);
        rec.mean_conf = conf_sum / double(seen);
        rec.clip_acc = acc_sum / double(seen);
        rec.lr_main = lr_m;
        rec.lr_conf = lr_c;
        check_epoch_finite(rec);
        result.log.epochs.push_back(rec);
    }
    return result;
}

std::vector<TrainConfig> hyperparameter_grid(const TrainConfig& base,
                                             const nlohmann::json& grid) {
    if (!grid.is_object()) {
        throw ConfigError("hyperparameter grid must be a JSON object of arrays");
    }
    // std::map keeps expansion order stable (lexicographic by field).
    std::map<std::string, std::vector<nlohmann::json>> axes;
    for (const auto& [key, values] : grid.items()) {
        if (!values.is_array() || values.empty()) {
            throw ConfigError("grid field '" + key + "' must be a non-empty array");
        }
        axes[key] = std::vector<nlohmann::json>(values.begin(), values.end());
    }
    std::vector<TrainConfig> out{base};
    for (const auto& [key, values] : axes) {
        std::vector<TrainConfig> next;
        next.reserve(out.size() * values.size());
        for (const TrainConfig& cfg : out) {
            for (const nlohmann::json& v : values) {
                nlohmann::json patch;
                if (key == "lambda" || key == "tau" || key == "mu") {
                    patch["loss"][key] = v;
                } else {
                    patch[key] = v;
                }
                next.push_back(train_config_from_json(patch, cfg));
            }
        }
        out = std::move(next);
    }
    return out;
}

} // namespace condi
