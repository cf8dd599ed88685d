#include "condi/bench.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <ostream>

#include "condi/common.hpp"
#include "condi/hash.hpp"

namespace fs = std::filesystem;

namespace condi {

namespace {

nlohmann::json texture_to_json(const TextureParams& t) {
    return nlohmann::json{
        {"bg_level", t.bg_level},
        {"clean_noise", t.clean_noise},
        {"corrupt_noise", t.corrupt_noise},
        {"shape_value", t.shape_value},
        {"shape_size_frac", t.shape_size_frac},
        {"occluder_count", t.occluder_count},
    };
}

TextureParams texture_from_json(const nlohmann::json& j, TextureParams base) {
    for (const auto& [key, value] : j.items()) {
        if (key == "bg_level") base.bg_level = value.get<double>();
        else if (key == "clean_noise") base.clean_noise = value.get<double>();
        else if (key == "corrupt_noise") base.corrupt_noise = value.get<double>();
        else if (key == "shape_value") base.shape_value = value.get<double>();
        else if (key == "shape_size_frac") base.shape_size_frac = value.get<double>();
        else if (key == "occluder_count") base.occluder_count = value.get<int>();
        else throw ConfigError("unknown texture field '" + key + "'");
    }
    return base;
}

nlohmann::json gen_params_to_json(const GenParams& p) {
    return nlohmann::json{
        {"num_videos", p.num_videos},
        {"num_classes", p.num_classes},
        {"frames_per_video", p.frames_per_video},
        {"frame_size", p.frame_size},
        {"clip_length", p.clip_length},
        {"corrupt_prob", p.corrupt_prob},
        {"seed", p.seed},
        {"texture", texture_to_json(p.texture)},
    };
}

GenParams corpus_gen_params(const CorpusSpec& spec, bool test_split) {
    GenParams p;
    p.num_videos = test_split ? spec.test_videos : spec.train_videos;
    p.num_classes = spec.num_classes;
    p.frames_per_video = spec.clips_per_video * spec.clip_length;
    p.frame_size = spec.frame_size;
    p.clip_length = spec.clip_length;
    p.corrupt_prob = spec.corrupt_prob;
    // Disjoint train/test streams from one experiment seed.
    p.seed = test_split ? hash_combine(spec.seed, 0x7e57) : spec.seed;
    p.texture = spec.texture;
    return p;
}

// ---- stage cache -------------------------------------------------------
//
// Every stage writes its artifacts into cache/<key>/ where <key> digests
// the stage kind, its resolved parameters, and the keys of its upstream
// stages. A stage.ok meta file lists each artifact's content hash; reuse
// verifies them so silent cache corruption surfaces as an error.

struct StageDir {
    fs::path dir;
    std::string key;
    bool fresh = false;
};

fs::path cache_root(const fs::path& workdir) { return workdir / "cache"; }

std::string file_or_tree_hash(const fs::path& p) {
    if (fs::is_directory(p)) {
        return corpus_hash(p);
    }
    return hash_file(p);
}

void write_meta(const fs::path& dir, const std::vector<std::string>& artifacts) {
    nlohmann::json files = nlohmann::json::object();
    for (const std::string& name : artifacts) {
        files[name] = file_or_tree_hash(dir / name);
    }
    std::ofstream out(dir / "stage.ok", std::ios::binary);
    out << nlohmann::json{{"files", files}}.dump() << '\n';
    if (!out) {
        throw DataError("failed writing stage meta in " + dir.string());
    }
}

bool verify_meta(const fs::path& dir) {
    std::ifstream in(dir / "stage.ok", std::ios::binary);
    if (!in) return false;
    nlohmann::json meta;
    try {
        in >> meta;
        for (const auto& [name, digest] : meta.at("files").items()) {
            if (file_or_tree_hash(dir / name) != digest.get<std::string>()) {
                throw DataError("cache corruption detected by hash: " +
                                (dir / name).string());
            }
        }
    } catch (const nlohmann::json::exception&) {
        return false;
    }
    return true;
}

// Runs build(tmp_dir) unless a verified cache entry exists, then commits
// tmp -> final with a rename so concurrent or interrupted runs never see a
// half-written stage.
template <typename BuildFn>
StageDir ensure_stage(const fs::path& workdir, const std::string& kind,
                      const std::string& desc, const std::vector<std::string>& artifacts,
                      std::ostream& log, bool use_cache, BuildFn&& build) {
    const std::string key = kind + "-" + hash_string(kind + "|" + desc);
    const fs::path final_dir = cache_root(workdir) / key;
    if (use_cache && fs::exists(final_dir / "stage.ok")) {
        if (verify_meta(final_dir)) {
            log << "[cache] reuse " << key << "\n";
            return StageDir{final_dir, key, false};
        }
        throw DataError("cache entry unreadable: " + final_dir.string());
    }
    const fs::path tmp = cache_root(workdir) / ("tmp." + key);
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    build(tmp);
    write_meta(tmp, artifacts);
    fs::remove_all(final_dir);
    fs::rename(tmp, final_dir);
    log << "[stage] built " << key << "\n";
    return StageDir{final_dir, key, true};
}

ReportRow make_row(const EvalResult& res, const EvalConfig& cfg) {
    ReportRow row;
    row.regime = regime_name(cfg.regime);
    row.sampler = cfg.regime == Regime::dense ? "none" : sampler_name(cfg.sampler);
    row.k = cfg.regime == Regime::dense ? 0 : cfg.k;
    row.k_s = cfg.regime == Regime::divided ? cfg.k_s : 0;
    row.top1 = res.top1;
    row.mean_flops = res.mean_flops;
    row.mean_wall_s = res.mean_wall_s;
    row.auroc = res.auroc;
    row.seed = std::to_string(res.seed);
    row.dataset_hash = res.dataset_hash;
    return row;
}

} // namespace

GenParams gen_params_from_json(const nlohmann::json& j, GenParams base) {
    if (!j.is_object()) {
        throw ConfigError("corpus config must be a JSON object");
    }
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "num_videos") base.num_videos = value.get<int>();
            else if (key == "num_classes") base.num_classes = value.get<int>();
            else if (key == "frames_per_video") base.frames_per_video = value.get<int>();
            else if (key == "frame_size") base.frame_size = value.get<int>();
            else if (key == "clip_length") base.clip_length = value.get<int>();
            else if (key == "corrupt_prob") base.corrupt_prob = value.get<double>();
            else if (key == "seed") base.seed = value.get<std::uint64_t>();
            else if (key == "texture") base.texture = texture_from_json(value, base.texture);
            else throw ConfigError("unknown corpus field '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed corpus config: ") + e.what());
    }
    return base;
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("experiment spec must be a JSON object");
    }
    ExperimentSpec spec;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "corpus") {
                for (const auto& [ck, cv] : value.items()) {
                    if (ck == "train_videos") spec.corpus.train_videos = cv.get<int>();
                    else if (ck == "test_videos") spec.corpus.test_videos = cv.get<int>();
                    else if (ck == "num_classes") spec.corpus.num_classes = cv.get<int>();
                    else if (ck == "clips_per_video") spec.corpus.clips_per_video = cv.get<int>();
                    else if (ck == "clip_length") spec.corpus.clip_length = cv.get<int>();
                    else if (ck == "frame_size") spec.corpus.frame_size = cv.get<int>();
                    else if (ck == "corrupt_prob") spec.corpus.corrupt_prob = cv.get<double>();
                    else if (ck == "seed") spec.corpus.seed = cv.get<std::uint64_t>();
                    else if (ck == "texture")
                        spec.corpus.texture = texture_from_json(cv, spec.corpus.texture);
                    else throw ConfigError("unknown corpus field '" + ck + "'");
                }
            } else if (key == "teacher") {
                spec.teacher = train_config_from_json(value, default_train_config("teacher"));
            } else if (key == "students") {
                spec.students.clear();
                for (const auto& [method, cfg] : value.items()) {
                    spec.students.push_back(
                        train_config_from_json(cfg, default_train_config(method)));
                    spec.students.back().method = method;
                }
            } else if (key == "regimes") {
                spec.regimes = value.get<std::vector<std::string>>();
            } else if (key == "samplers") {
                spec.samplers = value.get<std::vector<std::string>>();
            } else if (key == "k") {
                spec.k_values = value.get<std::vector<int>>();
            } else if (key == "ks") {
                spec.ks_values = value.get<std::vector<int>>();
            } else if (key == "seeds") {
                spec.seeds = value.get<std::vector<std::uint64_t>>();
            } else if (key == "eval_student") {
                spec.eval_student = value.get<std::string>();
            } else {
                throw ConfigError("unknown experiment field '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed experiment spec: ") + e.what());
    }
    if (spec.students.empty()) {
        spec.students.push_back(default_train_config("condi-sr"));
    }
    if (spec.seeds.empty()) {
        throw ConfigError("experiment spec needs at least one seed");
    }
    for (const std::string& r : spec.regimes) regime_from_name(r);
    for (const std::string& s : spec.samplers) sampler_from_name(s);
    return spec;
}

ExperimentSpec load_experiment_spec(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open experiment spec: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed experiment spec " + path.string() + ": " + e.what());
    }
    return experiment_from_json(j);
}

PipelineArtifacts run_pipeline_stages(const ExperimentSpec& spec, const fs::path& workdir,
                                      std::ostream& log, bool use_cache) {
    fs::create_directories(cache_root(workdir));
    PipelineArtifacts art;

    const GenParams train_params = corpus_gen_params(spec.corpus, false);
    const GenParams test_params = corpus_gen_params(spec.corpus, true);
    const StageDir train_gen = ensure_stage(
        workdir, "gen", gen_params_to_json(train_params).dump(), {"corpus"}, log, use_cache,
        [&](const fs::path& tmp) { generate_corpus(train_params, tmp / "corpus"); });
    const StageDir test_gen = ensure_stage(
        workdir, "gen", gen_params_to_json(test_params).dump(), {"corpus"}, log, use_cache,
        [&](const fs::path& tmp) { generate_corpus(test_params, tmp / "corpus"); });
    art.train_corpus = train_gen.dir / "corpus";
    art.test_corpus = test_gen.dir / "corpus";

    const DatasetManifest train_manifest = load_corpus(art.train_corpus);

    TrainConfig teacher_cfg = spec.teacher;
    teacher_cfg.method = "teacher";
    const StageDir teacher_stage = ensure_stage(
        workdir, "teacher",
        train_config_to_json(teacher_cfg).dump() + "|" + train_gen.key,
        {"teacher.ckpt", "train_log.csv", "config.json"}, log, use_cache,
        [&](const fs::path& tmp) {
            TrainResult r = train_teacher(teacher_cfg, art.train_corpus, train_manifest);
            save_checkpoint(tmp / "teacher.ckpt", r.net, teacher_cfg.seed);
            save_train_log(r.log, tmp / "train_log.csv");
            write_resolved_config(teacher_cfg, tmp / "config.json");
        });
    art.teacher_checkpoint = teacher_stage.dir / "teacher.ckpt";

    const StageDir label_stage = ensure_stage(
        workdir, "labels", teacher_stage.key + "|" + train_gen.key, {"labels.jsonl"}, log,
        use_cache, [&](const fs::path& tmp) {
            const LoadedCheckpoint teacher = load_checkpoint(art.teacher_checkpoint);
            NetTeacher model(std::make_shared<NetworkF>(teacher.net));
            save_pseudo_labels(make_pseudo_labels(model, art.train_corpus, train_manifest),
                               tmp / "labels.jsonl");
        });
    art.label_table = label_stage.dir / "labels.jsonl";

    for (const TrainConfig& student_cfg : spec.students) {
        const StageDir stage = ensure_stage(
            workdir, "distill-" + student_cfg.method,
            train_config_to_json(student_cfg).dump() + "|" + teacher_stage.key + "|" +
                label_stage.key + "|" + train_gen.key,
            {"student.ckpt", "train_log.csv", "config.json"}, log, use_cache,
            [&](const fs::path& tmp) {
                const LoadedCheckpoint teacher = load_checkpoint(art.teacher_checkpoint);
                const PseudoLabelTable labels = load_pseudo_labels(art.label_table);
                TrainResult r = distill_student(student_cfg, teacher.net, &labels,
                                                art.train_corpus, train_manifest);
                save_checkpoint(tmp / "student.ckpt", r.net, student_cfg.seed);
                save_train_log(r.log, tmp / "train_log.csv");
                write_resolved_config(student_cfg, tmp / "config.json");
            });
        art.student_checkpoints.push_back({student_cfg.method, stage.dir / "student.ckpt"});
    }
    return art;
}

ReportTable run_experiment(const ExperimentSpec& spec, const fs::path& workdir,
                           std::ostream& log) {
    const PipelineArtifacts art = run_pipeline_stages(spec, workdir, log, true);

    const auto teacher_net =
        std::make_shared<NetworkF>(load_checkpoint(art.teacher_checkpoint).net);
    const NetTeacher teacher(teacher_net);

    std::shared_ptr<NetworkF> student_net;
    for (const auto& [method, path] : art.student_checkpoints) {
        if (method == spec.eval_student) {
            student_net = std::make_shared<NetworkF>(load_checkpoint(path).net);
        }
    }
    if (!student_net) {
        throw ConfigError("eval_student '" + spec.eval_student +
                          "' is not among the distilled students");
    }
    const NetStudent student(student_net);

    const DatasetManifest test_manifest = load_corpus(art.test_corpus);
    const int clips_per_video = spec.corpus.clips_per_video;

    // The student is fixed across rows, so its confidence AUROC is computed
    // once and stamped onto the rows where it applies.
    const double student_auroc =
        confidence_auroc(teacher, student, art.test_corpus, test_manifest);
    log << "[eval] " << spec.eval_student << " confidence AUROC " << student_auroc << "\n";

    ReportTable table;
    auto run_eval = [&](const EvalConfig& cfg, bool learned) {
        EvalConfig c = cfg;
        c.compute_auroc = false;
        const StudentClipModel* s =
            (cfg.regime == Regime::divided || learned) ? &student : nullptr;
        EvalResult res = evaluate_split(teacher, s, art.test_corpus, test_manifest, c);
        if (s) res.auroc = student_auroc;
        ReportRow row = make_row(res, cfg);
        log << "[eval] " << render_csv_row(row) << "\n";
        return row;
    };

    for (const std::string& regime_str : spec.regimes) {
        const Regime regime = regime_from_name(regime_str);
        if (regime == Regime::dense) {
            EvalConfig cfg;
            cfg.regime = Regime::dense;
            cfg.seed = spec.seeds.front();
            table.rows.push_back(run_eval(cfg, false));
            continue;
        }
        for (int k : spec.k_values) {
            if (k > clips_per_video) {
                log << "[warn] K=" << k << " exceeds clips per video (" << clips_per_video
                    << "); clamped per video\n";
            }
            if (regime == Regime::topk) {
                for (const std::string& sampler_str : spec.samplers) {
                    const SamplerKind sampler = sampler_from_name(sampler_str);
                    const bool learned = sampler == SamplerKind::confidence ||
                                         sampler == SamplerKind::entropy;
                    EvalConfig cfg;
                    cfg.regime = Regime::topk;
                    cfg.sampler = sampler;
                    cfg.k = k;
                    if (sampler == SamplerKind::random) {
                        std::vector<ReportRow> seed_rows;
                        for (std::uint64_t seed : spec.seeds) {
                            cfg.seed = seed;
                            seed_rows.push_back(run_eval(cfg, learned));
                        }
                        ReportRow mean = seed_rows.front();
                        mean.seed = "mean";
                        mean.top1 = mean.mean_flops = mean.mean_wall_s = 0.0;
                        for (const ReportRow& r : seed_rows) {
                            mean.top1 += r.top1;
                            mean.mean_flops += r.mean_flops;
                            mean.mean_wall_s += r.mean_wall_s;
                        }
                        const double ns = static_cast<double>(seed_rows.size());
                        mean.top1 /= ns;
                        mean.mean_flops /= ns;
                        mean.mean_wall_s /= ns;
                        for (ReportRow& r : seed_rows) table.rows.push_back(std::move(r));
                        table.rows.push_back(std::move(mean));
                    } else {
                        cfg.seed = spec.seeds.front();
                        table.rows.push_back(run_eval(cfg, learned));
                    }
                }
            } else { // divided
                for (int ks : spec.ks_values) {
                    if (ks > k) continue;
                    EvalConfig cfg;
                    cfg.regime = Regime::divided;
                    cfg.sampler = SamplerKind::confidence;
                    cfg.k = k;
                    cfg.k_s = ks;
                    cfg.seed = spec.seeds.front();
                    table.rows.push_back(run_eval(cfg, true));
                }
            }
        }
    }
    return table;
}

} // namespace condi
