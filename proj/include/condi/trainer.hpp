#ifndef CONDI_TRAINER_HPP
#define CONDI_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "condi/distill.hpp"
#include "condi/net.hpp"
#include "condi/nets.hpp"
#include "condi/videodata.hpp"

namespace condi {

struct TrainConfig {
    std::string method = "teacher"; // teacher | condi-sr | st-ent | st-conf | naive-bce
    int epochs = 15;
    double base_lr = 0.01;
    int batch_size = 16;
    std::uint64_t seed = 0;
    LossConfig loss;
    double momentum = 0.9;
    double conf_weight = 0.5;  // st-conf only
    std::string init_from;     // optional warm-start checkpoint
};

TrainConfig default_train_config(const std::string& method);

// Step-wise decay, 0-based epoch index: the confidence branch divides by 5
// each epoch after the first, everything else divides by 1.25.
double main_lr(double base_lr, int epoch_index);
double conf_lr(double base_lr, int epoch_index);

struct EpochRecord {
    int epoch = 0; // 1-based in logs
    double mean_total = 0.0;
    double mean_kd = 0.0;
    double mean_conf = 0.0;
    double clip_acc = 0.0;
    double lr_main = 0.0;
    double lr_conf = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

void save_train_log(const TrainLog& log, const std::filesystem::path& path);

nlohmann::json train_config_to_json(const TrainConfig& config);
// Overlays the JSON fields onto base; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base);
void write_resolved_config(const TrainConfig& config, const std::filesystem::path& path);

struct TrainResult {
    NetworkF net;
    TrainLog log;
};

// Cross-entropy training of the reference teacher on clip labels.
TrainResult train_teacher(const TrainConfig& config, const std::filesystem::path& corpus_dir,
                          const DatasetManifest& manifest);

// Distills a student against the frozen teacher with the loss selected by
// config.method. Pseudo labels are required for condi-sr and naive-bce.
TrainResult distill_student(const TrainConfig& config, const NetworkF& teacher,
                            const PseudoLabelTable* labels,
                            const std::filesystem::path& corpus_dir,
                            const DatasetManifest& manifest);

// Cartesian expansion of {field: [values...]} over the base config. Keys
// expand in lexicographic order; the base seed is kept unless the grid
// overrides it.
std::vector<TrainConfig> hyperparameter_grid(const TrainConfig& base,
                                             const nlohmann::json& grid);

// Input volume shape implied by the corpus files and manifest clip length.
InputShape corpus_input_shape(const std::filesystem::path& corpus_dir,
                              const DatasetManifest& manifest);

} // namespace condi

#endif
