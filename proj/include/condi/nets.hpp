#ifndef CONDI_NETS_HPP
#define CONDI_NETS_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "condi/net.hpp"
#include "condi/videodata.hpp"

namespace condi {

struct ModelProfile {
    std::uint64_t flops_per_clip = 0;
    std::uint64_t param_count = 0;
};

// Analytic cost of one forward pass. Convolutions and dense layers count
// two ops per multiply-accumulate; pooling counts one op per summed input
// element; normalization costs 8 ops per element plus 2 per channel for
// the affine parameters.
ModelProfile profile(const ArchDescriptor& desc);

struct StudentScores {
    std::vector<float> class_logits;
    float confidence_logit = 0.0f;
};

// Inference-time view of a trained clip classifier.
class ClipModel {
public:
    virtual ~ClipModel() = default;
    virtual std::vector<float> class_logits(const Clip& clip) const = 0;
    virtual std::uint64_t flops_per_clip() const = 0;
    virtual int num_classes() const = 0;
};

// Student view: class logits plus the confidence logit.
class StudentClipModel {
public:
    virtual ~StudentClipModel() = default;
    virtual StudentScores score(const Clip& clip) const = 0;
    virtual std::uint64_t flops_per_clip() const = 0;
    virtual int num_classes() const = 0;
};

class NetTeacher : public ClipModel {
public:
    explicit NetTeacher(std::shared_ptr<const NetworkF> net);
    std::vector<float> class_logits(const Clip& clip) const override;
    std::uint64_t flops_per_clip() const override;
    int num_classes() const override;

private:
    std::shared_ptr<const NetworkF> net_;
    std::uint64_t flops_;
};

class NetStudent : public StudentClipModel {
public:
    explicit NetStudent(std::shared_ptr<const NetworkF> net);
    StudentScores score(const Clip& clip) const override;
    std::uint64_t flops_per_clip() const override;
    int num_classes() const override;

private:
    std::shared_ptr<const NetworkF> net_;
    std::uint64_t flops_;
};

inline constexpr int kCheckpointVersion = 1;

// Single-file checkpoint: one JSON metadata line (format version,
// architecture descriptor, creation seed, parameter names/shapes) followed
// by the parameter tensors as concatenated CDAR float32 arrays.
void save_checkpoint(const std::filesystem::path& path, const NetworkF& net,
                     std::uint64_t creation_seed);

struct LoadedCheckpoint {
    NetworkF net;
    std::uint64_t creation_seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Loads parameters from path into an existing network; throws DataError
// when the stored descriptor does not match net's descriptor.
void load_checkpoint_into(const std::filesystem::path& path, NetworkF& net);

} // namespace condi

#endif
