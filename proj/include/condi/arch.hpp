#ifndef CONDI_ARCH_HPP
#define CONDI_ARCH_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace condi {

enum class LayerKind { conv3d, norm, avgpool, global_pool, dense };
enum class Activation { none, relu };
enum class DenseRole { trunk, class_head, conf_hidden, confidence_head };

struct LayerSpec {
    LayerKind kind = LayerKind::conv3d;
    Activation activation = Activation::none;

    // conv3d
    int in_channels = 0;
    int out_channels = 0;
    std::array<int, 3> kernel{1, 1, 1};
    std::array<int, 3> stride{1, 1, 1};
    std::array<int, 3> padding{0, 0, 0};
    int groups = 1;

    // norm
    int channels = 0;

    // avgpool (non-overlapping window, floor mode)
    std::array<int, 3> window{2, 2, 2};

    // dense
    int in_features = 0;
    int out_features = 0;
    DenseRole role = DenseRole::trunk;

    bool operator==(const LayerSpec&) const = default;
};

struct InputShape {
    int channels = 3;
    int frames = 16;
    int height = 32;
    int width = 32;
    bool operator==(const InputShape&) const = default;
};

struct ArchDescriptor {
    std::string name;
    InputShape input;
    int num_classes = 0;
    std::vector<LayerSpec> layers;
    bool operator==(const ArchDescriptor&) const = default;
};

// Activation volume shape between layers, (c, t, h, w).
struct Shape4 {
    int c = 0, t = 0, h = 0, w = 0;
    std::size_t count() const {
        return static_cast<std::size_t>(c) * t * h * w;
    }
    bool operator==(const Shape4&) const = default;
};

nlohmann::json to_json(const ArchDescriptor& desc);
ArchDescriptor descriptor_from_json(const nlohmann::json& j);

// Shape each layer produces, starting from the input volume. Throws
// ConfigError on inconsistent descriptors (bad feature counts, empty
// layer lists, volumes pooled away to nothing).
std::vector<Shape4> propagate_shapes(const ArchDescriptor& desc);

ArchDescriptor reference_teacher(int num_classes, const InputShape& input);
ArchDescriptor reference_student(int num_classes, const InputShape& input);

} // namespace condi

#endif
