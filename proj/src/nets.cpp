#include "condi/nets.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "condi/array_io.hpp"
#include "condi/common.hpp"

namespace condi {

ModelProfile profile(const ArchDescriptor& desc) {
    const std::vector<Shape4> shapes = propagate_shapes(desc);
    Shape4 cur{desc.input.channels, desc.input.frames, desc.input.height, desc.input.width};
    Shape4 trunk = cur;
    ModelProfile p;
    for (std::size_t i = 0; i < desc.layers.size(); ++i) {
        const LayerSpec& l = desc.layers[i];
        const Shape4& out = shapes[i];
        const bool head = l.kind == LayerKind::dense && l.role != DenseRole::trunk;
        const Shape4& in = head ? trunk : cur;
        switch (l.kind) {
        case LayerKind::conv3d: {
            const std::uint64_t kvol =
                std::uint64_t(l.kernel[0]) * l.kernel[1] * l.kernel[2];
            p.flops_per_clip += 2 * out.count() * kvol * (l.in_channels / l.groups);
            p.param_count +=
                std::uint64_t(l.out_channels) * (l.in_channels / l.groups) * kvol +
                l.out_channels;
            break;
        }
        case LayerKind::norm:
            p.flops_per_clip += 8 * std::uint64_t(in.count()) + 2 * std::uint64_t(l.channels);
            p.param_count += 2 * std::uint64_t(l.channels);
            break;
        case LayerKind::avgpool:
            p.flops_per_clip +=
                out.count() * std::uint64_t(l.window[0]) * l.window[1] * l.window[2];
            break;
        case LayerKind::global_pool:
            p.flops_per_clip += std::uint64_t(in.count());
            break;
        case LayerKind::dense:
            p.flops_per_clip += 2 * std::uint64_t(l.in_features) * l.out_features;
            p.param_count += std::uint64_t(l.in_features) * l.out_features + l.out_features;
            break;
        }
        if (!head) {
            cur = out;
            trunk = out;
        }
    }
    return p;
}

NetTeacher::NetTeacher(std::shared_ptr<const NetworkF> net)
    : net_(std::move(net)), flops_(profile(net_->descriptor()).flops_per_clip) {}

std::vector<float> NetTeacher::class_logits(const Clip& clip) const {
    return net_->forward(clip.volume).class_logits;
}

std::uint64_t NetTeacher::flops_per_clip() const { return flops_; }

int NetTeacher::num_classes() const { return net_->descriptor().num_classes; }

NetStudent::NetStudent(std::shared_ptr<const NetworkF> net)
    : net_(std::move(net)), flops_(profile(net_->descriptor()).flops_per_clip) {
    if (!net_->has_confidence_head()) {
        throw ConfigError("student network needs a confidence head");
    }
}

StudentScores NetStudent::score(const Clip& clip) const {
    NetworkF::Output out = net_->forward(clip.volume);
    return StudentScores{std::move(out.class_logits), out.confidence_logit};
}

std::uint64_t NetStudent::flops_per_clip() const { return flops_; }

int NetStudent::num_classes() const { return net_->descriptor().num_classes; }

void save_checkpoint(const std::filesystem::path& path, const NetworkF& net,
                     std::uint64_t creation_seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open checkpoint for writing: " + path.string());
    }
    const auto specs = net.param_specs();
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, dims] : specs) {
        params.push_back({{"name", name}, {"shape", dims}});
    }
    nlohmann::json meta{
        {"format_version", kCheckpointVersion},
        {"creation_seed", creation_seed},
        {"architecture", to_json(net.descriptor())},
        {"params", std::move(params)},
    };
    out << meta.dump() << '\n';
    for (std::size_t i = 0; i < specs.size(); ++i) {
        ArrayF32 arr;
        arr.dims = specs[i].second;
        arr.data = net.params()[i];
        write_array(out, arr);
    }
    if (!out) {
        throw DataError("failed writing checkpoint: " + path.string());
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("truncated checkpoint (missing metadata): " + path.string());
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint metadata in " + path.string() + ": " + e.what());
    }
    if (meta.value("format_version", -1) != kCheckpointVersion) {
        throw DataError("checkpoint version mismatch in " + path.string());
    }
    LoadedCheckpoint ck{NetworkF(descriptor_from_json(meta.at("architecture"))),
                        meta.value("creation_seed", std::uint64_t(0))};
    const auto specs = ck.net.param_specs();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        ArrayF32 arr = read_array_f32(in, path.string());
        if (arr.dims != specs[i].second) {
            throw DataError("checkpoint tensor '" + specs[i].first +
                            "' has unexpected shape in " + path.string());
        }
        ck.net.params()[i] = std::move(arr.data);
    }
    return ck;
}

void load_checkpoint_into(const std::filesystem::path& path, NetworkF& net) {
    LoadedCheckpoint ck = load_checkpoint(path);
    if (!(ck.net.descriptor() == net.descriptor())) {
        throw DataError("checkpoint descriptor mismatch: " + path.string() +
                        " stores architecture '" + ck.net.descriptor().name +
                        "', expected '" + net.descriptor().name + "'");
    }
    net.params() = std::move(ck.net.params());
}

} // namespace condi
