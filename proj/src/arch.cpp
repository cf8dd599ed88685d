#include "condi/arch.hpp"

#include <string>

#include "condi/common.hpp"

namespace condi {

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::norm: return "norm";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::global_pool: return "global_pool";
    case LayerKind::dense: return "dense";
    }
    return "?";
}

LayerKind kind_from_name(const std::string& s) {
    if (s == "conv3d") return LayerKind::conv3d;
    if (s == "norm") return LayerKind::norm;
    if (s == "avgpool") return LayerKind::avgpool;
    if (s == "global_pool") return LayerKind::global_pool;
    if (s == "dense") return LayerKind::dense;
    throw ConfigError("unknown layer kind '" + s + "' in architecture descriptor");
}

const char* act_name(Activation a) {
    return a == Activation::relu ? "relu" : "none";
}

Activation act_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "none") return Activation::none;
    throw ConfigError("unknown activation '" + s + "' in architecture descriptor");
}

const char* role_name(DenseRole r) {
    switch (r) {
    case DenseRole::trunk: return "trunk";
    case DenseRole::class_head: return "class_head";
    case DenseRole::conf_hidden: return "conf_hidden";
    case DenseRole::confidence_head: return "confidence_head";
    }
    return "?";
}

DenseRole role_from_name(const std::string& s) {
    if (s == "trunk") return DenseRole::trunk;
    if (s == "class_head") return DenseRole::class_head;
    if (s == "conf_hidden") return DenseRole::conf_hidden;
    if (s == "confidence_head") return DenseRole::confidence_head;
    throw ConfigError("unknown dense role '" + s + "' in architecture descriptor");
}

nlohmann::json triple(const std::array<int, 3>& a) {
    return nlohmann::json::array({a[0], a[1], a[2]});
}

std::array<int, 3> triple_from(const nlohmann::json& j, const char* field) {
    if (!j.is_array() || j.size() != 3) {
        throw ConfigError(std::string("descriptor field '") + field + "' must be a 3-element array");
    }
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

int out_dim(int in, int k, int s, int p) {
    return (in + 2 * p - k) / s + 1;
}

} // namespace

nlohmann::json to_json(const ArchDescriptor& desc) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& l : desc.layers) {
        nlohmann::json j;
        j["kind"] = kind_name(l.kind);
        switch (l.kind) {
        case LayerKind::conv3d:
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["kernel"] = triple(l.kernel);
            j["stride"] = triple(l.stride);
            j["padding"] = triple(l.padding);
            j["groups"] = l.groups;
            j["activation"] = act_name(l.activation);
            break;
        case LayerKind::norm:
            j["channels"] = l.channels;
            j["activation"] = act_name(l.activation);
            break;
        case LayerKind::avgpool:
            j["window"] = triple(l.window);
            break;
        case LayerKind::global_pool:
            break;
        case LayerKind::dense:
            j["in_features"] = l.in_features;
            j["out_features"] = l.out_features;
            j["role"] = role_name(l.role);
            j["activation"] = act_name(l.activation);
            break;
        }
        layers.push_back(std::move(j));
    }
    return nlohmann::json{
        {"name", desc.name},
        {"input",
         {{"channels", desc.input.channels},
          {"frames", desc.input.frames},
          {"height", desc.input.height},
          {"width", desc.input.width}}},
        {"num_classes", desc.num_classes},
        {"layers", std::move(layers)},
    };
}

ArchDescriptor descriptor_from_json(const nlohmann::json& j) {
    try {
        ArchDescriptor desc;
        desc.name = j.at("name").get<std::string>();
        const nlohmann::json& in = j.at("input");
        desc.input.channels = in.at("channels").get<int>();
        desc.input.frames = in.at("frames").get<int>();
        desc.input.height = in.at("height").get<int>();
        desc.input.width = in.at("width").get<int>();
        desc.num_classes = j.at("num_classes").get<int>();
        for (const nlohmann::json& lj : j.at("layers")) {
            LayerSpec l;
            l.kind = kind_from_name(lj.at("kind").get<std::string>());
            switch (l.kind) {
            case LayerKind::conv3d:
                l.in_channels = lj.at("in_channels").get<int>();
                l.out_channels = lj.at("out_channels").get<int>();
                l.kernel = triple_from(lj.at("kernel"), "kernel");
                l.stride = triple_from(lj.at("stride"), "stride");
                l.padding = triple_from(lj.at("padding"), "padding");
                l.groups = lj.value("groups", 1);
                l.activation = act_from_name(lj.value("activation", "none"));
                break;
            case LayerKind::norm:
                l.channels = lj.at("channels").get<int>();
                l.activation = act_from_name(lj.value("activation", "none"));
                break;
            case LayerKind::avgpool:
                l.window = triple_from(lj.at("window"), "window");
                break;
            case LayerKind::global_pool:
                break;
            case LayerKind::dense:
                l.in_features = lj.at("in_features").get<int>();
                l.out_features = lj.at("out_features").get<int>();
                l.role = role_from_name(lj.value("role", "trunk"));
                l.activation = act_from_name(lj.value("activation", "none"));
                break;
            }
            desc.layers.push_back(l);
        }
        return desc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed architecture descriptor: ") + e.what());
    }
}

std::vector<Shape4> propagate_shapes(const ArchDescriptor& desc) {
    if (desc.layers.empty()) {
        throw ConfigError("architecture descriptor has no layers");
    }
    if (desc.num_classes < 2) {
        throw ConfigError("architecture descriptor needs at least two classes");
    }
    Shape4 cur{desc.input.channels, desc.input.frames, desc.input.height, desc.input.width};
    if (cur.count() == 0) {
        throw ConfigError("architecture descriptor has an empty input volume");
    }

    std::vector<Shape4> out;
    out.reserve(desc.layers.size());
    bool seen_head = false;
    int conf_hidden_width = 0; // set once a conf_hidden layer ran
    bool seen_conf_head = false;
    Shape4 trunk_out = cur; // shape feeding the heads
    for (std::size_t i = 0; i < desc.layers.size(); ++i) {
        const LayerSpec& l = desc.layers[i];
        if (seen_head && !(l.kind == LayerKind::dense && l.role != DenseRole::trunk)) {
            throw ConfigError("layer " + std::to_string(i) +
                              ": only head layers may follow the first head");
        }
        switch (l.kind) {
        case LayerKind::conv3d: {
            if (l.in_channels != cur.c) {
                throw ConfigError("layer " + std::to_string(i) + ": conv3d expects " +
                                  std::to_string(l.in_channels) + " input channels, got " +
                                  std::to_string(cur.c));
            }
            if (l.groups < 1 || l.in_channels % l.groups != 0 || l.out_channels % l.groups != 0) {
                throw ConfigError("layer " + std::to_string(i) +
                                  ": conv3d groups must divide both channel counts");
            }
            Shape4 nxt;
            nxt.c = l.out_channels;
            nxt.t = out_dim(cur.t, l.kernel[0], l.stride[0], l.padding[0]);
            nxt.h = out_dim(cur.h, l.kernel[1], l.stride[1], l.padding[1]);
            nxt.w = out_dim(cur.w, l.kernel[2], l.stride[2], l.padding[2]);
            if (nxt.t < 1 || nxt.h < 1 || nxt.w < 1) {
                throw ConfigError("layer " + std::to_string(i) +
                                  ": conv3d output volume is empty");
            }
            cur = nxt;
            break;
        }
        case LayerKind::norm:
            if (l.channels != cur.c) {
                throw ConfigError("layer " + std::to_string(i) + ": norm expects " +
                                  std::to_string(l.channels) + " channels, got " +
                                  std::to_string(cur.c));
            }
            break;
        case LayerKind::avgpool: {
            Shape4 nxt = cur;
            nxt.t = cur.t / l.window[0];
            nxt.h = cur.h / l.window[1];
            nxt.w = cur.w / l.window[2];
            if (nxt.t < 1 || nxt.h < 1 || nxt.w < 1) {
                throw ConfigError("layer " + std::to_string(i) +
                                  ": avgpool output volume is empty");
            }
            cur = nxt;
            break;
        }
        case LayerKind::global_pool:
            cur = Shape4{cur.c, 1, 1, 1};
            break;
        case LayerKind::dense: {
            // The confidence head reads the conf_hidden output when the
            // branch has one; every other head reads the trunk directly.
            const bool via_hidden =
                l.role == DenseRole::confidence_head && conf_hidden_width > 0;
            const std::size_t expect = l.role == DenseRole::trunk
                ? cur.count()
                : (via_hidden ? std::size_t(conf_hidden_width) : trunk_out.count());
            if (static_cast<std::size_t>(l.in_features) != expect) {
                throw ConfigError("layer " + std::to_string(i) + ": dense expects " +
                                  std::to_string(l.in_features) + " features, got " +
                                  std::to_string(expect));
            }
            if (l.out_features < 1) {
                throw ConfigError("layer " + std::to_string(i) + ": dense needs outputs");
            }
            if (l.role != DenseRole::trunk) {
                if (!seen_head) trunk_out = cur;
                seen_head = true;
                if (l.role == DenseRole::class_head && l.out_features != desc.num_classes) {
                    throw ConfigError("layer " + std::to_string(i) +
                                      ": class head width must match num_classes");
                }
                if (l.role == DenseRole::conf_hidden) {
                    if (seen_conf_head) {
                        throw ConfigError("layer " + std::to_string(i) +
                                          ": conf_hidden must precede the confidence head");
                    }
                    conf_hidden_width = l.out_features;
                }
                if (l.role == DenseRole::confidence_head) {
                    seen_conf_head = true;
                    if (l.out_features != 1) {
                        throw ConfigError("layer " + std::to_string(i) +
                                          ": confidence head must emit a single logit");
                    }
                }
                out.push_back(Shape4{l.out_features, 1, 1, 1});
                continue;
            }
            cur = Shape4{l.out_features, 1, 1, 1};
            break;
        }
        }
        trunk_out = cur;
        out.push_back(cur);
    }

    int class_heads = 0, conf_heads = 0, conf_hiddens = 0;
    for (const LayerSpec& l : desc.layers) {
        if (l.kind != LayerKind::dense) continue;
        if (l.role == DenseRole::class_head) ++class_heads;
        if (l.role == DenseRole::conf_hidden) ++conf_hiddens;
        if (l.role == DenseRole::confidence_head) ++conf_heads;
    }
    if (class_heads != 1) {
        throw ConfigError("architecture descriptor needs exactly one class head");
    }
    if (conf_heads > 1) {
        throw ConfigError("architecture descriptor allows at most one confidence head");
    }
    if (conf_hiddens > 1) {
        throw ConfigError("architecture descriptor allows at most one conf_hidden layer");
    }
    if (conf_hiddens == 1 && conf_heads == 0) {
        throw ConfigError("conf_hidden layer needs a confidence head to feed");
    }
    return out;
}

namespace {

LayerSpec pool_layer(Shape4 cur) {
    LayerSpec l;
    l.kind = LayerKind::avgpool;
    l.window = {cur.t > 1 ? 2 : 1, cur.h > 1 ? 2 : 1, cur.w > 1 ? 2 : 1};
    return l;
}

LayerSpec conv_layer(int in_ch, int out_ch, int groups) {
    LayerSpec l;
    l.kind = LayerKind::conv3d;
    l.in_channels = in_ch;
    l.out_channels = out_ch;
    l.kernel = {3, 3, 3};
    l.padding = {1, 1, 1};
    l.groups = groups;
    return l;
}

LayerSpec pointwise_layer(int in_ch, int out_ch) {
    LayerSpec l;
    l.kind = LayerKind::conv3d;
    l.in_channels = in_ch;
    l.out_channels = out_ch;
    l.kernel = {1, 1, 1};
    return l;
}

LayerSpec norm_relu(int channels) {
    LayerSpec l;
    l.kind = LayerKind::norm;
    l.channels = channels;
    l.activation = Activation::relu;
    return l;
}

LayerSpec dense_layer(int in, int out, DenseRole role,
                      Activation act = Activation::none) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.in_features = in;
    l.out_features = out;
    l.role = role;
    l.activation = act;
    return l;
}

Shape4 after_pool(Shape4 s, const LayerSpec& pool) {
    s.t /= pool.window[0];
    s.h /= pool.window[1];
    s.w /= pool.window[2];
    return s;
}

} // namespace

ArchDescriptor reference_teacher(int num_classes, const InputShape& input) {
    ArchDescriptor d;
    d.name = "reference_teacher";
    d.input = input;
    d.num_classes = num_classes;
    Shape4 cur{input.channels, input.frames, input.height, input.width};
    const int widths[] = {16, 32, 64, 128};
    int ch = input.channels;
    for (int out_ch : widths) {
        LayerSpec pool = pool_layer(cur);
        d.layers.push_back(pool);
        cur = after_pool(cur, pool);
        d.layers.push_back(conv_layer(ch, out_ch, 1));
        d.layers.push_back(norm_relu(out_ch));
        ch = out_ch;
        cur.c = out_ch;
    }
    LayerSpec gap;
    gap.kind = LayerKind::global_pool;
    d.layers.push_back(gap);
    d.layers.push_back(dense_layer(ch, num_classes, DenseRole::class_head));
    return d;
}

ArchDescriptor reference_student(int num_classes, const InputShape& input) {
    ArchDescriptor d;
    d.name = "reference_student";
    d.input = input;
    d.num_classes = num_classes;
    Shape4 cur{input.channels, input.frames, input.height, input.width};
    const int widths[] = {16, 32};
    int ch = input.channels;
    for (int out_ch : widths) {
        LayerSpec pool = pool_layer(cur);
        d.layers.push_back(pool);
        cur = after_pool(cur, pool);
        d.layers.push_back(conv_layer(ch, ch, ch)); // depthwise
        d.layers.push_back(pointwise_layer(ch, out_ch));
        d.layers.push_back(norm_relu(out_ch));
        ch = out_ch;
        cur.c = out_ch;
    }
    LayerSpec gap;
    gap.kind = LayerKind::global_pool;
    d.layers.push_back(gap);
    d.layers.push_back(dense_layer(ch, num_classes, DenseRole::class_head));
    // The confidence branch needs one nonlinear stage: a clip whose motion
    // mixes two classes pools to a blend of their trunk features, and no
    // linear readout separates such blends from the pure features they
    // interpolate.
    d.layers.push_back(dense_layer(ch, 16, DenseRole::conf_hidden, Activation::relu));
    d.layers.push_back(dense_layer(16, 1, DenseRole::confidence_head));
    return d;
}

} // namespace condi
