#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "condi/arch.hpp"
#include "condi/nets.hpp"

using namespace condi;
namespace fs = std::filesystem;

namespace {

// Independent FLOP counter: literal loop nests over every output element
// and kernel tap, two ops per multiply-accumulate.
std::uint64_t brute_force_flops(const ArchDescriptor& desc) {
    const std::vector<Shape4> shapes = propagate_shapes(desc);
    Shape4 cur{desc.input.channels, desc.input.frames, desc.input.height, desc.input.width};
    Shape4 trunk = cur;
    std::uint64_t flops = 0;
    for (std::size_t i = 0; i < desc.layers.size(); ++i) {
        const LayerSpec& l = desc.layers[i];
        const bool head = l.kind == LayerKind::dense && l.role != DenseRole::trunk;
        const Shape4 src = head ? trunk : cur;
        const Shape4 dst = shapes[i];
        switch (l.kind) {
        case LayerKind::conv3d: {
            for (int oc = 0; oc < dst.c; ++oc) {
                for (int ot = 0; ot < dst.t; ++ot) {
                    for (int oh = 0; oh < dst.h; ++oh) {
                        for (int ow = 0; ow < dst.w; ++ow) {
                            for (int ic = 0; ic < l.in_channels / l.groups; ++ic) {
                                for (int kt = 0; kt < l.kernel[0]; ++kt) {
                                    for (int kh = 0; kh < l.kernel[1]; ++kh) {
                                        for (int kw = 0; kw < l.kernel[2]; ++kw) {
                                            flops += 2;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::norm:
            for (int c = 0; c < src.c; ++c) {
                for (int t = 0; t < src.t; ++t) {
                    for (int h = 0; h < src.h; ++h) {
                        for (int w = 0; w < src.w; ++w) flops += 8;
                    }
                }
                flops += 2;
            }
            break;
        case LayerKind::avgpool:
            for (int c = 0; c < dst.c; ++c) {
                for (int t = 0; t < dst.t; ++t) {
                    for (int h = 0; h < dst.h; ++h) {
                        for (int w = 0; w < dst.w; ++w) {
                            flops += static_cast<std::uint64_t>(l.window[0]) * l.window[1] *
                                     l.window[2];
                        }
                    }
                }
            }
            break;
        case LayerKind::global_pool:
            flops += src.count();
            break;
        case LayerKind::dense:
            for (int o = 0; o < l.out_features; ++o) {
                for (int in = 0; in < l.in_features; ++in) flops += 2;
            }
            break;
        }
        if (!head) {
            cur = dst;
            trunk = cur;
        }
    }
    return flops;
}

std::uint64_t brute_force_params(const ArchDescriptor& desc) {
    std::uint64_t count = 0;
    for (const LayerSpec& l : desc.layers) {
        switch (l.kind) {
        case LayerKind::conv3d:
            count += static_cast<std::uint64_t>(l.out_channels) * (l.in_channels / l.groups) *
                         l.kernel[0] * l.kernel[1] * l.kernel[2] +
                     static_cast<std::uint64_t>(l.out_channels);
            break;
        case LayerKind::norm:
            count += 2u * static_cast<std::uint64_t>(l.channels);
            break;
        case LayerKind::dense:
            count += static_cast<std::uint64_t>(l.in_features) * l.out_features +
                     static_cast<std::uint64_t>(l.out_features);
            break;
        default:
            break;
        }
    }
    return count;
}

} // namespace

TEST_SUITE("nets") {

TEST_CASE("profile matches a brute-force count on the reference nets") {
    const InputShape input{3, 16, 32, 32};
    for (const ArchDescriptor& d : {reference_teacher(6, input), reference_student(6, input),
                                    reference_teacher(4, InputShape{3, 16, 16, 16}),
                                    reference_student(12, InputShape{3, 8, 32, 32})}) {
        const ModelProfile p = profile(d);
        CAPTURE(d.name);
        CHECK(p.flops_per_clip == brute_force_flops(d));
        CHECK(p.param_count == brute_force_params(d));
    }
}

TEST_CASE("parameter sizes line up with the declared specs") {
    const ArchDescriptor d = reference_student(6, InputShape{3, 16, 32, 32});
    NetworkF net(d);
    net.init_params(1);
    const auto specs = net.param_specs();
    REQUIRE(specs.size() == net.params().size());
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        std::size_t n = 1;
        for (std::uint32_t dim : specs[i].second) n *= dim;
        CHECK(n == net.params()[i].size());
        CHECK(!specs[i].first.empty());
        total += n;
    }
    CHECK(total == profile(d).param_count);
}

TEST_CASE("confidence mask covers exactly the confidence head") {
    const ArchDescriptor d = reference_student(6, InputShape{3, 16, 32, 32});
    NetworkF net(d);
    net.init_params(1);
    CHECK(net.has_confidence_head());
    const auto mask = net.confidence_param_mask();
    REQUIRE(mask.size() == net.params().size());
    std::size_t marked = 0;
    for (bool m : mask) marked += m ? 1u : 0u;
    CHECK(marked == 2); // weight and bias of the confidence head

    NetworkF teacher(reference_teacher(6, InputShape{3, 16, 32, 32}));
    CHECK(!teacher.has_confidence_head());
}

TEST_CASE("descriptor JSON round-trips") {
    const ArchDescriptor d = reference_teacher(6, InputShape{3, 16, 32, 32});
    const ArchDescriptor back = descriptor_from_json(to_json(d));
    CHECK(back == d);
}

TEST_CASE("descriptor JSON rejects unknown kinds") {
    nlohmann::json j = to_json(reference_teacher(4, InputShape{3, 8, 16, 16}));
    j["layers"][0]["kind"] = "deconv";
    CHECK_THROWS_AS(descriptor_from_json(j), ConfigError);
}

TEST_CASE("checkpoint rejects a foreign magic") {
    const fs::path dir = fs::temp_directory_path() / "condi_nets_test";
    fs::create_directories(dir);
    const fs::path bogus = dir / "bogus.ckpt";
    {
        std::ofstream out(bogus, std::ios::binary);
        out << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(load_checkpoint(bogus), DataError);
    fs::remove_all(dir);
}

TEST_CASE("load_checkpoint_into restores parameters in place") {
    const fs::path dir = fs::temp_directory_path() / "condi_nets_test2";
    fs::create_directories(dir);
    const ArchDescriptor d = reference_student(4, InputShape{3, 8, 16, 16});
    NetworkF a(d);
    a.init_params(11);
    save_checkpoint(dir / "a.ckpt", a, 11);
    NetworkF b(d);
    b.init_params(99);
    REQUIRE(a.params() != b.params());
    load_checkpoint_into(dir / "a.ckpt", b);
    CHECK(a.params() == b.params());
    fs::remove_all(dir);
}

} // TEST_SUITE
