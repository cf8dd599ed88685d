#include <cmath>
#include <vector>

#include <doctest.h>

#include "condi/arch.hpp"
#include "condi/net.hpp"
#include "condi/rng.hpp"

using namespace condi;

namespace {

LayerSpec conv(int in, int out, std::array<int, 3> k, std::array<int, 3> s,
               std::array<int, 3> p, int groups, Activation act) {
    LayerSpec l;
    l.kind = LayerKind::conv3d;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = k;
    l.stride = s;
    l.padding = p;
    l.groups = groups;
    l.activation = act;
    return l;
}

LayerSpec norm(int channels, Activation act) {
    LayerSpec l;
    l.kind = LayerKind::norm;
    l.channels = channels;
    l.activation = act;
    return l;
}

LayerSpec pool(std::array<int, 3> window) {
    LayerSpec l;
    l.kind = LayerKind::avgpool;
    l.window = window;
    return l;
}

LayerSpec gap() {
    LayerSpec l;
    l.kind = LayerKind::global_pool;
    return l;
}

LayerSpec dense(int in, int out, DenseRole role, Activation act = Activation::none) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.in_features = in;
    l.out_features = out;
    l.role = role;
    l.activation = act;
    return l;
}

std::vector<double> random_input(const InputShape& in, Rng& rng) {
    std::vector<double> x(static_cast<std::size_t>(in.channels) * in.frames * in.height *
                          in.width);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

double scalar_loss(const NetworkD& net, const std::vector<double>& input,
                   const std::vector<double>& wclass, double wconf) {
    const NetworkD::Output out = net.forward(input);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.class_logits.size(); ++i) {
        loss += wclass[i] * out.class_logits[i];
    }
    if (out.has_confidence) loss += wconf * out.confidence_logit;
    return loss;
}

// Central finite differences over every parameter of the network.
void gradcheck(ArchDescriptor desc, std::uint64_t seed, double tol = 1e-6) {
    NetworkD net(std::move(desc));
    net.init_params(seed);
    Rng rng(hash_combine(seed, 1));
    const std::vector<double> input = random_input(net.descriptor().input, rng);
    std::vector<double> wclass(static_cast<std::size_t>(net.descriptor().num_classes));
    for (double& w : wclass) w = rng.uniform(-1.0, 1.0);
    const double wconf = rng.uniform(-1.0, 1.0);

    NetworkD::Cache cache;
    const NetworkD::Output out = net.forward(input, cache);
    REQUIRE(out.class_logits.size() == wclass.size());
    NetworkD::Params grads = net.zeros_like();
    net.backward(cache, wclass, wconf, grads);

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t p = 0; p < net.params().size(); ++p) {
        for (std::size_t j = 0; j < net.params()[p].size(); ++j) {
            const double saved = net.params()[p][j];
            net.params()[p][j] = saved + h;
            const double hi = scalar_loss(net, input, wclass, wconf);
            net.params()[p][j] = saved - h;
            const double lo = scalar_loss(net, input, wclass, wconf);
            net.params()[p][j] = saved;
            const double fd = (hi - lo) / (2.0 * h);
            const double got = grads[p][j];
            const double rel =
                std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    CAPTURE(worst);
    CHECK(worst < tol);
}

} // namespace

TEST_SUITE("netgrad") {

TEST_CASE("plain convolution with relu") {
    ArchDescriptor d;
    d.name = "conv_relu";
    d.input = InputShape{2, 3, 5, 5};
    d.num_classes = 2;
    d.layers = {conv(2, 3, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, 1, Activation::relu), gap(),
                dense(3, 2, DenseRole::class_head)};
    gradcheck(d, 100);
}

TEST_CASE("strided padded convolution") {
    ArchDescriptor d;
    d.name = "conv_stride";
    d.input = InputShape{2, 4, 6, 6};
    d.num_classes = 3;
    d.layers = {conv(2, 4, {2, 3, 3}, {1, 2, 2}, {0, 1, 1}, 1, Activation::none), gap(),
                dense(4, 3, DenseRole::class_head)};
    gradcheck(d, 101);
}

TEST_CASE("depthwise then pointwise convolution") {
    ArchDescriptor d;
    d.name = "depthwise";
    d.input = InputShape{4, 3, 5, 5};
    d.num_classes = 2;
    d.layers = {conv(4, 4, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, 4, Activation::relu),
                conv(4, 2, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, Activation::none), gap(),
                dense(2, 2, DenseRole::class_head)};
    gradcheck(d, 102);
}

TEST_CASE("instance norm") {
    ArchDescriptor d;
    d.name = "inorm";
    d.input = InputShape{2, 3, 4, 4};
    d.num_classes = 2;
    d.layers = {conv(2, 3, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, Activation::none),
                norm(3, Activation::relu), gap(), dense(3, 2, DenseRole::class_head)};
    gradcheck(d, 103);
}

TEST_CASE("average pooling") {
    ArchDescriptor d;
    d.name = "pool";
    d.input = InputShape{3, 4, 6, 6};
    d.num_classes = 2;
    d.layers = {pool({2, 2, 2}),
                conv(3, 2, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, Activation::relu), gap(),
                dense(2, 2, DenseRole::class_head)};
    gradcheck(d, 104);
}

TEST_CASE("dense trunk feeding both heads") {
    ArchDescriptor d;
    d.name = "two_heads";
    d.input = InputShape{2, 4, 6, 6};
    d.num_classes = 3;
    d.layers = {conv(2, 4, {2, 3, 3}, {1, 2, 2}, {0, 1, 1}, 1, Activation::none),
                norm(4, Activation::relu), pool({2, 2, 2}), gap(),
                dense(4, 6, DenseRole::trunk, Activation::relu),
                dense(6, 3, DenseRole::class_head), dense(6, 1, DenseRole::confidence_head)};
    gradcheck(d, 105);
}

TEST_CASE("reference student architecture") {
    // Composite net: the max over all parameters of the finite-difference
    // noise floor sits above the single-layer tolerance.
    gradcheck(reference_student(3, InputShape{3, 4, 8, 8}), 106, 1e-4);
}

TEST_CASE("backward accumulates into existing gradients") {
    ArchDescriptor d;
    d.input = InputShape{2, 2, 3, 3};
    d.num_classes = 2;
    d.layers = {gap(), dense(2, 2, DenseRole::class_head)};
    NetworkD net(d);
    net.init_params(7);
    Rng rng(8);
    const std::vector<double> x = random_input(d.input, rng);
    NetworkD::Cache cache;
    net.forward(x, cache);
    NetworkD::Params once = net.zeros_like();
    net.backward(cache, {1.0, -0.5}, 0.0, once);
    NetworkD::Params twice = net.zeros_like();
    net.backward(cache, {1.0, -0.5}, 0.0, twice);
    net.backward(cache, {1.0, -0.5}, 0.0, twice);
    for (std::size_t p = 0; p < once.size(); ++p) {
        for (std::size_t j = 0; j < once[p].size(); ++j) {
            CHECK(twice[p][j] == doctest::Approx(2.0 * once[p][j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward rejects mismatched input volumes") {
    ArchDescriptor d;
    d.input = InputShape{2, 2, 3, 3};
    d.num_classes = 2;
    d.layers = {gap(), dense(2, 2, DenseRole::class_head)};
    NetworkD net(d);
    net.init_params(7);
    CHECK_THROWS_AS(net.forward(std::vector<double>(5, 0.0)), NumericError);
}

} // TEST_SUITE
