// Micro-benchmark for the layer kernels: raw GEMM throughput plus full
// forward / forward+backward timings on the reference architectures.
#include <chrono>
#include <cstdio>
#include <vector>

#include <Eigen/Dense>

#include "condi/net.hpp"
#include "condi/nets.hpp"
#include "condi/rng.hpp"

using condi::Rng;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void bench_gemm() {
    using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const int m = 16, k = 81, n = 2048;
    Mat a = Mat::Random(m, k), b = Mat::Random(k, n), c(m, n);
    const int reps = 2000;
    double t0 = now_s();
    for (int r = 0; r < reps; ++r) c.noalias() = a * b;
    double dt = now_s() - t0;
    double flops = 2.0 * m * k * n * reps;
    std::printf("gemm %dx%dx%d: %.2f GFLOP/s (checksum %.3f)\n", m, k, n, flops / dt / 1e9,
                double(c.sum()));
}

void bench_net(const condi::ArchDescriptor& desc, const char* name, int reps) {
    condi::NetworkF net(desc);
    net.init_params(1);
    const condi::ModelProfile prof = condi::profile(desc);
    std::vector<float> clip(std::size_t(desc.input.frames) * desc.input.channels *
                            desc.input.height * desc.input.width);
    Rng rng(7);
    for (float& x : clip) x = float(rng.uniform());

    double t0 = now_s();
    float acc = 0;
    for (int r = 0; r < reps; ++r) acc += net.forward(clip).class_logits[0];
    double fwd = (now_s() - t0) / reps;

    condi::NetworkF::Cache cache;
    auto grads = net.zeros_like();
    std::vector<float> dclass(desc.num_classes, 0.1f);
    t0 = now_s();
    for (int r = 0; r < reps; ++r) {
        auto out = net.forward(clip, cache);
        net.backward(cache, dclass, out.has_confidence ? 0.1f : 0.0f, grads);
    }
    double fb = (now_s() - t0) / reps;

    std::printf("%s: %.3f MF/clip, %llu params | fwd %.3f ms (%.2f GF/s) | fwd+bwd %.3f ms\n",
                name, prof.flops_per_clip / 1e6,
                static_cast<unsigned long long>(prof.param_count), fwd * 1e3,
                prof.flops_per_clip / fwd / 1e9, fb * 1e3);
    std::printf("  (sink %.4f)\n", double(acc));
}

} // namespace

int main() {
    bench_gemm();
    condi::InputShape in{3, 16, 32, 32};
    bench_net(condi::reference_teacher(6, in), "teacher", 50);
    bench_net(condi::reference_student(6, in), "student", 200);
    return 0;
}
