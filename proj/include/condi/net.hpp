#ifndef CONDI_NET_HPP
#define CONDI_NET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "condi/arch.hpp"
#include "condi/common.hpp"
#include "condi/rng.hpp"

namespace condi {

// Feed-forward 3D conv net built from an ArchDescriptor. Templated on the
// scalar so gradient checks can run in double; production code uses float.
// Forward input is a clip volume in (frames, channels, h, w) order, values
// in [0, 1]; internally activations are kept channel-major (c, t, h, w).
template <typename T>
class Network {
public:
    using Params = std::vector<std::vector<T>>;
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    struct Output {
        std::vector<T> class_logits;
        T confidence_logit = T(0);
        bool has_confidence = false;
    };

    struct Cache {
        std::vector<T> input; // (c,t,h,w)
        std::vector<std::vector<T>> acts;
        std::vector<std::vector<T>> cols; // conv layers: im2col buffers, all groups
        std::vector<std::vector<T>> xhat; // norm layers: normalized values pre affine
        std::vector<std::vector<T>> inv;  // norm layers: 1/sqrt(var+eps) per channel
    };

    explicit Network(ArchDescriptor desc)
        : desc_(std::move(desc)), shapes_(propagate_shapes(desc_)) {
        build_param_layout();
    }

    const ArchDescriptor& descriptor() const { return desc_; }
    const std::vector<Shape4>& shapes() const { return shapes_; }
    Params& params() { return params_; }
    const Params& params() const { return params_; }

    bool has_confidence_head() const {
        for (const LayerSpec& l : desc_.layers) {
            if (l.kind == LayerKind::dense && l.role == DenseRole::confidence_head) return true;
        }
        return false;
    }

    // He-style init, deterministic in the seed. Norm scale starts at one,
    // all biases at zero.
    void init_params(std::uint64_t seed) {
        Rng rng(seed);
        for (std::size_t i = 0; i < desc_.layers.size(); ++i) {
            const LayerSpec& l = desc_.layers[i];
            int base = param_index_[i];
            if (base < 0) continue;
            switch (l.kind) {
            case LayerKind::conv3d: {
                int kvol = l.kernel[0] * l.kernel[1] * l.kernel[2];
                double std_dev = std::sqrt(2.0 / (double(l.in_channels / l.groups) * kvol));
                for (T& w : params_[base]) w = T(rng.normal() * std_dev);
                std::fill(params_[base + 1].begin(), params_[base + 1].end(), T(0));
                break;
            }
            case LayerKind::norm:
                std::fill(params_[base].begin(), params_[base].end(), T(1));
                std::fill(params_[base + 1].begin(), params_[base + 1].end(), T(0));
                break;
            case LayerKind::dense: {
                double std_dev = std::sqrt(2.0 / double(l.in_features));
                for (T& w : params_[base]) w = T(rng.normal() * std_dev);
                std::fill(params_[base + 1].begin(), params_[base + 1].end(), T(0));
                break;
            }
            default:
                break;
            }
        }
    }

    Output forward(const std::vector<T>& clip_tchw) const {
        Cache scratch;
        return forward(clip_tchw, scratch);
    }

    Output forward(const std::vector<T>& clip_tchw, Cache& cache) const {
        const Shape4 in{desc_.input.channels, desc_.input.frames, desc_.input.height,
                        desc_.input.width};
        if (clip_tchw.size() != in.count()) {
            throw NumericError("clip volume does not match network input shape");
        }
        cache.acts.assign(desc_.layers.size(), {});
        cache.cols.assign(desc_.layers.size(), {});
        cache.xhat.assign(desc_.layers.size(), {});
        cache.inv.assign(desc_.layers.size(), {});

        // (t,c,h,w) -> (c,t,h,w)
        cache.input.resize(in.count());
        const std::size_t plane = std::size_t(in.h) * in.w;
        for (int t = 0; t < in.t; ++t) {
            for (int c = 0; c < in.c; ++c) {
                const T* src = clip_tchw.data() + (std::size_t(t) * in.c + c) * plane;
                T* dst = cache.input.data() + (std::size_t(c) * in.t + t) * plane;
                std::copy(src, src + plane, dst);
            }
        }

        Output out;
        const std::vector<T>* cur = &cache.input;
        Shape4 cur_shape = in;
        const std::vector<T>* trunk = cur;
        Shape4 trunk_shape = cur_shape;
        const std::vector<T>* conf_in = nullptr; // conf_hidden output, if any
        for (std::size_t i = 0; i < desc_.layers.size(); ++i) {
            const LayerSpec& l = desc_.layers[i];
            const bool head = l.kind == LayerKind::dense && l.role != DenseRole::trunk;
            const bool via_hidden = l.role == DenseRole::confidence_head && conf_in;
            const std::vector<T>& src = head ? (via_hidden ? *conf_in : *trunk) : *cur;
            const Shape4 src_shape = head ? trunk_shape : cur_shape;
            std::vector<T>& dst = cache.acts[i];
            switch (l.kind) {
            case LayerKind::conv3d:
                conv_forward(i, l, src, src_shape, dst, cache.cols[i]);
                break;
            case LayerKind::norm:
                norm_forward(i, l, src, src_shape, dst, cache.xhat[i], cache.inv[i]);
                break;
            case LayerKind::avgpool:
                pool_forward(l, src, src_shape, dst);
                break;
            case LayerKind::global_pool:
                gap_forward(src, src_shape, dst);
                break;
            case LayerKind::dense:
                dense_forward(i, l, src, dst);
                break;
            }
            if (head) {
                if (l.role == DenseRole::class_head) {
                    out.class_logits = dst;
                } else if (l.role == DenseRole::conf_hidden) {
                    conf_in = &dst;
                } else {
                    out.confidence_logit = dst[0];
                    out.has_confidence = true;
                }
                continue;
            }
            cur = &dst;
            cur_shape = shapes_[i];
            trunk = cur;
            trunk_shape = cur_shape;
        }
        return out;
    }

    // Accumulates parameter gradients into grads (shaped like params()).
    // dclass is dL/d class logits; dconf is dL/d confidence logit and is
    // ignored when the net has no confidence head.
    void backward(const Cache& cache, const std::vector<T>& dclass, T dconf,
                  Params& grads) const {
        if (grads.size() != params_.size()) {
            throw NumericError("gradient buffer does not match parameter layout");
        }
        // Locate trunk end: first head layer index, or layers.size().
        std::size_t trunk_end = desc_.layers.size();
        for (std::size_t i = 0; i < desc_.layers.size(); ++i) {
            const LayerSpec& l = desc_.layers[i];
            if (l.kind == LayerKind::dense && l.role != DenseRole::trunk) {
                trunk_end = i;
                break;
            }
        }
        const std::vector<T>& trunk_act =
            trunk_end == 0 ? cache.input : cache.acts[trunk_end - 1];
        std::vector<T> d_trunk(trunk_act.size(), T(0));

        std::size_t hidden_i = desc_.layers.size();
        for (std::size_t i = trunk_end; i < desc_.layers.size(); ++i) {
            if (desc_.layers[i].role == DenseRole::conf_hidden) hidden_i = i;
        }
        for (std::size_t i = trunk_end; i < desc_.layers.size(); ++i) {
            const LayerSpec& l = desc_.layers[i];
            if (l.role == DenseRole::class_head) {
                if (dclass.size() != std::size_t(l.out_features)) {
                    throw NumericError("class gradient size does not match head width");
                }
                dense_backward(i, l, trunk_act, cache.acts[i], dclass, grads, d_trunk);
            } else if (l.role == DenseRole::confidence_head) {
                if (hidden_i < desc_.layers.size()) {
                    const LayerSpec& h = desc_.layers[hidden_i];
                    std::vector<T> d_hidden(h.out_features, T(0));
                    dense_backward(i, l, cache.acts[hidden_i], cache.acts[i], {dconf},
                                   grads, d_hidden);
                    dense_backward(hidden_i, h, trunk_act, cache.acts[hidden_i], d_hidden,
                                   grads, d_trunk);
                } else {
                    dense_backward(i, l, trunk_act, cache.acts[i], {dconf}, grads, d_trunk);
                }
            }
        }

        std::vector<T> d_cur = std::move(d_trunk);
        for (std::size_t ri = trunk_end; ri-- > 0;) {
            const LayerSpec& l = desc_.layers[ri];
            const std::vector<T>& src = ri == 0 ? cache.input : cache.acts[ri - 1];
            const Shape4 src_shape = ri == 0
                ? Shape4{desc_.input.channels, desc_.input.frames, desc_.input.height,
                         desc_.input.width}
                : shapes_[ri - 1];
            std::vector<T> d_src(src.size(), T(0));
            switch (l.kind) {
            case LayerKind::conv3d:
                conv_backward(ri, l, src_shape, cache, d_cur, grads, d_src);
                break;
            case LayerKind::norm:
                norm_backward(ri, l, src_shape, cache, d_cur, grads, d_src);
                break;
            case LayerKind::avgpool:
                pool_backward(l, src_shape, shapes_[ri], d_cur, d_src);
                break;
            case LayerKind::global_pool:
                gap_backward(src_shape, d_cur, d_src);
                break;
            case LayerKind::dense:
                dense_backward_trunk(ri, l, src, cache.acts[ri], d_cur, grads, d_src);
                break;
            }
            d_cur = std::move(d_src);
        }
    }

    Params zeros_like() const {
        Params g(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) g[i].assign(params_[i].size(), T(0));
        return g;
    }

    // Stable names and shapes for checkpointing, aligned with params().
    std::vector<std::pair<std::string, std::vector<std::uint32_t>>> param_specs() const {
        std::vector<std::pair<std::string, std::vector<std::uint32_t>>> out;
        for (std::size_t i = 0; i < desc_.layers.size(); ++i) {
            const LayerSpec& l = desc_.layers[i];
            if (param_index_[i] < 0) continue;
            std::string base = "layer" + std::to_string(i);
            switch (l.kind) {
            case LayerKind::conv3d:
                out.push_back({base + ".weight",
                               {std::uint32_t(l.out_channels), std::uint32_t(l.in_channels / l.groups),
                                std::uint32_t(l.kernel[0]), std::uint32_t(l.kernel[1]),
                                std::uint32_t(l.kernel[2])}});
                out.push_back({base + ".bias", {std::uint32_t(l.out_channels)}});
                break;
            case LayerKind::norm:
                out.push_back({base + ".scale", {std::uint32_t(l.channels)}});
                out.push_back({base + ".shift", {std::uint32_t(l.channels)}});
                break;
            case LayerKind::dense:
                out.push_back({base + ".weight",
                               {std::uint32_t(l.out_features), std::uint32_t(l.in_features)}});
                out.push_back({base + ".bias", {std::uint32_t(l.out_features)}});
                break;
            default:
                break;
            }
        }
        return out;
    }

    // True for parameter tensors belonging to the confidence branch.
    std::vector<bool> confidence_param_mask() const {
        std::vector<bool> mask(params_.size(), false);
        for (std::size_t i = 0; i < desc_.layers.size(); ++i) {
            const LayerSpec& l = desc_.layers[i];
            if (param_index_[i] < 0) continue;
            if (l.kind == LayerKind::dense &&
                (l.role == DenseRole::confidence_head || l.role == DenseRole::conf_hidden)) {
                mask[param_index_[i]] = true;
                mask[param_index_[i] + 1] = true;
            }
        }
        return mask;
    }

private:
    static constexpr double kNormEps = 1e-5;

    ArchDescriptor desc_;
    std::vector<Shape4> shapes_;
    std::vector<int> param_index_; // per layer: first tensor index or -1
    Params params_;

    void build_param_layout() {
        param_index_.assign(desc_.layers.size(), -1);
        for (std::size_t i = 0; i < desc_.layers.size(); ++i) {
            const LayerSpec& l = desc_.layers[i];
            switch (l.kind) {
            case LayerKind::conv3d: {
                param_index_[i] = int(params_.size());
                int kvol = l.kernel[0] * l.kernel[1] * l.kernel[2];
                params_.emplace_back(
                    std::size_t(l.out_channels) * (l.in_channels / l.groups) * kvol);
                params_.emplace_back(l.out_channels);
                break;
            }
            case LayerKind::norm:
                param_index_[i] = int(params_.size());
                params_.emplace_back(l.channels);
                params_.emplace_back(l.channels);
                break;
            case LayerKind::dense:
                param_index_[i] = int(params_.size());
                params_.emplace_back(std::size_t(l.out_features) * l.in_features);
                params_.emplace_back(l.out_features);
                break;
            default:
                break;
            }
        }
    }

    static void relu_inplace(std::vector<T>& v) {
        for (T& x : v) x = x > T(0) ? x : T(0);
    }

    // Expands one group's receptive fields into a K x P column matrix,
    // K = (in_ch/groups) * kvol, P = output positions.
    static void im2col(const T* in, const Shape4& is, const LayerSpec& l, const Shape4& os,
                       int group, T* col) {
        const int cpg = l.in_channels / l.groups;
        const int c0 = group * cpg;
        const std::size_t P = std::size_t(os.t) * os.h * os.w;
        const std::size_t in_plane = std::size_t(is.h) * is.w;
        std::size_t row = 0;
        for (int ci = 0; ci < cpg; ++ci) {
            const T* chan = in + std::size_t(c0 + ci) * is.t * in_plane;
            for (int kt = 0; kt < l.kernel[0]; ++kt)
                for (int kh = 0; kh < l.kernel[1]; ++kh)
                    for (int kw = 0; kw < l.kernel[2]; ++kw) {
                        T* dst = col + row * P;
                        std::size_t p = 0;
                        for (int ot = 0; ot < os.t; ++ot) {
                            const int it = ot * l.stride[0] - l.padding[0] + kt;
                            const bool t_ok = it >= 0 && it < is.t;
                            for (int oh = 0; oh < os.h; ++oh) {
                                const int ih = oh * l.stride[1] - l.padding[1] + kh;
                                const bool h_ok = ih >= 0 && ih < is.h;
                                for (int ow = 0; ow < os.w; ++ow, ++p) {
                                    const int iw = ow * l.stride[2] - l.padding[2] + kw;
                                    dst[p] = (t_ok && h_ok && iw >= 0 && iw < is.w)
                                        ? chan[std::size_t(it) * in_plane + std::size_t(ih) * is.w + iw]
                                        : T(0);
                                }
                            }
                        }
                        ++row;
                    }
        }
    }

    static void col2im(const T* col, const Shape4& is, const LayerSpec& l, const Shape4& os,
                       int group, T* din) {
        const int cpg = l.in_channels / l.groups;
        const int c0 = group * cpg;
        const std::size_t P = std::size_t(os.t) * os.h * os.w;
        const std::size_t in_plane = std::size_t(is.h) * is.w;
        std::size_t row = 0;
        for (int ci = 0; ci < cpg; ++ci) {
            T* chan = din + std::size_t(c0 + ci) * is.t * in_plane;
            for (int kt = 0; kt < l.kernel[0]; ++kt)
                for (int kh = 0; kh < l.kernel[1]; ++kh)
                    for (int kw = 0; kw < l.kernel[2]; ++kw) {
                        const T* src = col + row * P;
                        std::size_t p = 0;
                        for (int ot = 0; ot < os.t; ++ot) {
                            const int it = ot * l.stride[0] - l.padding[0] + kt;
                            const bool t_ok = it >= 0 && it < is.t;
                            for (int oh = 0; oh < os.h; ++oh) {
                                const int ih = oh * l.stride[1] - l.padding[1] + kh;
                                const bool h_ok = ih >= 0 && ih < is.h;
                                for (int ow = 0; ow < os.w; ++ow, ++p) {
                                    const int iw = ow * l.stride[2] - l.padding[2] + kw;
                                    if (t_ok && h_ok && iw >= 0 && iw < is.w) {
                                        chan[std::size_t(it) * in_plane + std::size_t(ih) * is.w + iw] +=
                                            src[p];
                                    }
                                }
                            }
                        }
                        ++row;
                    }
        }
    }

    void conv_forward(std::size_t li, const LayerSpec& l, const std::vector<T>& src,
                      const Shape4& is, std::vector<T>& dst, std::vector<T>& col) const {
        const Shape4& os = shapes_[li];
        const int kvol = l.kernel[0] * l.kernel[1] * l.kernel[2];
        const std::size_t K = std::size_t(l.in_channels / l.groups) * kvol;
        const std::size_t P = std::size_t(os.t) * os.h * os.w;
        const int opg = l.out_channels / l.groups;
        dst.resize(std::size_t(l.out_channels) * P);
        col.resize(std::size_t(l.groups) * K * P);
        const std::vector<T>& W = params_[param_index_[li]];
        const std::vector<T>& b = params_[param_index_[li] + 1];
        for (int g = 0; g < l.groups; ++g) {
            T* gcol = col.data() + std::size_t(g) * K * P;
            im2col(src.data(), is, l, os, g, gcol);
            Eigen::Map<const Mat> wm(W.data() + std::size_t(g) * opg * K, opg, K);
            Eigen::Map<const Mat> cm(gcol, K, P);
            Eigen::Map<Mat> om(dst.data() + std::size_t(g) * opg * P, opg, P);
            om.noalias() = wm * cm;
        }
        for (int o = 0; o < l.out_channels; ++o) {
            T* row = dst.data() + std::size_t(o) * P;
            const T bias = b[o];
            for (std::size_t p = 0; p < P; ++p) row[p] += bias;
        }
        if (l.activation == Activation::relu) relu_inplace(dst);
    }

    void conv_backward(std::size_t li, const LayerSpec& l, const Shape4& is, const Cache& cache,
                       std::vector<T>& dy, Params& grads, std::vector<T>& dx) const {
        const Shape4& os = shapes_[li];
        const int kvol = l.kernel[0] * l.kernel[1] * l.kernel[2];
        const std::size_t K = std::size_t(l.in_channels / l.groups) * kvol;
        const std::size_t P = std::size_t(os.t) * os.h * os.w;
        const int opg = l.out_channels / l.groups;
        const std::vector<T>& out = cache.acts[li];
        if (l.activation == Activation::relu) {
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (out[i] <= T(0)) dy[i] = T(0);
        }
        const std::vector<T>& W = params_[param_index_[li]];
        std::vector<T>& dW = grads[param_index_[li]];
        std::vector<T>& db = grads[param_index_[li] + 1];
        for (int o = 0; o < l.out_channels; ++o) {
            const T* row = dy.data() + std::size_t(o) * P;
            T s = T(0);
            for (std::size_t p = 0; p < P; ++p) s += row[p];
            db[o] += s;
        }
        std::vector<T> dcol(K * P);
        for (int g = 0; g < l.groups; ++g) {
            const T* gcol = cache.cols[li].data() + std::size_t(g) * K * P;
            Eigen::Map<const Mat> cm(gcol, K, P);
            Eigen::Map<const Mat> dym(dy.data() + std::size_t(g) * opg * P, opg, P);
            Eigen::Map<Mat> dwm(dW.data() + std::size_t(g) * opg * K, opg, K);
            dwm.noalias() += dym * cm.transpose();
            Eigen::Map<const Mat> wm(W.data() + std::size_t(g) * opg * K, opg, K);
            Eigen::Map<Mat> dcm(dcol.data(), K, P);
            dcm.noalias() = wm.transpose() * dym;
            col2im(dcol.data(), is, l, os, g, dx.data());
        }
    }

    void norm_forward(std::size_t li, const LayerSpec& l, const std::vector<T>& src,
                      const Shape4& is, std::vector<T>& dst, std::vector<T>& xhat,
                      std::vector<T>& inv) const {
        const std::size_t M = std::size_t(is.t) * is.h * is.w;
        dst.resize(src.size());
        xhat.resize(src.size());
        inv.resize(is.c);
        const std::vector<T>& scale = params_[param_index_[li]];
        const std::vector<T>& shift = params_[param_index_[li] + 1];
        for (int c = 0; c < is.c; ++c) {
            const T* x = src.data() + std::size_t(c) * M;
            T m = T(0);
            for (std::size_t i = 0; i < M; ++i) m += x[i];
            m /= T(M);
            T v = T(0);
            for (std::size_t i = 0; i < M; ++i) {
                const T d = x[i] - m;
                v += d * d;
            }
            v /= T(M);
            const T iv = T(1) / std::sqrt(v + T(kNormEps));
            inv[c] = iv;
            T* xh = xhat.data() + std::size_t(c) * M;
            T* y = dst.data() + std::size_t(c) * M;
            for (std::size_t i = 0; i < M; ++i) {
                xh[i] = (x[i] - m) * iv;
                y[i] = scale[c] * xh[i] + shift[c];
            }
        }
        if (l.activation == Activation::relu) relu_inplace(dst);
    }

    void norm_backward(std::size_t li, const LayerSpec& l, const Shape4& is, const Cache& cache,
                       std::vector<T>& dy, Params& grads, std::vector<T>& dx) const {
        const std::size_t M = std::size_t(is.t) * is.h * is.w;
        const std::vector<T>& out = cache.acts[li];
        if (l.activation == Activation::relu) {
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (out[i] <= T(0)) dy[i] = T(0);
        }
        const std::vector<T>& scale = params_[param_index_[li]];
        std::vector<T>& dscale = grads[param_index_[li]];
        std::vector<T>& dshift = grads[param_index_[li] + 1];
        for (int c = 0; c < is.c; ++c) {
            const T* xh = cache.xhat[li].data() + std::size_t(c) * M;
            const T* dyc = dy.data() + std::size_t(c) * M;
            T sum_dy = T(0), sum_dy_xh = T(0);
            for (std::size_t i = 0; i < M; ++i) {
                sum_dy += dyc[i];
                sum_dy_xh += dyc[i] * xh[i];
            }
            dscale[c] += sum_dy_xh;
            dshift[c] += sum_dy;
            const T k = scale[c] * cache.inv[li][c];
            T* dxc = dx.data() + std::size_t(c) * M;
            for (std::size_t i = 0; i < M; ++i) {
                dxc[i] = k * (dyc[i] - sum_dy / T(M) - xh[i] * sum_dy_xh / T(M));
            }
        }
    }

    static void pool_forward(const LayerSpec& l, const std::vector<T>& src, const Shape4& is,
                             std::vector<T>& dst) {
        const Shape4 os{is.c, is.t / l.window[0], is.h / l.window[1], is.w / l.window[2]};
        dst.assign(os.count(), T(0));
        const T scale = T(1) / T(l.window[0] * l.window[1] * l.window[2]);
        const std::size_t in_plane = std::size_t(is.h) * is.w;
        const std::size_t out_plane = std::size_t(os.h) * os.w;
        for (int c = 0; c < is.c; ++c)
            for (int ot = 0; ot < os.t; ++ot)
                for (int oh = 0; oh < os.h; ++oh)
                    for (int ow = 0; ow < os.w; ++ow) {
                        T s = T(0);
                        for (int dt = 0; dt < l.window[0]; ++dt)
                            for (int dh = 0; dh < l.window[1]; ++dh)
                                for (int dw = 0; dw < l.window[2]; ++dw) {
                                    const std::size_t idx =
                                        (std::size_t(c) * is.t + ot * l.window[0] + dt) * in_plane +
                                        std::size_t(oh * l.window[1] + dh) * is.w +
                                        (ow * l.window[2] + dw);
                                    s += src[idx];
                                }
                        dst[(std::size_t(c) * os.t + ot) * out_plane + std::size_t(oh) * os.w + ow] =
                            s * scale;
                    }
    }

    static void pool_backward(const LayerSpec& l, const Shape4& is, const Shape4& os,
                              const std::vector<T>& dy, std::vector<T>& dx) {
        const T scale = T(1) / T(l.window[0] * l.window[1] * l.window[2]);
        const std::size_t in_plane = std::size_t(is.h) * is.w;
        const std::size_t out_plane = std::size_t(os.h) * os.w;
        for (int c = 0; c < is.c; ++c)
            for (int ot = 0; ot < os.t; ++ot)
                for (int oh = 0; oh < os.h; ++oh)
                    for (int ow = 0; ow < os.w; ++ow) {
                        const T g =
                            dy[(std::size_t(c) * os.t + ot) * out_plane + std::size_t(oh) * os.w + ow] *
                            scale;
                        for (int dt = 0; dt < l.window[0]; ++dt)
                            for (int dh = 0; dh < l.window[1]; ++dh)
                                for (int dw = 0; dw < l.window[2]; ++dw) {
                                    const std::size_t idx =
                                        (std::size_t(c) * is.t + ot * l.window[0] + dt) * in_plane +
                                        std::size_t(oh * l.window[1] + dh) * is.w +
                                        (ow * l.window[2] + dw);
                                    dx[idx] += g;
                                }
                    }
    }

    static void gap_forward(const std::vector<T>& src, const Shape4& is, std::vector<T>& dst) {
        const std::size_t M = std::size_t(is.t) * is.h * is.w;
        dst.resize(is.c);
        for (int c = 0; c < is.c; ++c) {
            const T* x = src.data() + std::size_t(c) * M;
            T s = T(0);
            for (std::size_t i = 0; i < M; ++i) s += x[i];
            dst[c] = s / T(M);
        }
    }

    static void gap_backward(const Shape4& is, const std::vector<T>& dy, std::vector<T>& dx) {
        const std::size_t M = std::size_t(is.t) * is.h * is.w;
        for (int c = 0; c < is.c; ++c) {
            const T g = dy[c] / T(M);
            T* d = dx.data() + std::size_t(c) * M;
            for (std::size_t i = 0; i < M; ++i) d[i] += g;
        }
    }

    void dense_forward(std::size_t li, const LayerSpec& l, const std::vector<T>& src,
                       std::vector<T>& dst) const {
        dst.resize(l.out_features);
        Eigen::Map<const Mat> wm(params_[param_index_[li]].data(), l.out_features, l.in_features);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(src.data(), l.in_features);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(dst.data(), l.out_features);
        yv.noalias() = wm * xv;
        const std::vector<T>& b = params_[param_index_[li] + 1];
        for (int o = 0; o < l.out_features; ++o) dst[o] += b[o];
        if (l.activation == Activation::relu) relu_inplace(dst);
    }

    void dense_backward(std::size_t li, const LayerSpec& l, const std::vector<T>& x,
                        const std::vector<T>& y, const std::vector<T>& dy_in, Params& grads,
                        std::vector<T>& dx) const {
        std::vector<T> dy = dy_in;
        if (l.activation == Activation::relu) {
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (y[i] <= T(0)) dy[i] = T(0);
        }
        std::vector<T>& dW = grads[param_index_[li]];
        std::vector<T>& db = grads[param_index_[li] + 1];
        const std::vector<T>& W = params_[param_index_[li]];
        for (int o = 0; o < l.out_features; ++o) {
            db[o] += dy[o];
            T* dw_row = dW.data() + std::size_t(o) * l.in_features;
            const T* w_row = W.data() + std::size_t(o) * l.in_features;
            const T g = dy[o];
            for (int i = 0; i < l.in_features; ++i) {
                dw_row[i] += g * x[i];
                dx[i] += g * w_row[i];
            }
        }
    }

    void dense_backward_trunk(std::size_t li, const LayerSpec& l, const std::vector<T>& x,
                              const std::vector<T>& y, const std::vector<T>& dy, Params& grads,
                              std::vector<T>& dx) const {
        dense_backward(li, l, x, y, dy, grads, dx);
    }
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

} // namespace condi

#endif
