#include "sparselab/network.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sparselab {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

std::int64_t batch_of(const Tensor& x) { return x.shape.empty() ? 0 : x.shape[0]; }

Shape with_batch(std::int64_t b, const Shape& sample) {
    Shape s;
    s.reserve(sample.size() + 1);
    s.push_back(b);
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

// Unpacks one sample's [C, H, W] block into patch columns [C*kh*kw, OH*OW].
void im2col(const double* x, std::int64_t c_in, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t oh, std::int64_t ow,
            double* cols) {
    const auto owh = oh * ow;
    for (std::int64_t c = 0; c < c_in; ++c) {
        for (std::int64_t i = 0; i < kh; ++i) {
            for (std::int64_t j = 0; j < kw; ++j) {
                const auto row = (c * kh + i) * kw + j;
                for (std::int64_t y = 0; y < oh; ++y) {
                    const auto ih = y * stride - pad + i;
                    for (std::int64_t z = 0; z < ow; ++z) {
                        const auto iw = z * stride - pad + j;
                        const bool in = ih >= 0 && ih < h && iw >= 0 && iw < w;
                        cols[row * owh + y * ow + z] = in ? x[(c * h + ih) * w + iw] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatters patch-column gradients back onto one sample's input block.
void col2im(const double* cols, std::int64_t c_in, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t oh, std::int64_t ow,
            double* dx) {
    const auto owh = oh * ow;
    for (std::int64_t c = 0; c < c_in; ++c) {
        for (std::int64_t i = 0; i < kh; ++i) {
            for (std::int64_t j = 0; j < kw; ++j) {
                const auto row = (c * kh + i) * kw + j;
                for (std::int64_t y = 0; y < oh; ++y) {
                    const auto ih = y * stride - pad + i;
                    if (ih < 0 || ih >= h) continue;
                    for (std::int64_t z = 0; z < ow; ++z) {
                        const auto iw = z * stride - pad + j;
                        if (iw < 0 || iw >= w) continue;
                        dx[(c * h + ih) * w + iw] += cols[row * owh + y * ow + z];
                    }
                }
            }
        }
    }
}

}  // namespace

Network Network::build(std::vector<LayerSpec> layer_specs, Shape input) {
    if (layer_specs.empty()) throw std::invalid_argument("network needs at least one layer");
    Network net;
    net.input_shape = std::move(input);
    net.layers = std::move(layer_specs);
    net.sample_shapes = infer_shapes(net.layers, net.input_shape);
    net.param_of_layer.assign(net.layers.size(), -1);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (!l.has_params()) continue;
        net.param_of_layer[i] = static_cast<int>(net.params.size());
        std::ostringstream id;
        id << "layer" << i << "." << layer_kind_name(l.kind);
        net.params.emplace_back(id.str(), Tensor(l.weight_shape()));
        net.biases.emplace_back(l.bias_shape());
    }
    return net;
}

void Network::init_params(Rng& rng) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto pi = param_of_layer[i];
        if (pi < 0) continue;
        auto& p = params[static_cast<std::size_t>(pi)];
        const double sd = std::sqrt(2.0 / static_cast<double>(layers[i].fan_in()));
        for (std::int64_t k = 0; k < p.numel(); ++k) {
            p.weight.at(k) = sd * rng.next_normal();  // drawn for masked slots too
        }
        p.apply_mask();
        auto& b = biases[static_cast<std::size_t>(pi)];
        std::fill(b.data.begin(), b.data.end(), 0.0);
    }
}

std::int64_t Network::param_count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.numel();
    for (const auto& b : biases) n += b.numel();
    return n;
}

std::int64_t Network::param_nnz() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.nnz();
    for (const auto& b : biases) n += b.numel();
    return n;
}

double Network::global_sparsity() const {
    std::int64_t total = 0;
    std::int64_t nnz = 0;
    for (const auto& p : params) {
        if (!p.prunable) continue;
        total += p.numel();
        nnz += p.nnz();
    }
    if (total == 0) return 0.0;
    return 1.0 - static_cast<double>(nnz) / static_cast<double>(total);
}

std::vector<MaskedParam*> Network::prunable_params() {
    std::vector<MaskedParam*> out;
    for (auto& p : params) {
        if (p.prunable) out.push_back(&p);
    }
    return out;
}

std::vector<LayerShapeInfo> Network::prunable_infos() const {
    std::vector<LayerShapeInfo> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto pi = param_of_layer[i];
        if (pi < 0) continue;
        const auto& p = params[static_cast<std::size_t>(pi)];
        if (!p.prunable) continue;
        LayerShapeInfo info;
        info.layer_id = p.layer_id;
        info.numel = p.numel();
        info.fan_in = layers[i].fan_in();
        info.fan_out = layers[i].fan_out();
        if (layers[i].kind == LayerKind::conv2d) info.kernel = layers[i].weight_shape();
        out.push_back(std::move(info));
    }
    return out;
}

void Network::zero_grad() {
    for (auto& p : params) {
        p.weight.ensure_grad();
        std::fill(p.weight.grad.begin(), p.weight.grad.end(), 0.0);
    }
    for (auto& b : biases) {
        b.ensure_grad();
        std::fill(b.grad.begin(), b.grad.end(), 0.0);
    }
}

void Network::zero_weights_at_masked() {
    for (auto& p : params) p.apply_mask();
}

Tensor Network::forward(const Tensor& x, ForwardCache* cache) const {
    const auto b = batch_of(x);
    if (b < 1 || x.shape != with_batch(b, input_shape)) {
        throw std::invalid_argument("forward: input shape " + shape_str(x.shape) +
                                    " does not match [batch, " + shape_str(input_shape) + "]");
    }
    if (cache) {
        cache->acts.clear();
        cache->acts.reserve(layers.size() + 1);
        cache->acts.push_back(x);
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        Tensor next(with_batch(b, sample_shapes[i + 1]));
        switch (l.kind) {
            case LayerKind::affine: {
                const auto& p = params[static_cast<std::size_t>(param_of_layer[i])];
                const auto& bias = biases[static_cast<std::size_t>(param_of_layer[i])];
                MapCM X(cur.data.data(), b, l.in_features);
                MapCM W(p.weight.data.data(), l.out_features, l.in_features);
                MapM Y(next.data.data(), b, l.out_features);
                Y.noalias() = X * W.transpose();
                Eigen::Map<const Eigen::VectorXd> bv(bias.data.data(), l.out_features);
                Y.rowwise() += bv.transpose();
                break;
            }
            case LayerKind::conv2d: {
                const auto& p = params[static_cast<std::size_t>(param_of_layer[i])];
                const auto& bias = biases[static_cast<std::size_t>(param_of_layer[i])];
                const auto& in_s = sample_shapes[i];
                const auto& out_s = sample_shapes[i + 1];
                const auto h = in_s[1], w = in_s[2], oh = out_s[1], ow = out_s[2];
                const auto krows = l.in_channels * l.kernel_h * l.kernel_w;
                std::vector<double> cols(static_cast<std::size_t>(krows * oh * ow));
                MapCM W2(p.weight.data.data(), l.out_channels, krows);
                Eigen::Map<const Eigen::VectorXd> bv(bias.data.data(), l.out_channels);
                const auto in_sz = shape_numel(in_s);
                const auto out_sz = shape_numel(out_s);
                for (std::int64_t s = 0; s < b; ++s) {
                    im2col(cur.data.data() + s * in_sz, l.in_channels, h, w, l.kernel_h, l.kernel_w,
                           l.stride, l.padding, oh, ow, cols.data());
                    MapCM C(cols.data(), krows, oh * ow);
                    MapM Y(next.data.data() + s * out_sz, l.out_channels, oh * ow);
                    Y.noalias() = W2 * C;
                    Y.colwise() += bv;
                }
                break;
            }
            case LayerKind::relu: {
                for (std::size_t k = 0; k < cur.data.size(); ++k) {
                    next.data[k] = cur.data[k] > 0.0 ? cur.data[k] : 0.0;
                }
                break;
            }
            case LayerKind::flatten: {
                next.data = cur.data;  // same memory layout, new shape
                break;
            }
            case LayerKind::avgpool2d: {
                const auto& in_s = sample_shapes[i];
                const auto& out_s = sample_shapes[i + 1];
                const auto c = in_s[0], h = in_s[1], w = in_s[2], oh = out_s[1], ow = out_s[2];
                const double inv = 1.0 / static_cast<double>(l.kernel_h * l.kernel_w);
                const auto in_sz = shape_numel(in_s);
                const auto out_sz = shape_numel(out_s);
                for (std::int64_t s = 0; s < b; ++s) {
                    const double* src = cur.data.data() + s * in_sz;
                    double* dst = next.data.data() + s * out_sz;
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        for (std::int64_t y = 0; y < oh; ++y) {
                            for (std::int64_t z = 0; z < ow; ++z) {
                                double acc = 0.0;
                                for (std::int64_t ki = 0; ki < l.kernel_h; ++ki) {
                                    for (std::int64_t kj = 0; kj < l.kernel_w; ++kj) {
                                        acc += src[(ch * h + y * l.stride + ki) * w + z * l.stride + kj];
                                    }
                                }
                                dst[(ch * oh + y) * ow + z] = acc * inv;
                            }
                        }
                    }
                }
                break;
            }
        }
        if (cache) cache->acts.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

void Network::backward(const ForwardCache& cache, const Tensor& dout) {
    if (cache.acts.size() != layers.size() + 1) {
        throw std::invalid_argument("backward: cache does not match this network");
    }
    if (dout.shape != cache.acts.back().shape) {
        throw std::invalid_argument("backward: dout shape " + shape_str(dout.shape) +
                                    " does not match forward output " +
                                    shape_str(cache.acts.back().shape));
    }
    const auto b = batch_of(dout);
    Tensor dcur = dout;
    for (std::size_t ri = layers.size(); ri-- > 0;) {
        const auto& l = layers[ri];
        const auto& xin = cache.acts[ri];
        Tensor dprev(xin.shape);
        switch (l.kind) {
            case LayerKind::affine: {
                auto& p = params[static_cast<std::size_t>(param_of_layer[ri])];
                auto& bias = biases[static_cast<std::size_t>(param_of_layer[ri])];
                p.weight.ensure_grad();
                bias.ensure_grad();
                MapCM X(xin.data.data(), b, l.in_features);
                MapCM W(p.weight.data.data(), l.out_features, l.in_features);
                MapCM dY(dcur.data.data(), b, l.out_features);
                MapM dX(dprev.data.data(), b, l.in_features);
                MapM dW(p.weight.grad.data(), l.out_features, l.in_features);
                dX.noalias() = dY * W;
                dW.noalias() += dY.transpose() * X;
                // Fixed-order sum: Eigen's vectorized redux peels to the
                // buffer's runtime alignment, which breaks bitwise replay.
                for (std::int64_t r = 0; r < b; ++r) {
                    for (std::int64_t c = 0; c < l.out_features; ++c) {
                        bias.grad[static_cast<std::size_t>(c)] += dcur.data[static_cast<std::size_t>(r * l.out_features + c)];
                    }
                }
                break;
            }
            case LayerKind::conv2d: {
                auto& p = params[static_cast<std::size_t>(param_of_layer[ri])];
                auto& bias = biases[static_cast<std::size_t>(param_of_layer[ri])];
                p.weight.ensure_grad();
                bias.ensure_grad();
                const auto& in_s = sample_shapes[ri];
                const auto& out_s = sample_shapes[ri + 1];
                const auto h = in_s[1], w = in_s[2], oh = out_s[1], ow = out_s[2];
                const auto krows = l.in_channels * l.kernel_h * l.kernel_w;
                std::vector<double> cols(static_cast<std::size_t>(krows * oh * ow));
                std::vector<double> dcols(cols.size());
                MapCM W2(p.weight.data.data(), l.out_channels, krows);
                MapM dW(p.weight.grad.data(), l.out_channels, krows);
                const auto in_sz = shape_numel(in_s);
                const auto out_sz = shape_numel(out_s);
                std::fill(dprev.data.begin(), dprev.data.end(), 0.0);
                for (std::int64_t s = 0; s < b; ++s) {
                    im2col(xin.data.data() + s * in_sz, l.in_channels, h, w, l.kernel_h, l.kernel_w,
                           l.stride, l.padding, oh, ow, cols.data());
                    MapCM C(cols.data(), krows, oh * ow);
                    MapCM dY(dcur.data.data() + s * out_sz, l.out_channels, oh * ow);
                    MapM dC(dcols.data(), krows, oh * ow);
                    dW.noalias() += dY * C.transpose();
                    // Fixed-order sum, see the affine branch.
                    for (std::int64_t ch = 0; ch < l.out_channels; ++ch) {
                        double acc = 0.0;
                        const double* row = dcur.data.data() + s * out_sz + ch * oh * ow;
                        for (std::int64_t k = 0; k < oh * ow; ++k) acc += row[k];
                        bias.grad[static_cast<std::size_t>(ch)] += acc;
                    }
                    dC.noalias() = W2.transpose() * dY;
                    col2im(dcols.data(), l.in_channels, h, w, l.kernel_h, l.kernel_w, l.stride,
                           l.padding, oh, ow, dprev.data.data() + s * in_sz);
                }
                break;
            }
            case LayerKind::relu: {
                for (std::size_t k = 0; k < dcur.data.size(); ++k) {
                    dprev.data[k] = xin.data[k] > 0.0 ? dcur.data[k] : 0.0;
                }
                break;
            }
            case LayerKind::flatten: {
                dprev.data = dcur.data;
                break;
            }
            case LayerKind::avgpool2d: {
                const auto& in_s = sample_shapes[ri];
                const auto& out_s = sample_shapes[ri + 1];
                const auto c = in_s[0], h = in_s[1], w = in_s[2], oh = out_s[1], ow = out_s[2];
                const double inv = 1.0 / static_cast<double>(l.kernel_h * l.kernel_w);
                const auto in_sz = shape_numel(in_s);
                const auto out_sz = shape_numel(out_s);
                std::fill(dprev.data.begin(), dprev.data.end(), 0.0);
                for (std::int64_t s = 0; s < b; ++s) {
                    const double* dy = dcur.data.data() + s * out_sz;
                    double* dx = dprev.data.data() + s * in_sz;
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        for (std::int64_t y = 0; y < oh; ++y) {
                            for (std::int64_t z = 0; z < ow; ++z) {
                                const double g = dy[(ch * oh + y) * ow + z] * inv;
                                for (std::int64_t ki = 0; ki < l.kernel_h; ++ki) {
                                    for (std::int64_t kj = 0; kj < l.kernel_w; ++kj) {
                                        dx[(ch * h + y * l.stride + ki) * w + z * l.stride + kj] += g;
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
        }
        dcur = std::move(dprev);
    }
}

std::vector<std::int64_t> Network::predict(const Tensor& x) const {
    Tensor logits = forward(x);
    return argmax_rows(logits);
}

std::string Network::describe() const {
    std::ostringstream out;
    out << shape_str(input_shape);
    for (const auto& l : layers) out << " -> " << l.describe();
    return out.str();
}

double softmax_cross_entropy(Tensor& logits, const std::vector<std::int64_t>& labels) {
    if (logits.shape.size() != 2) {
        throw std::invalid_argument("softmax_cross_entropy: logits must be [batch, classes], got " +
                                    shape_str(logits.shape));
    }
    const auto b = logits.shape[0];
    const auto k = logits.shape[1];
    if (static_cast<std::int64_t>(labels.size()) != b) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(b));
    }
    logits.ensure_grad();
    const double invb = 1.0 / static_cast<double>(b);
    double loss = 0.0;
    for (std::int64_t r = 0; r < b; ++r) {
        const auto y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= k) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " out of range at batch row " + std::to_string(r));
        }
        const double* row = logits.data.data() + r * k;
        double m = row[0];
        for (std::int64_t c = 0; c < k; ++c) {
            if (!std::isfinite(row[c])) {
                throw std::runtime_error("softmax_cross_entropy: non-finite logit at batch row " +
                                         std::to_string(r));
            }
            m = std::max(m, row[c]);
        }
        double denom = 0.0;
        for (std::int64_t c = 0; c < k; ++c) denom += std::exp(row[c] - m);
        const double lse = m + std::log(denom);
        loss += lse - row[y];
        double* grow = logits.grad.data() + r * k;
        for (std::int64_t c = 0; c < k; ++c) grow[c] = std::exp(row[c] - m) / denom * invb;
        grow[y] -= invb;
    }
    return loss * invb;
}

std::vector<std::int64_t> argmax_rows(const Tensor& logits) {
    if (logits.shape.size() != 2) {
        throw std::invalid_argument("argmax_rows: expected [batch, classes], got " +
                                    shape_str(logits.shape));
    }
    const auto b = logits.shape[0];
    const auto k = logits.shape[1];
    std::vector<std::int64_t> out(static_cast<std::size_t>(b));
    for (std::int64_t r = 0; r < b; ++r) {
        const double* row = logits.data.data() + r * k;
        std::int64_t best = 0;
        for (std::int64_t c = 1; c < k; ++c) {
            if (row[c] > row[best]) best = c;
        }
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

}  // namespace sparselab
