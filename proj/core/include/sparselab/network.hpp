#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/layers.hpp"
#include "sparselab/masks.hpp"
#include "sparselab/rng.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

// Activations saved by forward for the matching backward call.
// acts[0] is the input batch, acts[i + 1] the output of layer i.
struct ForwardCache {
    std::vector<Tensor> acts;
};

struct Network {
    Shape input_shape;  // per sample, e.g. {784} or {1, 28, 28}
    std::vector<LayerSpec> layers;
    std::vector<int> param_of_layer;   // index into params, -1 for parameterless layers
    std::vector<MaskedParam> params;   // weights, maskable
    std::vector<Tensor> biases;        // parallel to params, never masked
    std::vector<Shape> sample_shapes;  // per-sample activation shapes, layers.size() + 1 entries

    static Network build(std::vector<LayerSpec> layer_specs, Shape input);

    // Kaiming fan-in normal weights, zero biases. Draws densely in layer
    // order so the same seed gives the same values at any sparsity.
    void init_params(Rng& rng);

    std::int64_t param_count() const;
    std::int64_t param_nnz() const;
    double global_sparsity() const;

    std::vector<MaskedParam*> prunable_params();
    std::vector<LayerShapeInfo> prunable_infos() const;

    void zero_grad();
    void zero_weights_at_masked();

    // x is [batch, *input_shape]. Pass a cache to enable backward.
    Tensor forward(const Tensor& x, ForwardCache* cache = nullptr) const;

    // dout matches the forward output shape; accumulates into weight and
    // bias grad buffers. Grads stay dense: masked positions keep theirs so
    // regeneration can rank them.
    void backward(const ForwardCache& cache, const Tensor& dout);

    std::vector<std::int64_t> predict(const Tensor& x) const;

    std::string describe() const;
};

// Mean softmax cross-entropy over the batch. Writes d(loss)/d(logits)
// into logits.grad. Throws if a logit is non-finite, naming the batch row.
double softmax_cross_entropy(Tensor& logits, const std::vector<std::int64_t>& labels);

// Row-wise argmax, ties resolved to the lowest index.
std::vector<std::int64_t> argmax_rows(const Tensor& logits);

}  // namespace sparselab
