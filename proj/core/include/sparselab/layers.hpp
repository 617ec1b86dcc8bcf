#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/tensor.hpp"

namespace sparselab {

enum class LayerKind { affine, conv2d, relu, flatten, avgpool2d };

std::string layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

/// One layer of the fixed vocabulary. Size fields are meaningful only for
/// the kind that uses them; conv2d and avgpool2d share the kernel/stride
/// fields.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::int64_t in_features = 0;
    std::int64_t out_features = 0;
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kernel_h = 0;
    std::int64_t kernel_w = 0;
    std::int64_t stride = 1;
    std::int64_t padding = 0;

    static LayerSpec affine(std::int64_t in, std::int64_t out);
    static LayerSpec conv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kh, std::int64_t kw,
                            std::int64_t stride = 1, std::int64_t padding = 0);
    static LayerSpec relu();
    static LayerSpec flatten();
    static LayerSpec avgpool2d(std::int64_t kh, std::int64_t kw, std::int64_t stride);

    bool has_params() const { return kind == LayerKind::affine || kind == LayerKind::conv2d; }

    /// Fan-in of the weight (affine: in_features, conv2d: in_ch*kh*kw).
    std::int64_t fan_in() const;
    std::int64_t fan_out() const;

    /// Weight tensor shape: affine [out, in]; conv2d [out_ch, in_ch, kh, kw].
    Shape weight_shape() const;
    Shape bias_shape() const;

    /// Validates the spec's own fields; throws on bad dims.
    void validate(std::size_t layer_index) const;

    /// Output shape for a single sample (no batch dim); throws on mismatch,
    /// naming the layer index and the offending shapes.
    Shape output_shape(const Shape& input, std::size_t layer_index) const;

    std::string describe() const;
};

/// Per-sample shapes along a layer stack; index i is the input of layer i,
/// back() is the final output. Throws if consecutive layers do not fit.
std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& layers, const Shape& input);

}  // namespace sparselab
