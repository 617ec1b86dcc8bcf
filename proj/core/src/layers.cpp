#include "sparselab/layers.hpp"

#include <sstream>
#include <stdexcept>

namespace sparselab {

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::affine: return "affine";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
        case LayerKind::avgpool2d: return "avgpool2d";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "affine") return LayerKind::affine;
    if (name == "conv2d") return LayerKind::conv2d;
    if (name == "relu") return LayerKind::relu;
    if (name == "flatten") return LayerKind::flatten;
    if (name == "avgpool2d") return LayerKind::avgpool2d;
    throw std::invalid_argument("unknown layer kind: " + name);
}

LayerSpec LayerSpec::affine(std::int64_t in, std::int64_t out) {
    LayerSpec s;
    s.kind = LayerKind::affine;
    s.in_features = in;
    s.out_features = out;
    return s;
}

LayerSpec LayerSpec::conv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kh, std::int64_t kw,
                            std::int64_t stride, std::int64_t padding) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel_h = kh;
    s.kernel_w = kw;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::avgpool2d(std::int64_t kh, std::int64_t kw, std::int64_t stride) {
    LayerSpec s;
    s.kind = LayerKind::avgpool2d;
    s.kernel_h = kh;
    s.kernel_w = kw;
    s.stride = stride;
    return s;
}

std::int64_t LayerSpec::fan_in() const {
    if (kind == LayerKind::affine) return in_features;
    if (kind == LayerKind::conv2d) return in_channels * kernel_h * kernel_w;
    return 0;
}

std::int64_t LayerSpec::fan_out() const {
    if (kind == LayerKind::affine) return out_features;
    if (kind == LayerKind::conv2d) return out_channels * kernel_h * kernel_w;
    return 0;
}

Shape LayerSpec::weight_shape() const {
    if (kind == LayerKind::affine) return {out_features, in_features};
    if (kind == LayerKind::conv2d) return {out_channels, in_channels, kernel_h, kernel_w};
    return {};
}

Shape LayerSpec::bias_shape() const {
    if (kind == LayerKind::affine) return {out_features};
    if (kind == LayerKind::conv2d) return {out_channels};
    return {};
}

void LayerSpec::validate(std::size_t layer_index) const {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("layer " + std::to_string(layer_index) + " (" + layer_kind_name(kind) +
                                    "): " + what);
    };
    switch (kind) {
        case LayerKind::affine:
            if (in_features <= 0 || out_features <= 0) fail("in/out features must be positive");
            break;
        case LayerKind::conv2d:
            if (in_channels <= 0 || out_channels <= 0) fail("channel counts must be positive");
            if (kernel_h <= 0 || kernel_w <= 0) fail("kernel dims must be positive");
            if (stride < 1) fail("stride must be >= 1");
            if (padding < 0) fail("padding must be >= 0");
            break;
        case LayerKind::avgpool2d:
            if (kernel_h <= 0 || kernel_w <= 0) fail("pool window must be positive");
            if (stride < 1) fail("stride must be >= 1");
            break;
        case LayerKind::relu:
        case LayerKind::flatten:
            break;
    }
}

Shape LayerSpec::output_shape(const Shape& input, std::size_t layer_index) const {
    auto fail = [&](const std::string& expected) {
        throw std::invalid_argument("layer " + std::to_string(layer_index) + " (" + layer_kind_name(kind) +
                                    "): expected input " + expected + ", got " + shape_str(input));
    };
    switch (kind) {
        case LayerKind::affine: {
            if (input.size() != 1 || input[0] != in_features) {
                fail("[" + std::to_string(in_features) + "]");
            }
            return {out_features};
        }
        case LayerKind::conv2d: {
            if (input.size() != 3 || input[0] != in_channels) {
                fail("[" + std::to_string(in_channels) + ", H, W]");
            }
            const std::int64_t h = input[1] + 2 * padding - kernel_h;
            const std::int64_t w = input[2] + 2 * padding - kernel_w;
            if (h < 0 || w < 0) fail("spatial dims at least the kernel size");
            return {out_channels, h / stride + 1, w / stride + 1};
        }
        case LayerKind::relu:
            return input;
        case LayerKind::flatten:
            return {shape_numel(input)};
        case LayerKind::avgpool2d: {
            if (input.size() != 3) fail("[C, H, W]");
            const std::int64_t h = input[1] - kernel_h;
            const std::int64_t w = input[2] - kernel_w;
            if (h < 0 || w < 0) fail("spatial dims at least the pool window");
            return {input[0], h / stride + 1, w / stride + 1};
        }
    }
    throw std::logic_error("unreachable");
}

std::string LayerSpec::describe() const {
    std::ostringstream os;
    os << layer_kind_name(kind);
    if (kind == LayerKind::affine) {
        os << "(" << in_features << "->" << out_features << ")";
    } else if (kind == LayerKind::conv2d) {
        os << "(" << in_channels << "->" << out_channels << ", " << kernel_h << "x" << kernel_w
           << ", s=" << stride << ", p=" << padding << ")";
    } else if (kind == LayerKind::avgpool2d) {
        os << "(" << kernel_h << "x" << kernel_w << ", s=" << stride << ")";
    }
    return os.str();
}

std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& layers, const Shape& input) {
    std::vector<Shape> shapes;
    shapes.reserve(layers.size() + 1);
    shapes.push_back(input);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].validate(i);
        shapes.push_back(layers[i].output_shape(shapes.back(), i));
    }
    return shapes;
}

}  // namespace sparselab
