#include "sparselab/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace sparselab {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s) : Tensor(std::move(s), 0.0) {}

Tensor::Tensor(Shape s, double fill)
    : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {
    for (auto d : shape) {
        if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim in shape " + shape_str(shape));
    }
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
        throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (grad.empty()) {
        grad.assign(data.size(), 0.0);
    } else {
        std::fill(grad.begin(), grad.end(), 0.0);
    }
}

bool same_shape(const Shape& a, const Shape& b) {
    return a == b;
}

}  // namespace sparselab
