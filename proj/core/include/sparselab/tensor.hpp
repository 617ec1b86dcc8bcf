#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparselab {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major f64 array with an optional gradient buffer of the same
/// shape. The only value carrier in the library.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until ensure_grad()

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, double fill);
    Tensor(Shape s, std::vector<double> values);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool has_grad() const { return !grad.empty(); }

    void ensure_grad();
    void zero_grad();

    double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

bool same_shape(const Shape& a, const Shape& b);

}  // namespace sparselab
