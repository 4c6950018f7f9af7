#include "biomoe/tensor.hpp"

#include "biomoe/error.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace biomoe {

std::size_t shape_volume(const Shape& dims) noexcept
{
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& dims)
{
    std::string out = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i > 0)
            out += ",";
        out += std::to_string(dims[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape dims, float fill) : dims_(std::move(dims)), data_(shape_volume(dims_), fill)
{
    for (auto d : dims_)
        if (d == 0)
            throw ShapeError("tensor extents must be positive, got " + shape_to_string(dims_));
}

Tensor::Tensor(Shape dims, std::vector<float> values) : Tensor(Adopt{}, std::move(dims), FloatBuffer(values.begin(), values.end()))
{
}

Tensor::Tensor(Adopt, Shape dims, FloatBuffer values) : dims_(std::move(dims)), data_(std::move(values))
{
    for (auto d : dims_)
        if (d == 0)
            throw ShapeError("tensor extents must be positive, got " + shape_to_string(dims_));
    if (data_.size() != shape_volume(dims_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match extents " +
                         shape_to_string(dims_));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const
{
    if (index.size() != dims_.size())
        throw ShapeError("index rank mismatch");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= dims_[axis])
            throw ShapeError("index out of range on axis " + std::to_string(axis));
        off = off * dims_[axis] + i;
        ++axis;
    }
    return off;
}

float& Tensor::at(std::initializer_list<std::size_t> index)
{
    return data_[offset(index)];
}

float Tensor::at(std::initializer_list<std::size_t> index) const
{
    return data_[offset(index)];
}

Tensor Tensor::reshaped(Shape dims) const
{
    if (shape_volume(dims) != data_.size())
        throw ShapeError("cannot reshape " + shape_to_string(dims_) + " to " + shape_to_string(dims));
    return Tensor(Adopt{}, std::move(dims), data_);
}

bool Tensor::all_finite() const noexcept
{
    for (float v : data_)
        if (!std::isfinite(v))
            return false;
    return true;
}

ComplexTensor::ComplexTensor(Shape dims) : re_(dims), im_(dims) {}

ComplexTensor::ComplexTensor(Tensor re, Tensor im) : re_(std::move(re)), im_(std::move(im))
{
    if (re_.dims() != im_.dims())
        throw ShapeError("complex tensor planes differ: " + shape_to_string(re_.dims()) + " vs " +
                         shape_to_string(im_.dims()));
}

}  // namespace biomoe
