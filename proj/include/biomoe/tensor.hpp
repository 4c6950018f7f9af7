#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace biomoe {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& dims) noexcept;
std::string shape_to_string(const Shape& dims);

/// Cache-line aligned storage. Vectorized reductions split their work by pointer alignment,
/// so a fixed alignment keeps float results identical from run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// Dense row-major float32 array.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape dims, float fill = 0.0f);
    Tensor(Shape dims, std::vector<float> values);

    const Shape& dims() const noexcept { return dims_; }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    float* raw() noexcept { return data_.data(); }
    const float* raw() const noexcept { return data_.data(); }
    std::vector<float> values() const { return {data_.begin(), data_.end()}; }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    float& at(std::initializer_list<std::size_t> index);
    float at(std::initializer_list<std::size_t> index) const;

    /// Same data, new extents; volume must match.
    Tensor reshaped(Shape dims) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    struct Adopt {};
    Tensor(Adopt, Shape dims, FloatBuffer values);
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape dims_;
    FloatBuffer data_;
};

/// Split-storage complex array: identical extents for the real and imaginary planes.
class ComplexTensor {
public:
    ComplexTensor() = default;
    explicit ComplexTensor(Shape dims);
    ComplexTensor(Tensor re, Tensor im);

    const Shape& dims() const noexcept { return re_.dims(); }
    std::size_t dim(std::size_t axis) const { return re_.dim(axis); }
    std::size_t size() const noexcept { return re_.size(); }

    Tensor& re() noexcept { return re_; }
    Tensor& im() noexcept { return im_; }
    const Tensor& re() const noexcept { return re_; }
    const Tensor& im() const noexcept { return im_; }

private:
    Tensor re_;
    Tensor im_;
};

}  // namespace biomoe
