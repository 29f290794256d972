#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "triview/errors.hpp"

namespace triview {

using index_t = std::int64_t;

// Dense row-major n-d array, rank 1..4. The last index varies fastest.
// Deliberately minimal: hot loops index through data() directly.
template <class T>
class tensor {
public:
    tensor() = default;

    explicit tensor(std::vector<index_t> shape) : shape_(std::move(shape)) {
        index_t n = 1;
        for (index_t d : shape_) {
            if (d < 0) throw ArgumentError("tensor: negative dimension");
            n *= d;
        }
        stride_.assign(shape_.size(), 1);
        for (int i = static_cast<int>(shape_.size()) - 2; i >= 0; --i)
            stride_[i] = stride_[i + 1] * shape_[i + 1];
        data_.assign(static_cast<std::size_t>(n), T{});
    }

    tensor(std::initializer_list<index_t> shape)
        : tensor(std::vector<index_t>(shape)) {}

    int rank() const { return static_cast<int>(shape_.size()); }
    index_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    index_t stride(int i) const { return stride_[static_cast<std::size_t>(i)]; }
    const std::vector<index_t>& shape() const { return shape_; }
    index_t size() const { return static_cast<index_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator()(index_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator()(index_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& operator()(index_t i, index_t j) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j)];
    }
    const T& operator()(index_t i, index_t j) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j)];
    }

    T& operator()(index_t i, index_t j, index_t k) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k)];
    }
    const T& operator()(index_t i, index_t j, index_t k) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] + k)];
    }

    T& operator()(index_t i, index_t j, index_t k, index_t l) {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] +
                                              k * stride_[2] + l)];
    }
    const T& operator()(index_t i, index_t j, index_t k, index_t l) const {
        return data_[static_cast<std::size_t>(i * stride_[0] + j * stride_[1] +
                                              k * stride_[2] + l)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T{}); }

    bool same_shape(const tensor& other) const { return shape_ == other.shape_; }

    bool operator==(const tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<index_t> shape_;
    std::vector<index_t> stride_;
    std::vector<T> data_;
};

}  // namespace triview
