#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "primkit/errors.hpp"

namespace primkit {

using Index = Eigen::Index;

inline std::string shape_str(const std::vector<Index>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor over a flat Eigen array. Sequence data is
// batch x channels x time, flat data is batch x features.
template <typename Scalar>
class Tensor {
public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using MatrixRM =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatMap = Eigen::Map<MatrixRM>;
    using ConstMatMap = Eigen::Map<const MatrixRM>;

    Tensor() = default;

    explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
        data_.setZero(numel_of(shape_));
    }

    Tensor(std::vector<Index> shape, std::vector<Scalar> values)
        : shape_(std::move(shape)) {
        if (Index(values.size()) != numel_of(shape_)) {
            throw ShapeError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape_));
        }
        data_ = Eigen::Map<const Storage>(values.data(), Index(values.size()));
    }

    static Tensor zeros(std::vector<Index> shape) {
        return Tensor(std::move(shape));
    }

    static Tensor full(std::vector<Index> shape, Scalar v) {
        Tensor t(std::move(shape));
        t.data_.setConstant(v);
        return t;
    }

    const std::vector<Index>& shape() const { return shape_; }
    Index ndim() const { return Index(shape_.size()); }
    Index dim(Index i) const { return shape_[size_t(i)]; }
    Index numel() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    Storage& array() { return data_; }
    const Storage& array() const { return data_; }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    Scalar& operator()(Index i, Index j) { return data_[i * dim(1) + j]; }
    Scalar operator()(Index i, Index j) const { return data_[i * dim(1) + j]; }

    Scalar& operator()(Index b, Index c, Index t) {
        return data_[(b * dim(1) + c) * dim(2) + t];
    }
    Scalar operator()(Index b, Index c, Index t) const {
        return data_[(b * dim(1) + c) * dim(2) + t];
    }

    // 2-D matrix view
    MatMap mat() {
        require_ndim(2);
        return MatMap(data_.data(), dim(0), dim(1));
    }
    ConstMatMap mat() const {
        require_ndim(2);
        return ConstMatMap(data_.data(), dim(0), dim(1));
    }

    // channels x time view of one batch item of a 3-D tensor
    MatMap slice(Index b) {
        require_ndim(3);
        return MatMap(data_.data() + b * dim(1) * dim(2), dim(1), dim(2));
    }
    ConstMatMap slice(Index b) const {
        require_ndim(3);
        return ConstMatMap(data_.data() + b * dim(1) * dim(2), dim(1), dim(2));
    }

    bool all_finite() const { return data_.allFinite(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_string() const { return shape_str(shape_); }

    void set_zero() { data_.setZero(); }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_);
        out.array() = data_.template cast<Other>();
        return out;
    }

private:
    static Index numel_of(const std::vector<Index>& shape) {
        Index n = 1;
        for (Index d : shape) {
            if (d < 0) throw ShapeError("tensor: negative dimension in " + shape_str(shape));
            n *= d;
        }
        return n;
    }

    void require_ndim(Index n) const {
        if (ndim() != n) {
            throw ShapeError("tensor: expected " + std::to_string(n) +
                             "-d tensor, got " + shape_str(shape_));
        }
    }

    std::vector<Index> shape_;
    Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace primkit
