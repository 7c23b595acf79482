#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "primkit/rng.hpp"
#include "primkit/tensor.hpp"

namespace primkit::nn {

enum class Mode { Train, Eval };

// Named persistent array of a layer: trainable parameter (grad != nullptr)
// or state such as batch-norm running statistics (grad == nullptr).
template <typename Scalar>
struct ArrayRef {
    std::string name;
    Tensor<Scalar>* value = nullptr;
    Tensor<Scalar>* grad = nullptr;

    bool trainable() const { return grad != nullptr; }
};

// Differentiable layer. forward caches whatever backward needs; backward
// accumulates into parameter gradient buffers and returns the gradient with
// respect to the input. Parameter values are only changed by the optimizer.
template <typename Scalar>
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    virtual Tensor<Scalar> forward(const Tensor<Scalar>& x) = 0;
    virtual Tensor<Scalar> backward(const Tensor<Scalar>& gy) = 0;

    virtual void set_mode(Mode m) { mode_ = m; }
    Mode mode() const { return mode_; }

    virtual void init_params(rng::Stream&) {}
    virtual void collect_params(const std::string&, std::vector<ArrayRef<Scalar>>&) {}
    virtual void collect_state(const std::string&, std::vector<ArrayRef<Scalar>>&) {}

    // Make stochastic layers (dropout) deterministic; used by the gradient
    // checker so repeated forwards evaluate the same function.
    virtual void disable_stochastic() {}
    virtual void reseed(uint64_t) {}

    // Composite layers expose their nested layers here.
    virtual void visit_children(const std::function<void(Layer<Scalar>*)>&) {}

protected:
    Mode mode_ = Mode::Train;
};

template <typename Scalar>
inline void glorot_uniform(Tensor<Scalar>& w, Index fan_in, Index fan_out,
                           rng::Stream& rs) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    for (Index i = 0; i < w.numel(); ++i) {
        w[i] = Scalar(rs.uniform(-bound, bound));
    }
}

template <typename Scalar>
class Dense : public Layer<Scalar> {
public:
    Dense(Index in_features, Index out_features)
        : in_(in_features),
          out_(out_features),
          w_({out_features, in_features}),
          b_({out_features}),
          gw_({out_features, in_features}),
          gb_({out_features}) {}

    std::string kind() const override { return "dense"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        if (x.ndim() != 2 || x.dim(1) != in_) {
            throw ShapeError("dense: input " + x.shape_string() +
                             " incompatible with weights " + w_.shape_string());
        }
        x_ = x;
        Tensor<Scalar> y({x.dim(0), out_});
        y.mat().noalias() = x.mat() * w_.mat().transpose();
        y.mat().rowwise() += b_.array().matrix().transpose();
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        gw_.mat().noalias() += gy.mat().transpose() * x_.mat();
        gb_.array() += gy.mat().colwise().sum().transpose().array();
        Tensor<Scalar> gx({gy.dim(0), in_});
        gx.mat().noalias() = gy.mat() * w_.mat();
        return gx;
    }

    void init_params(rng::Stream& rs) override {
        glorot_uniform(w_, in_, out_, rs);
        b_.set_zero();
    }

    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        out.push_back({prefix + ".w", &w_, &gw_});
        out.push_back({prefix + ".b", &b_, &gb_});
    }

    Tensor<Scalar>& weights() { return w_; }
    Tensor<Scalar>& bias() { return b_; }

private:
    Index in_, out_;
    Tensor<Scalar> w_, b_, gw_, gb_;
    Tensor<Scalar> x_;
};

template <typename Scalar>
class Relu : public Layer<Scalar> {
public:
    std::string kind() const override { return "relu"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        mask_.resize(size_t(x.numel()));
        Tensor<Scalar> y(x.shape());
        for (Index i = 0; i < x.numel(); ++i) {
            // subgradient at exactly 0 is 0
            const bool on = x[i] > Scalar(0);
            mask_[size_t(i)] = on;
            y[i] = on ? x[i] : Scalar(0);
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> gx(gy.shape());
        for (Index i = 0; i < gy.numel(); ++i) {
            gx[i] = mask_[size_t(i)] ? gy[i] : Scalar(0);
        }
        return gx;
    }

private:
    std::vector<bool> mask_;
};

// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
// eval mode is the identity.
template <typename Scalar>
class Dropout : public Layer<Scalar> {
public:
    explicit Dropout(double rate, uint64_t seed = 0) : rate_(rate), stream_(seed) {
        if (!(rate >= 0.0 && rate < 1.0)) {
            throw ConfigError("dropout: rate " + std::to_string(rate) +
                              " outside [0, 1)");
        }
    }

    std::string kind() const override { return "dropout"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        if (this->mode_ == Mode::Eval || disabled_ || rate_ == 0.0) {
            active_ = false;
            return x;
        }
        active_ = true;
        const Scalar keep_scale = Scalar(1.0 / (1.0 - rate_));
        mask_.resize(size_t(x.numel()));
        Tensor<Scalar> y(x.shape());
        for (Index i = 0; i < x.numel(); ++i) {
            const Scalar m = stream_.uniform() >= rate_ ? keep_scale : Scalar(0);
            mask_[size_t(i)] = m;
            y[i] = x[i] * m;
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        if (!active_) return gy;
        Tensor<Scalar> gx(gy.shape());
        for (Index i = 0; i < gy.numel(); ++i) {
            gx[i] = gy[i] * mask_[size_t(i)];
        }
        return gx;
    }

    void disable_stochastic() override { disabled_ = true; }
    void reseed(uint64_t seed) override { stream_ = rng::Stream(seed); }

    double rate() const { return rate_; }

private:
    double rate_;
    rng::Stream stream_;
    bool disabled_ = false;
    bool active_ = false;
    std::vector<Scalar> mask_;
};

template <typename Scalar>
class GlobalAvgPool : public Layer<Scalar> {
public:
    std::string kind() const override { return "global_avg_pool"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        if (x.ndim() != 3) {
            throw ShapeError("global_avg_pool: expected BxCxT, got " +
                             x.shape_string());
        }
        B_ = x.dim(0);
        C_ = x.dim(1);
        T_ = x.dim(2);
        Tensor<Scalar> y({B_, C_});
        for (Index b = 0; b < B_; ++b) {
            y.mat().row(b) = x.slice(b).rowwise().mean();
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> gx({B_, C_, T_});
        const Scalar inv = Scalar(1) / Scalar(T_);
        for (Index b = 0; b < B_; ++b) {
            gx.slice(b).colwise() = gy.mat().row(b).transpose() * inv;
        }
        return gx;
    }

private:
    Index B_ = 0, C_ = 0, T_ = 0;
};

// 1-D cross-correlation over BxCxT with zero padding, implemented as
// im2col + GEMM. Default padding keeps "same" length at stride 1.
template <typename Scalar>
class Conv1d : public Layer<Scalar> {
public:
    Conv1d(Index in_channels, Index out_channels, Index kernel, Index stride = 1,
           Index padding = -1, Index dilation = 1, bool bias = true)
        : cin_(in_channels),
          cout_(out_channels),
          k_(kernel),
          stride_(stride),
          dilation_(dilation),
          has_bias_(bias),
          w_({out_channels, in_channels, kernel}),
          gw_({out_channels, in_channels, kernel}),
          b_({bias ? out_channels : 0}),
          gb_({bias ? out_channels : 0}) {
        if (kernel < 1 || stride < 1 || dilation < 1) {
            throw ConfigError("conv1d: kernel/stride/dilation must be >= 1");
        }
        pad_ = padding >= 0 ? padding : dilation * (kernel - 1) / 2;
    }

    std::string kind() const override { return "conv1d"; }

    Index out_length(Index t) const {
        return (t + 2 * pad_ - dilation_ * (k_ - 1) - 1) / stride_ + 1;
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        if (x.ndim() != 3 || x.dim(1) != cin_) {
            throw ShapeError("conv1d: input " + x.shape_string() +
                             " incompatible with kernels " + w_.shape_string());
        }
        B_ = x.dim(0);
        T_ = x.dim(2);
        tout_ = out_length(T_);
        if (tout_ <= 0) {
            throw ShapeError("conv1d: input too short, T=" + std::to_string(T_) +
                             " yields no output positions");
        }
        cols_.assign(size_t(B_), ColMatrix());
        Tensor<Scalar> y({B_, cout_, tout_});
        WMap wmat(w_.data(), cout_, cin_ * k_);
        for (Index b = 0; b < B_; ++b) {
            ColMatrix& col = cols_[size_t(b)];
            im2col(x.slice(b), col);
            y.slice(b).noalias() = wmat * col;
            if (has_bias_) {
                y.slice(b).colwise() += b_.array().matrix();
            }
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> gx({B_, cin_, T_});
        WMap wmat(w_.data(), cout_, cin_ * k_);
        Eigen::Map<typename Tensor<Scalar>::MatrixRM> gwmat(gw_.data(), cout_,
                                                            cin_ * k_);
        ColMatrix gcol(cin_ * k_, tout_);
        for (Index b = 0; b < B_; ++b) {
            gwmat.noalias() += gy.slice(b) * cols_[size_t(b)].transpose();
            if (has_bias_) {
                gb_.array() += gy.slice(b).rowwise().sum().array();
            }
            gcol.noalias() = wmat.transpose() * gy.slice(b);
            col2im(gcol, gx.slice(b));
        }
        return gx;
    }

    void init_params(rng::Stream& rs) override {
        glorot_uniform(w_, cin_ * k_, cout_ * k_, rs);
        b_.set_zero();
    }

    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        out.push_back({prefix + ".w", &w_, &gw_});
        if (has_bias_) out.push_back({prefix + ".b", &b_, &gb_});
    }

    Tensor<Scalar>& kernels() { return w_; }
    Tensor<Scalar>& bias() { return b_; }

private:
    using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using WMap = Eigen::Map<const typename Tensor<Scalar>::MatrixRM>;

    template <typename Src>
    void im2col(const Src& x, ColMatrix& col) const {
        col.setZero(cin_ * k_, tout_);
        for (Index c = 0; c < cin_; ++c) {
            for (Index k = 0; k < k_; ++k) {
                const Index row = c * k_ + k;
                for (Index t = 0; t < tout_; ++t) {
                    const Index src = t * stride_ + k * dilation_ - pad_;
                    if (src >= 0 && src < T_) col(row, t) = x(c, src);
                }
            }
        }
    }

    template <typename Dst>
    void col2im(const ColMatrix& gcol, Dst gx) const {
        for (Index c = 0; c < cin_; ++c) {
            for (Index k = 0; k < k_; ++k) {
                const Index row = c * k_ + k;
                for (Index t = 0; t < tout_; ++t) {
                    const Index src = t * stride_ + k * dilation_ - pad_;
                    if (src >= 0 && src < T_) gx(c, src) += gcol(row, t);
                }
            }
        }
    }

    Index cin_, cout_, k_, stride_, dilation_, pad_ = 0;
    bool has_bias_;
    Tensor<Scalar> w_, gw_, b_, gb_;
    Index B_ = 0, T_ = 0, tout_ = 0;
    std::vector<ColMatrix> cols_;
};

}  // namespace primkit::nn
