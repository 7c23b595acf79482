#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "primkit/layers.hpp"

namespace primkit::nn {

// Single-layer unidirectional LSTM over BxCxT input, channels as per-step
// features. Weights use the fused-gate layout: one 4Hx(C+H) matrix and a 4H
// bias, gate rows ordered [input; forget; candidate; output]. The layer
// output is the final hidden state (BxH); forward_sequence also exposes the
// full hidden sequence. Backward is backprop-through-time over the window.
template <typename Scalar>
class Lstm : public Layer<Scalar> {
public:
    Lstm(Index in_channels, Index hidden)
        : c_(in_channels),
          h_(hidden),
          w_({4 * hidden, in_channels + hidden}),
          b_({4 * hidden}),
          gw_({4 * hidden, in_channels + hidden}),
          gb_({4 * hidden}) {}

    std::string kind() const override { return "lstm"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        Tensor<Scalar> seq = forward_sequence(x, Tensor<Scalar>(), Tensor<Scalar>());
        Tensor<Scalar> final_h({B_, h_});
        for (Index b = 0; b < B_; ++b) {
            for (Index j = 0; j < h_; ++j) {
                final_h(b, j) = seq(b, j, T_ - 1);
            }
        }
        return final_h;
    }

    // Full recurrence; h0/c0 empty means zeros. Returns hidden states as
    // BxHxT (the final hidden state is the last time slice).
    Tensor<Scalar> forward_sequence(const Tensor<Scalar>& x,
                                    const Tensor<Scalar>& h0,
                                    const Tensor<Scalar>& c0) {
        if (x.ndim() != 3 || x.dim(1) != c_) {
            throw ShapeError("lstm: input " + x.shape_string() +
                             " incompatible with " + std::to_string(c_) +
                             " input channels");
        }
        B_ = x.dim(0);
        T_ = x.dim(2);
        x_ = x;
        check_state_shape(h0, "h0");
        check_state_shape(c0, "c0");

        auto wx = w_.mat().leftCols(c_);
        auto wh = w_.mat().rightCols(h_);
        Eigen::Map<const ColVec> bias(b_.data(), 4 * h_);

        h_prev_0_ = state_or_zero(h0);
        Mat c_prev = state_or_zero(c0);
        c_prev_0_ = c_prev;
        Mat h_prev = h_prev_0_;

        gates_i_.assign(size_t(T_), Mat());
        gates_f_.assign(size_t(T_), Mat());
        gates_g_.assign(size_t(T_), Mat());
        gates_o_.assign(size_t(T_), Mat());
        cells_.assign(size_t(T_), Mat());
        tanh_c_.assign(size_t(T_), Mat());

        Tensor<Scalar> seq({B_, h_, T_});
        Mat z(4 * h_, B_);
        for (Index t = 0; t < T_; ++t) {
            z.noalias() = wx * step_input(x, t);
            z.noalias() += wh * h_prev;
            z.colwise() += bias;
            if (!z.allFinite()) {
                throw NumericError("lstm: non-finite activation at timestep " +
                                   std::to_string(t));
            }
            Mat& gi = gates_i_[size_t(t)];
            Mat& gf = gates_f_[size_t(t)];
            Mat& gg = gates_g_[size_t(t)];
            Mat& go = gates_o_[size_t(t)];
            gi = z.topRows(h_).array().unaryExpr(&sigmoid).matrix();
            gf = z.middleRows(h_, h_).array().unaryExpr(&sigmoid).matrix();
            gg = z.middleRows(2 * h_, h_).array().tanh().matrix();
            go = z.bottomRows(h_).array().unaryExpr(&sigmoid).matrix();

            Mat& c_t = cells_[size_t(t)];
            c_t = (gf.array() * c_prev.array() + gi.array() * gg.array()).matrix();
            Mat& tc = tanh_c_[size_t(t)];
            tc = c_t.array().tanh().matrix();
            h_prev = (go.array() * tc.array()).matrix();
            c_prev = c_t;
            for (Index b = 0; b < B_; ++b) {
                for (Index j = 0; j < h_; ++j) {
                    seq(b, j, t) = h_prev(j, b);
                }
            }
        }
        return seq;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        if (gy.ndim() != 2 || gy.dim(0) != B_ || gy.dim(1) != h_) {
            throw ShapeError("lstm: upstream gradient " + gy.shape_string() +
                             " does not match final hidden state");
        }
        auto wx = w_.mat().leftCols(c_);
        auto wh = w_.mat().rightCols(h_);
        auto gwx = gw_.mat().leftCols(c_);
        auto gwh = gw_.mat().rightCols(h_);

        Tensor<Scalar> gx({B_, c_, T_});
        Mat dh = Mat::Zero(h_, B_);
        for (Index b = 0; b < B_; ++b) {
            for (Index j = 0; j < h_; ++j) {
                dh(j, b) = gy(b, j);
            }
        }
        Mat dc = Mat::Zero(h_, B_);
        Mat dz(4 * h_, B_);
        for (Index t = T_ - 1; t >= 0; --t) {
            const Mat& gi = gates_i_[size_t(t)];
            const Mat& gf = gates_f_[size_t(t)];
            const Mat& gg = gates_g_[size_t(t)];
            const Mat& go = gates_o_[size_t(t)];
            const Mat& tc = tanh_c_[size_t(t)];
            const Mat& c_prev = t > 0 ? cells_[size_t(t) - 1] : c_prev_0_;

            Arr d_o = dh.array() * tc.array();
            dc.array() += dh.array() * go.array() * (1 - tc.array().square());
            Arr d_i = dc.array() * gg.array();
            Arr d_f = dc.array() * c_prev.array();
            Arr d_g = dc.array() * gi.array();

            dz.topRows(h_) = (d_i * gi.array() * (1 - gi.array())).matrix();
            dz.middleRows(h_, h_) = (d_f * gf.array() * (1 - gf.array())).matrix();
            dz.middleRows(2 * h_, h_) = (d_g * (1 - gg.array().square())).matrix();
            dz.bottomRows(h_) = (d_o * go.array() * (1 - go.array())).matrix();

            const Mat& h_prev = t > 0 ? hidden_at(t - 1) : h_prev_0_;
            gwx.noalias() += dz * step_input(x_, t).transpose();
            gwh.noalias() += dz * h_prev.transpose();
            Eigen::Map<ColVec>(gb_.data(), 4 * h_) += dz.rowwise().sum();

            Mat dx_t = wx.transpose() * dz;
            for (Index b = 0; b < B_; ++b) {
                for (Index c = 0; c < c_; ++c) {
                    gx(b, c, t) = dx_t(c, b);
                }
            }
            dh.noalias() = wh.transpose() * dz;
            dc.array() *= gf.array();
        }
        return gx;
    }

    void init_params(rng::Stream& rs) override {
        glorot_uniform(w_, c_ + h_, 4 * h_, rs);
        b_.set_zero();
        // forget-gate bias 1 keeps early gradients flowing
        for (Index j = h_; j < 2 * h_; ++j) b_[j] = Scalar(1);
    }

    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        out.push_back({prefix + ".w", &w_, &gw_});
        out.push_back({prefix + ".b", &b_, &gb_});
    }

    Tensor<Scalar>& weights() { return w_; }
    Tensor<Scalar>& bias() { return b_; }
    Index hidden_size() const { return h_; }

private:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Arr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using ColVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using StepMap =
        Eigen::Map<const Mat, Eigen::Unaligned,
                   Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

    static Scalar sigmoid(Scalar z) {
        return Scalar(1) / (Scalar(1) + std::exp(-z));
    }

    // CxB view of timestep t without copying: element (c, b) of the BxCxT
    // tensor sits at offset b*C*T + c*T + t.
    StepMap step_input(const Tensor<Scalar>& x, Index t) const {
        return StepMap(x.data() + t, c_, B_,
                       Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(c_ * T_, T_));
    }

    Mat hidden_at(Index t) const {
        return (gates_o_[size_t(t)].array() * tanh_c_[size_t(t)].array()).matrix();
    }

    void check_state_shape(const Tensor<Scalar>& s, const char* name) const {
        if (s.numel() != 0 && (s.ndim() != 2 || s.dim(0) != B_ || s.dim(1) != h_)) {
            throw ShapeError(std::string("lstm: ") + name + " shape " +
                             s.shape_string() + " must be BxH");
        }
    }

    Mat state_or_zero(const Tensor<Scalar>& s) const {
        Mat m = Mat::Zero(h_, B_);
        if (s.numel() != 0) {
            for (Index b = 0; b < B_; ++b) {
                for (Index j = 0; j < h_; ++j) {
                    m(j, b) = s(b, j);
                }
            }
        }
        return m;
    }

    Index c_, h_;
    Tensor<Scalar> w_, b_, gw_, gb_;

    Index B_ = 0, T_ = 0;
    Tensor<Scalar> x_;
    Mat h_prev_0_, c_prev_0_;
    std::vector<Mat> gates_i_, gates_f_, gates_g_, gates_o_, cells_, tanh_c_;
};

// Standalone recurrence matching the layer: returns the hidden sequence
// (BxHxT) and the final hidden state (BxH).
template <typename Scalar>
struct LstmForwardResult {
    Tensor<Scalar> hidden_sequence;
    Tensor<Scalar> final_hidden;
};

template <typename Scalar>
LstmForwardResult<Scalar> lstm_forward(const Tensor<Scalar>& x,
                                       const Tensor<Scalar>& weights,
                                       const Tensor<Scalar>& bias,
                                       const Tensor<Scalar>& h0,
                                       const Tensor<Scalar>& c0) {
    if (weights.ndim() != 2 || weights.dim(0) % 4 != 0) {
        throw ShapeError("lstm_forward: weights must be 4Hx(C+H), got " +
                         weights.shape_string());
    }
    const Index hidden = weights.dim(0) / 4;
    const Index channels = weights.dim(1) - hidden;
    Lstm<Scalar> cell(channels, hidden);
    cell.weights() = weights;
    cell.bias() = bias;
    LstmForwardResult<Scalar> out;
    out.hidden_sequence = cell.forward_sequence(x, h0, c0);
    const Index B = out.hidden_sequence.dim(0);
    const Index T = out.hidden_sequence.dim(2);
    out.final_hidden = Tensor<Scalar>({B, hidden});
    for (Index b = 0; b < B; ++b) {
        for (Index j = 0; j < hidden; ++j) {
            out.final_hidden(b, j) = out.hidden_sequence(b, j, T - 1);
        }
    }
    return out;
}

}  // namespace primkit::nn
