#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "primkit/layers.hpp"

namespace primkit::nn {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kNormMomentum = 0.1;

// Per-channel standardization with batch statistics at train time and
// accumulated running statistics at eval time. Accepts BxCxT (statistics
// over batch and time) and BxF (statistics over batch). Backward goes
// through the batch statistics exactly.
template <typename Scalar>
class BatchNorm : public Layer<Scalar> {
public:
    explicit BatchNorm(Index channels, double momentum = kNormMomentum,
                       double eps = kNormEpsilon)
        : c_(channels),
          momentum_(momentum),
          eps_(eps),
          gamma_(Tensor<Scalar>::full({channels}, Scalar(1))),
          beta_({channels}),
          ggamma_({channels}),
          gbeta_({channels}),
          run_mean_({channels}),
          run_var_(Tensor<Scalar>::full({channels}, Scalar(1))),
          initialized_({1}) {}

    std::string kind() const override { return "batch_norm"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        check_input(x);
        const bool train = this->mode_ == Mode::Train;
        if (train) {
            if (x.dim(0) < 2) {
                throw ShapeError(
                    "batch_norm: train mode needs batch size >= 2, got " +
                    x.shape_string());
            }
            compute_batch_stats(x);
            for (Index c = 0; c < c_; ++c) {
                run_mean_[c] = Scalar((1.0 - momentum_) * run_mean_[c] +
                                      momentum_ * mean_[c]);
                run_var_[c] =
                    Scalar((1.0 - momentum_) * run_var_[c] + momentum_ * var_[c]);
            }
            initialized_[0] = Scalar(1);
        } else {
            if (initialized_[0] == Scalar(0)) {
                throw ContractError(
                    "batch_norm: eval mode before any train pass and no "
                    "running statistics loaded from checkpoint");
            }
            mean_.assign(size_t(c_), Scalar(0));
            var_.assign(size_t(c_), Scalar(0));
            for (Index c = 0; c < c_; ++c) {
                mean_[size_t(c)] = run_mean_[c];
                var_[size_t(c)] = run_var_[c];
            }
        }
        train_pass_ = train;
        xhat_ = Tensor<Scalar>(x.shape());
        inv_std_.assign(size_t(c_), Scalar(0));
        for (Index c = 0; c < c_; ++c) {
            inv_std_[size_t(c)] =
                Scalar(1.0 / std::sqrt(double(var_[size_t(c)]) + eps_));
        }
        Tensor<Scalar> y(x.shape());
        visit_channel(x, [&](Index c, Index flat) {
            const Scalar xh =
                (x[flat] - mean_[size_t(c)]) * inv_std_[size_t(c)];
            xhat_[flat] = xh;
            y[flat] = gamma_[c] * xh + beta_[c];
        });
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> gx(gy.shape());
        if (!train_pass_) {
            // running statistics are constants in eval mode
            visit_channel(gy, [&](Index c, Index flat) {
                ggamma_[c] += gy[flat] * xhat_[flat];
                gbeta_[c] += gy[flat];
                gx[flat] = gy[flat] * gamma_[c] * inv_std_[size_t(c)];
            });
            return gx;
        }
        const Index n = reduce_count_;
        std::vector<Scalar> sum_gy(size_t(c_), Scalar(0));
        std::vector<Scalar> sum_gy_xhat(size_t(c_), Scalar(0));
        visit_channel(gy, [&](Index c, Index flat) {
            sum_gy[size_t(c)] += gy[flat];
            sum_gy_xhat[size_t(c)] += gy[flat] * xhat_[flat];
        });
        for (Index c = 0; c < c_; ++c) {
            ggamma_[c] += sum_gy_xhat[size_t(c)];
            gbeta_[c] += sum_gy[size_t(c)];
        }
        const Scalar inv_n = Scalar(1) / Scalar(n);
        visit_channel(gy, [&](Index c, Index flat) {
            const Scalar coeff = gamma_[c] * inv_std_[size_t(c)];
            gx[flat] = coeff * (gy[flat] - inv_n * sum_gy[size_t(c)] -
                                xhat_[flat] * inv_n * sum_gy_xhat[size_t(c)]);
        });
        return gx;
    }

    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
        out.push_back({prefix + ".beta", &beta_, &gbeta_});
    }

    void collect_state(const std::string& prefix,
                       std::vector<ArrayRef<Scalar>>& out) override {
        out.push_back({prefix + ".run_mean", &run_mean_, nullptr});
        out.push_back({prefix + ".run_var", &run_var_, nullptr});
        out.push_back({prefix + ".initialized", &initialized_, nullptr});
    }

    Tensor<Scalar>& gamma() { return gamma_; }
    Tensor<Scalar>& beta() { return beta_; }
    Tensor<Scalar>& running_mean() { return run_mean_; }
    Tensor<Scalar>& running_var() { return run_var_; }

private:
    void check_input(const Tensor<Scalar>& x) const {
        if ((x.ndim() != 2 && x.ndim() != 3) || x.dim(1) != c_) {
            throw ShapeError("batch_norm: expected BxC[xT] with C=" +
                             std::to_string(c_) + ", got " + x.shape_string());
        }
    }

    template <typename F>
    void visit_channel(const Tensor<Scalar>& like, F&& f) const {
        const Index b_dim = like.dim(0);
        const Index t_dim = like.ndim() == 3 ? like.dim(2) : 1;
        Index flat = 0;
        for (Index b = 0; b < b_dim; ++b) {
            for (Index c = 0; c < c_; ++c) {
                for (Index t = 0; t < t_dim; ++t, ++flat) {
                    f(c, flat);
                }
            }
        }
    }

    void compute_batch_stats(const Tensor<Scalar>& x) {
        const Index t_dim = x.ndim() == 3 ? x.dim(2) : 1;
        reduce_count_ = x.dim(0) * t_dim;
        std::vector<double> sum(size_t(c_), 0.0), sq(size_t(c_), 0.0);
        visit_channel(x, [&](Index c, Index flat) {
            sum[size_t(c)] += double(x[flat]);
            sq[size_t(c)] += double(x[flat]) * double(x[flat]);
        });
        mean_.assign(size_t(c_), Scalar(0));
        var_.assign(size_t(c_), Scalar(0));
        for (Index c = 0; c < c_; ++c) {
            const double m = sum[size_t(c)] / double(reduce_count_);
            // population variance (divide by N)
            double v = sq[size_t(c)] / double(reduce_count_) - m * m;
            if (v < 0) v = 0;
            mean_[size_t(c)] = Scalar(m);
            var_[size_t(c)] = Scalar(v);
        }
    }

    Index c_;
    double momentum_, eps_;
    Tensor<Scalar> gamma_, beta_, ggamma_, gbeta_;
    Tensor<Scalar> run_mean_, run_var_, initialized_;

    bool train_pass_ = false;
    Index reduce_count_ = 0;
    std::vector<Scalar> mean_, var_, inv_std_;
    Tensor<Scalar> xhat_;
};

// Per-(example, channel) standardization over time with that example's own
// statistics in both train and eval mode. No running statistics exist.
template <typename Scalar>
class InstanceNorm : public Layer<Scalar> {
public:
    explicit InstanceNorm(Index channels, double eps = kNormEpsilon)
        : c_(channels),
          eps_(eps),
          gamma_(Tensor<Scalar>::full({channels}, Scalar(1))),
          beta_({channels}),
          ggamma_({channels}),
          gbeta_({channels}) {}

    std::string kind() const override { return "instance_norm"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        if (x.ndim() != 3 || x.dim(1) != c_) {
            throw ShapeError("instance_norm: expected BxCxT with C=" +
                             std::to_string(c_) + ", got " + x.shape_string());
        }
        if (x.dim(2) < 2) {
            throw ShapeError(
                "instance_norm: degenerate window, need T >= 2, got T=" +
                std::to_string(x.dim(2)));
        }
        B_ = x.dim(0);
        T_ = x.dim(2);
        xhat_ = Tensor<Scalar>(x.shape());
        inv_std_.assign(size_t(B_ * c_), Scalar(0));
        Tensor<Scalar> y(x.shape());
        for (Index b = 0; b < B_; ++b) {
            auto xs = x.slice(b);
            auto xh = xhat_.slice(b);
            auto ys = y.slice(b);
            for (Index c = 0; c < c_; ++c) {
                double sum = 0, sq = 0;
                for (Index t = 0; t < T_; ++t) {
                    sum += double(xs(c, t));
                    sq += double(xs(c, t)) * double(xs(c, t));
                }
                const double m = sum / double(T_);
                double v = sq / double(T_) - m * m;
                if (v < 0) v = 0;
                const Scalar inv = Scalar(1.0 / std::sqrt(v + eps_));
                inv_std_[size_t(b * c_ + c)] = inv;
                for (Index t = 0; t < T_; ++t) {
                    const Scalar h = (xs(c, t) - Scalar(m)) * inv;
                    xh(c, t) = h;
                    ys(c, t) = gamma_[c] * h + beta_[c];
                }
            }
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> gx(gy.shape());
        const Scalar inv_t = Scalar(1) / Scalar(T_);
        for (Index b = 0; b < B_; ++b) {
            auto gys = gy.slice(b);
            auto xh = xhat_.slice(b);
            auto gxs = gx.slice(b);
            for (Index c = 0; c < c_; ++c) {
                Scalar sum_gy = 0, sum_gy_xhat = 0;
                for (Index t = 0; t < T_; ++t) {
                    sum_gy += gys(c, t);
                    sum_gy_xhat += gys(c, t) * xh(c, t);
                }
                ggamma_[c] += sum_gy_xhat;
                gbeta_[c] += sum_gy;
                const Scalar coeff = gamma_[c] * inv_std_[size_t(b * c_ + c)];
                for (Index t = 0; t < T_; ++t) {
                    gxs(c, t) = coeff * (gys(c, t) - inv_t * sum_gy -
                                         xh(c, t) * inv_t * sum_gy_xhat);
                }
            }
        }
        return gx;
    }

    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
        out.push_back({prefix + ".beta", &beta_, &gbeta_});
    }

    Tensor<Scalar>& gamma() { return gamma_; }
    Tensor<Scalar>& beta() { return beta_; }

private:
    Index c_;
    double eps_;
    Tensor<Scalar> gamma_, beta_, ggamma_, gbeta_;
    Index B_ = 0, T_ = 0;
    std::vector<Scalar> inv_std_;
    Tensor<Scalar> xhat_;
};

}  // namespace primkit::nn
