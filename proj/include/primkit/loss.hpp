#pragma once

#include <cmath>
#include <vector>

#include "primkit/tensor.hpp"

namespace primkit::nn {

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& logits) {
    if (logits.ndim() != 2) {
        throw ShapeError("softmax: expected BxK logits, got " +
                         logits.shape_string());
    }
    const Index B = logits.dim(0);
    const Index K = logits.dim(1);
    Tensor<Scalar> p(logits.shape());
    for (Index b = 0; b < B; ++b) {
        double mx = double(logits(b, 0));
        for (Index k = 1; k < K; ++k) mx = std::max(mx, double(logits(b, k)));
        double z = 0;
        for (Index k = 0; k < K; ++k) z += std::exp(double(logits(b, k)) - mx);
        for (Index k = 0; k < K; ++k) {
            p(b, k) = Scalar(std::exp(double(logits(b, k)) - mx) / z);
        }
    }
    return p;
}

template <typename Scalar>
struct SoftmaxXent {
    double loss = 0;
    Tensor<Scalar> probs;
    Tensor<Scalar> dlogits;  // (p - onehot) / B
};

// Numerically stable log-sum-exp softmax cross entropy, mean over the batch.
template <typename Scalar>
SoftmaxXent<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                          const std::vector<int>& labels) {
    if (logits.ndim() != 2 || Index(labels.size()) != logits.dim(0)) {
        throw ShapeError("softmax_cross_entropy: logits " +
                         logits.shape_string() + " need one label per row");
    }
    const Index B = logits.dim(0);
    const Index K = logits.dim(1);
    for (Index b = 0; b < B; ++b) {
        if (labels[size_t(b)] < 0 || labels[size_t(b)] >= K) {
            throw Error("softmax_cross_entropy: label " +
                        std::to_string(labels[size_t(b)]) + " at row " +
                        std::to_string(b) + " outside [0, " +
                        std::to_string(K) + ")");
        }
    }
    SoftmaxXent<Scalar> out;
    out.probs = Tensor<Scalar>(logits.shape());
    out.dlogits = Tensor<Scalar>(logits.shape());
    double total = 0;
    for (Index b = 0; b < B; ++b) {
        double mx = double(logits(b, 0));
        for (Index k = 1; k < K; ++k) mx = std::max(mx, double(logits(b, k)));
        double z = 0;
        for (Index k = 0; k < K; ++k) z += std::exp(double(logits(b, k)) - mx);
        const double log_z = std::log(z) + mx;
        const int y = labels[size_t(b)];
        total += log_z - double(logits(b, y));
        for (Index k = 0; k < K; ++k) {
            const double p = std::exp(double(logits(b, k)) - log_z);
            out.probs(b, k) = Scalar(p);
            out.dlogits(b, k) = Scalar((p - (k == y ? 1.0 : 0.0)) / double(B));
        }
    }
    out.loss = total / double(B);
    return out;
}

}  // namespace primkit::nn
