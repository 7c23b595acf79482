#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "primkit/build.hpp"
#include "primkit/features.hpp"
#include "primkit/pipeline.hpp"

namespace primkit::train {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction; moment buffers are keyed by parameter
// order, which is stable for a given graph.
template <typename Scalar>
class Adam {
public:
    explicit Adam(std::vector<nn::ArrayRef<Scalar>>& params,
                  AdamConfig config = {})
        : config_(config) {
        for (auto& p : params) {
            m_.emplace_back(p.value->shape());
            v_.emplace_back(p.value->shape());
        }
    }

    void step(std::vector<nn::ArrayRef<Scalar>>& params, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor<Scalar>& g = *params[i].grad;
            if (!g.all_finite()) {
                throw NumericError("adam: non-finite gradient for parameter " +
                                   params[i].name);
            }
            Tensor<Scalar>& value = *params[i].value;
            Tensor<Scalar>& m = m_[i];
            Tensor<Scalar>& v = v_[i];
            for (Index k = 0; k < value.numel(); ++k) {
                const double grad = double(g[k]);
                const double mk =
                    config_.beta1 * double(m[k]) + (1 - config_.beta1) * grad;
                const double vk = config_.beta2 * double(v[k]) +
                                  (1 - config_.beta2) * grad * grad;
                m[k] = Scalar(mk);
                v[k] = Scalar(vk);
                value[k] -= Scalar(lr * (mk / c1) /
                                   (std::sqrt(vk / c2) + config_.eps));
            }
        }
    }

    long step_count() const { return t_; }

private:
    AdamConfig config_;
    long t_ = 0;
    std::vector<Tensor<Scalar>> m_, v_;
};

inline constexpr double kDefaultLr0 = 1.25e-4;

struct TrainConfig {
    int batch_size = 64;
    int max_epochs = 200;
    // halve the learning rate every N epochs: 20 for fcnn/cnn, 10 for the
    // recurrent nets
    int lr_halving_period = 20;
    int early_stop_patience = 10;
    double lr0 = kDefaultLr0;
    double clip_norm = 0;  // global-norm gradient clip; 0 disables
    uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    // family defaults: lstm halves every 10 epochs and clips at norm 5
    static TrainConfig defaults_for(arch::Family family);
};

double lr_at(int epoch, const TrainConfig& config);

// Prepared model inputs for one family: the fcnn consumes the five window
// statistics, lstm/cnn consume raw windows.
class ModelData {
public:
    static ModelData for_spec(const arch::ModelSpec& spec,
                              const std::vector<data::Window>& windows);

    long size() const { return long(labels_.size()); }
    const std::vector<int>& labels() const { return labels_; }
    bool features() const { return features_; }

    TensorF batch(const std::vector<long>& indices) const;

private:
    bool features_ = false;
    Index channels_ = 0, window_len_ = 0, n_features_ = 0;
    std::vector<const data::Window*> windows_;
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> feat_;
    std::vector<int> labels_;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double val_accuracy = 0;
    double lr = 0;
};

struct FitResult {
    int best_epoch = -1;
    double best_val_accuracy = 0;
    int epochs_run = 0;
    std::vector<EpochRecord> history;
};

// Epoch loop: shuffle, minibatch forward/backward, Adam step with the
// halving schedule; keeps the best-validation-accuracy parameters and stops
// after `early_stop_patience` epochs without improvement. Deterministic
// given the seed.
FitResult fit(arch::BuiltModel<float>& model, const ModelData& train_data,
              const ModelData& val_data, const TrainConfig& config);

double evaluate_accuracy(arch::BuiltModel<float>& model, const ModelData& data,
                         int batch_size = 256);

// Eval-mode probabilities for every sample, in data order.
Eigen::MatrixXd predict_proba_all(arch::BuiltModel<float>& model,
                                  const ModelData& data, int batch_size = 256);

}  // namespace primkit::train
