#include "primkit/training.hpp"

#include <algorithm>
#include <numeric>

#include "primkit/loss.hpp"

namespace primkit::train {

nlohmann::ordered_json TrainConfig::to_json() const {
    return {{"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"lr_halving_period", lr_halving_period},
            {"early_stop_patience", early_stop_patience},
            {"lr0", lr0},
            {"clip_norm", clip_norm},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    try {
        TrainConfig c;
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.lr_halving_period = j.value("lr_halving_period", c.lr_halving_period);
        c.early_stop_patience =
            j.value("early_stop_patience", c.early_stop_patience);
        c.lr0 = j.value("lr0", c.lr0);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.seed = j.value("seed", c.seed);
        if (c.batch_size < 1 || c.max_epochs < 1 || c.lr_halving_period < 1 ||
            c.early_stop_patience < 0 || c.lr0 <= 0) {
            throw ConfigError("train config: non-positive field");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
}

TrainConfig TrainConfig::defaults_for(arch::Family family) {
    TrainConfig c;
    if (family == arch::Family::Lstm) {
        c.lr_halving_period = 10;
        c.clip_norm = 5;
    }
    return c;
}

double lr_at(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw ConfigError("lr_at: negative epoch");
    return config.lr0 /
           double(1ll << std::min<long long>(62, epoch / config.lr_halving_period));
}

ModelData ModelData::for_spec(const arch::ModelSpec& spec,
                              const std::vector<data::Window>& windows) {
    ModelData d;
    d.features_ = spec.consumes_features();
    d.labels_.reserve(windows.size());
    for (const auto& w : windows) d.labels_.push_back(w.label);

    if (windows.empty()) return d;
    if (d.features_) {
        const auto first = features::compute_window_features(windows[0]);
        d.n_features_ = Index(first.size());
        if (d.n_features_ != Index(spec.input_dim())) {
            throw ContractError("model data: windows yield " +
                                std::to_string(first.size()) +
                                " features, spec expects " +
                                std::to_string(spec.input_dim()));
        }
        d.feat_.resize(Eigen::Index(windows.size()), d.n_features_);
        for (size_t i = 0; i < windows.size(); ++i) {
            const auto f = features::compute_window_features(windows[i]);
            for (Index k = 0; k < d.n_features_; ++k) {
                d.feat_(Eigen::Index(i), k) = f[size_t(k)];
            }
        }
    } else {
        d.channels_ = windows[0].block.rows();
        d.window_len_ = windows[0].block.cols();
        if (d.channels_ != Index(spec.input_dim())) {
            throw ContractError("model data: windows carry " +
                                std::to_string(d.channels_) +
                                " channels, spec expects " +
                                std::to_string(spec.input_dim()));
        }
        d.windows_.reserve(windows.size());
        for (const auto& w : windows) {
            if (w.block.rows() != d.channels_ || w.block.cols() != d.window_len_) {
                throw ContractError("model data: inconsistent window shapes");
            }
            d.windows_.push_back(&w);
        }
    }
    return d;
}

TensorF ModelData::batch(const std::vector<long>& indices) const {
    const Index b = Index(indices.size());
    if (features_) {
        TensorF x({b, n_features_});
        for (Index i = 0; i < b; ++i) {
            x.mat().row(i) = feat_.row(Eigen::Index(indices[size_t(i)]));
        }
        return x;
    }
    TensorF x({b, channels_, window_len_});
    for (Index i = 0; i < b; ++i) {
        x.slice(i) = windows_[size_t(indices[size_t(i)])]->block;
    }
    return x;
}

namespace {

std::vector<int> batch_labels(const std::vector<int>& all,
                              const std::vector<long>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (long i : indices) out.push_back(all[size_t(i)]);
    return out;
}

void clip_gradients(std::vector<nn::ArrayRef<float>>& params, double max_norm) {
    double sq = 0;
    for (auto& p : params) {
        sq += double(p.grad->array().square().sum());
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const float scale = float(max_norm / norm);
        for (auto& p : params) p.grad->array() *= scale;
    }
}

}  // namespace

double evaluate_accuracy(arch::BuiltModel<float>& model, const ModelData& data,
                         int batch_size) {
    if (data.size() == 0) throw ConfigError("evaluate_accuracy: empty data");
    const Eigen::MatrixXd proba = predict_proba_all(model, data, batch_size);
    long correct = 0;
    for (long i = 0; i < data.size(); ++i) {
        Eigen::Index arg = 0;
        proba.row(i).maxCoeff(&arg);
        if (int(arg) == data.labels()[size_t(i)]) ++correct;
    }
    return double(correct) / double(data.size());
}

Eigen::MatrixXd predict_proba_all(arch::BuiltModel<float>& model,
                                  const ModelData& data, int batch_size) {
    model.graph.set_mode(nn::Mode::Eval);
    Eigen::MatrixXd out(data.size(), model.spec.n_labels);
    std::vector<long> idx;
    for (long at = 0; at < data.size(); at += batch_size) {
        idx.clear();
        for (long i = at; i < std::min<long>(at + batch_size, data.size()); ++i) {
            idx.push_back(i);
        }
        const TensorF probs = arch::model_predict_proba(model, data.batch(idx));
        for (size_t i = 0; i < idx.size(); ++i) {
            for (int k = 0; k < model.spec.n_labels; ++k) {
                out(idx[i], k) = double(probs(Index(i), k));
            }
        }
    }
    return out;
}

FitResult fit(arch::BuiltModel<float>& model, const ModelData& train_data,
              const ModelData& val_data, const TrainConfig& config) {
    if (train_data.size() == 0 || val_data.size() == 0) {
        throw ConfigError("fit: train and validation sets must be non-empty");
    }
    auto& params = model.graph.params();
    Adam<float> optimizer(params);
    model.graph.reseed_stochastic(rng::derive(config.seed, "dropout"));
    rng::Stream shuffle_stream(rng::derive(config.seed, "shuffle"));

    FitResult result;
    std::vector<TensorF> best_arrays = model.graph.snapshot_arrays();
    int stale_epochs = 0;

    std::vector<long> order(size_t(train_data.size()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = lr_at(epoch, config);
        shuffle_stream.shuffle(order);

        model.graph.set_mode(nn::Mode::Train);
        double loss_sum = 0;
        long batches = 0;
        for (size_t at = 0; at < order.size(); at += size_t(config.batch_size)) {
            const size_t end =
                std::min(order.size(), at + size_t(config.batch_size));
            const std::vector<long> idx(order.begin() + long(at),
                                        order.begin() + long(end));
            const TensorF x = train_data.batch(idx);
            const TensorF logits = model.graph.forward(x);
            const auto head =
                nn::softmax_cross_entropy(logits, batch_labels(train_data.labels(), idx));
            model.graph.zero_grads();
            model.graph.backward(head.dlogits);
            if (config.clip_norm > 0) clip_gradients(params, config.clip_norm);
            optimizer.step(params, lr);
            loss_sum += head.loss;
            ++batches;
        }

        const double val_acc = evaluate_accuracy(model, val_data, 256);
        result.history.push_back(
            {epoch, loss_sum / double(batches), val_acc, lr});
        result.epochs_run = epoch + 1;

        if (val_acc > result.best_val_accuracy || result.best_epoch < 0) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            best_arrays = model.graph.snapshot_arrays();
            stale_epochs = 0;
        } else {
            ++stale_epochs;
            if (stale_epochs >= std::max(config.early_stop_patience, 1)) break;
        }
    }

    model.graph.restore_arrays(best_arrays);
    model.graph.set_mode(nn::Mode::Eval);
    return result;
}

}  // namespace primkit::train
