#pragma once

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "primkit/graph.hpp"
#include "primkit/loss.hpp"
#include "primkit/lstm.hpp"
#include "primkit/model_spec.hpp"
#include "primkit/norm.hpp"

namespace primkit::arch {

// Stage plan for the CNN trunk under the layer-counting convention:
// convolutional and dense layers count, norm/activation/pool do not.
// Budget: 1 stem conv + trunk layers + (stages-1) downsampling convs +
// 1 dense head == cnn_depth.
struct StagePlan {
    std::vector<int> blocks_per_stage;  // resnet blocks (2 convs each) or
                                        // densenet layers (1 conv each)
};

inline StagePlan plan_stages(const ModelSpec& spec) {
    const int budget = spec.cnn_depth - 2;  // minus stem and head
    StagePlan plan;
    if (spec.cnn_style == CnnStyle::Resnet) {
        if (budget < 2 || budget == 3) {
            throw ConfigError("cnn: depth " + std::to_string(spec.cnn_depth) +
                              " leaves no valid residual-stage allocation");
        }
        int stages = 1, blocks = 0;
        if (budget % 2 == 0 && budget >= 8) {
            stages = 3;
            blocks = (budget - 2) / 2;
        } else if (budget % 2 == 0) {
            stages = 1;
            blocks = budget / 2;
        } else {
            stages = 2;
            blocks = (budget - 1) / 2;
        }
        plan.blocks_per_stage.assign(size_t(stages), blocks / stages);
        for (int i = 0; i < blocks % stages; ++i) {
            plan.blocks_per_stage[size_t(i)]++;
        }
    } else {
        if (budget < 1) {
            throw ConfigError("cnn: depth " + std::to_string(spec.cnn_depth) +
                              " leaves no dense layers");
        }
        const int stages = budget >= 8 ? 3 : 1;
        const int layers = budget - (stages - 1);
        plan.blocks_per_stage.assign(size_t(stages), layers / stages);
        for (int i = 0; i < layers % stages; ++i) {
            plan.blocks_per_stage[size_t(i)]++;
        }
    }
    for (int b : plan.blocks_per_stage) {
        if (b < 1) {
            throw ConfigError("cnn: depth " + std::to_string(spec.cnn_depth) +
                              " yields an empty stage");
        }
    }
    return plan;
}

namespace detail {

template <typename Scalar>
std::unique_ptr<nn::Layer<Scalar>> make_norm(const ModelSpec& spec,
                                             Index channels) {
    if (spec.norm == NormKind::Instance) {
        return std::make_unique<nn::InstanceNorm<Scalar>>(channels);
    }
    return std::make_unique<nn::BatchNorm<Scalar>>(channels);
}

}  // namespace detail

// One embedding module per input channel with unshared weights: DenseNet-like
// concat blocks over the single-channel signal, then a pointwise projection
// to embedding.dim channels. Module outputs are concatenated channel-wise.
template <typename Scalar>
std::unique_ptr<nn::ChannelEmbedding<Scalar>> build_embedding_front(
    const ModelSpec& spec) {
    if (spec.family != Family::Cnn) {
        throw ConfigError("input embedding is only defined for the cnn family");
    }
    const EmbeddingConfig& e = spec.embedding;
    if (e.dim < 1 || e.growth < 1 || e.kernel_size < 1 ||
        e.blocks_per_channel < 0) {
        throw ConfigError("embedding: dim/growth/kernel must be positive");
    }
    std::vector<std::unique_ptr<nn::Sequential<Scalar>>> modules;
    for (int c = 0; c < spec.input_dim(); ++c) {
        auto module = std::make_unique<nn::Sequential<Scalar>>();
        int channels = 1;
        for (int b = 0; b < e.blocks_per_channel; ++b) {
            auto branch = std::make_unique<nn::Sequential<Scalar>>();
            branch->template emplace<nn::Conv1d<Scalar>>(
                channels, e.growth, e.kernel_size, 1, -1, 1, spec.conv_bias);
            if (e.use_norm) {
                branch->add(detail::make_norm<Scalar>(spec, e.growth));
            }
            branch->template emplace<nn::Relu<Scalar>>();
            module->add(
                std::make_unique<nn::ConcatBlock<Scalar>>(std::move(branch)));
            channels += e.growth;
        }
        module->template emplace<nn::Conv1d<Scalar>>(channels, e.dim, 1, 1, -1,
                                                     1, spec.conv_bias);
        if (e.use_norm) {
            module->add(detail::make_norm<Scalar>(spec, e.dim));
            module->template emplace<nn::Relu<Scalar>>();
        }
        modules.push_back(std::move(module));
    }
    return std::make_unique<nn::ChannelEmbedding<Scalar>>(std::move(modules));
}

// [dense -> relu -> dropout] x depth, then the logit head.
template <typename Scalar>
nn::LayerGraph<Scalar> build_fcnn(const ModelSpec& spec) {
    if (spec.family != Family::Fcnn) {
        throw ConfigError("build_fcnn: spec family is not fcnn");
    }
    if (spec.fcnn_depth < 1 || spec.fcnn_width < 1) {
        throw ConfigError("fcnn: depth and width must be positive");
    }
    auto root = std::make_unique<nn::Sequential<Scalar>>();
    Index in = spec.input_dim();
    for (int d = 0; d < spec.fcnn_depth; ++d) {
        root->template emplace<nn::Dense<Scalar>>(in, spec.fcnn_width);
        root->template emplace<nn::Relu<Scalar>>();
        root->template emplace<nn::Dropout<Scalar>>(spec.fcnn_dropout);
        in = spec.fcnn_width;
    }
    root->template emplace<nn::Dense<Scalar>>(in, spec.n_labels);
    return nn::LayerGraph<Scalar>(std::move(root));
}

// Single unidirectional LSTM over the window; final hidden state feeds the
// logit head.
template <typename Scalar>
nn::LayerGraph<Scalar> build_lstm(const ModelSpec& spec) {
    if (spec.family != Family::Lstm) {
        throw ConfigError("build_lstm: spec family is not lstm");
    }
    if (spec.lstm_hidden < 1) {
        throw ConfigError("lstm: hidden size must be positive");
    }
    auto root = std::make_unique<nn::Sequential<Scalar>>();
    root->template emplace<nn::Lstm<Scalar>>(spec.input_dim(), spec.lstm_hidden);
    root->template emplace<nn::Dense<Scalar>>(spec.lstm_hidden, spec.n_labels);
    return nn::LayerGraph<Scalar>(std::move(root));
}

// Stem conv, stages of residual or dense blocks with stride-2 downsampling
// convs between stages, global average pooling and a dense head. Optional
// per-channel embedding front.
template <typename Scalar>
nn::LayerGraph<Scalar> build_cnn(const ModelSpec& spec) {
    if (spec.family != Family::Cnn) {
        throw ConfigError("build_cnn: spec family is not cnn");
    }
    if (spec.cnn_base_width < 1) {
        throw ConfigError("cnn: base_width must be positive");
    }
    const StagePlan plan = plan_stages(spec);

    auto root = std::make_unique<nn::Sequential<Scalar>>();
    Index channels = spec.input_dim();
    if (spec.input_embedding) {
        root->add(build_embedding_front<Scalar>(spec));
        channels = Index(spec.input_dim()) * spec.embedding.dim;
    }

    Index width = spec.cnn_base_width;
    root->template emplace<nn::Conv1d<Scalar>>(channels, width, 3, 1, -1, 1,
                                               spec.conv_bias);
    root->add(detail::make_norm<Scalar>(spec, width));
    root->template emplace<nn::Relu<Scalar>>();

    for (size_t s = 0; s < plan.blocks_per_stage.size(); ++s) {
        if (s > 0) {
            // stride-2 downsampling conv between stages
            const Index next = spec.cnn_style == CnnStyle::Resnet
                                   ? width * 2
                                   : std::max<Index>(width / 2, 1);
            root->template emplace<nn::Conv1d<Scalar>>(width, next, 3, 2, -1, 1,
                                                       spec.conv_bias);
            root->add(detail::make_norm<Scalar>(spec, next));
            root->template emplace<nn::Relu<Scalar>>();
            width = next;
        }
        for (int b = 0; b < plan.blocks_per_stage[s]; ++b) {
            if (spec.cnn_style == CnnStyle::Resnet) {
                auto body = std::make_unique<nn::Sequential<Scalar>>();
                body->template emplace<nn::Conv1d<Scalar>>(width, width, 3, 1, -1,
                                                           1, spec.conv_bias);
                body->add(detail::make_norm<Scalar>(spec, width));
                body->template emplace<nn::Relu<Scalar>>();
                body->template emplace<nn::Conv1d<Scalar>>(width, width, 3, 1, -1,
                                                           1, spec.conv_bias);
                body->add(detail::make_norm<Scalar>(spec, width));
                root->add(std::make_unique<nn::Residual<Scalar>>(std::move(body)));
                root->template emplace<nn::Relu<Scalar>>();
            } else {
                auto branch = std::make_unique<nn::Sequential<Scalar>>();
                branch->template emplace<nn::Conv1d<Scalar>>(
                    width, spec.cnn_growth, 3, 1, -1, 1, spec.conv_bias);
                branch->add(detail::make_norm<Scalar>(spec, spec.cnn_growth));
                branch->template emplace<nn::Relu<Scalar>>();
                root->add(
                    std::make_unique<nn::ConcatBlock<Scalar>>(std::move(branch)));
                width += spec.cnn_growth;
            }
        }
    }

    root->template emplace<nn::GlobalAvgPool<Scalar>>();
    root->template emplace<nn::Dense<Scalar>>(width, spec.n_labels);
    return nn::LayerGraph<Scalar>(std::move(root));
}

// Convolutional plus dense layers, the unit of the 44-layer depth
// convention. Embedding-front convolutions are excluded.
template <typename Scalar>
int trunk_layer_count(nn::LayerGraph<Scalar>& graph) {
    int count = 0;
    graph.root()->visit([&count](nn::Layer<Scalar>* layer) {
        const std::string k = layer->kind();
        if (k == "conv1d" || k == "dense") ++count;
    });
    return count;
}

template <typename Scalar>
int embedding_layer_count(nn::LayerGraph<Scalar>& graph) {
    int count = 0;
    graph.root()->visit([&count](nn::Layer<Scalar>* layer) {
        if (layer->kind() == "channel_embedding") {
            layer->visit_children([&count](nn::Layer<Scalar>* inner) {
                if (inner->kind() == "conv1d") ++count;
            });
        }
    });
    return count;
}

template <typename Scalar>
struct BuiltModel {
    ModelSpec spec;
    nn::LayerGraph<Scalar> graph;
};

// Build any family from its spec; initialization and dropout streams are
// derived from the seed.
template <typename Scalar>
BuiltModel<Scalar> build_model(const ModelSpec& spec, uint64_t seed) {
    if (spec.input_dim() < 1) {
        throw ConfigError("model spec: input_names must name the input layout");
    }
    BuiltModel<Scalar> built;
    built.spec = spec;
    switch (spec.family) {
        case Family::Fcnn: built.graph = build_fcnn<Scalar>(spec); break;
        case Family::Lstm: built.graph = build_lstm<Scalar>(spec); break;
        case Family::Cnn: built.graph = build_cnn<Scalar>(spec); break;
    }
    if (spec.family == Family::Cnn) {
        const int counted =
            trunk_layer_count(built.graph) - embedding_layer_count(built.graph);
        if (counted != spec.cnn_depth) {
            throw ConfigError("cnn: constructed layer count " +
                              std::to_string(counted) +
                              " does not match configured depth " +
                              std::to_string(spec.cnn_depth));
        }
    }
    built.graph.init_params(seed);
    built.graph.reseed_stochastic(rng::derive(seed, "dropout"));
    return built;
}

// Softmax probabilities of a batch; eval mode only so dropout and batch
// statistics cannot leak into evaluation.
template <typename Scalar>
Tensor<Scalar> model_predict_proba(BuiltModel<Scalar>& model,
                                   const Tensor<Scalar>& batch) {
    if (model.graph.mode() != nn::Mode::Eval) {
        throw ContractError(
            "model_predict_proba: model must be in eval mode");
    }
    return nn::softmax_rows(model.graph.forward(batch));
}

}  // namespace primkit::arch
