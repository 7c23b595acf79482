#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "primkit/errors.hpp"

namespace primkit::arch {

enum class Family { Fcnn, Lstm, Cnn };
enum class CnnStyle { Resnet, Densenet };
enum class NormKind { Batch, Instance };

const char* family_name(Family f);
Family parse_family(const std::string& s);
const char* cnn_style_name(CnnStyle s);
CnnStyle parse_cnn_style(const std::string& s);
const char* norm_kind_name(NormKind n);
NormKind parse_norm_kind(const std::string& s);

// Per-channel input-embedding module configuration. use_norm off is a test
// hook that makes an identity-initialized single-conv module the identity.
struct EmbeddingConfig {
    int blocks_per_channel = 2;
    int growth = 4;
    int kernel_size = 3;
    int dim = 4;  // output channels per input channel
    bool use_norm = true;
};

inline constexpr int kModelSpecVersion = 1;

// Versioned model description; embedded verbatim in checkpoints.
struct ModelSpec {
    std::string name;  // optional row label for validation tables
    Family family = Family::Cnn;
    CnnStyle cnn_style = CnnStyle::Resnet;
    NormKind norm = NormKind::Batch;
    bool input_embedding = false;

    // fcnn: [dense relu dropout] x depth, then the 5-logit head
    int fcnn_depth = 8;
    int fcnn_width = 900;
    double fcnn_dropout = 0.5;

    int lstm_hidden = 4000;

    // cnn depth counts convolutional plus dense layers; embedding-front
    // convolutions are a prefix outside the count
    int cnn_depth = 44;
    int cnn_base_width = 64;
    int cnn_growth = 16;     // densenet channels added per layer
    bool conv_bias = false;  // trunk convolutions are followed by norms

    EmbeddingConfig embedding;

    int n_labels = 5;

    // channel names (window models) or feature names (fcnn); fixes the
    // input contract recorded in checkpoints
    std::vector<std::string> input_names;

    bool consumes_features() const { return family == Family::Fcnn; }
    int input_dim() const { return int(input_names.size()); }
    uint64_t input_hash() const;
    std::string label() const;

    nlohmann::ordered_json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);
};

}  // namespace primkit::arch
