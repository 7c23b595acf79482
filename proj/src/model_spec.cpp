#include "primkit/model_spec.hpp"

#include "primkit/rng.hpp"

namespace primkit::arch {

const char* family_name(Family f) {
    switch (f) {
        case Family::Fcnn: return "fcnn";
        case Family::Lstm: return "lstm";
        case Family::Cnn: return "cnn";
    }
    return "?";
}

Family parse_family(const std::string& s) {
    if (s == "fcnn") return Family::Fcnn;
    if (s == "lstm") return Family::Lstm;
    if (s == "cnn") return Family::Cnn;
    throw ConfigError("unknown model family '" + s + "'");
}

const char* cnn_style_name(CnnStyle s) {
    return s == CnnStyle::Resnet ? "resnet" : "densenet";
}

CnnStyle parse_cnn_style(const std::string& s) {
    if (s == "resnet") return CnnStyle::Resnet;
    if (s == "densenet") return CnnStyle::Densenet;
    throw ConfigError("unknown cnn style '" + s + "'");
}

const char* norm_kind_name(NormKind n) {
    return n == NormKind::Batch ? "batch" : "instance";
}

NormKind parse_norm_kind(const std::string& s) {
    if (s == "batch") return NormKind::Batch;
    if (s == "instance") return NormKind::Instance;
    throw ConfigError("unknown norm kind '" + s + "'");
}

uint64_t ModelSpec::input_hash() const {
    std::string joined;
    for (const auto& n : input_names) {
        joined += n;
        joined += '|';
    }
    return rng::fnv1a64(joined);
}

std::string ModelSpec::label() const {
    if (!name.empty()) return name;
    std::string s = family_name(family);
    if (family == Family::Cnn) {
        s += std::string("-") + cnn_style_name(cnn_style);
        s += std::string("-") + norm_kind_name(norm);
        s += input_embedding ? "-emb" : "-noemb";
        s += "-d" + std::to_string(cnn_depth);
    } else if (family == Family::Fcnn) {
        s += "-d" + std::to_string(fcnn_depth) + "-w" +
             std::to_string(fcnn_width);
    } else {
        s += "-h" + std::to_string(lstm_hidden);
    }
    return s;
}

nlohmann::ordered_json ModelSpec::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = kModelSpecVersion;
    if (!name.empty()) j["name"] = name;
    j["family"] = family_name(family);
    j["n_labels"] = n_labels;
    if (family == Family::Fcnn) {
        j["fcnn"] = {{"depth", fcnn_depth},
                     {"width", fcnn_width},
                     {"dropout", fcnn_dropout}};
    } else if (family == Family::Lstm) {
        j["lstm"] = {{"hidden", lstm_hidden}};
    } else {
        j["cnn"] = {{"style", cnn_style_name(cnn_style)},
                    {"norm", norm_kind_name(norm)},
                    {"depth", cnn_depth},
                    {"base_width", cnn_base_width},
                    {"growth", cnn_growth},
                    {"conv_bias", conv_bias}};
        j["input_embedding"] = input_embedding;
        if (input_embedding) {
            j["embedding"] = {{"blocks_per_channel", embedding.blocks_per_channel},
                              {"growth", embedding.growth},
                              {"kernel_size", embedding.kernel_size},
                              {"dim", embedding.dim},
                              {"use_norm", embedding.use_norm}};
        }
    }
    j["input_names"] = input_names;
    return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
    try {
        if (j.value("version", kModelSpecVersion) != kModelSpecVersion) {
            throw ConfigError("model spec version " +
                              std::to_string(j["version"].get<int>()) +
                              " not supported (expected " +
                              std::to_string(kModelSpecVersion) + ")");
        }
        ModelSpec spec;
        spec.name = j.value("name", "");
        spec.family = parse_family(j.at("family").get<std::string>());
        spec.n_labels = j.value("n_labels", 5);
        if (j.contains("fcnn")) {
            const auto& f = j["fcnn"];
            spec.fcnn_depth = f.value("depth", spec.fcnn_depth);
            spec.fcnn_width = f.value("width", spec.fcnn_width);
            spec.fcnn_dropout = f.value("dropout", spec.fcnn_dropout);
        }
        if (j.contains("lstm")) {
            spec.lstm_hidden = j["lstm"].value("hidden", spec.lstm_hidden);
        }
        if (j.contains("cnn")) {
            const auto& c = j["cnn"];
            if (c.contains("style")) {
                spec.cnn_style = parse_cnn_style(c["style"].get<std::string>());
            }
            if (c.contains("norm")) {
                spec.norm = parse_norm_kind(c["norm"].get<std::string>());
            }
            spec.cnn_depth = c.value("depth", spec.cnn_depth);
            spec.cnn_base_width = c.value("base_width", spec.cnn_base_width);
            spec.cnn_growth = c.value("growth", spec.cnn_growth);
            spec.conv_bias = c.value("conv_bias", spec.conv_bias);
        }
        spec.input_embedding = j.value("input_embedding", false);
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            spec.embedding.blocks_per_channel =
                e.value("blocks_per_channel", spec.embedding.blocks_per_channel);
            spec.embedding.growth = e.value("growth", spec.embedding.growth);
            spec.embedding.kernel_size =
                e.value("kernel_size", spec.embedding.kernel_size);
            spec.embedding.dim = e.value("dim", spec.embedding.dim);
            spec.embedding.use_norm = e.value("use_norm", spec.embedding.use_norm);
        }
        if (j.contains("input_names")) {
            spec.input_names = j["input_names"].get<std::vector<std::string>>();
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model spec: ") + e.what());
    }
}

}  // namespace primkit::arch
