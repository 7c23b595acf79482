#include "primkit/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "primkit/rng.hpp"

namespace fs = std::filesystem;

namespace primkit::train {

namespace {

struct NamedArray {
    std::string name;
    std::vector<Index> shape;
    std::vector<float> values;
};

long numel_of(const std::vector<Index>& shape) {
    long n = 1;
    for (Index d : shape) n *= long(d);
    return n;
}

void write_payload(const std::string& dir,
                   nlohmann::ordered_json manifest_head,
                   const std::vector<NamedArray>& arrays) {
    fs::create_directories(dir);
    nlohmann::ordered_json index = nlohmann::ordered_json::array();
    long offset = 0;
    for (const auto& a : arrays) {
        index.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
        offset += long(a.values.size());
    }
    manifest_head["arrays"] = index;
    manifest_head["total_floats"] = offset;

    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot write manifest in " + dir);
    mf << manifest_head.dump(2) << "\n";

    std::ofstream pf(fs::path(dir) / "params.bin", std::ios::binary);
    if (!pf) throw IoError("cannot write params.bin in " + dir);
    for (const auto& a : arrays) {
        pf.write(reinterpret_cast<const char*>(a.values.data()),
                 std::streamsize(a.values.size() * sizeof(float)));
    }
    pf.close();
    if (!pf) throw IoError("write failed for params.bin in " + dir);
}

nlohmann::json read_manifest(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("no manifest.json in checkpoint " + dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw Error("checkpoint " + dir + ": malformed manifest: " + e.what());
    }
    const int version = manifest.value("format_version", -1);
    if (version != kCheckpointVersion) {
        throw Error("checkpoint " + dir + ": format version " +
                    std::to_string(version) + " not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    }
    return manifest;
}

std::vector<float> read_payload(const std::string& dir, long expected_floats) {
    std::ifstream pf(fs::path(dir) / "params.bin", std::ios::binary);
    if (!pf) throw IoError("no params.bin in checkpoint " + dir);
    pf.seekg(0, std::ios::end);
    const long bytes = long(pf.tellg());
    if (bytes != expected_floats * long(sizeof(float))) {
        throw Error("checkpoint " + dir + ": params.bin holds " +
                    std::to_string(bytes) + " bytes, manifest expects " +
                    std::to_string(expected_floats * long(sizeof(float))) +
                    " (truncated or corrupt)");
    }
    pf.seekg(0);
    std::vector<float> values(static_cast<size_t>(expected_floats));
    pf.read(reinterpret_cast<char*>(values.data()), bytes);
    if (!pf) throw IoError("read failed for params.bin in " + dir);
    return values;
}

CheckpointMeta meta_from(const nlohmann::json& manifest) {
    CheckpointMeta meta;
    if (manifest.contains("training")) {
        const auto& t = manifest["training"];
        meta.epoch = t.value("epoch", -1);
        meta.val_accuracy = t.value("val_accuracy", 0.0);
        meta.seed = t.value("seed", uint64_t(0));
    }
    return meta;
}

nlohmann::ordered_json meta_to(const CheckpointMeta& meta) {
    return {{"epoch", meta.epoch},
            {"val_accuracy", meta.val_accuracy},
            {"seed", meta.seed}};
}

}  // namespace

uint64_t names_hash(const std::vector<std::string>& names) {
    std::string joined;
    for (const auto& n : names) {
        joined += n;
        joined += '|';
    }
    return rng::fnv1a64(joined);
}

void save_checkpoint(arch::BuiltModel<float>& model, const CheckpointMeta& meta,
                     const std::string& dir) {
    std::vector<NamedArray> arrays;
    for (const auto& ref : model.graph.arrays()) {
        NamedArray a;
        a.name = ref.name;
        a.shape = ref.value->shape();
        a.values.assign(ref.value->data(), ref.value->data() + ref.value->numel());
        arrays.push_back(std::move(a));
    }
    nlohmann::ordered_json head;
    head["format_version"] = kCheckpointVersion;
    head["kind"] = "neural";
    head["model_spec"] = model.spec.to_json();
    head["feature_order_hash"] = model.spec.input_hash();
    head["training"] = meta_to(meta);
    write_payload(dir, std::move(head), arrays);
}

LoadedModel load_checkpoint(const std::string& dir) {
    const nlohmann::json manifest = read_manifest(dir);
    const std::string kind = manifest.value("kind", "");
    if (kind != "neural") {
        throw ContractError("checkpoint " + dir + ": kind '" + kind +
                            "' cannot be loaded as a neural model");
    }
    LoadedModel out{
        {arch::ModelSpec::from_json(manifest.at("model_spec")), {}},
        meta_from(manifest)};
    out.model = arch::build_model<float>(out.model.spec, 0);

    const std::vector<float> payload =
        read_payload(dir, manifest.at("total_floats").get<long>());

    std::map<std::string, nn::ArrayRef<float>> by_name;
    for (auto& ref : out.model.graph.arrays()) by_name[ref.name] = ref;

    size_t matched = 0;
    for (const auto& entry : manifest.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw ContractError("checkpoint " + dir + ": array '" + name +
                                "' does not exist in the rebuilt model");
        }
        const std::vector<Index> shape =
            entry.at("shape").get<std::vector<Index>>();
        if (shape != it->second.value->shape()) {
            throw ContractError("checkpoint " + dir + ": array '" + name +
                                "' shape mismatch");
        }
        const long offset = entry.at("offset").get<long>();
        Tensor<float>& value = *it->second.value;
        for (Index k = 0; k < value.numel(); ++k) {
            value[k] = payload[size_t(offset + k)];
        }
        ++matched;
    }
    if (matched != by_name.size()) {
        throw ContractError("checkpoint " + dir +
                            ": manifest does not cover every model array");
    }
    out.model.graph.set_mode(nn::Mode::Eval);
    return out;
}

void save_forest_checkpoint(const forest::RandomForest& forest,
                            const std::vector<std::string>& feature_names,
                            const CheckpointMeta& meta, const std::string& dir) {
    std::vector<NamedArray> arrays;
    for (size_t t = 0; t < forest.trees.size(); ++t) {
        const auto& nodes = forest.trees[t].nodes;
        const Index n = Index(nodes.size());
        const std::string prefix = "tree" + std::to_string(t);
        NamedArray feature{prefix + ".feature", {n}, {}};
        NamedArray threshold{prefix + ".threshold", {n}, {}};
        NamedArray left{prefix + ".left", {n}, {}};
        NamedArray right{prefix + ".right", {n}, {}};
        NamedArray proba{prefix + ".proba", {n, data::kNumPrimitives}, {}};
        for (const auto& node : nodes) {
            feature.values.push_back(float(node.feature));
            threshold.values.push_back(node.threshold);
            left.values.push_back(float(node.left));
            right.values.push_back(float(node.right));
            for (float p : node.proba) proba.values.push_back(p);
        }
        arrays.push_back(std::move(feature));
        arrays.push_back(std::move(threshold));
        arrays.push_back(std::move(left));
        arrays.push_back(std::move(right));
        arrays.push_back(std::move(proba));
    }

    nlohmann::ordered_json head;
    head["format_version"] = kCheckpointVersion;
    head["kind"] = "forest";
    head["forest_config"] = {{"n_trees", forest.config.n_trees},
                             {"min_samples_split", forest.config.min_samples_split},
                             {"min_samples_leaf", forest.config.min_samples_leaf},
                             {"max_features", forest.config.max_features},
                             {"bootstrap", forest.config.bootstrap},
                             {"seed", forest.config.seed}};
    head["n_features"] = forest.n_features;
    head["feature_names"] = feature_names;
    head["feature_order_hash"] = names_hash(feature_names);
    head["training"] = meta_to(meta);
    write_payload(dir, std::move(head), arrays);
}

LoadedForest load_forest_checkpoint(const std::string& dir) {
    const nlohmann::json manifest = read_manifest(dir);
    const std::string kind = manifest.value("kind", "");
    if (kind != "forest") {
        throw ContractError("checkpoint " + dir + ": kind '" + kind +
                            "' cannot be loaded as a forest");
    }
    LoadedForest out;
    const auto& fc = manifest.at("forest_config");
    out.forest.config.n_trees = fc.at("n_trees").get<int>();
    out.forest.config.min_samples_split = fc.at("min_samples_split").get<int>();
    out.forest.config.min_samples_leaf = fc.at("min_samples_leaf").get<int>();
    out.forest.config.max_features = fc.at("max_features").get<int>();
    out.forest.config.bootstrap = fc.at("bootstrap").get<bool>();
    out.forest.config.seed = fc.at("seed").get<uint64_t>();
    out.forest.n_features = manifest.at("n_features").get<int>();
    out.feature_names =
        manifest.at("feature_names").get<std::vector<std::string>>();
    out.meta = meta_from(manifest);

    const std::vector<float> payload =
        read_payload(dir, manifest.at("total_floats").get<long>());

    std::map<std::string, std::pair<std::vector<Index>, long>> index;
    for (const auto& entry : manifest.at("arrays")) {
        index[entry.at("name").get<std::string>()] = {
            entry.at("shape").get<std::vector<Index>>(),
            entry.at("offset").get<long>()};
    }
    out.forest.trees.resize(size_t(out.forest.config.n_trees));
    for (int t = 0; t < out.forest.config.n_trees; ++t) {
        const std::string prefix = "tree" + std::to_string(t);
        const auto need = [&](const std::string& suffix) {
            const auto it = index.find(prefix + suffix);
            if (it == index.end()) {
                throw ContractError("checkpoint " + dir + ": missing array " +
                                    prefix + suffix);
            }
            return it->second;
        };
        const auto [fshape, foff] = need(".feature");
        const auto [tshape, toff] = need(".threshold");
        const auto [lshape, loff] = need(".left");
        const auto [rshape, roff] = need(".right");
        const auto [pshape, poff] = need(".proba");
        const long n = numel_of(fshape);
        auto& nodes = out.forest.trees[size_t(t)].nodes;
        nodes.resize(size_t(n));
        for (long i = 0; i < n; ++i) {
            auto& node = nodes[size_t(i)];
            node.feature = int(payload[size_t(foff + i)]);
            node.threshold = payload[size_t(toff + i)];
            node.left = int(payload[size_t(loff + i)]);
            node.right = int(payload[size_t(roff + i)]);
            for (int k = 0; k < data::kNumPrimitives; ++k) {
                node.proba[size_t(k)] =
                    payload[size_t(poff + i * data::kNumPrimitives + k)];
            }
        }
    }
    return out;
}

std::string checkpoint_kind(const std::string& dir) {
    return read_manifest(dir).value("kind", "");
}

}  // namespace primkit::train
