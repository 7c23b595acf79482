#pragma once

#include <string>
#include <vector>

#include "primkit/build.hpp"
#include "primkit/forest.hpp"

namespace primkit::train {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
    int epoch = -1;
    double val_accuracy = 0;
    uint64_t seed = 0;
};

// Checkpoint directory: manifest.json (spec, versions, named-array index
// with shapes/offsets, feature-order hash, training metadata) plus
// params.bin holding little-endian 32-bit floats concatenated in manifest
// order. Batch-norm running statistics ride along as named arrays, so a
// round-trip reproduces eval-mode predictions bit-exactly.
void save_checkpoint(arch::BuiltModel<float>& model, const CheckpointMeta& meta,
                     const std::string& dir);

struct LoadedModel {
    arch::BuiltModel<float> model;
    CheckpointMeta meta;
};

LoadedModel load_checkpoint(const std::string& dir);

// Forest checkpoints share the manifest + params.bin layout; tree nodes are
// stored as flat per-tree arrays (feature/threshold/left/right/proba).
void save_forest_checkpoint(const forest::RandomForest& forest,
                            const std::vector<std::string>& feature_names,
                            const CheckpointMeta& meta, const std::string& dir);

struct LoadedForest {
    forest::RandomForest forest;
    std::vector<std::string> feature_names;
    CheckpointMeta meta;
};

LoadedForest load_forest_checkpoint(const std::string& dir);

// "neural" or "forest"
std::string checkpoint_kind(const std::string& dir);

uint64_t names_hash(const std::vector<std::string>& names);

}  // namespace primkit::train
