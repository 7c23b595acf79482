#pragma once

#include <array>
#include <string>
#include <vector>

#include "primkit/pipeline.hpp"

namespace primkit::features {

// Fixed statistic order; forest and FCNN checkpoints depend on it.
inline constexpr std::array<const char*, 5> kStatNames = {"mean", "max", "min",
                                                          "std", "rms"};
inline constexpr int kStatsPerChannel = 5;

// Per channel over the window: mean, max, min, population std, root mean
// square, laid out channel-major (all five statistics of channel 0, then
// channel 1, ...). Length is 5 x C_total.
std::vector<float> compute_window_features(const data::Window& window);

// Column names in feature order: "<channel>_<stat>".
std::vector<std::string> feature_names(const data::ChannelSchema& schema);

uint64_t feature_order_hash(const data::ChannelSchema& schema);

// CSV export: one row per window, header `ch..._stat` columns plus `label`.
void write_feature_matrix_csv(const std::vector<data::Window>& windows,
                              const data::ChannelSchema& schema,
                              const std::string& path);

}  // namespace primkit::features
