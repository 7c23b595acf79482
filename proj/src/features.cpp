#include "primkit/features.hpp"

#include <cmath>

#include "primkit/csv.hpp"
#include "primkit/rng.hpp"

namespace primkit::features {

std::vector<float> compute_window_features(const data::Window& window) {
    const Eigen::Index c_total = window.block.rows();
    const Eigen::Index w = window.block.cols();
    if (w < 1) {
        throw Error("compute_window_features: empty window");
    }
    std::vector<float> out;
    out.reserve(size_t(c_total) * kStatsPerChannel);
    for (Eigen::Index c = 0; c < c_total; ++c) {
        double sum = 0, sq = 0;
        double mx = double(window.block(c, 0));
        double mn = mx;
        for (Eigen::Index t = 0; t < w; ++t) {
            const double v = double(window.block(c, t));
            sum += v;
            sq += v * v;
            mx = std::max(mx, v);
            mn = std::min(mn, v);
        }
        const double mean = sum / double(w);
        double var = sq / double(w) - mean * mean;
        if (var < 0) var = 0;
        out.push_back(float(mean));
        out.push_back(float(mx));
        out.push_back(float(mn));
        out.push_back(float(std::sqrt(var)));
        out.push_back(float(std::sqrt(sq / double(w))));
    }
    return out;
}

std::vector<std::string> feature_names(const data::ChannelSchema& schema) {
    std::vector<std::string> out;
    out.reserve(size_t(schema.size()) * kStatsPerChannel);
    for (const auto& ch : schema.channels()) {
        for (const char* stat : kStatNames) {
            out.push_back(ch.name + "_" + stat);
        }
    }
    return out;
}

uint64_t feature_order_hash(const data::ChannelSchema& schema) {
    std::string joined;
    for (const auto& name : feature_names(schema)) {
        joined += name;
        joined += '|';
    }
    return rng::fnv1a64(joined);
}

void write_feature_matrix_csv(const std::vector<data::Window>& windows,
                              const data::ChannelSchema& schema,
                              const std::string& path) {
    csv::Writer w(path);
    for (const auto& name : feature_names(schema)) w.field(name);
    w.field(std::string("label"));
    w.endrow();
    for (const auto& win : windows) {
        for (float v : compute_window_features(win)) w.field(v);
        w.field(std::string(data::primitive_name(win.label)));
        w.endrow();
    }
    w.close();
}

}  // namespace primkit::features
