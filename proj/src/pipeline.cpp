#include "primkit/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "primkit/csv.hpp"
#include "primkit/rng.hpp"

namespace fs = std::filesystem;

namespace primkit::data {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

constexpr std::array<const char*, kNumPrimitives> kPrimitiveNames = {
    "reach", "transport", "reposition", "stabilize", "idle"};

}  // namespace

const char* primitive_name(int label) {
    if (label == kUnlabeled) return "unlabeled";
    if (label < 0 || label >= kNumPrimitives) {
        throw Error("primitive_name: label " + std::to_string(label) +
                    " out of range");
    }
    return kPrimitiveNames[size_t(label)];
}

int parse_label(const std::string& s) {
    const std::string l = lower(s);
    for (int i = 0; i < kNumPrimitives; ++i) {
        if (l == kPrimitiveNames[size_t(i)]) return i;
    }
    if (l == "unlabeled") return kUnlabeled;
    throw ParseError("unknown label string '" + s + "'");
}

const char* physical_kind_name(PhysicalKind k) {
    switch (k) {
        case PhysicalKind::LinearAcceleration: return "linear_acceleration";
        case PhysicalKind::Quaternion: return "quaternion";
        case PhysicalKind::JointAngle: return "joint_angle";
        case PhysicalKind::TimeElapsed: return "time_elapsed";
        case PhysicalKind::PareticFlag: return "paretic_flag";
    }
    return "?";
}

PhysicalKind parse_physical_kind(const std::string& s) {
    const std::string l = lower(s);
    if (l == "linear_acceleration") return PhysicalKind::LinearAcceleration;
    if (l == "quaternion") return PhysicalKind::Quaternion;
    if (l == "joint_angle") return PhysicalKind::JointAngle;
    if (l == "time_elapsed") return PhysicalKind::TimeElapsed;
    if (l == "paretic_flag") return PhysicalKind::PareticFlag;
    throw ParseError("unknown physical kind '" + s + "'");
}

bool is_context_kind(PhysicalKind k) {
    return k == PhysicalKind::TimeElapsed || k == PhysicalKind::PareticFlag;
}

ChannelSchema::ChannelSchema(std::vector<ChannelDesc> channels,
                             int expected_sensor_dim)
    : channels_(std::move(channels)) {
    bool seen_context = false;
    std::map<std::string, int> seen;
    for (const auto& ch : channels_) {
        if (seen.count(ch.name)) {
            throw ConfigError("schema: duplicate channel name '" + ch.name + "'");
        }
        seen[ch.name] = 1;
        if (is_context_kind(ch.kind)) {
            seen_context = true;
        } else if (seen_context) {
            throw ConfigError("schema: sensor channel '" + ch.name +
                              "' appears after context channels");
        }
    }
    if (expected_sensor_dim >= 0 && sensor_count() != expected_sensor_dim) {
        throw ConfigError("schema: expected " +
                          std::to_string(expected_sensor_dim) +
                          " sensor channels, got " +
                          std::to_string(sensor_count()));
    }
}

int ChannelSchema::sensor_count() const {
    int n = 0;
    for (const auto& ch : channels_) {
        if (!is_context_kind(ch.kind)) ++n;
    }
    return n;
}

bool ChannelSchema::has_context() const {
    for (const auto& ch : channels_) {
        if (is_context_kind(ch.kind)) return true;
    }
    return false;
}

int ChannelSchema::index_of(const std::string& name) const {
    for (size_t i = 0; i < channels_.size(); ++i) {
        if (channels_[i].name == name) return int(i);
    }
    return -1;
}

std::vector<std::string> ChannelSchema::names() const {
    std::vector<std::string> out;
    out.reserve(channels_.size());
    for (const auto& ch : channels_) out.push_back(ch.name);
    return out;
}

uint64_t ChannelSchema::order_hash() const {
    std::string joined;
    for (const auto& ch : channels_) {
        joined += ch.name;
        joined += '|';
    }
    return rng::fnv1a64(joined);
}

ChannelSchema ChannelSchema::default_clinical() {
    std::vector<ChannelDesc> chs;
    const char* accel_sites[6] = {"c7", "t12", "pelvis", "arm", "forearm", "hand"};
    for (const char* site : accel_sites) {
        for (const char* axis : {"x", "y", "z"}) {
            chs.push_back({std::string("acc_") + site + "_" + axis,
                           PhysicalKind::LinearAcceleration, "m/s^2"});
        }
    }
    for (int imu = 0; imu < 9; ++imu) {
        for (const char* comp : {"w", "x", "y", "z"}) {
            chs.push_back({"quat_" + std::to_string(imu) + "_" + comp,
                           PhysicalKind::Quaternion, ""});
        }
    }
    for (int j = 0; j < 22; ++j) {
        chs.push_back({"angle_" + std::to_string(j), PhysicalKind::JointAngle,
                       "deg"});
    }
    return ChannelSchema(std::move(chs), 76);
}

ChannelSchema ChannelSchema::default_synthetic(int sensor_channels) {
    if (sensor_channels < 1) {
        throw ConfigError("schema: need at least one sensor channel");
    }
    std::vector<ChannelDesc> chs;
    for (int i = 0; i < sensor_channels; ++i) {
        PhysicalKind kind = PhysicalKind::LinearAcceleration;
        if (i % 3 == 1) kind = PhysicalKind::Quaternion;
        if (i % 3 == 2) kind = PhysicalKind::JointAngle;
        chs.push_back({"ch" + std::to_string(i), kind, ""});
    }
    return ChannelSchema(std::move(chs), sensor_channels);
}

const char* side_name(Side s) { return s == Side::Left ? "left" : "right"; }

Side parse_side(const std::string& s) {
    const std::string l = lower(s);
    if (l == "left" || l == "l") return Side::Left;
    if (l == "right" || l == "r") return Side::Right;
    throw ParseError("unknown paretic side '" + s + "'");
}

const char* impairment_name(Impairment i) {
    switch (i) {
        case Impairment::Mild: return "mild";
        case Impairment::Moderate: return "moderate";
        case Impairment::Severe: return "severe";
    }
    return "?";
}

Impairment impairment_band(int fma_score) {
    if (fma_score >= 53) return Impairment::Mild;
    if (fma_score >= 26) return Impairment::Moderate;
    return Impairment::Severe;
}

Recording load_recording(const std::string& path, const ChannelSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open recording " + path);

    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path + ": empty file, missing header");
    }
    const std::vector<std::string> header = csv::split_line(line);
    const std::vector<std::string> expected = schema.names();
    if (header.size() != expected.size() + 1 ||
        header.back() != "label") {
        throw ParseError(path + ": header must be the " +
                         std::to_string(expected.size()) +
                         " schema channels plus a final 'label' column");
    }
    for (size_t i = 0; i < expected.size(); ++i) {
        if (header[i] != expected[i]) {
            throw ParseError(path + ": header column " + std::to_string(i) +
                             " is '" + header[i] + "', schema expects '" +
                             expected[i] + "'");
        }
    }

    std::vector<float> cells;
    std::vector<int8_t> labels;
    size_t row = 1;
    const size_t c_total = expected.size();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = csv::split_line(line);
        if (fields.size() != c_total + 1) {
            throw ParseError(path + ": row " + std::to_string(row) + " has " +
                             std::to_string(fields.size()) + " columns, expected " +
                             std::to_string(c_total + 1));
        }
        for (size_t c = 0; c < c_total; ++c) {
            cells.push_back(float(csv::parse_number(fields[c], row, c, path)));
        }
        labels.push_back(int8_t(parse_label(fields[c_total])));
        ++row;
    }

    Recording rec;
    rec.schema = schema;
    const Eigen::Index t = Eigen::Index(labels.size());
    rec.values.resize(Eigen::Index(c_total), t);
    for (Eigen::Index i = 0; i < t; ++i) {
        for (Eigen::Index c = 0; c < Eigen::Index(c_total); ++c) {
            rec.values(c, i) = cells[size_t(i) * c_total + size_t(c)];
        }
    }
    rec.labels = std::move(labels);
    return rec;
}

void write_recording_csv(const Recording& rec, const std::string& path) {
    csv::Writer w(path);
    for (const auto& ch : rec.schema.channels()) w.field(ch.name);
    w.field(std::string("label"));
    w.endrow();
    for (Eigen::Index t = 0; t < rec.sample_count(); ++t) {
        for (Eigen::Index c = 0; c < rec.channel_count(); ++c) {
            w.field(rec.values(c, t));
        }
        w.field(std::string(primitive_name(rec.labels[size_t(t)])));
        w.endrow();
    }
    w.close();
}

Recording normalize_repetition(Recording rec) {
    const Eigen::Index t = rec.sample_count();
    if (t < 2) {
        throw Error("normalize_repetition: degenerate recording with T=" +
                    std::to_string(t) + " (need T >= 2)");
    }
    constexpr double kStdFloor = 1e-8;
    for (Eigen::Index c = 0; c < rec.channel_count(); ++c) {
        if (rec.schema.channels()[size_t(c)].kind == PhysicalKind::PareticFlag) {
            continue;
        }
        double sum = 0, sq = 0;
        for (Eigen::Index i = 0; i < t; ++i) {
            sum += double(rec.values(c, i));
            sq += double(rec.values(c, i)) * double(rec.values(c, i));
        }
        const double mean = sum / double(t);
        double var = sq / double(t) - mean * mean;
        if (var < 0) var = 0;
        const double sd = std::sqrt(var);
        const double div = sd < kStdFloor ? 1.0 : sd;
        for (Eigen::Index i = 0; i < t; ++i) {
            rec.values(c, i) = float((double(rec.values(c, i)) - mean) / div);
        }
    }
    return rec;
}

Recording attach_context(Recording rec, const PatientMeta& meta) {
    if (rec.schema.has_context()) {
        throw Error("attach_context: context channels already attached for " +
                    rec.patient_id);
    }
    const Eigen::Index c_old = rec.channel_count();
    const Eigen::Index t = rec.sample_count();

    std::vector<ChannelDesc> chs = rec.schema.channels();
    chs.push_back({"time_elapsed", PhysicalKind::TimeElapsed, "s"});
    chs.push_back({"paretic_side", PhysicalKind::PareticFlag, ""});
    rec.schema = ChannelSchema(std::move(chs));

    rec.values.conservativeResize(c_old + 2, t);
    const float flag = meta.paretic_side == Side::Right ? 1.0f : 0.0f;
    for (Eigen::Index i = 0; i < t; ++i) {
        rec.values(c_old, i) = float(double(i) / double(rec.sample_rate_hz));
        rec.values(c_old + 1, i) = flag;
    }
    return rec;
}

std::vector<Window> extract_windows(const Recording& rec, double window_seconds,
                                    int stride_samples, WindowStats* stats) {
    if (stride_samples < 1) {
        throw ConfigError("extract_windows: stride must be >= 1");
    }
    const int w = int(std::lround(window_seconds * rec.sample_rate_hz));
    if (w < 2) {
        throw ConfigError("extract_windows: window of " +
                          std::to_string(window_seconds) + " s is too short");
    }
    WindowStats local;
    std::vector<Window> out;
    const int t = int(rec.sample_count());
    const int half = w / 2;
    if (t < w) {
        local.too_short = 1;
        if (stats) *stats = local;
        return out;
    }
    // valid centers keep [c - W/2, c + W/2) inside the recording
    for (int c = half; c + w - half <= t; c += stride_samples) {
        const int label = rec.labels[size_t(c)];
        if (label == kUnlabeled) {
            ++local.skipped_unlabeled_center;
            continue;
        }
        Window win;
        win.source = &rec;
        win.center_index = c;
        win.label = label;
        win.block = rec.values.block(0, c - half, rec.channel_count(), w);
        win.step_labels.assign(rec.labels.begin() + (c - half),
                               rec.labels.begin() + (c - half) + w);
        out.push_back(std::move(win));
        ++local.n_windows;
    }
    if (stats) *stats = local;
    return out;
}

std::array<long, kNumPrimitives> class_distribution(
    const std::vector<Window>& windows) {
    std::array<long, kNumPrimitives> counts{};
    for (const auto& w : windows) {
        counts[size_t(w.label)] += 1;
    }
    return counts;
}

std::vector<Split> split_patients(std::vector<PatientMeta> metas, int n_splits,
                                  uint64_t seed) {
    if (n_splits < 2) {
        throw ConfigError("split_patients: need at least 2 splits, got " +
                          std::to_string(n_splits));
    }
    if (int(metas.size()) < n_splits) {
        throw ConfigError("split_patients: " + std::to_string(metas.size()) +
                          " patients cannot fill " + std::to_string(n_splits) +
                          " folds");
    }
    std::sort(metas.begin(), metas.end(),
              [](const PatientMeta& a, const PatientMeta& b) {
                  return a.patient_id < b.patient_id;
              });

    // strata keyed by (impairment band, paretic side), in a fixed order
    std::map<std::pair<int, int>, std::vector<std::string>> strata;
    for (const auto& m : metas) {
        strata[{int(m.impairment()), int(m.paretic_side)}].push_back(m.patient_id);
    }

    // One continuous round-robin across strata keeps each stratum balanced
    // to within one patient per fold and the overall fold sizes likewise.
    std::vector<std::vector<std::string>> folds(static_cast<size_t>(n_splits));
    size_t stratum_index = 0;
    size_t cursor = 0;
    for (auto& [key, ids] : strata) {
        rng::Stream rs(rng::derive(seed, "split", stratum_index++));
        rs.shuffle(ids);
        for (size_t i = 0; i < ids.size(); ++i) {
            folds[(cursor + i) % size_t(n_splits)].push_back(ids[i]);
        }
        cursor = (cursor + ids.size()) % size_t(n_splits);
    }

    std::vector<Split> out(static_cast<size_t>(n_splits));
    for (int k = 0; k < n_splits; ++k) {
        auto& split = out[size_t(k)];
        split.val_ids = folds[size_t(k)];
        std::sort(split.val_ids.begin(), split.val_ids.end());
        for (int j = 0; j < n_splits; ++j) {
            if (j == k) continue;
            split.train_ids.insert(split.train_ids.end(), folds[size_t(j)].begin(),
                                   folds[size_t(j)].end());
        }
        std::sort(split.train_ids.begin(), split.train_ids.end());
    }
    return out;
}

std::vector<PatientMeta> load_patient_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metadata " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty metadata file");
    const auto header = csv::split_line(line);
    if (header.size() != 3 || header[0] != "patient_id" ||
        header[1] != "paretic_side" || header[2] != "fma_score") {
        throw ParseError(path +
                         ": header must be patient_id,paretic_side,fma_score");
    }
    std::vector<PatientMeta> out;
    size_t row = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = csv::split_line(line);
        if (fields.size() != 3) {
            throw ParseError(path + ": row " + std::to_string(row) +
                             " has wrong column count");
        }
        PatientMeta m;
        m.patient_id = fields[0];
        m.paretic_side = parse_side(fields[1]);
        m.fma_score = int(csv::parse_number(fields[2], row, 2, path));
        if (m.fma_score < 0 || m.fma_score > 66) {
            throw ParseError(path + ": row " + std::to_string(row) +
                             " fma_score outside 0..66");
        }
        out.push_back(std::move(m));
        ++row;
    }
    return out;
}

void write_patient_metadata(const std::vector<PatientMeta>& metas,
                            const std::string& path) {
    csv::Writer w(path);
    w.field(std::string("patient_id"))
        .field(std::string("paretic_side"))
        .field(std::string("fma_score"));
    w.endrow();
    for (const auto& m : metas) {
        w.field(m.patient_id).field(std::string(side_name(m.paretic_side)));
        w.field(long(m.fma_score));
        w.endrow();
    }
    w.close();
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    if (!doc.contains("recordings") || !doc["recordings"].is_array()) {
        throw ParseError(path + ": manifest needs a 'recordings' array");
    }
    const fs::path base = fs::path(path).parent_path();
    std::vector<ManifestEntry> out;
    for (const auto& item : doc["recordings"]) {
        ManifestEntry e;
        e.patient_id = item.at("patient_id").get<std::string>();
        e.activity_id = item.at("activity_id").get<int>();
        e.repetition_index = item.at("repetition_index").get<int>();
        const fs::path p = item.at("path").get<std::string>();
        e.path = p.is_absolute() ? p.string() : (base / p).string();
        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path) {
    nlohmann::ordered_json doc;
    doc["recordings"] = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
        doc["recordings"].push_back({{"patient_id", e.patient_id},
                                     {"activity_id", e.activity_id},
                                     {"repetition_index", e.repetition_index},
                                     {"path", e.path}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open manifest " + path + " for writing");
    out << doc.dump(2) << "\n";
}

}  // namespace primkit::data
