#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "primkit/errors.hpp"

namespace primkit::data {

// The five functional primitives; dense label tracks additionally use
// kUnlabeled for timesteps without a primitive label.
enum Primitive : int {
    kReach = 0,
    kTransport = 1,
    kReposition = 2,
    kStabilize = 3,
    kIdle = 4,
};

inline constexpr int kNumPrimitives = 5;
inline constexpr int kUnlabeled = -1;
inline constexpr int kSampleRateHz = 100;

const char* primitive_name(int label);

// Case-insensitive; returns kUnlabeled for "unlabeled", throws ParseError
// on anything else.
int parse_label(const std::string& s);

enum class PhysicalKind {
    LinearAcceleration,
    Quaternion,
    JointAngle,
    TimeElapsed,
    PareticFlag,
};

const char* physical_kind_name(PhysicalKind k);
PhysicalKind parse_physical_kind(const std::string& s);
bool is_context_kind(PhysicalKind k);

struct ChannelDesc {
    std::string name;
    PhysicalKind kind = PhysicalKind::LinearAcceleration;
    std::string unit;
};

// Ordered channel list; sensor channels precede context channels and names
// are unique. expected_sensor_dim < 0 skips the sensor-count check.
class ChannelSchema {
public:
    ChannelSchema() = default;
    explicit ChannelSchema(std::vector<ChannelDesc> channels,
                           int expected_sensor_dim = -1);

    const std::vector<ChannelDesc>& channels() const { return channels_; }
    int size() const { return int(channels_.size()); }
    int sensor_count() const;
    bool has_context() const;
    int index_of(const std::string& name) const;  // -1 when absent
    std::vector<std::string> names() const;

    // schema identity for checkpoint/feature contracts
    uint64_t order_hash() const;

    // 76 sensor channels: 18 accelerations (6 IMUs), 36 quaternion
    // components (9 IMUs), 22 joint angles
    static ChannelSchema default_clinical();

    // compact schema for synthetic desk-scale experiments
    static ChannelSchema default_synthetic(int sensor_channels = 6);

private:
    std::vector<ChannelDesc> channels_;
};

enum class Side { Left, Right };

const char* side_name(Side s);
Side parse_side(const std::string& s);

enum class Impairment { Mild, Moderate, Severe };

const char* impairment_name(Impairment i);

// FMA bands: mild 53-65, moderate 26-52, severe 0-25 (scores above 65
// count as mild; the scale tops out at 66)
Impairment impairment_band(int fma_score);

struct PatientMeta {
    std::string patient_id;
    Side paretic_side = Side::Left;
    int fma_score = 0;

    Impairment impairment() const { return impairment_band(fma_score); }
};

// One activity repetition of one patient: channels x time sensor matrix
// plus a dense per-timestep label track.
struct Recording {
    std::string patient_id;
    int activity_id = 0;
    int repetition_index = 0;
    int sample_rate_hz = kSampleRateHz;
    ChannelSchema schema;
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
        values;                   // C x T
    std::vector<int8_t> labels;   // length T

    Eigen::Index channel_count() const { return values.rows(); }
    Eigen::Index sample_count() const { return values.cols(); }
};

// Fixed-length slice of a recording, labeled by the primitive at its
// center. The center sits at offset W/2 inside the block (left of center
// for even W). step_labels retains the per-timestep labels for
// window-composition analyses.
struct Window {
    const Recording* source = nullptr;
    int center_index = 0;
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
        block;  // C x W
    int label = kUnlabeled;
    std::vector<int8_t> step_labels;
};

// CSV layout: header row of channel names per schema plus a final `label`
// column; one row per 10 ms sample.
Recording load_recording(const std::string& path, const ChannelSchema& schema);
void write_recording_csv(const Recording& rec, const std::string& path);

// Mean-center every non-paretic-flag channel and divide by its population
// std over this repetition; channels with std below 1e-8 are centered only.
Recording normalize_repetition(Recording rec);

// Appends the time-elapsed channel (sample_index / 100 seconds) and the
// paretic flag channel (0 = left, 1 = right).
Recording attach_context(Recording rec, const PatientMeta& meta);

struct WindowStats {
    int n_windows = 0;
    int skipped_unlabeled_center = 0;
    int too_short = 0;
};

std::vector<Window> extract_windows(const Recording& rec,
                                    double window_seconds = 2.0,
                                    int stride_samples = 1,
                                    WindowStats* stats = nullptr);

std::array<long, kNumPrimitives> class_distribution(
    const std::vector<Window>& windows);

struct Split {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

// Patient-level partition stratified on (impairment band x paretic side):
// within each stratum patients are shuffled by seed and dealt round-robin
// to folds. Fold k validates on fold k and trains on the rest.
std::vector<Split> split_patients(std::vector<PatientMeta> metas, int n_splits,
                                  uint64_t seed);

std::vector<PatientMeta> load_patient_metadata(const std::string& path);
void write_patient_metadata(const std::vector<PatientMeta>& metas,
                            const std::string& path);

struct ManifestEntry {
    std::string patient_id;
    int activity_id = 0;
    int repetition_index = 0;
    std::string path;  // resolved against the manifest location on load
};

std::vector<ManifestEntry> load_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path);

}  // namespace primkit::data
