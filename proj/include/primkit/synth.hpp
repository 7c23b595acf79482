#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "primkit/pipeline.hpp"

namespace primkit::synth {

// Oracle-labeled generator: scripted primitive sequences rendered as
// multi-channel signals with per-patient idiosyncrasy and an optional
// per-channel affine distribution shift for the held-out cohort.
struct SynthConfig {
    uint64_t seed = 7;
    int n_train_patients = 20;
    int n_heldout_patients = 5;
    int recordings_per_patient = 2;
    double recording_seconds = 20.0;
    int sensor_channels = 6;

    double duration_lo_s = 0.4;
    double duration_hi_s = 3.0;
    double noise_std = 0.05;

    // per-patient per-channel affine drawn once per patient
    bool idiosyncrasy = true;
    double idio_scale_lo = 0.8, idio_scale_hi = 1.25;
    double idio_offset_lo = -0.5, idio_offset_hi = 0.5;

    // held-out cohort per-channel affine; the mechanism that makes
    // batch-norm running statistics wrong at test time
    bool shift = false;
    double shift_scale_lo = 0.5, shift_scale_hi = 2.0;
    double shift_offset_lo = -1.0, shift_offset_hi = 1.0;

    std::array<double, data::kNumPrimitives> primitive_weights = {
        0.20, 0.20, 0.15, 0.20, 0.25};
    double template_distance_floor = 0.05;

    nlohmann::ordered_json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

// Per-(primitive, channel) signal parameters. Each primitive renders as
// offset + amp*sin(2*pi*freq*t + phase) + ramp*t_local; reach/transport
// share frequency bands (opposed ramps) and idle/stabilize are
// near-constant with distinct offsets, mirroring the confusable pairs.
struct TemplateParams {
    double offset = 0;
    double amp = 0;
    double freq = 0;
    double phase = 0;
    double ramp = 0;
};

class TemplateSet {
public:
    TemplateSet() = default;
    static TemplateSet build(const SynthConfig& config);

    double value(int primitive, int channel, double t_global,
                 double t_local) const;
    const TemplateParams& params(int primitive, int channel) const {
        return params_[size_t(primitive)][size_t(channel)];
    }
    // RMS distance between two primitives' noiseless signals, averaged
    // over channels on a 2-second grid
    double pair_distance(int a, int b) const;

private:
    int channels_ = 0;
    std::array<std::vector<TemplateParams>, data::kNumPrimitives> params_;
};

struct ScriptSegment {
    int primitive = 0;
    int n_samples = 0;
};

struct GeneratedPatient {
    data::PatientMeta meta;
    std::vector<data::Recording> recordings;
    std::vector<std::vector<ScriptSegment>> scripts;  // per recording
};

// Deterministic in (config.seed, patient_index); heldout patients draw the
// shift affine when config.shift is on.
GeneratedPatient generate_patient(const SynthConfig& config, int patient_index,
                                  bool heldout);

struct DatasetPaths {
    std::string root;
    std::string train_manifest;
    std::string heldout_manifest;
    std::string metadata;
    std::string summary;
};

// Writes recordings/metadata in the pipeline formats plus a ground-truth
// summary (per-primitive time shares per cohort) for oracle tests.
DatasetPaths generate_dataset(const SynthConfig& config,
                              const std::string& out_dir);

}  // namespace primkit::synth
