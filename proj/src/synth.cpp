#include "primkit/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "primkit/rng.hpp"

namespace fs = std::filesystem;

namespace primkit::synth {

using data::kNumPrimitives;

nlohmann::ordered_json SynthConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["n_train_patients"] = n_train_patients;
    j["n_heldout_patients"] = n_heldout_patients;
    j["recordings_per_patient"] = recordings_per_patient;
    j["recording_seconds"] = recording_seconds;
    j["sensor_channels"] = sensor_channels;
    j["duration_range_s"] = {duration_lo_s, duration_hi_s};
    j["noise_std"] = noise_std;
    j["idiosyncrasy"] = {{"enabled", idiosyncrasy},
                         {"scale_range", {idio_scale_lo, idio_scale_hi}},
                         {"offset_range", {idio_offset_lo, idio_offset_hi}}};
    j["shift"] = {{"enabled", shift},
                  {"scale_range", {shift_scale_lo, shift_scale_hi}},
                  {"offset_range", {shift_offset_lo, shift_offset_hi}}};
    j["primitive_weights"] = primitive_weights;
    j["template_distance_floor"] = template_distance_floor;
    return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    try {
        SynthConfig c;
        c.seed = j.value("seed", c.seed);
        c.n_train_patients = j.value("n_train_patients", c.n_train_patients);
        c.n_heldout_patients = j.value("n_heldout_patients", c.n_heldout_patients);
        c.recordings_per_patient =
            j.value("recordings_per_patient", c.recordings_per_patient);
        c.recording_seconds = j.value("recording_seconds", c.recording_seconds);
        c.sensor_channels = j.value("sensor_channels", c.sensor_channels);
        if (j.contains("duration_range_s")) {
            c.duration_lo_s = j["duration_range_s"].at(0).get<double>();
            c.duration_hi_s = j["duration_range_s"].at(1).get<double>();
        }
        c.noise_std = j.value("noise_std", c.noise_std);
        if (j.contains("idiosyncrasy")) {
            const auto& i = j["idiosyncrasy"];
            c.idiosyncrasy = i.value("enabled", c.idiosyncrasy);
            if (i.contains("scale_range")) {
                c.idio_scale_lo = i["scale_range"].at(0).get<double>();
                c.idio_scale_hi = i["scale_range"].at(1).get<double>();
            }
            if (i.contains("offset_range")) {
                c.idio_offset_lo = i["offset_range"].at(0).get<double>();
                c.idio_offset_hi = i["offset_range"].at(1).get<double>();
            }
        }
        if (j.contains("shift")) {
            const auto& s = j["shift"];
            c.shift = s.value("enabled", c.shift);
            if (s.contains("scale_range")) {
                c.shift_scale_lo = s["scale_range"].at(0).get<double>();
                c.shift_scale_hi = s["scale_range"].at(1).get<double>();
            }
            if (s.contains("offset_range")) {
                c.shift_offset_lo = s["offset_range"].at(0).get<double>();
                c.shift_offset_hi = s["offset_range"].at(1).get<double>();
            }
        }
        if (j.contains("primitive_weights")) {
            for (int k = 0; k < kNumPrimitives; ++k) {
                c.primitive_weights[size_t(k)] =
                    j["primitive_weights"].at(size_t(k)).get<double>();
            }
        }
        c.template_distance_floor =
            j.value("template_distance_floor", c.template_distance_floor);

        if (c.n_train_patients < 1 || c.n_heldout_patients < 0 ||
            c.recordings_per_patient < 1 || c.sensor_channels < 1) {
            throw ConfigError("synth config: counts must be positive");
        }
        if (c.duration_lo_s < 2.0 / data::kSampleRateHz ||
            c.duration_hi_s < c.duration_lo_s) {
            throw ConfigError("synth config: invalid primitive duration range");
        }
        if (c.recording_seconds * data::kSampleRateHz < 200) {
            throw ConfigError(
                "synth config: recordings must cover at least one window");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth config: ") + e.what());
    }
}

TemplateSet TemplateSet::build(const SynthConfig& config) {
    TemplateSet set;
    set.channels_ = config.sensor_channels;
    rng::Stream rs(rng::derive(config.seed, "templates"));
    for (int k = 0; k < kNumPrimitives; ++k) {
        set.params_[size_t(k)].resize(size_t(config.sensor_channels));
    }
    for (int c = 0; c < config.sensor_channels; ++c) {
        TemplateParams reach;
        reach.freq = rs.uniform(1.0, 1.4);
        reach.amp = rs.uniform(0.8, 1.2);
        reach.ramp = rs.uniform(0.6, 1.0);
        reach.offset = rs.uniform(-0.3, 0.3);
        reach.phase = rs.uniform(0, 2 * std::numbers::pi);

        // transport mirrors reach with an opposed trend
        TemplateParams transport;
        transport.freq = reach.freq + rs.uniform(-0.08, 0.08);
        transport.amp = reach.amp * rs.uniform(0.85, 1.15);
        transport.ramp = -rs.uniform(0.6, 1.0);
        transport.offset = reach.offset + rs.uniform(-0.1, 0.1);
        transport.phase = rs.uniform(0, 2 * std::numbers::pi);

        TemplateParams reposition;
        reposition.freq = rs.uniform(2.4, 3.0);
        reposition.amp = rs.uniform(0.7, 1.1);
        reposition.ramp = 0;
        reposition.offset = rs.uniform(-0.3, 0.3);
        reposition.phase = rs.uniform(0, 2 * std::numbers::pi);

        // stabilize and idle are near-constant with distinct offsets
        TemplateParams stabilize;
        stabilize.freq = rs.uniform(0.3, 0.6);
        stabilize.amp = rs.uniform(0.05, 0.10);
        stabilize.ramp = 0;
        stabilize.offset = rs.uniform(0.5, 0.9);
        stabilize.phase = rs.uniform(0, 2 * std::numbers::pi);

        TemplateParams idle;
        idle.freq = rs.uniform(0.3, 0.6);
        idle.amp = rs.uniform(0.05, 0.10);
        idle.ramp = 0;
        idle.offset = stabilize.offset - rs.uniform(0.25, 0.45);
        idle.phase = rs.uniform(0, 2 * std::numbers::pi);

        set.params_[data::kReach][size_t(c)] = reach;
        set.params_[data::kTransport][size_t(c)] = transport;
        set.params_[data::kReposition][size_t(c)] = reposition;
        set.params_[data::kStabilize][size_t(c)] = stabilize;
        set.params_[data::kIdle][size_t(c)] = idle;
    }
    for (int a = 0; a < kNumPrimitives; ++a) {
        for (int b = a + 1; b < kNumPrimitives; ++b) {
            if (set.pair_distance(a, b) < config.template_distance_floor) {
                throw ConfigError(
                    std::string("synth: templates for ") +
                    data::primitive_name(a) + " and " + data::primitive_name(b) +
                    " fall below the distance floor");
            }
        }
    }
    return set;
}

double TemplateSet::value(int primitive, int channel, double t_global,
                          double t_local) const {
    const TemplateParams& p = params_[size_t(primitive)][size_t(channel)];
    return p.offset +
           p.amp * std::sin(2 * std::numbers::pi * p.freq * t_global + p.phase) +
           p.ramp * t_local;
}

double TemplateSet::pair_distance(int a, int b) const {
    double total = 0;
    const int grid = 200;
    for (int c = 0; c < channels_; ++c) {
        double sq = 0;
        for (int i = 0; i < grid; ++i) {
            const double t = double(i) / data::kSampleRateHz;
            const double d = value(a, c, t, t) - value(b, c, t, t);
            sq += d * d;
        }
        total += std::sqrt(sq / grid);
    }
    return total / channels_;
}

namespace {

std::vector<ScriptSegment> make_script(const SynthConfig& config,
                                       rng::Stream& rs, int total_samples) {
    std::vector<ScriptSegment> script;
    int remaining = total_samples;
    double weight_sum = 0;
    for (double w : config.primitive_weights) weight_sum += w;
    while (remaining > 0) {
        const double u = rs.uniform() * weight_sum;
        double acc = 0;
        int primitive = kNumPrimitives - 1;
        for (int k = 0; k < kNumPrimitives; ++k) {
            acc += config.primitive_weights[size_t(k)];
            if (u < acc) {
                primitive = k;
                break;
            }
        }
        int n = int(std::lround(rs.uniform(config.duration_lo_s,
                                           config.duration_hi_s) *
                                data::kSampleRateHz));
        n = std::max(2, std::min(n, remaining));
        // avoid a trailing sliver shorter than the minimum duration
        if (remaining - n > 0 && remaining - n < 2) n = remaining;
        script.push_back({primitive, n});
        remaining -= n;
    }
    return script;
}

struct ChannelAffine {
    double scale = 1;
    double offset = 0;
};

}  // namespace

GeneratedPatient generate_patient(const SynthConfig& config, int patient_index,
                                  bool heldout) {
    const TemplateSet templates = TemplateSet::build(config);
    const int c_sensor = config.sensor_channels;
    const int t_total =
        int(std::lround(config.recording_seconds * data::kSampleRateHz));

    GeneratedPatient out;
    {
        rng::Stream rs(rng::derive(config.seed, "meta", uint64_t(patient_index)));
        char id[16];
        std::snprintf(id, sizeof(id), "P%03d", patient_index);
        out.meta.patient_id = id;
        out.meta.paretic_side =
            patient_index % 2 == 0 ? data::Side::Left : data::Side::Right;
        // shifted held-out cohorts mirror the severely impaired test set
        out.meta.fma_score = heldout && config.shift
                                 ? int(rs.uniform_int(8, 25))
                                 : int(rs.uniform_int(26, 65));
    }

    std::vector<ChannelAffine> affine(size_t(c_sensor));
    if (config.idiosyncrasy) {
        rng::Stream rs(rng::derive(config.seed, "idio", uint64_t(patient_index)));
        for (auto& a : affine) {
            a.scale = rs.uniform(config.idio_scale_lo, config.idio_scale_hi);
            a.offset = rs.uniform(config.idio_offset_lo, config.idio_offset_hi);
        }
    }
    if (heldout && config.shift) {
        rng::Stream rs(rng::derive(config.seed, "shift", uint64_t(patient_index)));
        for (auto& a : affine) {
            const double s = rs.uniform(config.shift_scale_lo, config.shift_scale_hi);
            const double o =
                rs.uniform(config.shift_offset_lo, config.shift_offset_hi);
            a.scale *= s;
            a.offset = a.offset * s + o;
        }
    }

    const data::ChannelSchema schema =
        data::ChannelSchema::default_synthetic(c_sensor);
    for (int r = 0; r < config.recordings_per_patient; ++r) {
        rng::Stream script_rs(rng::derive(
            config.seed, "script", uint64_t(patient_index) * 1000 + uint64_t(r)));
        rng::Stream noise_rs(rng::derive(
            config.seed, "noise", uint64_t(patient_index) * 1000 + uint64_t(r)));
        const std::vector<ScriptSegment> script =
            make_script(config, script_rs, t_total);

        data::Recording rec;
        rec.patient_id = out.meta.patient_id;
        rec.activity_id = r;
        rec.repetition_index = 0;
        rec.schema = schema;
        rec.values.resize(c_sensor, t_total);
        rec.labels.resize(size_t(t_total));

        int at = 0;
        for (const auto& seg : script) {
            for (int i = 0; i < seg.n_samples; ++i, ++at) {
                const double t_global = double(at) / data::kSampleRateHz;
                const double t_local = double(i) / data::kSampleRateHz;
                rec.labels[size_t(at)] = int8_t(seg.primitive);
                for (int c = 0; c < c_sensor; ++c) {
                    double v = templates.value(seg.primitive, c, t_global, t_local);
                    v += config.noise_std * noise_rs.normal();
                    v = affine[size_t(c)].scale * v + affine[size_t(c)].offset;
                    rec.values(c, at) = float(v);
                }
            }
        }
        out.recordings.push_back(std::move(rec));
        out.scripts.push_back(script);
    }
    return out;
}

DatasetPaths generate_dataset(const SynthConfig& config,
                              const std::string& out_dir) {
    DatasetPaths paths;
    paths.root = out_dir;
    const fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root / "recordings", ec);
    if (ec) {
        throw IoError("cannot create output directory " +
                      (root / "recordings").string() + ": " + ec.message());
    }

    std::vector<data::PatientMeta> metas;
    std::vector<data::ManifestEntry> train_entries, heldout_entries;
    std::array<std::array<long, kNumPrimitives>, 2> samples_per_primitive{};

    const int total_patients = config.n_train_patients + config.n_heldout_patients;
    for (int p = 0; p < total_patients; ++p) {
        const bool heldout = p >= config.n_train_patients;
        GeneratedPatient gen = generate_patient(config, p, heldout);
        metas.push_back(gen.meta);
        for (size_t r = 0; r < gen.recordings.size(); ++r) {
            const auto& rec = gen.recordings[r];
            const std::string rel = "recordings/" + gen.meta.patient_id + "_a" +
                                    std::to_string(rec.activity_id) + "_r" +
                                    std::to_string(rec.repetition_index) + ".csv";
            data::write_recording_csv(rec, (root / rel).string());
            data::ManifestEntry entry{gen.meta.patient_id, rec.activity_id,
                                      rec.repetition_index, rel};
            (heldout ? heldout_entries : train_entries).push_back(entry);
            for (int8_t l : rec.labels) {
                samples_per_primitive[heldout ? 1 : 0][size_t(l)]++;
            }
        }
    }

    paths.metadata = (root / "metadata.csv").string();
    data::write_patient_metadata(metas, paths.metadata);
    paths.train_manifest = (root / "manifest_train.json").string();
    data::write_manifest(train_entries, paths.train_manifest);
    paths.heldout_manifest = (root / "manifest_heldout.json").string();
    data::write_manifest(heldout_entries, paths.heldout_manifest);

    nlohmann::ordered_json summary;
    summary["config"] = config.to_json();
    for (int cohort = 0; cohort < 2; ++cohort) {
        const char* key = cohort == 0 ? "train" : "heldout";
        long total = 0;
        for (long v : samples_per_primitive[size_t(cohort)]) total += v;
        nlohmann::ordered_json shares;
        for (int k = 0; k < kNumPrimitives; ++k) {
            shares[data::primitive_name(k)] = {
                {"samples", samples_per_primitive[size_t(cohort)][size_t(k)]},
                {"share", total ? double(samples_per_primitive[size_t(cohort)]
                                                              [size_t(k)]) /
                                      double(total)
                                : 0.0}};
        }
        summary[key] = {{"total_samples", total},
                        {"per_primitive", shares}};
    }
    const TemplateSet templates = TemplateSet::build(config);
    nlohmann::ordered_json distances;
    for (int a = 0; a < kNumPrimitives; ++a) {
        for (int b = a + 1; b < kNumPrimitives; ++b) {
            distances[std::string(data::primitive_name(a)) + "-" +
                      data::primitive_name(b)] = templates.pair_distance(a, b);
        }
    }
    summary["template_distances"] = distances;

    paths.summary = (root / "summary.json").string();
    std::ofstream sf(paths.summary);
    if (!sf) throw IoError("cannot write " + paths.summary);
    sf << summary.dump(2) << "\n";
    return paths;
}

}  // namespace primkit::synth
