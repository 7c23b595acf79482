#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "primkit/checkpoint.hpp"
#include "primkit/training.hpp"

using namespace primkit;
using namespace primkit::arch;
using namespace primkit::train;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("primkit_ckpt_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string dir(const std::string& name) const {
        return (path / name).string();
    }
};

// windows with class-dependent signal content; easily separable
std::vector<data::Window> make_labeled_windows(int n_per_class, int channels,
                                               int w, uint64_t seed,
                                               double noise = 0.05) {
    rng::Stream rs(seed);
    std::vector<data::Window> out;
    for (int k = 0; k < 5; ++k) {
        for (int i = 0; i < n_per_class; ++i) {
            data::Window win;
            win.label = k;
            win.block.resize(channels, w);
            for (int c = 0; c < channels; ++c) {
                for (int t = 0; t < w; ++t) {
                    const double base =
                        std::sin(0.1 * double(t) * (k + 1) + c) + 0.4 * k;
                    win.block(c, t) = float(base + noise * rs.normal());
                }
            }
            win.step_labels.assign(size_t(w), int8_t(k));
            out.push_back(std::move(win));
        }
    }
    return out;
}

ModelSpec tiny_cnn_spec(int channels = 3) {
    ModelSpec spec;
    spec.family = Family::Cnn;
    spec.cnn_depth = 6;
    spec.cnn_base_width = 8;
    spec.norm = NormKind::Instance;
    for (int i = 0; i < channels; ++i) {
        spec.input_names.push_back("ch" + std::to_string(i));
    }
    return spec;
}

std::vector<nn::ArrayRef<double>> single_param(Tensor<double>& value,
                                               Tensor<double>& grad) {
    return {{"x", &value, &grad}};
}

}  // namespace

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
    TensorD x({3}, {1.0, -2.0, 0.5});
    TensorD g({3});
    auto params = single_param(x, g);
    Adam<double> opt(params);
    for (int i = 0; i < 10; ++i) opt.step(params, 1.25e-4);
    CHECK(x[0] == 1.0);
    CHECK(x[1] == -2.0);
    CHECK(x[2] == 0.5);
}

TEST_CASE("adam first step moves by about -lr * sign(g)") {
    TensorD x({1}, {1.0});
    TensorD g({1}, {0.5});
    auto params = single_param(x, g);
    Adam<double> opt(params);
    opt.step(params, 1.25e-4);
    CHECK(x[0] == doctest::Approx(1.0 - 1.25e-4).epsilon(1e-6));
}

TEST_CASE("adam rejects NaN gradients naming the parameter") {
    TensorD x({1}, {1.0});
    TensorD g({1}, {std::nan("")});
    auto params = single_param(x, g);
    Adam<double> opt(params);
    CHECK_THROWS_WITH_AS(opt.step(params, 1e-3), doctest::Contains("x"),
                         NumericError);
}

TEST_CASE("adam trajectory on x^2 matches an independent reference") {
    // textbook Adam written out separately
    double ref_x = 1.0, m = 0, v = 0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05;

    TensorD x({1}, {1.0});
    TensorD g({1});
    auto params = single_param(x, g);
    Adam<double> opt(params);

    for (int t = 1; t <= 100; ++t) {
        const double ref_g = 2.0 * ref_x;
        m = b1 * m + (1 - b1) * ref_g;
        v = b2 * v + (1 - b2) * ref_g * ref_g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        ref_x -= lr * mhat / (std::sqrt(vhat) + eps);

        g[0] = 2.0 * x[0];
        opt.step(params, lr);
        CHECK(std::abs(x[0] - ref_x) < 1e-10);
    }
}

TEST_CASE("learning rate halves on the configured period") {
    TrainConfig cfg;
    cfg.lr0 = 1.25e-4;
    cfg.lr_halving_period = 20;
    CHECK(lr_at(0, cfg) == 1.25e-4);
    CHECK(lr_at(19, cfg) == 1.25e-4);
    CHECK(lr_at(20, cfg) == doctest::Approx(1.25e-4 / 2));
    CHECK(lr_at(45, cfg) == doctest::Approx(1.25e-4 / 4));

    TrainConfig lstm_cfg = TrainConfig::defaults_for(Family::Lstm);
    CHECK(lstm_cfg.lr_halving_period == 10);
    CHECK(lstm_cfg.clip_norm == 5);
    CHECK(lr_at(10, lstm_cfg) == doctest::Approx(kDefaultLr0 / 2));

    double prev = lr_at(0, cfg);
    for (int e = 1; e < 200; ++e) {
        const double cur = lr_at(e, cfg);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("training loss is non-increasing over the first steps (majority)") {
    int good_seeds = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto windows = make_labeled_windows(4, 3, 24, seed);
        auto built = build_model<float>(tiny_cnn_spec(), seed);
        auto data = ModelData::for_spec(built.spec, windows);
        std::vector<long> idx;
        for (long i = 0; i < data.size(); ++i) idx.push_back(i);
        const TensorF x = data.batch(idx);

        auto& params = built.graph.params();
        Adam<float> opt(params);
        built.graph.set_mode(nn::Mode::Train);
        bool monotone = true;
        double prev = 1e99;
        for (int step = 0; step < 5; ++step) {
            const auto head = nn::softmax_cross_entropy(
                built.graph.forward(x), data.labels());
            if (head.loss > prev + 1e-9) monotone = false;
            prev = head.loss;
            built.graph.zero_grads();
            built.graph.backward(head.dlogits);
            opt.step(params, kDefaultLr0);
        }
        if (monotone) ++good_seeds;
    }
    CHECK(good_seeds >= 6);
}

TEST_CASE("fit rejects empty train or validation sets") {
    auto windows = make_labeled_windows(2, 3, 24, 1);
    auto built = build_model<float>(tiny_cnn_spec(), 1);
    auto data = ModelData::for_spec(built.spec, windows);
    auto empty = ModelData::for_spec(built.spec, {});
    TrainConfig cfg;
    CHECK_THROWS_AS(fit(built, data, empty, cfg), ConfigError);
    CHECK_THROWS_AS(fit(built, empty, data, cfg), ConfigError);
}

TEST_CASE("fit with patience 0 stops after the first non-improving epoch") {
    auto train_w = make_labeled_windows(6, 3, 24, 2);
    auto val_w = make_labeled_windows(2, 3, 24, 3);
    auto built = build_model<float>(tiny_cnn_spec(), 4);
    auto train_d = ModelData::for_spec(built.spec, train_w);
    auto val_d = ModelData::for_spec(built.spec, val_w);
    TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.early_stop_patience = 0;
    cfg.batch_size = 16;
    auto result = fit(built, train_d, val_d, cfg);
    // ran until the first epoch whose accuracy failed to improve
    REQUIRE(result.epochs_run >= 1);
    if (result.epochs_run < cfg.max_epochs) {
        const auto& last = result.history.back();
        CHECK(last.val_accuracy <= result.best_val_accuracy);
        CHECK(result.best_epoch < last.epoch);
    }
}

TEST_CASE("early stopping returns the best validation accuracy seen") {
    auto train_w = make_labeled_windows(6, 3, 24, 5);
    auto val_w = make_labeled_windows(3, 3, 24, 6);
    auto built = build_model<float>(tiny_cnn_spec(), 7);
    auto train_d = ModelData::for_spec(built.spec, train_w);
    auto val_d = ModelData::for_spec(built.spec, val_w);
    TrainConfig cfg;
    cfg.max_epochs = 12;
    cfg.early_stop_patience = 3;
    cfg.batch_size = 10;
    auto result = fit(built, train_d, val_d, cfg);
    double best_seen = 0;
    for (const auto& e : result.history) {
        best_seen = std::max(best_seen, e.val_accuracy);
    }
    CHECK(result.best_val_accuracy == best_seen);
    // the restored model reproduces the best-epoch accuracy
    CHECK(evaluate_accuracy(built, val_d) ==
          doctest::Approx(result.best_val_accuracy));
}

TEST_CASE("two fits with the same seed are bit-identical") {
    auto train_w = make_labeled_windows(5, 3, 24, 8);
    auto val_w = make_labeled_windows(2, 3, 24, 9);
    TrainConfig cfg;
    cfg.max_epochs = 4;
    cfg.batch_size = 8;
    cfg.seed = 77;

    auto run = [&](std::vector<TensorF>& arrays_out) {
        auto built = build_model<float>(tiny_cnn_spec(), 123);
        auto train_d = ModelData::for_spec(built.spec, train_w);
        auto val_d = ModelData::for_spec(built.spec, val_w);
        auto result = fit(built, train_d, val_d, cfg);
        arrays_out = built.graph.snapshot_arrays();
        return result;
    };
    std::vector<TensorF> a, b;
    auto ra = run(a);
    auto rb = run(b);
    CHECK(ra.best_epoch == rb.best_epoch);
    CHECK(ra.best_val_accuracy == rb.best_val_accuracy);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        for (Index k = 0; k < a[i].numel(); ++k) {
            CHECK(a[i][k] == b[i][k]);
        }
    }
}

TEST_CASE("fcnn overfits separable statistics quickly") {
    auto windows = make_labeled_windows(10, 3, 24, 10, 0.02);
    ModelSpec spec;
    spec.family = Family::Fcnn;
    spec.fcnn_depth = 2;
    spec.fcnn_width = 32;
    spec.fcnn_dropout = 0.0;
    for (const auto& name :
         features::feature_names(data::ChannelSchema::default_synthetic(3))) {
        spec.input_names.push_back(name);
    }
    auto built = build_model<float>(spec, 3);
    auto data = ModelData::for_spec(spec, windows);
    TrainConfig cfg;
    cfg.max_epochs = 60;
    cfg.batch_size = 16;
    cfg.lr0 = 3e-3;
    cfg.early_stop_patience = 60;
    fit(built, data, data, cfg);
    CHECK(evaluate_accuracy(built, data) >= 0.95);
}

TEST_CASE("checkpoint round-trip reproduces predictions bit-exactly") {
    TempDir tmp;
    auto windows = make_labeled_windows(3, 3, 24, 11);
    ModelSpec spec = tiny_cnn_spec();
    spec.norm = NormKind::Batch;
    auto built = build_model<float>(spec, 5);
    auto data = ModelData::for_spec(spec, windows);

    // give batch norm real running statistics before eval-mode use
    auto train_d = ModelData::for_spec(spec, windows);
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.batch_size = 8;
    fit(built, train_d, train_d, cfg);

    const Eigen::MatrixXd before = predict_proba_all(built, data);
    CheckpointMeta meta{2, 0.5, 5};
    save_checkpoint(built, meta, tmp.dir("model"));
    LoadedModel loaded = load_checkpoint(tmp.dir("model"));
    const Eigen::MatrixXd after = predict_proba_all(loaded.model, data);
    CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.meta.epoch == 2);
    CHECK(loaded.meta.seed == 5);
    CHECK(loaded.model.spec.input_hash() == spec.input_hash());
}

TEST_CASE("checkpoint version tampering is rejected") {
    TempDir tmp;
    auto built = build_model<float>(tiny_cnn_spec(), 5);
    save_checkpoint(built, {}, tmp.dir("m"));

    // bump the version field in place
    const std::string mf = tmp.dir("m") + "/manifest.json";
    std::ifstream in(mf);
    nlohmann::json j;
    in >> j;
    in.close();
    j["format_version"] = 999;
    std::ofstream out(mf);
    out << j.dump(2);
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.dir("m")),
                         doctest::Contains("version"), Error);
}

TEST_CASE("truncated params.bin is a format error") {
    TempDir tmp;
    auto built = build_model<float>(tiny_cnn_spec(), 5);
    save_checkpoint(built, {}, tmp.dir("m"));
    const std::string pf = tmp.dir("m") + "/params.bin";
    fs::resize_file(pf, fs::file_size(pf) / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.dir("m")),
                         doctest::Contains("truncated"), Error);
}

TEST_CASE("forest checkpoints round-trip and are kind-tagged") {
    TempDir tmp;
    rng::Stream rs(3);
    forest::FeatureMatrix x(40, 4);
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
        for (int f = 0; f < 4; ++f) x(i, f) = float(rs.normal());
        y.push_back(int(rs.uniform_int(0, 4)));
    }
    forest::ForestConfig cfg;
    cfg.n_trees = 5;
    cfg.seed = 9;
    auto fitted = forest::fit_forest(x, y, cfg, 1);
    std::vector<std::string> names = {"a", "b", "c", "d"};
    save_forest_checkpoint(fitted, names, {}, tmp.dir("f"));

    CHECK(checkpoint_kind(tmp.dir("f")) == "forest");
    auto loaded = load_forest_checkpoint(tmp.dir("f"));
    CHECK(loaded.feature_names == names);
    const auto before = forest::forest_predict_proba(fitted, x);
    const auto after = forest::forest_predict_proba(loaded.forest, x);
    CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);

    // family mismatch: forest checkpoint loaded as a neural model
    CHECK_THROWS_AS(load_checkpoint(tmp.dir("f")), ContractError);
}
