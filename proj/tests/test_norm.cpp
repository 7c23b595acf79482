#include <cmath>

#include "doctest.h"
#include "primkit/norm.hpp"
#include "primkit/rng.hpp"

using namespace primkit;
using namespace primkit::nn;

TEST_CASE("batch norm train normalizes one channel over the batch") {
    // batch values [1,2,3]: population mean 2, std sqrt(2/3)
    BatchNorm<double> bn(1, kNormMomentum, 0.0);
    bn.set_mode(Mode::Train);
    TensorD x({3, 1}, {1, 2, 3});
    TensorD y = bn.forward(x);
    CHECK(y(0, 0) == doctest::Approx(-1.2247448714).epsilon(1e-9));
    CHECK(y(1, 0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(y(2, 0) == doctest::Approx(1.2247448714).epsilon(1e-9));
}

TEST_CASE("batch norm gamma collapse yields beta everywhere") {
    BatchNorm<float> bn(2);
    bn.gamma().set_zero();
    bn.beta() = TensorF({2}, {0.75f, -0.25f});
    bn.set_mode(Mode::Train);
    rng::Stream rs(4);
    TensorF x({4, 2});
    for (Index i = 0; i < x.numel(); ++i) x[i] = float(rs.normal());
    TensorF y = bn.forward(x);
    for (Index b = 0; b < 4; ++b) {
        CHECK(y(b, 0) == 0.75f);
        CHECK(y(b, 1) == -0.25f);
    }
}

TEST_CASE("batch norm eval with standard-normal running stats is identity") {
    BatchNorm<float> bn(1);
    bn.set_mode(Mode::Train);
    TensorF warm({2, 1}, {-1, 1});
    bn.forward(warm);  // marks statistics initialized
    bn.running_mean().set_zero();
    bn.running_var() = TensorF::full({1}, 1.0f);
    bn.set_mode(Mode::Eval);
    TensorF x({3, 1}, {0.5f, -2.0f, 4.0f});
    TensorF y = bn.forward(x);
    for (Index i = 0; i < 3; ++i) {
        CHECK(double(y[i]) == doctest::Approx(double(x[i])).epsilon(1e-4));
    }
}

TEST_CASE("batch norm eval before any train pass errors") {
    BatchNorm<float> bn(1);
    bn.set_mode(Mode::Eval);
    TensorF x({2, 1}, {0, 1});
    CHECK_THROWS_AS(bn.forward(x), ContractError);
}

TEST_CASE("batch norm train mode rejects batch of one") {
    BatchNorm<float> bn(1);
    bn.set_mode(Mode::Train);
    CHECK_THROWS_AS(bn.forward(TensorF({1, 1}, {3})), ShapeError);
}

TEST_CASE("batch norm duplicated batch normalizes duplicates identically") {
    BatchNorm<float> bn(3);
    bn.set_mode(Mode::Train);
    rng::Stream rs(21);
    const Index n = 5;
    TensorF x({2 * n, 3});
    for (Index b = 0; b < n; ++b) {
        for (Index c = 0; c < 3; ++c) {
            const float v = float(rs.normal());
            x(b, c) = v;
            x(b + n, c) = v;
        }
    }
    TensorF y = bn.forward(x);
    for (Index b = 0; b < n; ++b) {
        for (Index c = 0; c < 3; ++c) {
            CHECK(y(b, c) == y(b + n, c));
        }
    }
}

TEST_CASE("batch norm running mean converges to the data mean") {
    // 1000 train batches of N(mu, sigma^2); EMA must land within 0.05 sigma
    const double mu = 3.0, sigma = 2.0;
    BatchNorm<double> bn(2);
    bn.set_mode(Mode::Train);
    rng::Stream rs(1234);
    for (int step = 0; step < 1000; ++step) {
        TensorD x({128, 2});
        for (Index i = 0; i < x.numel(); ++i) {
            x[i] = mu + sigma * rs.normal();
        }
        bn.forward(x);
    }
    for (Index c = 0; c < 2; ++c) {
        CHECK(std::abs(bn.running_mean()[c] - mu) < 0.05 * sigma);
        CHECK(bn.running_var()[c] > 0.0);
    }
}

TEST_CASE("batch norm eval output diverges from train output after shift") {
    // running statistics reflect the training distribution, so a shifted
    // batch is normalized differently in eval mode than in train mode
    BatchNorm<float> bn(1);
    bn.set_mode(Mode::Train);
    rng::Stream rs(8);
    for (int step = 0; step < 200; ++step) {
        TensorF x({32, 1});
        for (Index i = 0; i < 32; ++i) x[i] = float(rs.normal());
        bn.forward(x);
    }
    TensorF shifted({32, 1});
    for (Index i = 0; i < 32; ++i) shifted[i] = float(5.0 + rs.normal());

    bn.set_mode(Mode::Train);
    TensorF train_out = bn.forward(shifted);
    bn.set_mode(Mode::Eval);
    TensorF eval_out = bn.forward(shifted);

    double max_gap = 0;
    for (Index i = 0; i < 32; ++i) {
        max_gap = std::max(max_gap, std::abs(double(train_out[i]) - double(eval_out[i])));
    }
    CHECK(max_gap > 1.0);
}

TEST_CASE("instance norm normalizes each channel of each example over time") {
    InstanceNorm<double> in(1, 0.0);
    TensorD x({1, 1, 3}, {1, 2, 3});
    TensorD y = in.forward(x);
    CHECK(y(0, 0, 0) == doctest::Approx(-1.2247448714).epsilon(1e-9));
    CHECK(y(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(y(0, 0, 2) == doctest::Approx(1.2247448714).epsilon(1e-9));
}

TEST_CASE("instance norm flattens a constant channel") {
    InstanceNorm<float> in(1);
    TensorF x = TensorF::full({1, 1, 4}, 5.0f);
    TensorF y = in.forward(x);
    for (Index t = 0; t < 4; ++t) {
        CHECK(std::abs(y(0, 0, t)) < 1e-4f);
    }
}

TEST_CASE("instance norm pre-affine statistics are standard") {
    InstanceNorm<double> in(3);
    rng::Stream rs(31);
    TensorD x({4, 3, 50});
    for (Index i = 0; i < x.numel(); ++i) x[i] = 2.0 + 3.0 * rs.normal();
    TensorD y = in.forward(x);
    for (Index b = 0; b < 4; ++b) {
        for (Index c = 0; c < 3; ++c) {
            double sum = 0, sq = 0;
            for (Index t = 0; t < 50; ++t) {
                sum += y(b, c, t);
                sq += y(b, c, t) * y(b, c, t);
            }
            const double mean = sum / 50;
            const double sd = std::sqrt(sq / 50 - mean * mean);
            CHECK(std::abs(mean) < 1e-6);
            CHECK(std::abs(sd - 1.0) < 1e-4);
        }
    }
}

TEST_CASE("instance norm behaves identically in train and eval mode") {
    InstanceNorm<float> in(2);
    rng::Stream rs(77);
    TensorF x({2, 2, 20});
    for (Index i = 0; i < x.numel(); ++i) x[i] = float(rs.normal());
    in.set_mode(Mode::Train);
    TensorF a = in.forward(x);
    in.set_mode(Mode::Eval);
    TensorF b = in.forward(x);
    for (Index i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("instance norm rejects a single-sample window") {
    InstanceNorm<float> in(1);
    CHECK_THROWS_WITH_AS(in.forward(TensorF({1, 1, 1}, {2})),
                         doctest::Contains("degenerate"), ShapeError);
}

TEST_CASE("norm layers keep parameter shapes interchangeable") {
    // swapping batch for instance norm changes no parameter shapes
    BatchNorm<float> bn(6);
    InstanceNorm<float> in(6);
    std::vector<ArrayRef<float>> pb, pi;
    bn.collect_params("n", pb);
    in.collect_params("n", pi);
    REQUIRE(pb.size() == pi.size());
    for (size_t i = 0; i < pb.size(); ++i) {
        CHECK(pb[i].value->shape() == pi[i].value->shape());
    }
    // checkpoints differ only by the absence of running statistics
    std::vector<ArrayRef<float>> sb, si;
    bn.collect_state("n", sb);
    in.collect_state("n", si);
    CHECK(sb.size() == 3);
    CHECK(si.empty());
}
