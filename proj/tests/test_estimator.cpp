#include <cmath>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "rfm/estimator.hpp"

using namespace rfm;
using rfmtest::gradcheck;
using rfmtest::pattern_tensor;

namespace {

EstimatorConfig tiny_config() {
    EstimatorConfig cfg;
    cfg.latent_dim = 4;
    cfg.cond_dim = 8;
    cfg.hidden_dim = 64;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.ffn_dim = 128;
    cfg.max_seq_len = 64;
    cfg.regulate_ratio = 2;
    return cfg;
}

EstimatorConfig micro_config() {
    EstimatorConfig cfg;
    cfg.latent_dim = 2;
    cfg.cond_dim = 3;
    cfg.hidden_dim = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ffn_dim = 8;
    cfg.max_seq_len = 8;
    cfg.regulate_ratio = 2;
    return cfg;
}

Tensor pattern_f32(std::vector<int> shape, double scale = 1.0, double phase = 0.0) {
    Tensor t(std::move(shape));
    for (long i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(scale * std::sin(0.7 * i + phase + 0.3));
    return t;
}

}  // namespace

TEST_CASE("length_regulate duplicates rows in place") {
    auto c = Tensor::from_vector({3, 1}, {1, 2, 3});
    auto out = length_regulate<float>(nullptr, c, 2);
    CHECK(out.shape() == std::vector<int>{6, 1});
    CHECK(out.value() == std::vector<float>{1, 1, 2, 2, 3, 3});

    auto same = length_regulate<float>(nullptr, c, 1);
    CHECK(same.value() == c.value());

    auto wide = length_regulate<float>(nullptr, Tensor::from_vector({3, 2}, {1, 2, 3, 4, 5, 6}), 4);
    CHECK(wide.shape() == std::vector<int>{12, 2});
    for (int i = 0; i < 4; ++i) {
        CHECK(wide.data()[i * 2 + 0] == 1.0f);
        CHECK(wide.data()[i * 2 + 1] == 2.0f);
    }
    CHECK_THROWS_AS(length_regulate<float>(nullptr, c, 0), ConfigError);
}

TEST_CASE("sinusoid embedding endpoints and determinism") {
    const int H = 16;
    auto at0 = sinusoid_embed<float>(0.0, H);
    for (int i = 0; i < H / 2; ++i) {
        CHECK(at0.data()[i] == 0.0f);
        CHECK(at0.data()[H / 2 + i] == 1.0f);
    }
    auto at1 = sinusoid_embed<float>(1.0, H);
    double dist = 0;
    for (int i = 0; i < H; ++i) {
        const double d = at1.data()[i] - at0.data()[i];
        dist += d * d;
    }
    CHECK(dist > 0.0);

    auto again = sinusoid_embed<float>(1.0, H);
    CHECK(at1.value() == again.value());

    CHECK_THROWS_AS(sinusoid_embed<float>(-0.1, H), DomainError);
    CHECK_THROWS_AS(sinusoid_embed<float>(1.1, H), DomainError);
}

TEST_CASE("fuse concatenates channels and checks alignment") {
    auto a = pattern_f32({8, 4}, 1.0, 0.0);
    auto b = Tensor({8, 4});
    auto out = fuse<float>(nullptr, a, b);
    CHECK(out.shape() == std::vector<int>{8, 8});
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 4; ++c) {
            CHECK(out.data()[r * 8 + c] == a.data()[r * 4 + c]);
            CHECK(out.data()[r * 8 + 4 + c] == 0.0f);
        }

    // swapping two rows of both inputs swaps the same output rows
    auto a2 = pattern_f32({8, 4}, 1.0, 0.0);
    auto b2 = pattern_f32({8, 4}, 1.0, 5.0);
    auto base = fuse<float>(nullptr, a2, b2);
    auto swap_rows = [](Tensor t, int i, int j) {
        for (int c = 0; c < t.dim(1); ++c)
            std::swap(t.data()[i * t.dim(1) + c], t.data()[j * t.dim(1) + c]);
        return t;
    };
    auto swapped = fuse<float>(nullptr, swap_rows(a2, 1, 5), swap_rows(b2, 1, 5));
    for (int c = 0; c < 8; ++c) {
        CHECK(swapped.data()[1 * 8 + c] == base.data()[5 * 8 + c]);
        CHECK(swapped.data()[5 * 8 + c] == base.data()[1 * 8 + c]);
    }

    CHECK_THROWS_AS(fuse<float>(nullptr, Tensor({8, 4}), Tensor({6, 4})), AlignmentError);
}

TEST_CASE("fresh estimator with zero-initialized head outputs zero") {
    auto cfg = tiny_config();
    auto params = init_estimator(cfg, 7);
    auto x = pattern_f32({12, cfg.latent_dim}, 0.8, 0.1);
    auto c = pattern_f32({6, cfg.cond_dim}, 0.9, 0.7);
    auto v = estimator_forward<float>(nullptr, params, cfg, x, 0.3, c, false);
    CHECK(v.shape() == std::vector<int>{12, 4});
    for (long i = 0; i < v.size(); ++i) CHECK(v.data()[i] == 0.0f);
}

TEST_CASE("forward is a pure deterministic function") {
    auto cfg = tiny_config();
    auto params = init_estimator(cfg, 7);
    // break the zero head so the output is nontrivial
    params.at("head.w").data()[0] = 0.05f;
    params.at("head.w").data()[17] = -0.03f;
    auto x = pattern_f32({12, cfg.latent_dim}, 0.8, 0.1);
    auto c = pattern_f32({6, cfg.cond_dim}, 0.9, 0.7);
    auto v1 = estimator_forward<float>(nullptr, params, cfg, x, 0.3, c, false);
    auto v2 = estimator_forward<float>(nullptr, params, cfg, x, 0.3, c, false);
    CHECK(v1.value() == v2.value());

    // null flag behaves exactly like an explicit zero condition tensor
    auto vnull = estimator_forward<float>(nullptr, params, cfg, x, 0.3, c, true);
    auto vzero = estimator_forward<float>(nullptr, params, cfg, x, 0.3, Tensor({6, cfg.cond_dim}),
                                          false);
    CHECK(vnull.value() == vzero.value());
}

TEST_CASE("forward validates shapes, capacity, and time domain") {
    auto cfg = tiny_config();
    auto params = init_estimator(cfg, 7);
    auto x = Tensor({12, cfg.latent_dim});
    auto c = Tensor({6, cfg.cond_dim});
    CHECK_THROWS_AS(
        estimator_forward<float>(nullptr, params, cfg, Tensor({13, cfg.latent_dim}), 0.5, c, false),
        AlignmentError);
    CHECK_THROWS_AS(
        estimator_forward<float>(nullptr, params, cfg, Tensor({12, 3}), 0.5, c, false), ShapeError);
    CHECK_THROWS_AS(
        estimator_forward<float>(nullptr, params, cfg, Tensor({66, cfg.latent_dim}), 0.5,
                                 Tensor({33, cfg.cond_dim}), false),
        CapacityError);
    CHECK_THROWS_AS(estimator_forward<float>(nullptr, params, cfg, x, 1.5, c, false), DomainError);
}

TEST_CASE("parameter count matches the live parameter map and frozen oracle") {
    auto cfg = tiny_config();
    auto params = init_estimator(cfg, 3);
    CHECK(param_count(params) == count_params(cfg));
    // frozen by an independent shape-walking script before the build
    CHECK(count_params(cfg) == 153284);

    auto zero_layers = cfg;
    zero_layers.layers = 0;
    CHECK(count_params(zero_layers) == 20804);

    // depth is linear: each extra layer adds exactly one block
    auto deeper = cfg;
    deeper.layers = 3;
    CHECK(count_params(deeper) - count_params(cfg) == 66240);

    auto micro = micro_config();
    auto micro_params = init_estimator(micro, 3);
    CHECK(param_count(micro_params) == count_params(micro));
    CHECK(count_params(micro) == 1174);
}

TEST_CASE("estimator config validation rejects bad settings") {
    auto cfg = tiny_config();
    cfg.hidden_dim = 63;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.heads = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.ffn_dim = 32;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.cross_attention = true;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("estimator config JSON round trip and strictness") {
    auto cfg = tiny_config();
    auto text = estimator_config_to_json(cfg);
    auto back = estimator_config_from_json(text);
    CHECK(back == cfg);
    CHECK_THROWS_AS(estimator_config_from_json("{\"hidden_dim\": 64, \"bogus\": 1}"), ConfigError);
    CHECK_THROWS_AS(estimator_config_from_json("not json"), ConfigError);
    CHECK_THROWS_AS(estimator_config_from_json("{\"hidden_dim\": \"x\"}"), ConfigError);
}

TEST_CASE("end-to-end estimator gradient check on the micro config") {
    auto cfg = micro_config();
    Rng root(21);
    Rng stream = root.fork(Stream::ParamInit);
    auto pf = init_estimator<float>(cfg, stream);
    // zero head hides gradients behind a zero output; nudge it off zero
    {
        auto& hw = pf.at("head.w");
        for (long i = 0; i < hw.size(); ++i)
            hw.data()[i] = static_cast<float>(0.05 * std::sin(0.9 * i + 0.2));
    }
    auto base = cast_params<double>(pf);
    base.emplace("input.x", pattern_tensor({4, cfg.latent_dim}, 0.9, 0.25, false));
    base.emplace("input.c", pattern_tensor({2, cfg.cond_dim}, 0.8, 1.5, false));
    base.emplace("input.target", pattern_tensor({4, cfg.latent_dim}, 0.7, 2.5, false));

    auto res = gradcheck(
        [cfg](auto* g, auto& p) {
            auto v = estimator_forward(g, p, cfg, p.at("input.x"), 0.37, p.at("input.c"), false);
            return ops::mse(g, v, p.at("input.target"));
        },
        base);
    CHECK(res.max_rel64 < 1e-6);
    CHECK(res.max_rel32 < 1e-2);
}
