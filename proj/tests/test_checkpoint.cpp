#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rfm/binio.hpp"
#include "rfm/checkpoint.hpp"
#include "rfm/errors.hpp"

using namespace rfm;

namespace {

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

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string tmp_path(const char* name) { return std::string("ckpt_test_") + name + ".bin"; }

}  // namespace

TEST_CASE("checkpoint round-trips config and parameters bitwise") {
    const auto cfg = micro_config();
    LayerParams params = init_estimator(cfg, 42);
    const std::string path = tmp_path("roundtrip");
    save_checkpoint(path, cfg, params);

    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.config == cfg);
    CHECK_FALSE(loaded.has_adam);
    REQUIRE(loaded.params.size() == params.size());
    for (const auto& [name, t] : params) {
        REQUIRE(loaded.params.count(name) == 1);
        const Tensor& lt = loaded.params.at(name);
        CHECK(lt.shape() == t.shape());
        CHECK(lt.requires_grad());
        for (long i = 0; i < t.size(); ++i) CHECK(lt.data()[i] == t.data()[i]);
    }
    std::remove(path.c_str());
}

TEST_CASE("identical state produces byte-identical checkpoint files") {
    const auto cfg = micro_config();
    LayerParams params = init_estimator(cfg, 7);
    const std::string a = tmp_path("bytes_a");
    const std::string b = tmp_path("bytes_b");
    save_checkpoint(a, cfg, params);
    save_checkpoint(b, cfg, params);
    CHECK(slurp(a) == slurp(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("checkpoint carries optimizer state when asked") {
    const auto cfg = micro_config();
    LayerParams params = init_estimator(cfg, 3);
    AdamState adam;
    adam_init(adam, params);
    // one synthetic update so the moments are non-trivial
    for (auto& [name, t] : params) {
        t.ensure_grad();
        for (long i = 0; i < t.size(); ++i) t.grad()[i] = 0.01f * static_cast<float>(i % 5 - 2);
    }
    AdamConfig acfg;
    adam_step(params, adam, acfg);

    const std::string path = tmp_path("adam");
    save_checkpoint(path, cfg, params, &adam);
    Checkpoint loaded = load_checkpoint(path);
    REQUIRE(loaded.has_adam);
    CHECK(loaded.adam.step == 1);
    for (const auto& [name, t] : params) {
        REQUIRE(loaded.adam.m.count(name) == 1);
        REQUIRE(loaded.adam.v.count(name) == 1);
        const auto& m = loaded.adam.m.at(name);
        const auto& v = loaded.adam.v.at(name);
        REQUIRE(m.size() == static_cast<size_t>(t.size()));
        for (size_t i = 0; i < m.size(); ++i) {
            CHECK(m[i] == adam.m.at(name)[i]);
            CHECK(v[i] == adam.v.at(name)[i]);
        }
    }
    // values must round-trip too
    for (const auto& [name, t] : params)
        for (long i = 0; i < t.size(); ++i) CHECK(loaded.params.at(name).data()[i] == t.data()[i]);
    std::remove(path.c_str());
}

TEST_CASE("loading rejects a wrong magic with a readable message") {
    const std::string path = tmp_path("magic");
    {
        std::ofstream out(path, std::ios::binary);
        out << "JUNKdata that is definitely not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    try {
        load_checkpoint(path);
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("RFCK") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("loading a truncated checkpoint reports truncation") {
    const auto cfg = micro_config();
    LayerParams params = init_estimator(cfg, 5);
    const std::string path = tmp_path("trunc");
    save_checkpoint(path, cfg, params);
    std::string bytes = slurp(path);
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<long>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    try {
        load_checkpoint(path);
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("a container without a config record is rejected") {
    const std::string path = tmp_path("noconfig");
    {
        std::ofstream out = binio::open_write(path);
        out << "RFCK";
        binio::put_u32(out, 1);  // version
        binio::put_u32(out, 0);  // no tensors at all
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("a parameter may not collide with the reserved config name") {
    const auto cfg = micro_config();
    LayerParams params;
    register_param(params, "config", {2});
    CHECK_THROWS_AS(save_checkpoint(tmp_path("reserved"), cfg, params), UsageError);
}

TEST_CASE("missing files surface as io errors") {
    CHECK_THROWS_AS(load_checkpoint("definitely_missing_dir/nope.bin"), IoError);
}
