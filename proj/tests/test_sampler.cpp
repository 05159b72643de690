#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "rfm/errors.hpp"
#include "rfm/sampler.hpp"

using namespace rfm;

namespace {

FieldEval constant_field(std::vector<float> v, std::vector<int> shape) {
    return FieldEval([v = std::move(v), shape = std::move(shape)](const Tensor&, double, bool) {
        return Tensor::from_vector(shape, v);
    });
}

// dx/dt = x, so x(1) = e * x(0)
FieldEval identity_field() {
    return FieldEval([](const Tensor& x, double, bool) {
        return Tensor::from_vector(x.shape(), x.value());
    });
}

SolverConfig euler_cfg(int steps, bool record = false) {
    SolverConfig s;
    s.kind = SolverKind::Euler;
    s.steps = steps;
    s.record_trajectory = record;
    return s;
}

SolverConfig dopri_cfg(double tol, bool record = false) {
    SolverConfig s;
    s.kind = SolverKind::Dopri5;
    s.rtol = tol;
    s.atol = tol;
    s.record_trajectory = record;
    return s;
}

GuidanceConfig no_guidance() {
    GuidanceConfig g;
    g.gamma = 1.0;
    return g;
}

}  // namespace

TEST_CASE("euler with a constant field lands exactly on x0 plus the field") {
    Tensor x0 = Tensor::from_vector({2}, {1.0f, 1.0f});
    auto f = constant_field({2.0f, -4.0f}, {2});
    auto res = euler_solve(f, x0, euler_cfg(4), no_guidance());
    CHECK(res.x1.value() == std::vector<float>{3.0f, -3.0f});
    CHECK(res.field_evals == 4);
}

TEST_CASE("a single euler step is one full evaluation at t zero") {
    Tensor x0 = Tensor::from_vector({3}, {1.0f, -2.0f, 0.5f});
    auto f = identity_field();
    auto res = euler_solve(f, x0, euler_cfg(1), no_guidance());
    // x1 = x0 + 1.0 * v(x0, 0) = 2 * x0 exactly
    CHECK(res.x1.value() == std::vector<float>{2.0f, -4.0f, 1.0f});
    CHECK(res.field_evals == 1);
}

TEST_CASE("euler converges to the exponential on the linear field") {
    Tensor x0 = Tensor::from_vector({1}, {1.0f});
    auto f = identity_field();
    auto res = euler_solve(f, x0, euler_cfg(512), no_guidance());
    const double rel = std::abs(res.x1.value()[0] - M_E) / M_E;
    CHECK(rel < 0.005);
    CHECK(res.field_evals == 512);
}

TEST_CASE("dopri5 integrates a constant field in a single accepted step") {
    Tensor x0 = Tensor::from_vector({2}, {0.5f, -1.0f});
    auto f = constant_field({3.0f, 2.0f}, {2});
    auto res = dopri5_solve(f, x0, dopri_cfg(1e-5), no_guidance());
    CHECK(res.x1.value()[0] == doctest::Approx(3.5f).epsilon(1e-6));
    CHECK(res.x1.value()[1] == doctest::Approx(1.0f).epsilon(1e-6));
    // one initial evaluation plus six stages for the only step
    CHECK(res.field_evals == 7);
}

TEST_CASE("dopri5 hits the exponential to tolerance on the linear field") {
    Tensor x0 = Tensor::from_vector({1}, {1.0f});
    auto f = identity_field();
    auto res = dopri5_solve(f, x0, dopri_cfg(1e-6), no_guidance());
    CHECK(std::abs(res.x1.value()[0] - M_E) < 1e-4);
    // evaluations come in batches of six after the initial one
    CHECK((res.field_evals - 1) % 6 == 0);
    CHECK(res.field_evals >= 7);
}

TEST_CASE("tightening dopri5 tolerances never hurts accuracy") {
    Tensor x0 = Tensor::from_vector({1}, {1.0f});
    double prev = 1e9;
    long prev_evals = 0;
    for (double tol : {1e-2, 1e-3, 1e-4, 1e-5}) {
        auto f = identity_field();
        auto res = dopri5_solve(f, x0, dopri_cfg(tol), no_guidance());
        const double err = std::abs(res.x1.value()[0] - M_E);
        // allow the single-precision quantization floor of the output
        CHECK(err <= prev + 1e-6);
        CHECK(res.field_evals >= prev_evals);
        prev = err;
        prev_evals = res.field_evals;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("guidance at gamma one never queries the null branch") {
    auto f = FieldEval([](const Tensor& x, double, bool null_cond) {
        REQUIRE_FALSE(null_cond);
        return Tensor::from_vector(x.shape(), x.value());
    });
    Tensor x0 = Tensor::from_vector({2}, {1.0f, 2.0f});
    GuidanceConfig g;
    g.gamma = 1.0;
    auto res = euler_solve(f, x0, euler_cfg(8), g);
    CHECK(res.field_evals == 8);

    GuidanceConfig off;
    off.gamma = 4.5;
    off.enabled = false;
    auto f2 = FieldEval([](const Tensor& x, double, bool null_cond) {
        REQUIRE_FALSE(null_cond);
        return Tensor::from_vector(x.shape(), x.value());
    });
    auto res2 = euler_solve(f2, x0, euler_cfg(8), off);
    CHECK(res2.x1.value() == res.x1.value());
    CHECK(res2.field_evals == 8);
}

TEST_CASE("guided sampling doubles the evaluation count") {
    Tensor x0 = Tensor::from_vector({2}, {0.2f, -0.1f});
    auto f = FieldEval([](const Tensor& x, double t, bool null_cond) {
        std::vector<float> v(x.size());
        for (size_t i = 0; i < v.size(); ++i)
            v[i] = null_cond ? -0.2f * x.value()[i] + 1.0f
                             : 0.3f * x.value()[i] + static_cast<float>(t);
        return Tensor::from_vector(x.shape(), v);
    });
    GuidanceConfig g;
    g.gamma = 4.5;
    auto res = euler_solve(f, x0, euler_cfg(25), g);
    CHECK(res.field_evals == 50);
}

TEST_CASE("guided euler equals a hand-built combination of both branches") {
    const double gamma = 2.5;
    auto branch = [](const Tensor& x, double t, bool null_cond) {
        std::vector<float> v(x.size());
        for (size_t i = 0; i < v.size(); ++i)
            v[i] = null_cond ? -0.2f * x.value()[i] + 1.0f
                             : 0.3f * x.value()[i] + static_cast<float>(t);
        return Tensor::from_vector(x.shape(), v);
    };
    auto f = FieldEval(branch);
    Tensor x0 = Tensor::from_vector({3}, {0.4f, -0.8f, 1.2f});
    GuidanceConfig g;
    g.gamma = gamma;
    const int steps = 7;
    auto res = euler_solve(f, x0, euler_cfg(steps), g);

    // replay the same grid, combining the branches with the same arithmetic
    std::vector<float> x = x0.value();
    const float dt = static_cast<float>(1.0 / steps);
    const float wc = static_cast<float>(gamma);
    const float wn = static_cast<float>(1.0 - gamma);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        Tensor xt = Tensor::from_vector({3}, x);
        Tensor vc = branch(xt, t, false);
        Tensor vn = branch(xt, t, true);
        for (size_t i = 0; i < x.size(); ++i)
            x[i] += dt * (wc * vc.value()[i] + wn * vn.value()[i]);
    }
    CHECK(res.x1.value() == x);
}

TEST_CASE("trajectories record the grid and stay within the snapshot budget") {
    Tensor x0 = Tensor::from_vector({2}, {1.0f, 0.0f});
    auto f = identity_field();
    auto res = euler_solve(f, x0, euler_cfg(10, true), no_guidance());
    const auto& traj = res.trajectory;
    REQUIRE(traj.times.size() == 11);
    REQUIRE(traj.states.size() == 11);
    REQUIRE(traj.fields.size() == 10);
    CHECK(traj.times.front() == 0.0);
    CHECK(traj.times.back() == 1.0);
    for (size_t i = 1; i < traj.times.size(); ++i) CHECK(traj.times[i] > traj.times[i - 1]);

    auto f2 = identity_field();
    auto big = euler_solve(f2, x0, euler_cfg(600, true), no_guidance());
    CHECK(big.trajectory.times.size() <= 256);
    CHECK(big.trajectory.states.size() == big.trajectory.times.size());
    CHECK(big.trajectory.fields.size() == big.trajectory.times.size() - 1);
    CHECK(big.trajectory.times.front() == 0.0);
    CHECK(big.trajectory.times.back() == 1.0);
}

TEST_CASE("dopri5 records its accepted nodes when asked") {
    Tensor x0 = Tensor::from_vector({1}, {1.0f});
    auto f = identity_field();
    auto res = dopri5_solve(f, x0, dopri_cfg(1e-6, true), no_guidance());
    const auto& traj = res.trajectory;
    REQUIRE(traj.times.size() >= 2);
    CHECK(traj.states.size() == traj.times.size());
    CHECK(traj.fields.size() == traj.times.size() - 1);
    CHECK(traj.times.front() == 0.0);
    CHECK(traj.times.back() == 1.0);
    for (size_t i = 1; i < traj.times.size(); ++i) CHECK(traj.times[i] > traj.times[i - 1]);
}

TEST_CASE("straightness is zero for a straight path and for a degenerate one") {
    Trajectory straight;
    straight.times = {0.0, 0.5, 1.0};
    straight.states = {Tensor::from_vector({1}, {0.0f}), Tensor::from_vector({1}, {0.5f}),
                       Tensor::from_vector({1}, {1.0f})};
    straight.fields = {Tensor::from_vector({1}, {1.0f}), Tensor::from_vector({1}, {1.0f})};
    CHECK(straightness(straight) == 0.0);

    // out and back: the endpoints coincide, so the metric is zero by convention
    Trajectory loop;
    loop.times = {0.0, 0.5, 1.0};
    loop.states = {Tensor::from_vector({1}, {0.0f}), Tensor::from_vector({1}, {0.5f}),
                   Tensor::from_vector({1}, {0.0f})};
    loop.fields = {Tensor::from_vector({1}, {1.0f}), Tensor::from_vector({1}, {-1.0f})};
    CHECK(straightness(loop) == 0.0);
}

TEST_CASE("straightness of a two-speed path matches the hand value") {
    // v = +2 for the first half, 0 for the second: displacement 1, both
    // segments deviate by 1, so the mean normalized deviation is 1
    Trajectory traj;
    traj.times = {0.0, 0.5, 1.0};
    traj.states = {Tensor::from_vector({1}, {0.0f}), Tensor::from_vector({1}, {1.0f}),
                   Tensor::from_vector({1}, {1.0f})};
    traj.fields = {Tensor::from_vector({1}, {2.0f}), Tensor::from_vector({1}, {0.0f})};
    CHECK(straightness(traj) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("straightness requires at least two recorded states") {
    Trajectory traj;
    traj.times = {0.0};
    traj.states = {Tensor::from_vector({1}, {0.0f})};
    CHECK_THROWS_AS(straightness(traj), UsageError);
}

TEST_CASE("a field that goes non-finite aborts with the failing step") {
    auto f = FieldEval([](const Tensor& x, double t, bool) {
        std::vector<float> v(x.size(), t > 0.5 ? NAN : 1.0f);
        return Tensor::from_vector(x.shape(), v);
    });
    Tensor x0 = Tensor::from_vector({1}, {0.0f});
    CHECK_THROWS_AS(euler_solve(f, x0, euler_cfg(10), no_guidance()), NumericError);
    auto f2 = FieldEval([](const Tensor& x, double t, bool) {
        std::vector<float> v(x.size(), t > 0.5 ? NAN : 1.0f);
        return Tensor::from_vector(x.shape(), v);
    });
    try {
        euler_solve(f2, x0, euler_cfg(10), no_guidance());
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 6") != std::string::npos);
    }
}

TEST_CASE("a hopelessly stiff field stops with a stiffness error") {
    // the error estimate never passes, so the step collapses
    auto f = FieldEval([](const Tensor& x, double t, bool) {
        std::vector<float> v(x.size());
        for (size_t i = 0; i < v.size(); ++i) v[i] = t < 0.5 ? 1e18f : -1e18f;
        // make the stages disagree wildly at any h
        for (size_t i = 0; i < v.size(); ++i) v[i] += std::sin(t * 1e12) * 1e18f;
        return Tensor::from_vector(x.shape(), v);
    });
    Tensor x0 = Tensor::from_vector({1}, {0.0f});
    SolverConfig s = dopri_cfg(1e-12);
    CHECK_THROWS_AS(dopri5_solve(f, x0, s, no_guidance()), StiffnessError);
}

TEST_CASE("trajectory csv export writes one row per snapshot") {
    Tensor x0 = Tensor::from_vector({2}, {1.0f, -1.0f});
    auto f = constant_field({1.0f, 2.0f}, {2});
    auto res = euler_solve(f, x0, euler_cfg(5, true), no_guidance());
    const std::string path = "traj_test.csv";
    export_trajectory_csv(res.trajectory, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,d0,d1");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6);
    std::remove(path.c_str());
    CHECK_THROWS_AS(export_trajectory_csv(res.trajectory, "no_such_dir/t.csv"), IoError);
}

TEST_CASE("solver configs reject nonsense") {
    SolverConfig s;
    s.kind = SolverKind::Euler;
    s.steps = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = dopri_cfg(1e-5);
    s.rtol = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("solving is deterministic across repeated runs") {
    Tensor x0 = Tensor::from_vector({2}, {0.3f, 0.7f});
    GuidanceConfig g;
    g.gamma = 3.0;
    auto make = [] {
        return FieldEval([](const Tensor& x, double t, bool null_cond) {
            std::vector<float> v(x.size());
            for (size_t i = 0; i < v.size(); ++i)
                v[i] = std::sin(static_cast<float>(t) * 3.0f + x.value()[i]) *
                       (null_cond ? 0.5f : 1.3f);
            return Tensor::from_vector(x.shape(), v);
        });
    };
    auto fa = make();
    auto fb = make();
    auto ra = solve(fa, x0, dopri_cfg(1e-6), g);
    auto rb = solve(fb, x0, dopri_cfg(1e-6), g);
    CHECK(ra.x1.value() == rb.x1.value());
    CHECK(ra.field_evals == rb.field_evals);

    auto fc = make();
    auto fd = make();
    auto rc = solve(fc, x0, euler_cfg(17), g);
    auto rd = solve(fd, x0, euler_cfg(17), g);
    CHECK(rc.x1.value() == rd.x1.value());
}
