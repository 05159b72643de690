#include "rfm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "rfm/errors.hpp"

namespace rfm {

std::string solver_name(SolverKind kind) {
    return kind == SolverKind::Euler ? "euler" : "dopri5";
}

SolverKind solver_from_name(const std::string& name) {
    if (name == "euler") return SolverKind::Euler;
    if (name == "dopri5") return SolverKind::Dopri5;
    throw ConfigError("solver: unknown kind \"" + name + "\" (expected \"euler\" or \"dopri5\")");
}

void SolverConfig::validate() const {
    if (kind == SolverKind::Euler && steps < 1)
        throw ConfigError("solver: steps must be >= 1, got " + std::to_string(steps));
    if (kind == SolverKind::Dopri5 && (rtol <= 0.0 || atol <= 0.0))
        throw ConfigError("solver: rtol and atol must be positive");
}

void GuidanceConfig::validate() const {
    if (enabled && !std::isfinite(gamma))
        throw ConfigError("guidance: gamma must be finite");
}

namespace {

Tensor clone_tensor(const Tensor& a) { return Tensor::from_vector(a.shape(), a.value()); }

void require_field_shape(const Tensor& v, const Tensor& x) {
    if (v.shape() != x.shape())
        throw ShapeError("solver: field produced shape " + shape_str(v.shape()) +
                         " for state of shape " + shape_str(x.shape()));
}

void require_finite(const Tensor& x, const std::string& what, int step) {
    for (float v : x.value())
        if (!std::isfinite(v))
            throw NumericError("solver: non-finite " + what + " at step " + std::to_string(step));
}

constexpr size_t kMaxSnapshots = 256;

// uniform thinning that keeps the first and last snapshot; the field entry
// recorded with each kept non-final node is kept alongside it
void thin_trajectory(Trajectory& traj) {
    const size_t n = traj.times.size();
    if (n <= kMaxSnapshots) return;
    Trajectory out;
    for (size_t j = 0; j < kMaxSnapshots; ++j) {
        const size_t i = (j * (n - 1)) / (kMaxSnapshots - 1);
        out.times.push_back(traj.times[i]);
        out.states.push_back(traj.states[i]);
        if (j + 1 < kMaxSnapshots && i < traj.fields.size()) out.fields.push_back(traj.fields[i]);
    }
    traj = std::move(out);
}

std::vector<double> widen(const Tensor& t) {
    std::vector<double> out(t.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = t.value()[i];
    return out;
}

Tensor narrow(const std::vector<int>& shape, const std::vector<double>& x) {
    std::vector<float> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i]);
    return Tensor::from_vector(shape, out);
}

}  // namespace

FieldEval estimator_field(const LayerParams& params, const EstimatorConfig& cfg,
                          const ConditionSeq& c) {
    // the parameter map holds shared handles, so copying it is cheap and
    // pins the tensors for the lifetime of the field
    LayerParams p = params;
    return FieldEval([p = std::move(p), cfg, c](const Tensor& x, double t, bool null_cond) {
        ConditionSeq cs = c;
        cs.null_flag = c.null_flag || null_cond;
        return estimator_forward(nullptr, p, cfg, LatentSeq{x}, t, cs);
    });
}

Tensor guided_eval(FieldEval& f, const Tensor& x, double t, const GuidanceConfig& g) {
    const double gamma = g.effective_gamma();
    if (gamma == 1.0) return f(x, t, false);
    Tensor vc = f(x, t, false);
    Tensor vn = f(x, t, true);
    require_field_shape(vn, vc);
    const float wc = static_cast<float>(gamma);
    const float wn = static_cast<float>(1.0 - gamma);
    std::vector<float> out(vc.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = wc * vc.value()[i] + wn * vn.value()[i];
    return Tensor::from_vector(vc.shape(), out);
}

SolveResult euler_solve(FieldEval& f, const Tensor& x0, const SolverConfig& s,
                        const GuidanceConfig& g) {
    s.validate();
    g.validate();
    const long evals_before = f.evals();
    const int steps = s.steps;
    const float dt = static_cast<float>(1.0 / steps);

    SolveResult res;
    Tensor x = clone_tensor(x0);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        Tensor v = guided_eval(f, x, t, g);
        require_field_shape(v, x);
        require_finite(v, "field value", k);
        if (s.record_trajectory) {
            res.trajectory.times.push_back(t);
            res.trajectory.states.push_back(x);
            res.trajectory.fields.push_back(v);
        }
        std::vector<float> next = x.value();
        for (size_t i = 0; i < next.size(); ++i) next[i] += dt * v.value()[i];
        x = Tensor::from_vector(x.shape(), next);
        require_finite(x, "state", k);
    }
    if (s.record_trajectory) {
        res.trajectory.times.push_back(1.0);
        res.trajectory.states.push_back(x);
        thin_trajectory(res.trajectory);
    }
    res.x1 = x;
    res.field_evals = f.evals() - evals_before;
    return res;
}

SolveResult dopri5_solve(FieldEval& f, const Tensor& x0, const SolverConfig& s,
                         const GuidanceConfig& g) {
    s.validate();
    g.validate();
    const long evals_before = f.evals();
    const std::vector<int> shape = x0.shape();
    const size_t n = x0.size();

    // Dormand-Prince 5(4) tableau
    const double a21 = 1.0 / 5;
    const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
    const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
    const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
    // 5th-order weights minus the embedded 4th-order weights
    const double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                 e5 = b5 + 92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;
    const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;

    auto eval = [&](const std::vector<double>& xd, double t) {
        Tensor xt = narrow(shape, xd);
        Tensor v = guided_eval(f, xt, t, g);
        require_field_shape(v, xt);
        return widen(v);
    };

    SolveResult res;
    std::vector<double> x = widen(x0);
    std::vector<double> k1 = eval(x, 0.0);
    std::vector<double> xs(n), x_new(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);

    double t = 0.0;
    double h = 1.0;  // a constant field is integrated in one accepted step
    double errold = 1.0;
    int attempt = 0;
    const int max_attempts = 1000000;

    while (t < 1.0) {
        if (++attempt > max_attempts)
            throw StiffnessError("dopri5: no convergence within " + std::to_string(max_attempts) +
                                 " attempted steps");
        h = std::min(h, 1.0 - t);
        if (h < 1e-12)
            throw StiffnessError("dopri5: step size collapsed below 1e-12 at t = " +
                                 std::to_string(t));

        for (size_t i = 0; i < n; ++i) xs[i] = x[i] + h * a21 * k1[i];
        k2 = eval(xs, t + c2 * h);
        for (size_t i = 0; i < n; ++i) xs[i] = x[i] + h * (a31 * k1[i] + a32 * k2[i]);
        k3 = eval(xs, t + c3 * h);
        for (size_t i = 0; i < n; ++i)
            xs[i] = x[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        k4 = eval(xs, t + c4 * h);
        for (size_t i = 0; i < n; ++i)
            xs[i] = x[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        k5 = eval(xs, t + c5 * h);
        for (size_t i = 0; i < n; ++i)
            xs[i] = x[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        k6 = eval(xs, t + h);
        for (size_t i = 0; i < n; ++i)
            x_new[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        k7 = eval(x_new, t + h);

        double sumsq = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double err_i = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                      e6 * k6[i] + e7 * k7[i]);
            const double scale = s.atol + s.rtol * std::max(std::abs(x[i]), std::abs(x_new[i]));
            sumsq += (err_i / scale) * (err_i / scale);
        }
        double err = n > 0 ? std::sqrt(sumsq / n) : 0.0;
        if (!std::isfinite(err)) err = 1e10;  // reject and retreat

        if (err <= 1.0) {
            if (s.record_trajectory) {
                res.trajectory.times.push_back(t);
                res.trajectory.states.push_back(narrow(shape, x));
                res.trajectory.fields.push_back(narrow(shape, k1));
            }
            t += h;
            x = x_new;
            k1 = k7;  // first-same-as-last
            const double e = std::max(err, 1e-10);
            const double fac =
                std::clamp(0.9 * std::pow(e, -0.14) * std::pow(errold, 0.08), 0.2, 5.0);
            h *= fac;
            errold = e;
        } else {
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
        }
    }

    Tensor x1 = narrow(shape, x);
    require_finite(x1, "state", attempt);
    if (s.record_trajectory) {
        res.trajectory.times.push_back(1.0);
        res.trajectory.states.push_back(x1);
        thin_trajectory(res.trajectory);
    }
    res.x1 = x1;
    res.field_evals = f.evals() - evals_before;
    return res;
}

SolveResult solve(FieldEval& f, const Tensor& x0, const SolverConfig& s, const GuidanceConfig& g) {
    switch (s.kind) {
        case SolverKind::Euler: return euler_solve(f, x0, s, g);
        case SolverKind::Dopri5: return dopri5_solve(f, x0, s, g);
    }
    throw ConfigError("solver: unknown kind");
}

double straightness(const Trajectory& traj) {
    if (traj.states.size() < 2)
        throw UsageError("straightness: need at least 2 recorded states, got " +
                         std::to_string(traj.states.size()));
    if (traj.fields.empty()) throw UsageError("straightness: trajectory has no recorded fields");
    const Tensor& first = traj.states.front();
    const Tensor& last = traj.states.back();
    if (first.shape() != last.shape())
        throw ShapeError("straightness: endpoint shapes differ");
    const size_t n = first.size();
    std::vector<double> disp(n);
    double denom = 0.0;
    for (size_t i = 0; i < n; ++i) {
        disp[i] = static_cast<double>(last.value()[i]) - first.value()[i];
        denom += disp[i] * disp[i];
    }
    if (denom == 0.0) return 0.0;  // degenerate path: nothing to compare against
    double acc = 0.0;
    for (const Tensor& v : traj.fields) {
        if (v.shape() != first.shape())
            throw ShapeError("straightness: field shape differs from state shape");
        double d = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double r = static_cast<double>(v.value()[i]) - disp[i];
            d += r * r;
        }
        acc += d / denom;
    }
    return acc / static_cast<double>(traj.fields.size());
}

void export_trajectory_csv(const Trajectory& traj, const std::string& path) {
    if (traj.times.size() != traj.states.size())
        throw UsageError("trajectory csv: times and states disagree in length");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const size_t dims = traj.states.empty() ? 0 : std::min<size_t>(traj.states[0].size(), 8);
    out << "t";
    for (size_t d = 0; d < dims; ++d) out << ",d" << d;
    out << "\n";
    out << std::setprecision(9);
    for (size_t k = 0; k < traj.times.size(); ++k) {
        out << traj.times[k];
        for (size_t d = 0; d < dims; ++d) out << "," << traj.states[k].value()[d];
        out << "\n";
    }
    if (!out) throw IoError("failed while writing " + path);
}

}  // namespace rfm
