#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rfm/estimator.hpp"

// ODE solving from noise (t=0) to data (t=1) along dx = v(x, t | c) dt,
// with optional classifier-free guidance. Solvers work against an abstract
// field so tests can drive them with closed-form stubs.
namespace rfm {

enum class SolverKind { Euler, Dopri5 };

// serialization names: "euler" and "dopri5"
std::string solver_name(SolverKind kind);
SolverKind solver_from_name(const std::string& name);

struct SolverConfig {
    SolverKind kind = SolverKind::Euler;
    int steps = 25;        // Euler: uniform grid {0, 1/steps, ..., 1 - 1/steps}
    double rtol = 1e-5;    // Dopri5
    double atol = 1e-5;    // Dopri5
    bool record_trajectory = false;

    void validate() const;
};

struct GuidanceConfig {
    double gamma = 4.5;
    bool enabled = true;  // disabled behaves exactly as gamma = 1

    double effective_gamma() const { return enabled ? gamma : 1.0; }
    void validate() const;
};

// recorded (t_k, x_k, v_k): one field row per recorded interval start, so
// fields has one entry fewer than times/states
struct Trajectory {
    std::vector<double> times;
    std::vector<Tensor> states;
    std::vector<Tensor> fields;
};

// conditional field closure: (x, t, use null condition) -> v. The wrapper
// counts underlying evaluations, which is the unit of the cost benchmark.
using FieldFn = std::function<Tensor(const Tensor&, double, bool)>;

class FieldEval {
  public:
    explicit FieldEval(FieldFn fn) : fn_(std::move(fn)) {}
    Tensor operator()(const Tensor& x, double t, bool null_cond) {
        ++evals_;
        return fn_(x, t, null_cond);
    }
    long evals() const { return evals_; }

  private:
    FieldFn fn_;
    long evals_ = 0;
};

// wraps a trained estimator and a fixed condition sequence
FieldEval estimator_field(const LayerParams& params, const EstimatorConfig& cfg,
                          const ConditionSeq& c);

// gamma * v(x,t|c) + (1-gamma) * v(x,t|null); a single conditional
// evaluation when gamma is exactly 1, so guidance-off is bitwise identical
Tensor guided_eval(FieldEval& f, const Tensor& x, double t, const GuidanceConfig& g);

struct SolveResult {
    Tensor x1;
    Trajectory trajectory;   // filled when record_trajectory
    long field_evals = 0;    // underlying estimator evaluations
};

SolveResult euler_solve(FieldEval& f, const Tensor& x0, const SolverConfig& s,
                        const GuidanceConfig& g);

SolveResult dopri5_solve(FieldEval& f, const Tensor& x0, const SolverConfig& s,
                         const GuidanceConfig& g);

// dispatches on s.kind
SolveResult solve(FieldEval& f, const Tensor& x0, const SolverConfig& s, const GuidanceConfig& g);

// mean over recorded field rows of |v_k - (x_end - x_start)|^2, normalized
// by |x_end - x_start|^2; returns 0 when the endpoints coincide
double straightness(const Trajectory& traj);

// rows (t, first 8 state dims at most)
void export_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace rfm
