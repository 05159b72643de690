#include "rfm/metrics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rfm/errors.hpp"
#include "rfm/linalg.hpp"

namespace rfm {

GaussianFit fit_gaussian(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 2)
        throw UsageError("fit_gaussian: need at least 2 samples, got " +
                         std::to_string(samples.size()));
    const size_t n = samples.size();
    const size_t d = samples[0].size();
    if (d == 0) throw UsageError("fit_gaussian: samples are empty vectors");
    for (const auto& s : samples)
        if (s.size() != d) throw ShapeError("fit_gaussian: samples have inconsistent dimensions");

    GaussianFit fit;
    fit.dim = static_cast<int>(d);
    fit.mean.assign(d, 0.0);
    for (const auto& s : samples)
        for (size_t j = 0; j < d; ++j) fit.mean[j] += s[j];
    for (size_t j = 0; j < d; ++j) fit.mean[j] /= static_cast<double>(n);

    fit.cov.assign(d * d, 0.0);
    for (const auto& s : samples)
        for (size_t i = 0; i < d; ++i) {
            const double di = s[i] - fit.mean[i];
            for (size_t j = 0; j < d; ++j) fit.cov[i * d + j] += di * (s[j] - fit.mean[j]);
        }
    for (double& v : fit.cov) v /= static_cast<double>(n - 1);
    return fit;
}

double frechet_w2(const GaussianFit& a, const GaussianFit& b) {
    if (a.dim != b.dim)
        throw ShapeError("frechet_w2: dimension mismatch, " + std::to_string(a.dim) + " vs " +
                         std::to_string(b.dim));
    const int n = a.dim;
    if (n < 1) throw UsageError("frechet_w2: empty fits");
    if (a.mean.size() != static_cast<size_t>(n) || b.mean.size() != static_cast<size_t>(n) ||
        a.cov.size() != static_cast<size_t>(n) * n || b.cov.size() != static_cast<size_t>(n) * n)
        throw ShapeError("frechet_w2: fit storage does not match its dimension");

    double mean_term = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a.mean[static_cast<size_t>(i)] - b.mean[static_cast<size_t>(i)];
        mean_term += d * d;
    }
    double trace_a = 0.0, trace_b = 0.0;
    for (int i = 0; i < n; ++i) {
        trace_a += a.cov[static_cast<size_t>(i) * n + i];
        trace_b += b.cov[static_cast<size_t>(i) * n + i];
    }

    const std::vector<double> sb = linalg::sqrt_psd(b.cov, n);
    const std::vector<double> inner =
        linalg::matmul_square(linalg::matmul_square(sb, a.cov, n), sb, n);
    linalg::EigenSym eig = linalg::jacobi_eigen_symmetric(inner, n);
    double trace_cross = 0.0;
    for (double v : eig.values) {
        if (v < -1e-8)
            throw NumericError("frechet_w2: cross term has eigenvalue " + std::to_string(v));
        trace_cross += std::sqrt(std::max(v, 0.0));
    }
    const double w2 = mean_term + trace_a + trace_b - 2.0 * trace_cross;
    return std::max(w2, 0.0);
}

AlignmentReport alignment_accuracy(const std::vector<LatentSeq>& generated,
                                   const std::vector<ConditionSeq>& conditions,
                                   const EventTaskSpec& spec) {
    spec.validate();
    if (generated.size() != conditions.size())
        throw ShapeError("alignment: generated and condition batch sizes differ");
    const int dc = spec.cond_channels();
    const int lx = spec.latent_len();
    const long block = static_cast<long>(spec.ratio) * spec.dim;

    // flattened unit-norm templates
    std::vector<std::vector<double>> tpl(static_cast<size_t>(spec.vocab));
    for (int k = 0; k < spec.vocab; ++k) {
        const Tensor& t = spec.templates[static_cast<size_t>(k)];
        double norm = 0.0;
        tpl[static_cast<size_t>(k)].resize(static_cast<size_t>(block));
        for (long i = 0; i < block; ++i) {
            tpl[static_cast<size_t>(k)][static_cast<size_t>(i)] = t.data()[i];
            norm += static_cast<double>(t.data()[i]) * t.data()[i];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) throw UsageError("alignment: template " + std::to_string(k) + " is zero");
        for (double& v : tpl[static_cast<size_t>(k)]) v /= norm;
    }

    AlignmentReport report;
    report.chance = 1.0 / static_cast<double>(spec.cond_len);
    for (size_t item = 0; item < generated.size(); ++item) {
        const Tensor& x = generated[item].values;
        const Tensor& c = conditions[item].features;
        if (x.rank() != 2 || x.dim(0) != lx || x.dim(1) != spec.dim)
            throw ShapeError("alignment: generated sequence must be [" + std::to_string(lx) +
                             ", " + std::to_string(spec.dim) + "], got " + shape_str(x.shape()));
        if (c.rank() != 2 || c.dim(0) != spec.cond_len || c.dim(1) != dc)
            throw ShapeError("alignment: condition must be [" + std::to_string(spec.cond_len) +
                             ", " + std::to_string(dc) + "], got " + shape_str(c.shape()));
        for (int j = 0; j < spec.cond_len; ++j) {
            // recover the planted event id from the one-hot condition row
            int id = -1;
            float best = -1.0f;
            for (int ch = 0; ch < dc; ++ch)
                if (c.data()[j * dc + ch] > best) {
                    best = c.data()[j * dc + ch];
                    id = ch;
                }
            if (id >= spec.vocab) continue;  // silence
            ++report.total_events;

            const auto& w = tpl[static_cast<size_t>(id)];
            int best_block = 0;
            double best_ncc = -2.0;
            for (int b = 0; b < spec.cond_len; ++b) {
                double dot = 0.0, norm = 0.0;
                for (long i = 0; i < block; ++i) {
                    const double g = x.data()[static_cast<long>(b) * block + i];
                    dot += w[static_cast<size_t>(i)] * g;
                    norm += g * g;
                }
                const double ncc = norm > 0.0 ? dot / std::sqrt(norm) : -2.0;
                if (ncc > best_ncc) {
                    best_ncc = ncc;
                    best_block = b;
                }
            }
            if (best_block == j) ++report.correct;
        }
    }
    if (report.total_events == 0)
        throw UsageError("alignment: conditions contain no planted events");
    report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total_events);
    return report;
}

// ------------------------------------------------------------- grid runner --

namespace {

struct PointScore {
    double w2 = std::nan("");
    double alignment = std::nan("");
    double chance = std::nan("");
};

// shared noise bank so every grid row sees the same x0 draws
std::vector<Tensor> noise_bank(int count, int rows, int cols, uint64_t seed) {
    Rng root(seed);
    std::vector<Tensor> bank;
    bank.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = root.fork(Stream::Eval, static_cast<uint64_t>(i));
        Tensor x({rows, cols});
        rng.fill_normal(x.data(), x.size());
        bank.push_back(x);
    }
    return bank;
}

PointScore score_gauss(const LayerParams& params, const EstimatorConfig& cfg,
                       const GaussTaskSpec& task, const std::vector<Tensor>& noise,
                       int samples_per_class, const SolverConfig& solver,
                       const GuidanceConfig& guidance, long& evals) {
    PointScore score;
    double acc = 0.0;
    for (int k = 0; k < task.num_classes; ++k) {
        Tensor c({1, task.num_classes});
        c.data()[k] = 1.0f;
        FieldEval field = estimator_field(params, cfg, ConditionSeq{c, false});
        std::vector<std::vector<double>> samples;
        samples.reserve(static_cast<size_t>(samples_per_class));
        for (int i = 0; i < samples_per_class; ++i) {
            const Tensor& x0 = noise[static_cast<size_t>(k * samples_per_class + i)];
            SolveResult res = solve(field, x0, solver, guidance);
            std::vector<double> row(static_cast<size_t>(task.dim));
            for (int d = 0; d < task.dim; ++d) row[static_cast<size_t>(d)] = res.x1.data()[d];
            samples.push_back(std::move(row));
        }
        evals += field.evals();

        GaussianFit fit = fit_gaussian(samples);
        GaussianFit truth;
        truth.dim = task.dim;
        truth.mean.resize(static_cast<size_t>(task.dim));
        for (int d = 0; d < task.dim; ++d)
            truth.mean[static_cast<size_t>(d)] = task.means.data()[k * task.dim + d];
        truth.cov.assign(static_cast<size_t>(task.dim) * task.dim, 0.0);
        for (int d = 0; d < task.dim; ++d)
            truth.cov[static_cast<size_t>(d) * task.dim + d] = task.sigma * task.sigma;
        acc += frechet_w2(fit, truth);
    }
    score.w2 = acc / static_cast<double>(task.num_classes);
    return score;
}

PointScore score_events(const LayerParams& params, const EstimatorConfig& cfg,
                        const EventTaskSpec& task, const std::vector<TrainItem>& eval_set,
                        const std::vector<Tensor>& noise, const SolverConfig& solver,
                        const GuidanceConfig& guidance, long& evals) {
    PointScore score;
    std::vector<LatentSeq> generated;
    std::vector<ConditionSeq> conditions;
    generated.reserve(eval_set.size());
    for (size_t i = 0; i < eval_set.size(); ++i) {
        FieldEval field = estimator_field(params, cfg, eval_set[i].c);
        SolveResult res = solve(field, noise[i], solver, guidance);
        evals += field.evals();
        generated.push_back(LatentSeq{res.x1});
        conditions.push_back(eval_set[i].c);
    }
    AlignmentReport report = alignment_accuracy(generated, conditions, task);
    score.alignment = report.accuracy;
    score.chance = report.chance;
    return score;
}

}  // namespace

std::vector<EvalPoint> eval_suite(const LayerParams& params, const EstimatorConfig& cfg,
                                  const TaskSpec& task, const EvalOptions& opt) {
    task.validate();
    cfg.validate();
    if (cfg.latent_dim != task.latent_dim() || cfg.cond_dim != task.cond_dim())
        throw ShapeError("eval_suite: checkpoint dims (latent " + std::to_string(cfg.latent_dim) +
                         ", cond " + std::to_string(cfg.cond_dim) + ") do not match the task");

    const bool is_gauss = task.kind == TaskSpec::Kind::Gauss;
    std::vector<Tensor> noise;
    std::vector<TrainItem> eval_set;
    if (is_gauss) {
        noise = noise_bank(task.gauss.num_classes * opt.samples_per_class, 1, task.gauss.dim,
                           opt.seed);
    } else {
        EventTaskSpec eval_task = task.events;
        eval_task.num_items = opt.num_sequences;
        eval_task.seed = opt.seed + 1;  // conditions drawn apart from the noise
        eval_set = gen_events(eval_task);
        noise = noise_bank(opt.num_sequences, task.events.latent_len(), task.events.dim,
                           opt.seed);
    }

    struct GridEntry {
        std::string label;
        SolverConfig solver;
        GuidanceConfig guidance;
    };
    std::vector<GridEntry> grid;
    for (int steps : opt.euler_steps) {
        SolverConfig s;
        s.kind = SolverKind::Euler;
        s.steps = steps;
        GuidanceConfig g;
        g.gamma = opt.gamma;
        grid.push_back({"euler-" + std::to_string(steps), s, g});
    }
    if (opt.include_dopri5) {
        SolverConfig s;
        s.kind = SolverKind::Dopri5;
        s.rtol = opt.rtol;
        s.atol = opt.atol;
        GuidanceConfig g;
        g.gamma = opt.gamma;
        grid.push_back({"dopri5", s, g});
    }
    for (double gamma : opt.gamma_grid) {
        SolverConfig s;
        s.kind = SolverKind::Euler;
        s.steps = 25;
        GuidanceConfig g;
        g.gamma = gamma;
        std::ostringstream label;
        label << "gamma-" << gamma;
        grid.push_back({label.str(), s, g});
    }

    std::vector<EvalPoint> rows;
    for (const auto& entry : grid) {
        EvalPoint row;
        row.label = entry.label;
        long evals = 0;
        const auto start = std::chrono::steady_clock::now();
        PointScore score =
            is_gauss ? score_gauss(params, cfg, task.gauss, noise, opt.samples_per_class,
                                   entry.solver, entry.guidance, evals)
                     : score_events(params, cfg, task.events, eval_set, noise, entry.solver,
                                    entry.guidance, evals);
        const auto stop = std::chrono::steady_clock::now();
        row.w2 = score.w2;
        row.alignment = score.alignment;
        row.chance = score.chance;
        row.field_evals = evals;
        row.wall_ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop - start)
                .count();
        rows.push_back(row);
    }
    return rows;
}

void write_eval_csv(const std::vector<EvalPoint>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "point,w2,alignment,chance,field_evals,wall_ms\n";
    out << std::setprecision(10);
    for (const auto& row : rows) {
        out << row.label << "," << row.w2 << "," << row.alignment << "," << row.chance << ","
            << row.field_evals << "," << row.wall_ms << "\n";
    }
    if (!out) throw IoError("failed while writing " + path);
}

}  // namespace rfm
