#include "redkit/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "parallel.hpp"
#include "redkit/errors.hpp"

namespace redkit {

std::string_view to_string(OptimizerStatus status) {
  switch (status) {
    case OptimizerStatus::kConverged: return "converged";
    case OptimizerStatus::kStalled: return "stalled";
    case OptimizerStatus::kIterationLimit: return "iteration-limit";
    case OptimizerStatus::kCancelled: return "cancelled";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Run {
 public:
  Run(const DesignProblem& problem, const OptimizerOptions& options,
      const ProgressCallback& progress, std::stop_token stop)
      : problem_(problem), options_(options), progress_(progress),
        stop_(std::move(stop)) {}

  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const {
    return x.cwiseMax(problem_.lower).cwiseMin(problem_.upper);
  }

  std::optional<Eigen::VectorXd> residuals(const Eigen::VectorXd& x) {
    ++result_.evaluations;
    auto r = problem_.residuals(x);
    if (!r || !r->allFinite()) {
      ++result_.rejected;
      return std::nullopt;
    }
    return r;
  }

  double objective(const Eigen::VectorXd& x) {
    ++result_.evaluations;
    auto v = problem_.objective(x);
    if (!v || !std::isfinite(*v)) {
      ++result_.rejected;
      return kInf;
    }
    consider(x, *v);
    return *v;
  }

  double search_objective(const Eigen::VectorXd& x) {
    if (!problem_.search_objective) return objective(x);
    ++result_.evaluations;
    auto v = problem_.search_objective(x);
    if (!v || !std::isfinite(*v)) {
      ++result_.rejected;
      return kInf;
    }
    return *v;
  }

  void consider(const Eigen::VectorXd& x, double value) {
    if (value < result_.best_objective) {
      result_.best_objective = value;
      result_.best = x;
    }
  }

  void end_iteration() {
    ++iteration_;
    result_.trace.push_back({iteration_, result_.best_objective});
    if (progress_) progress_({iteration_, result_.best_objective, result_.best});
  }

  bool converged() const {
    return options_.objective_tolerance > 0.0 &&
           result_.best_objective <= options_.objective_tolerance;
  }
  bool cancelled() const { return stop_.stop_requested(); }
  bool out_of_iterations() const { return iteration_ >= options_.max_iterations; }
  bool done() const { return converged() || cancelled() || out_of_iterations(); }

  void start() {
    const Eigen::VectorXd x0 = clamp(problem_.start);
    result_.best = x0;
    result_.best_objective = kInf;
    const double f0 = objective(x0);
    if (!std::isfinite(f0)) {
      throw Error("initial design is infeasible");
    }
    result_.initial_objective = f0;
    result_.trace.push_back({0, f0});
  }

  void levenberg_marquardt();
  void nelder_mead();

  DesignResult finish() {
    if (converged()) {
      result_.status = OptimizerStatus::kConverged;
    } else if (cancelled()) {
      result_.status = OptimizerStatus::kCancelled;
    } else if (out_of_iterations()) {
      result_.status = OptimizerStatus::kIterationLimit;
    } else {
      result_.status = OptimizerStatus::kStalled;
    }
    return std::move(result_);
  }

 private:
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& r);

  const DesignProblem& problem_;
  const OptimizerOptions& options_;
  const ProgressCallback& progress_;
  std::stop_token stop_;
  DesignResult result_;
  int iteration_ = 0;
};

Eigen::MatrixXd Run::jacobian(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& r) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(r.size(), n);
  std::vector<int> evaluations(n, 0);
  std::vector<int> rejected(n, 0);
  detail::parallel_for(static_cast<int>(n), options_.threads, [&](int j) {
    const double h = options_.fd_step * std::max(1.0, std::abs(x[j]));
    for (double step : {h, -h}) {
      Eigen::VectorXd xp = x;
      xp[j] += step;
      if (xp[j] > problem_.upper[j] || xp[j] < problem_.lower[j]) continue;
      ++evaluations[j];
      auto rp = problem_.residuals(xp);
      if (!rp || !rp->allFinite()) {
        ++rejected[j];
        continue;
      }
      jac.col(j) = (*rp - r) / step;
      return;
    }
  });
  result_.evaluations += std::accumulate(evaluations.begin(), evaluations.end(), 0);
  result_.rejected += std::accumulate(rejected.begin(), rejected.end(), 0);
  return jac;
}

void Run::levenberg_marquardt() {
  Eigen::VectorXd x = result_.best;
  auto r0 = residuals(x);
  if (!r0) return;
  Eigen::VectorXd r = *r0;
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  int stalled = 0;

  while (!done()) {
    const Eigen::MatrixXd jac = jacobian(x, r);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    const double floor = 1e-12 * std::max(jtj.diagonal().maxCoeff(), 1e-300);
    const Eigen::VectorXd scaling = jtj.diagonal().cwiseMax(floor);

    bool accepted = false;
    for (int attempt = 0; attempt < 16 && !cancelled(); ++attempt) {
      Eigen::MatrixXd m = jtj;
      m.diagonal() += lambda * scaling;
      const Eigen::VectorXd step = m.ldlt().solve(-grad);
      const Eigen::VectorXd trial = clamp(x + step);
      if ((trial - x).norm() <= 1e-15 * (1.0 + x.norm())) break;
      auto rt = residuals(trial);
      if (rt && rt->squaredNorm() < cost) {
        const double previous = cost;
        x = trial;
        r = *rt;
        cost = r.squaredNorm();
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        stalled = (previous - cost) <= options_.stall_tolerance * previous
                      ? stalled + 1
                      : 0;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) return;
    objective(x);
    end_iteration();
    if (stalled >= 3 || cost == 0.0) return;
  }
}

void Run::nelder_mead() {
  const Eigen::Index n = result_.best.size();
  if (n == 0) return;
  const double dn = static_cast<double>(n);
  // Dimension-adaptive coefficients (Gao & Han).
  const double reflect = 1.0;
  const double expand = 1.0 + 2.0 / dn;
  const double contract = 0.75 - 1.0 / (2.0 * dn);
  const double shrink = 1.0 - 1.0 / dn;

  const bool same_objective = !problem_.search_objective;
  auto evaluate = [&](const Eigen::VectorXd& x) { return search_objective(x); };
  auto track = [&](const Eigen::VectorXd& x, double value) {
    if (same_objective) {
      consider(x, value);
    } else if (std::isfinite(value)) {
      objective(x);
    }
  };

  int restarts = 0;
  double last_restart_best = result_.best_objective;
  while (!done() && restarts < 4) {
    std::vector<Eigen::VectorXd> pts(n + 1, result_.best);
    std::vector<double> vals(n + 1);
    vals[0] = evaluate(pts[0]);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double width = problem_.upper[j] - problem_.lower[j];
      double step = std::isfinite(width) && width > 0.0
                        ? options_.simplex_scale * width
                        : options_.simplex_scale * std::max(1.0, std::abs(pts[0][j]));
      step /= (1 << std::min(restarts, 10));
      Eigen::VectorXd p = pts[0];
      p[j] += step;
      if (p[j] > problem_.upper[j]) p[j] = pts[0][j] - step;
      pts[j + 1] = clamp(p);
      vals[j + 1] = evaluate(pts[j + 1]);
    }

    int flat = 0;
    while (!done()) {
      std::vector<int> order(n + 1);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](int a, int b) { return vals[a] < vals[b]; });
      std::vector<Eigen::VectorXd> sp(n + 1);
      std::vector<double> sv(n + 1);
      for (Eigen::Index i = 0; i <= n; ++i) {
        sp[i] = pts[order[i]];
        sv[i] = vals[order[i]];
      }
      pts.swap(sp);
      vals.swap(sv);

      track(pts[0], vals[0]);
      end_iteration();

      double diameter = 0.0;
      for (Eigen::Index i = 1; i <= n; ++i) {
        diameter = std::max(diameter, (pts[i] - pts[0]).lpNorm<Eigen::Infinity>());
      }
      const double range = vals[n] - vals[0];
      if (diameter < 1e-12 ||
          (std::isfinite(range) &&
           range <= options_.stall_tolerance * (std::abs(vals[0]) + 1e-30))) {
        if (++flat >= 2) break;
      } else {
        flat = 0;
      }

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) centroid += pts[i];
      centroid /= dn;

      const Eigen::VectorXd xr = clamp(centroid + reflect * (centroid - pts[n]));
      const double fr = evaluate(xr);
      if (fr < vals[0]) {
        const Eigen::VectorXd xe = clamp(centroid + expand * (xr - centroid));
        const double fe = evaluate(xe);
        if (fe < fr) {
          pts[n] = xe;
          vals[n] = fe;
        } else {
          pts[n] = xr;
          vals[n] = fr;
        }
        continue;
      }
      if (fr < vals[n - 1]) {
        pts[n] = xr;
        vals[n] = fr;
        continue;
      }
      const bool outside = fr < vals[n];
      const Eigen::VectorXd xc =
          outside ? clamp(centroid + contract * (xr - centroid))
                  : clamp(centroid + contract * (pts[n] - centroid));
      const double fc = evaluate(xc);
      if (fc < (outside ? fr : vals[n])) {
        pts[n] = xc;
        vals[n] = fc;
        continue;
      }
      for (Eigen::Index i = 1; i <= n; ++i) {
        pts[i] = clamp(pts[0] + shrink * (pts[i] - pts[0]));
        vals[i] = evaluate(pts[i]);
      }
    }

    // Restart from the incumbent while restarts keep paying off.
    if (restarts > 0 && !(result_.best_objective <
                          last_restart_best * (1.0 - options_.stall_tolerance))) {
      break;
    }
    last_restart_best = result_.best_objective;
    ++restarts;
  }
}

}  // namespace

DesignResult minimize_design(const DesignProblem& problem,
                             const OptimizerOptions& options,
                             const ProgressCallback& progress,
                             std::stop_token stop) {
  const Eigen::Index n = problem.start.size();
  if (problem.lower.size() != n || problem.upper.size() != n) {
    throw Error("design bounds do not match the design vector");
  }
  if (!problem.objective) throw Error("design problem has no objective");

  Run run(problem, options, progress, std::move(stop));
  run.start();
  if (!run.done() && problem.residuals) run.levenberg_marquardt();
  if (!run.done()) run.nelder_mead();
  return run.finish();
}

}  // namespace redkit
