#include "deception_lq/simulate.hpp"

#include <cmath>

#include "deception_lq/errors.hpp"
#include "deception_lq/io.hpp"
#include "deception_lq/numerics.hpp"
#include "deception_lq/sht.hpp"
#include "path_kernel.hpp"

namespace deception_lq {

PathEnsemble::PathEnsemble(TimeGrid grid, std::size_t n_paths, std::uint64_t seed,
                           std::vector<double> V, std::vector<double> Y, std::vector<double> dW,
                           std::vector<double> alpha, std::vector<double> beta)
    : grid_(grid),
      n_paths_(n_paths),
      seed_(seed),
      V_(std::move(V)),
      Y_(std::move(Y)),
      dW_(std::move(dW)),
      alpha_(std::move(alpha)),
      beta_(std::move(beta)) {
  const std::size_t samples = n_paths_ * grid_.size();
  if (V_.size() != samples || Y_.size() != samples || alpha_.size() != samples ||
      beta_.size() != samples || dW_.size() != n_paths_ * grid_.n_steps()) {
    throw DomainError("path ensemble storage does not match n_paths x grid");
  }
}

PathView PathEnsemble::path(std::size_t k) const {
  if (k >= n_paths_) throw DomainError("path index out of range");
  const std::size_t s = grid_.size();
  const std::size_t n = grid_.n_steps();
  return {std::span<const double>(V_).subspan(k * s, s),
          std::span<const double>(Y_).subspan(k * s, s),
          std::span<const double>(dW_).subspan(k * n, n),
          std::span<const double>(alpha_).subspan(k * s, s),
          std::span<const double>(beta_).subspan(k * s, s)};
}

CostEstimate make_estimate(std::span<const double> per_path) {
  const SampleStats s = sample_stats(per_path);
  return {s.mean, s.std_error, s.n};
}

PathEnsemble simulate_paths(const FeedbackPolicy& policy, const ModelParams& p,
                            const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                            const SimulationOptions& options) {
  if (n_paths == 0) throw DomainError("simulate_paths: n_paths must be positive");
  const std::size_t s = grid.size();
  const std::size_t n = grid.n_steps();
  std::vector<double> V(n_paths * s), Y(n_paths * s), dW(n_paths * n), alpha(n_paths * s),
      beta(n_paths * s);
  const NormalStream rng(seed);
  detail::for_each_block(n_paths, options.workers, [&](std::size_t, std::size_t first,
                                                       std::size_t end) {
    for (std::size_t i = first; i < end; ++i) {
      const detail::PathBuffers out{
          std::span<double>(V).subspan(i * s, s), std::span<double>(Y).subspan(i * s, s),
          std::span<double>(dW).subspan(i * n, n), std::span<double>(alpha).subspan(i * s, s),
          std::span<double>(beta).subspan(i * s, s)};
      detail::simulate_one_path(policy, p, grid, rng, i, options.noise, out);
    }
  });
  return PathEnsemble(grid, n_paths, seed, std::move(V), std::move(Y), std::move(dW),
                      std::move(alpha), std::move(beta));
}

PathEnsemble simulate_paths(const ControlLaw& law, std::size_t n_paths, std::uint64_t seed,
                            const SimulationOptions& options) {
  return simulate_paths(law, law.params(), law.grid(), n_paths, seed, options);
}

double primary_cost_path(const PathView& path, const TimeGrid& grid, const ModelParams& p,
                         const Pattern& vbar) {
  if (!(vbar.grid() == grid) || path.V.size() != grid.size()) {
    throw DomainError("primary_cost_path: path or vbar does not match the grid");
  }
  std::vector<double> r(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    r[k] = running_cost_r(p, vbar[k], path.V[k], path.Y[k], path.alpha[k], path.beta[k]);
  }
  const std::size_t n = grid.n_steps();
  return trapezoid(grid, r) + terminal_cost_g(p, path.V[n], path.Y[n]);
}

CostEstimate estimate_primary_cost(const PathEnsemble& e, const ModelParams& p,
                                   const Pattern& vbar) {
  std::vector<double> per_path(e.n_paths());
  for (std::size_t k = 0; k < e.n_paths(); ++k) {
    per_path[k] = primary_cost_path(e.path(k), e.grid(), p, vbar);
  }
  return make_estimate(per_path);
}

CostEstimate estimate_blue_cost(const PathEnsemble& e, const ModelParams& p, const Pattern& f_c,
                                const Pattern& f_d, const Pattern& vbar) {
  if (!(f_c.grid() == e.grid()) || !(f_d.grid() == e.grid())) {
    throw DomainError("estimate_blue_cost: pattern grid differs from the ensemble grid");
  }
  std::vector<double> per_path(e.n_paths());
  for (std::size_t k = 0; k < e.n_paths(); ++k) {
    const PathView path = e.path(k);
    double cost = primary_cost_path(path, e.grid(), p, vbar);
    if (p.lambda != 0.0) cost -= p.lambda * log_likelihood_path(path, e.grid(), f_c, f_d, p);
    per_path[k] = cost;
  }
  return make_estimate(per_path);
}

void write_path_csv(std::ostream& out, const PathEnsemble& e, std::size_t path) {
  const PathView v = e.path(path);
  CsvWriter csv(out, {"t", "V", "Y", "alpha", "beta"});
  for (std::size_t k = 0; k < e.grid().size(); ++k) {
    csv.row({e.grid().time(k), v.V[k], v.Y[k], v.alpha[k], v.beta[k]});
  }
}

}  // namespace deception_lq
