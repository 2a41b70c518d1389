#include "deception_lq/monte_carlo.hpp"

#include <algorithm>
#include <cmath>

#include "deception_lq/errors.hpp"
#include "deception_lq/io.hpp"
#include "deception_lq/numerics.hpp"
#include "path_kernel.hpp"

namespace deception_lq {

MonteCarloSummary run_monte_carlo(const ControlLaw& law, const MonteCarloOptions& options) {
  const std::size_t n_paths = options.n_paths;
  if (n_paths == 0) throw DomainError("run_monte_carlo: n_paths must be positive");
  const std::size_t n_export = std::min(options.export_paths, n_paths);
  const ModelParams& p = law.params();
  const TimeGrid& grid = law.grid();
  const std::size_t s = grid.size();
  const std::size_t n = grid.n_steps();
  const std::size_t n_blocks = (n_paths + detail::kBlockSize - 1) / detail::kBlockSize;

  std::vector<double> primary(n_paths), log_l(n_paths), log_l_drift(n_paths), blue(n_paths);
  std::vector<double> v_T(n_paths), y_T(n_paths);
  // Block partial sums of V, Y, alpha, beta per time: [block][channel][k].
  std::vector<double> partial(n_blocks * 4 * s, 0.0);
  std::vector<double> block_max_beta(n_blocks, 0.0);
  std::vector<double> eV(n_export * s), eY(n_export * s), eW(n_export * n), eA(n_export * s),
      eB(n_export * s);

  const NormalStream rng(options.seed);
  detail::for_each_block(n_paths, options.simulation.workers, [&](std::size_t b, std::size_t first,
                                                                  std::size_t end) {
    std::vector<double> V(s), Y(s), dW(n), A(s), B(s);
    const detail::PathBuffers buf{V, Y, dW, A, B};
    double* sums = partial.data() + b * 4 * s;
    double beta_peak = 0.0;
    for (std::size_t i = first; i < end; ++i) {
      detail::simulate_one_path(law, p, grid, rng, i, options.simulation.noise, buf);
      const PathView view{V, Y, dW, A, B};
      primary[i] = primary_cost_path(view, grid, p, law.vbar());
      log_l[i] = log_likelihood_path(view, grid, law.f_c(), law.f_d(), p);
      log_l_drift[i] = log_likelihood_drift_path(view, grid, law.f_c(), law.f_d(), p);
      blue[i] = p.lambda == 0.0 ? primary[i] : primary[i] - p.lambda * log_l[i];
      v_T[i] = V[n];
      y_T[i] = Y[n];
      for (std::size_t k = 0; k < s; ++k) {
        sums[k] += V[k];
        sums[s + k] += Y[k];
        sums[2 * s + k] += A[k];
        sums[3 * s + k] += B[k];
        beta_peak = std::max(beta_peak, std::abs(B[k]));
      }
      if (i < n_export) {
        std::copy(V.begin(), V.end(), eV.begin() + static_cast<std::ptrdiff_t>(i * s));
        std::copy(Y.begin(), Y.end(), eY.begin() + static_cast<std::ptrdiff_t>(i * s));
        std::copy(dW.begin(), dW.end(), eW.begin() + static_cast<std::ptrdiff_t>(i * n));
        std::copy(A.begin(), A.end(), eA.begin() + static_cast<std::ptrdiff_t>(i * s));
        std::copy(B.begin(), B.end(), eB.begin() + static_cast<std::ptrdiff_t>(i * s));
      }
    }
    block_max_beta[b] = beta_peak;
  });

  MonteCarloSummary out{.grid = grid, .n_paths = n_paths, .seed = options.seed};
  out.primary_cost = make_estimate(primary);
  out.blue_cost = make_estimate(blue);
  out.log_likelihood = {make_estimate(log_l), make_estimate(log_l_drift)};
  out.terminal_V = std::move(v_T);
  out.terminal_Y = std::move(y_T);
  std::vector<double>* means[4] = {&out.mean_V, &out.mean_Y, &out.mean_alpha, &out.mean_beta};
  std::vector<double> column(n_blocks);
  for (std::size_t c = 0; c < 4; ++c) {
    means[c]->resize(s);
    for (std::size_t k = 0; k < s; ++k) {
      for (std::size_t b = 0; b < n_blocks; ++b) column[b] = partial[(b * 4 + c) * s + k];
      (*means[c])[k] = pairwise_sum(column) / static_cast<double>(n_paths);
    }
  }
  out.max_abs_beta = *std::max_element(block_max_beta.begin(), block_max_beta.end());
  if (n_export > 0) {
    out.exported.emplace(grid, n_export, options.seed, std::move(eV), std::move(eY), std::move(eW),
                         std::move(eA), std::move(eB));
  }
  return out;
}

TerminalMoments terminal_moments(const MonteCarloSummary& s) {
  const std::size_t m = s.terminal_V.size();
  std::vector<double> vv(m), vy(m), yy(m);
  for (std::size_t i = 0; i < m; ++i) {
    vv[i] = s.terminal_V[i] * s.terminal_V[i];
    vy[i] = s.terminal_V[i] * s.terminal_Y[i];
    yy[i] = s.terminal_Y[i] * s.terminal_Y[i];
  }
  return {make_estimate(vv), make_estimate(vy), make_estimate(yy)};
}

void write_mean_csv(std::ostream& out, const MonteCarloSummary& s) {
  CsvWriter csv(out, {"t", "V", "Y", "alpha", "beta"});
  for (std::size_t k = 0; k < s.grid.size(); ++k) {
    csv.row({s.grid.time(k), s.mean_V[k], s.mean_Y[k], s.mean_alpha[k], s.mean_beta[k]});
  }
}

}  // namespace deception_lq
