#pragma once

// Internal: the single-path Euler-Maruyama step shared by the stored-ensemble
// and streaming Monte Carlo drivers, plus the block scheduler both use.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "deception_lq/controls.hpp"
#include "deception_lq/errors.hpp"
#include "deception_lq/model.hpp"
#include "deception_lq/rng.hpp"

namespace deception_lq::detail {

struct PathBuffers {
  std::span<double> V, Y, dW, alpha, beta;
};

inline void simulate_one_path(const FeedbackPolicy& policy, const ModelParams& p,
                              const TimeGrid& grid, const NormalStream& rng, std::uint64_t path,
                              bool noise, const PathBuffers& out) {
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  const double sqrt_dt = std::sqrt(dt);
  double v = p.v0;
  double y = p.y0;
  for (std::size_t k = 0;; ++k) {
    const double t = grid.time(k);
    const Controls c = policy.at_step(k, t, v, y);
    out.V[k] = v;
    out.Y[k] = y;
    out.alpha[k] = c.alpha;
    out.beta[k] = c.beta;
    if (k == n) break;
    double dB = 0.0, dW = 0.0;
    if (noise) {
      const auto [zb, zw] = rng.normals(path, k);
      dB = sqrt_dt * zb;
      dW = sqrt_dt * zw;
    }
    out.dW[k] = dW;
    const double v_next = v + c.alpha * dt + p.sigma_B * dB;
    const double y_next = y + (v + c.beta) * dt + p.sigma_W * dW;
    if (!std::isfinite(v_next) || !std::isfinite(y_next) || !std::isfinite(c.alpha) ||
        !std::isfinite(c.beta)) {
      throw SolverError(fmt::format("non-finite state on path {}", path), k);
    }
    v = v_next;
    y = y_next;
  }
}

/// Paths are grouped into fixed blocks; a block is always processed by one
/// worker in path order, so any per-block reduction is independent of the
/// number of workers.
inline constexpr std::size_t kBlockSize = 256;

inline unsigned resolve_workers(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Calls body(block_index, first_path, end_path) for every block.
inline void for_each_block(std::size_t n_paths, unsigned workers,
                           const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  const std::size_t n_blocks = (n_paths + kBlockSize - 1) / kBlockSize;
  workers = static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), n_blocks));
  auto run_block = [&](std::size_t b) {
    const std::size_t first = b * kBlockSize;
    body(b, first, std::min(n_paths, first + kBlockSize));
  };
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run_block(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t b = next++; b < n_blocks; b = next++) run_block(b);
      } catch (...) {
        errors[w] = std::current_exception();
        next = n_blocks;
      }
    });
  }
  pool.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace deception_lq::detail
