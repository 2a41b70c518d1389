#include "deception_lq/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "deception_lq/controls.hpp"
#include "deception_lq/io.hpp"
#include "deception_lq/riccati.hpp"
#include "deception_lq/rng.hpp"

#ifndef DECEPTION_LQ_VERSION
#define DECEPTION_LQ_VERSION "unknown"
#endif

namespace deception_lq {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string_view library_version() noexcept { return DECEPTION_LQ_VERSION; }

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::vector<ArtifactRecord> describe_artifacts(const fs::path& dir,
                                               const std::vector<std::string>& files) {
  std::vector<ArtifactRecord> records;
  for (const auto& file : files) {
    std::ifstream in(dir / file, std::ios::binary);
    if (!in) throw StageError("output", fmt::format("cannot read back {}", (dir / file).string()));
    const std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    records.push_back({file, content.size(), sha256_hex(content)});
  }
  return records;
}

namespace {

// Runs `body`, re-raising any library error as a StageError naming `stage`.
template <class F>
auto in_stage(std::string_view stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(std::string(stage), e.what());
  }
}

class ArtifactSink {
 public:
  explicit ArtifactSink(fs::path dir) : dir_(std::move(dir)) {
    in_stage("output", [&] { fs::create_directories(dir_); });
  }

  template <class F>
  void write(const std::string& name, F&& body) {
    std::ostringstream buffer;
    body(buffer);
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    out << buffer.str();
    out.close();
    if (!out) throw StageError("output", fmt::format("cannot write {}", (dir_ / name).string()));
    files_.push_back(name);
  }

  void write_json(const std::string& name, const Json& j) {
    write(name, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  }

  std::vector<std::string> files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

Json to_json(const CostEstimate& e) {
  return Json{{"mean", e.mean}, {"std_error", e.std_error}, {"n_paths", e.n_paths}};
}

Json to_json(const ExpectedLogL& e) {
  return Json{{"pathwise", to_json(e.pathwise)}, {"drift_form", to_json(e.drift_form)}};
}

Pattern zero_pattern(const TimeGrid& grid, std::string label) {
  return Pattern(grid, std::vector<double>(grid.size(), 0.0), std::move(label));
}

MonteCarloOptions mc_options(const ExperimentConfig& cfg, std::size_t n_paths,
                             std::size_t export_paths = 0) {
  return {.n_paths = n_paths,
          .seed = cfg.seed,
          .simulation = {.workers = cfg.workers, .noise = true},
          .export_paths = std::min(export_paths, n_paths)};
}

std::string label(double x) { return fmt::format("{}", x); }

}  // namespace

BlueSimReport run_blue_sim(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const TimeGrid grid = cfg.grid();
  ArtifactSink sink(out_dir);
  BlueSimReport report;
  for (const BlueCase& c : cfg.cases) {
    ModelParams p = cfg.params;
    p.lambda = c.lambda;
    const ControlLaw law = in_stage("riccati", [&] {
      return ControlLaw::solve(p, make_pattern(c.f_c, grid, "f_c"), make_pattern(cfg.f_d, grid, "f_d"),
                               make_pattern(cfg.vbar, grid, "vbar"));
    });
    const MonteCarloSummary s = in_stage(
        "simulate", [&] { return run_monte_carlo(law, mc_options(cfg, cfg.n_paths, cfg.export_paths)); });
    sink.write(c.name + "_riccati.csv", [&](std::ostream& out) { write_csv(out, law.coeffs()); });
    sink.write(c.name + "_mean.csv", [&](std::ostream& out) { write_mean_csv(out, s); });
    if (s.exported) {
      for (std::size_t k = 0; k < s.exported->n_paths(); ++k) {
        sink.write(fmt::format("{}_path_{}.csv", c.name, k),
                   [&](std::ostream& out) { write_path_csv(out, *s.exported, k); });
      }
    }
    report.cases.push_back({.name = c.name,
                            .f_c = describe(c.f_c),
                            .lambda = c.lambda,
                            .primary_cost = s.primary_cost,
                            .blue_cost = s.blue_cost,
                            .log_likelihood = s.log_likelihood,
                            .mean_Y_T = s.mean_Y.back(),
                            .max_abs_beta = s.max_abs_beta});
  }

  sink.write("summary.csv", [&](std::ostream& out) {
    CsvWriter csv(out, {"case", "f_c", "lambda", "J_primary", "J_primary_se", "J_blue", "J_blue_se",
                        "logL_pathwise", "logL_pathwise_se", "logL_drift", "logL_drift_se",
                        "mean_Y_T", "max_abs_beta"});
    for (const auto& c : report.cases) {
      const std::vector<std::string> cells{
          c.name,
          c.f_c,
          format_double(c.lambda),
          format_double(c.primary_cost.mean),
          format_double(c.primary_cost.std_error),
          format_double(c.blue_cost.mean),
          format_double(c.blue_cost.std_error),
          format_double(c.log_likelihood.pathwise.mean),
          format_double(c.log_likelihood.pathwise.std_error),
          format_double(c.log_likelihood.drift_form.mean),
          format_double(c.log_likelihood.drift_form.std_error),
          format_double(c.mean_Y_T),
          format_double(c.max_abs_beta)};
      csv.text_row(cells);
    }
  });
  Json cases = Json::array();
  for (const auto& c : report.cases) {
    cases.push_back({{"case", c.name},
                     {"f_c", c.f_c},
                     {"lambda", c.lambda},
                     {"J_primary", to_json(c.primary_cost)},
                     {"J_blue", to_json(c.blue_cost)},
                     {"expected_log_L", to_json(c.log_likelihood)},
                     {"mean_Y_T", c.mean_Y_T},
                     {"max_abs_beta", c.max_abs_beta}});
  }
  sink.write_json("summary.json", Json{{"cases", cases}});
  report.artifacts = sink.files();
  return report;
}

BlueSweepReport run_blue_sweep(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const TimeGrid grid = cfg.grid();
  ArtifactSink sink(out_dir);
  BlueSweepReport report;
  const Pattern f_c = in_stage("config", [&] { return make_pattern(cfg.f_c, grid, "f_c"); });
  const Pattern f_d = make_pattern(cfg.f_d, grid, "f_d");
  const Pattern vbar = make_pattern(cfg.vbar, grid, "vbar");
  for (double lambda : cfg.lambdas) {
    ModelParams p = cfg.params;
    p.lambda = lambda;
    const ControlLaw law = in_stage("riccati", [&] { return ControlLaw::solve(p, f_c, f_d, vbar); });
    const MonteCarloSummary s =
        in_stage("simulate", [&] { return run_monte_carlo(law, mc_options(cfg, cfg.n_paths)); });
    sink.write(fmt::format("mean_lambda_{}.csv", label(lambda)),
               [&](std::ostream& out) { write_mean_csv(out, s); });
    report.rows.push_back({lambda, s.primary_cost, s.blue_cost, s.log_likelihood});
  }
  sink.write("sweep.csv", [&](std::ostream& out) {
    CsvWriter csv(out, {"lambda", "J_primary", "J_primary_se", "J_blue", "J_blue_se",
                        "logL_pathwise", "logL_pathwise_se", "logL_drift", "logL_drift_se"});
    for (const auto& r : report.rows) {
      csv.row({r.lambda, r.primary_cost.mean, r.primary_cost.std_error, r.blue_cost.mean,
               r.blue_cost.std_error, r.log_likelihood.pathwise.mean,
               r.log_likelihood.pathwise.std_error, r.log_likelihood.drift_form.mean,
               r.log_likelihood.drift_form.std_error});
    }
  });
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"lambda", r.lambda},
                    {"J_primary", to_json(r.primary_cost)},
                    {"J_blue", to_json(r.blue_cost)},
                    {"expected_log_L", to_json(r.log_likelihood)}});
  }
  sink.write_json("sweep.json", Json{{"f_c", describe(cfg.f_c)}, {"rows", rows}});
  report.artifacts = sink.files();
  return report;
}

RedOptReport run_red_opt(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const TimeGrid grid = cfg.grid();
  const RedSettings& red = cfg.red;
  ArtifactSink sink(out_dir);
  RedOptReport report;
  const Pattern f_init = in_stage("config", [&] { return make_pattern(red.f_init, grid, "f_init"); });
  const Pattern f0 = red.f0 ? make_pattern(*red.f0, grid, "f0") : f_init;
  const PenaltySpec unpenalised{PenaltyKind::quadratic, f_init, 0.0};

  ModelParams p = cfg.params;
  if (red.baseline_target) {
    const double target = *red.baseline_target;
    for (double lambda : red.lambda_candidates) {
      ModelParams candidate = p;
      candidate.lambda = lambda;
      const double baseline = in_stage("optimize", [&] {
        return evaluate_red(f_init, candidate, unpenalised).expected_log_L;
      });
      report.calibration.push_back({lambda, baseline, std::abs(baseline - target) / std::abs(target)});
    }
    const auto best = std::min_element(
        report.calibration.begin(), report.calibration.end(),
        [](const auto& a, const auto& b) { return a.relative_error < b.relative_error; });
    p.lambda = best->lambda;
    report.calibrated = best->relative_error <= red.baseline_tolerance;
    sink.write("calibration.csv", [&](std::ostream& out) {
      CsvWriter csv(out, {"lambda", "baseline_logL", "relative_error"});
      for (const auto& c : report.calibration) csv.row({c.lambda, c.baseline, c.relative_error});
    });
  }
  report.lambda = p.lambda;
  report.baseline =
      in_stage("optimize", [&] { return evaluate_red(f_init, p, unpenalised).expected_log_L; });

  for (PenaltyKind kind : red.penalties) {
    for (double lambda_reg : red.lambda_regs) {
      const PenaltySpec spec{kind, f_init, lambda_reg};
      ConsistencyGroup group{kind, lambda_reg, {}, {}};
      for (RedMethod method : red.methods) {
        RedResult r = in_stage("optimize", [&] {
          switch (method) {
            case RedMethod::fpi: return optimize_fpi(p, spec, f0, red.sweep);
            case RedMethod::fbs: return optimize_fbs(p, spec, f0, red.sweep);
            case RedMethod::gd: break;
          }
          return optimize_param_gd(p, spec, red.basis, project_onto_basis(red.basis, f0), red.gd);
        });
        sink.write(fmt::format("f_hat_{}_{}_{}.csv", to_string(method), to_string(kind), label(lambda_reg)),
                   [&](std::ostream& out) { write_f_hat_csv(out, r); });
        group.members.push_back(report.results.size());
        report.results.push_back(std::move(r));
      }
      if (group.members.size() >= 2) {
        std::vector<RedResult> members;
        for (std::size_t i : group.members) members.push_back(report.results[i]);
        group.report = in_stage("optimize", [&] {
          return cross_validate(members, red.consistency_threshold);
        });
      }
      report.consistency.push_back(std::move(group));
    }
  }

  sink.write("results.csv", [&](std::ostream& out) {
    CsvWriter csv(out, {"method", "penalty", "lambda_reg", "objective", "expected_log_L",
                        "penalty_value", "iterations", "converged"});
    for (const auto& r : report.results) {
      const std::vector<std::string> cells{std::string(to_string(r.method)),
                                           std::string(to_string(r.penalty_kind)),
                                           format_double(r.lambda_reg),
                                           format_double(r.objective),
                                           format_double(r.expected_log_L),
                                           format_double(r.penalty),
                                           std::to_string(r.iterations),
                                           r.converged ? "true" : "false"};
      csv.text_row(cells);
    }
  });
  sink.write("consistency.csv", [&](std::ostream& out) {
    CsvWriter csv(out, {"penalty", "lambda_reg", "method_a", "method_b", "pattern_gap",
                        "objective_gap", "flagged"});
    for (const auto& g : report.consistency) {
      for (const auto& pair : g.report.pairs) {
        const std::vector<std::string> cells{
            std::string(to_string(g.penalty)),
            format_double(g.lambda_reg),
            std::string(to_string(report.results[g.members[pair.a]].method)),
            std::string(to_string(report.results[g.members[pair.b]].method)),
            format_double(pair.pattern_gap),
            format_double(pair.objective_gap),
            pair.flagged ? "true" : "false"};
        csv.text_row(cells);
      }
    }
  });

  Json calibration = Json::array();
  for (const auto& c : report.calibration) {
    calibration.push_back(
        {{"lambda", c.lambda}, {"baseline", c.baseline}, {"relative_error", c.relative_error}});
  }
  Json results = Json::array();
  for (const auto& r : report.results) {
    results.push_back({{"method", to_string(r.method)},
                       {"penalty", to_string(r.penalty_kind)},
                       {"lambda_reg", r.lambda_reg},
                       {"objective", r.objective},
                       {"expected_log_L", r.expected_log_L},
                       {"penalty_value", r.penalty},
                       {"iterations", r.iterations},
                       {"converged", r.converged},
                       {"history", r.history},
                       {"warnings", r.warnings}});
  }
  Json consistency = Json::array();
  for (const auto& g : report.consistency) {
    Json pairs = Json::array();
    for (const auto& pair : g.report.pairs) {
      pairs.push_back({{"a", to_string(report.results[g.members[pair.a]].method)},
                       {"b", to_string(report.results[g.members[pair.b]].method)},
                       {"pattern_gap", pair.pattern_gap},
                       {"objective_gap", pair.objective_gap},
                       {"flagged", pair.flagged}});
    }
    consistency.push_back({{"penalty", to_string(g.penalty)},
                           {"lambda_reg", g.lambda_reg},
                           {"threshold", g.report.threshold},
                           {"pairs", pairs}});
  }
  sink.write_json("red_opt.json", Json{{"lambda", report.lambda},
                                       {"calibrated", report.calibrated},
                                       {"baseline_expected_log_L", report.baseline},
                                       {"calibration", calibration},
                                       {"results", results},
                                       {"consistency", consistency}});
  report.artifacts = sink.files();
  return report;
}

MomentsReport run_moments(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const TimeGrid grid = cfg.grid();
  const ModelParams& p = cfg.params;
  ArtifactSink sink(out_dir);
  MomentsReport report;
  const Pattern f_c = in_stage("config", [&] { return make_pattern(cfg.f_c, grid, "f_c"); });
  const Pattern zero = zero_pattern(grid, "zero");
  const ControlLaw law = in_stage("riccati", [&] { return ControlLaw::solve(p, f_c, zero, zero); });
  const MomentTrajectories m =
      in_stage("moments", [&] { return solve_moments(p, law.coeffs(), f_c, grid); });
  report.expected_log_L = expected_log_L_analytic(m, law.coeffs(), f_c, p);
  report.invariant_violation = check_moment_invariants(m);
  sink.write("moments.csv", [&](std::ostream& out) { write_csv(out, m); });
  sink.write("riccati.csv", [&](std::ostream& out) { write_csv(out, law.coeffs()); });

  Json mc = nullptr;
  if (cfg.n_paths > 0) {
    const MonteCarloSummary s =
        in_stage("simulate", [&] { return run_monte_carlo(law, mc_options(cfg, cfg.n_paths)); });
    const TerminalMoments tm = terminal_moments(s);
    const std::size_t last = grid.n_steps();
    const std::pair<const char*, std::pair<double, CostEstimate>> rows[] = {
        {"h20", {m.h20()[last], tm.h20}}, {"h11", {m.h11()[last], tm.h11}}, {"h02", {m.h02()[last], tm.h02}}};
    Json terminal = Json::array();
    for (const auto& [name, values] : rows) {
      const auto& [analytic, estimate] = values;
      const double z = (analytic - estimate.mean) / estimate.std_error;
      report.terminal.push_back({name, analytic, estimate, z});
      terminal.push_back({{"moment", name}, {"analytic", analytic}, {"monte_carlo", to_json(estimate)}, {"z", z}});
    }
    mc = Json{{"terminal", terminal}, {"expected_log_L", to_json(s.log_likelihood)}};
  }
  sink.write_json("moments.json",
                  Json{{"f_c", describe(cfg.f_c)},
                       {"expected_log_L", report.expected_log_L},
                       {"invariants_hold", !report.invariant_violation},
                       {"invariant_violation", report.invariant_violation.value_or("")},
                       {"monte_carlo", mc}});
  report.artifacts = sink.files();
  return report;
}

std::string_view to_string(PropertyStatus status) noexcept {
  switch (status) {
    case PropertyStatus::pass: return "pass";
    case PropertyStatus::fail: return "fail";
    case PropertyStatus::skipped: return "skipped";
  }
  return "unknown";
}

bool ValidationReport::all_passed() const noexcept {
  return std::none_of(properties.begin(), properties.end(),
                      [](const PropertyResult& r) { return r.status == PropertyStatus::fail; });
}

const PropertyResult* ValidationReport::find(std::string_view name) const noexcept {
  const auto it = std::find_if(properties.begin(), properties.end(),
                               [&](const PropertyResult& r) { return r.name == name; });
  return it == properties.end() ? nullptr : &*it;
}

namespace {

constexpr double kNullityTolerance = 1e-9;
constexpr double kConsistencySigmas = 3.0;
constexpr std::size_t kNullityPaths = 1024;

PropertyStatus status_of(bool ok) { return ok ? PropertyStatus::pass : PropertyStatus::fail; }

// Uniform draws in [0, 1) keyed by (seed, stream, index).
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, std::uint32_t stream) : philox_(seed), stream_(stream) {}

  std::array<double, 4> operator()(std::uint32_t index) const {
    const auto r = philox_({index, 0, stream_, 0x7a11da7eu});
    std::array<double, 4> u{};
    for (int i = 0; i < 4; ++i) u[i] = r[i] * 0x1.0p-32;
    return u;
  }

 private:
  Philox4x32 philox_;
  std::uint32_t stream_;
};

PropertyResult nullity(const std::string& name, const ModelParams& p, const Pattern& f_c,
                       const Pattern& f_d, const Pattern& vbar, const ExperimentConfig& cfg) {
  const ControlLaw law = ControlLaw::solve(p, f_c, f_d, vbar);
  const RiccatiVector peak = law.coeffs().max_abs();
  const double coeff_peak = std::max({peak[kEta], peak[kRho], peak[kTheta]});
  const MonteCarloSummary s = run_monte_carlo(law, mc_options(cfg, kNullityPaths));
  const double measured = std::max(coeff_peak, s.max_abs_beta);
  return {name, status_of(measured <= kNullityTolerance), measured, kNullityTolerance,
          fmt::format("max |eta|, |rho|, |theta| = {}; max |beta| over {} paths = {}",
                      format_double(coeff_peak), s.n_paths, format_double(s.max_abs_beta))};
}

Pattern resample(const Pattern& f, const TimeGrid& fine) {
  std::vector<double> v(fine.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = f.eval(fine.time(k));
  return Pattern(fine, std::move(v), f.label());
}

PropertyResult riccati_order(const ModelParams& p, const Pattern& f_c, const Pattern& f_d,
                             const Pattern& vbar, const ValidateSettings& settings) {
  // The stored samples define the pattern, so refinement resamples their
  // piecewise-linear interpolant rather than the closed form.
  const TimeGrid& grid = f_c.grid();
  auto solve_at = [&](std::size_t factor) {
    const TimeGrid fine(grid.horizon(), grid.n_steps() * factor);
    return solve_backward(p, resample(f_c, fine), resample(f_d, fine), resample(vbar, fine), fine).at(0);
  };
  const RiccatiVector c1 = solve_at(1), c2 = solve_at(2), c4 = solve_at(4);
  const char* names[] = {"mu", "eta", "rho", "gamma", "theta", "xi"};
  double worst = std::numeric_limits<double>::quiet_NaN();
  double worst_distance = -1.0;
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < c1.size(); ++i) {
    const double e1 = std::abs(c1[i] - c2[i]), e2 = std::abs(c2[i] - c4[i]);
    if (e1 <= 1e-11 * (1.0 + std::abs(c4[i]))) {
      detail += fmt::format("{}: round-off; ", names[i]);
      continue;
    }
    const double ratio = e1 / e2;
    detail += fmt::format("{}: {:.3f}; ", names[i], ratio);
    const bool in_range = ratio >= settings.order_min && ratio <= settings.order_max;
    ok = ok && in_range;
    const double distance = std::abs(std::log(ratio / 16.0));
    if (distance > worst_distance) {
      worst_distance = distance;
      worst = ratio;
    }
  }
  if (worst_distance < 0.0) {
    return {"riccati_step_halving_order", PropertyStatus::pass, 0.0, settings.order_min,
            "all step-halving differences at round-off level"};
  }
  detail += fmt::format("accepted range [{}, {}]", settings.order_min, settings.order_max);
  return {"riccati_step_halving_order", status_of(ok), worst, settings.order_min, detail};
}

PropertyResult hjb_residual_property(const ControlLaw& law, const ExperimentConfig& cfg) {
  const TimeGrid& grid = law.grid();
  const ModelParams& p = law.params();
  const UniformStream u(cfg.seed, 1);
  double worst = 0.0;
  std::size_t failures = 0;
  for (std::uint32_t i = 0; i < cfg.validate.hjb_points; ++i) {
    const auto r = u(i);
    const auto k = 1 + static_cast<std::size_t>(r[0] * static_cast<double>(grid.n_steps() - 1));
    const double t = grid.time(std::min(k, grid.n_steps() - 1));
    // V_t by central differences of the value function across neighbouring grid times.
    const double v = p.v0 + 10.0 * (r[1] - 0.5), y = p.y0 + 10.0 * (r[2] - 0.5);
    const std::size_t kk = std::min(k, grid.n_steps() - 1);
    const double V_t = (value_function(law, grid.time(kk + 1), v, y) -
                        value_function(law, grid.time(kk - 1), v, y)) / (2.0 * grid.dt());
    const double residual =
        V_t + hjb_integrand(law, t, v, y, alpha_hat(law, t, v, y), beta_hat(law, t, v, y));
    const double bound = 5.0 * grid.dt() * (1.0 + std::abs(value_function(law, t, v, y)));
    const double ratio = std::abs(residual) / bound;
    worst = std::max(worst, ratio);
    failures += ratio > 1.0 ? 1 : 0;
  }
  return {"hjb_residual", status_of(failures == 0), worst, 1.0,
          fmt::format("largest |V_t + min H| / (5 dt (1 + |V|)) over {} points; {} above 1",
                      cfg.validate.hjb_points, failures)};
}

PropertyResult minimality_property(const ControlLaw& law, const ExperimentConfig& cfg) {
  const ModelParams& p = law.params();
  const UniformStream u(cfg.seed, 2);
  double worst = std::numeric_limits<double>::infinity();
  std::size_t failures = 0;
  for (std::uint32_t i = 0; i < cfg.validate.hjb_points; ++i) {
    const auto r = u(2 * i), s = u(2 * i + 1);
    const double t = r[0] * p.horizon_T;
    const double v = p.v0 + 10.0 * (r[1] - 0.5), y = p.y0 + 10.0 * (r[2] - 0.5);
    const double a = alpha_hat(law, t, v, y), b = beta_hat(law, t, v, y);
    const double best = hjb_integrand(law, t, v, y, a, b);
    const double perturbed = hjb_integrand(law, t, v, y, a + 2.0 * s[0] - 1.0, b + 2.0 * s[1] - 1.0);
    const double gain = (perturbed - best) / (1.0 + std::abs(best));
    worst = std::min(worst, gain);
    failures += gain < -1e-12 ? 1 : 0;
  }
  return {"pointwise_minimality", status_of(failures == 0), worst, 0.0,
          fmt::format("smallest relative increase of the HJB integrand under perturbation over {} "
                      "points; {} decreases",
                      cfg.validate.hjb_points, failures)};
}

bool simplified(const ModelParams& p, const Pattern& f_d, const Pattern& vbar) {
  return f_d.is_zero() && vbar.is_zero() && p.vbar_T == 0.0;
}

PropertyResult consistency_property(const ControlLaw& law, const ExperimentConfig& cfg,
                                    std::optional<double> analytic) {
  const MonteCarloSummary s = run_monte_carlo(law, mc_options(cfg, cfg.n_paths));
  const ExpectedLogL& e = s.log_likelihood;
  double worst = std::abs(e.pathwise.mean - e.drift_form.mean) / e.combined_std_error();
  std::string detail = fmt::format("pathwise {} +- {}, drift {} +- {}", format_double(e.pathwise.mean),
                                   format_double(e.pathwise.std_error), format_double(e.drift_form.mean),
                                   format_double(e.drift_form.std_error));
  if (analytic) {
    for (const CostEstimate& est : {e.pathwise, e.drift_form}) {
      worst = std::max(worst, std::abs(*analytic - est.mean) / est.std_error);
    }
    detail += fmt::format(", analytic {}", format_double(*analytic));
  } else {
    detail += ", analytic form needs f_d = vbar = 0 and vbar_T = 0";
  }
  return {"likelihood_consistency", status_of(worst <= kConsistencySigmas), worst,
          kConsistencySigmas, detail};
}

}  // namespace

ValidationReport run_validate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  ArtifactSink sink(out_dir);
  ValidationReport report;
  auto& props = report.properties;
  const std::vector<std::string> dependent{"nullity_lambda_zero", "nullity_zero_patterns",
                                           "riccati_step_halving_order", "hjb_residual",
                                           "pointwise_minimality", "likelihood_consistency",
                                           "moment_invariants"};

  bool params_ok = true;
  try {
    validate_params(cfg.params);
    props.push_back({"parameters", PropertyStatus::pass, cfg.params.lambda,
                     cfg.params.lambda_bound(), "all parameter invariants hold"});
  } catch (const InvalidParams& e) {
    params_ok = false;
    props.push_back({"parameters", PropertyStatus::fail, cfg.params.lambda,
                     cfg.params.lambda_bound(), e.violation()});
  }

  if (params_ok) {
    in_stage("validate", [&] {
      const TimeGrid grid = cfg.grid();
      const ModelParams& p = cfg.params;
      const Pattern f_c = make_pattern(cfg.f_c, grid, "f_c");
      const Pattern f_d = make_pattern(cfg.f_d, grid, "f_d");
      const Pattern vbar = make_pattern(cfg.vbar, grid, "vbar");
      const Pattern zero = zero_pattern(grid, "zero");

      ModelParams p0 = p;
      p0.lambda = 0.0;
      props.push_back(nullity("nullity_lambda_zero", p0, f_c, f_d, vbar, cfg));
      props.push_back(nullity("nullity_zero_patterns", p, zero, zero, vbar, cfg));
      props.push_back(riccati_order(p, f_c, f_d, vbar, cfg.validate));

      const ControlLaw law = ControlLaw::solve(p, f_c, f_d, vbar);
      props.push_back(hjb_residual_property(law, cfg));
      props.push_back(minimality_property(law, cfg));

      std::optional<double> analytic;
      PropertyResult invariants{"moment_invariants", PropertyStatus::skipped, 0.0, 0.0,
                                "needs f_d = vbar = 0 and vbar_T = 0"};
      if (simplified(p, f_d, vbar)) {
        const MomentTrajectories m = solve_moments(p, law.coeffs(), f_c, grid);
        analytic = expected_log_L_analytic(m, law.coeffs(), f_c, p);
        const auto violation = check_moment_invariants(m);
        invariants = {"moment_invariants", status_of(!violation), violation ? 1.0 : 0.0, 0.0,
                      violation.value_or("non-negativity and Cauchy-Schwarz hold on every grid point")};
      }
      props.push_back(cfg.n_paths > 0
                          ? consistency_property(law, cfg, analytic)
                          : PropertyResult{"likelihood_consistency", PropertyStatus::skipped, 0.0,
                                           kConsistencySigmas, "mc.paths = 0"});
      props.push_back(invariants);
    });
  } else {
    for (const auto& name : dependent) {
      props.push_back({name, PropertyStatus::skipped, 0.0, 0.0, "parameters are invalid"});
    }
  }

  sink.write("validation.csv", [&](std::ostream& out) {
    CsvWriter csv(out, {"property", "status", "measured", "threshold", "detail"});
    for (const auto& r : props) {
      const std::vector<std::string> cells{r.name, std::string(to_string(r.status)),
                                           format_double(r.measured), format_double(r.threshold),
                                           r.detail};
      csv.text_row(cells);
    }
  });
  Json list = Json::array();
  for (const auto& r : props) {
    list.push_back({{"property", r.name},
                    {"status", to_string(r.status)},
                    {"measured", r.measured},
                    {"threshold", r.threshold},
                    {"detail", r.detail}});
  }
  sink.write_json("validation.json", Json{{"all_passed", report.all_passed()}, {"properties", list}});
  report.artifacts = sink.files();
  return report;
}

RunSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.kind = cfg.kind;
  std::vector<std::string> files;
  auto& lines = summary.lines;

  switch (cfg.kind) {
    case ExperimentKind::blue_sim: {
      const BlueSimReport r = run_blue_sim(cfg, out_dir);
      for (const auto& c : r.cases) {
        lines.push_back(fmt::format("{:<10} lambda={:<6} J_primary={:.4f}+-{:.4f} E log L={:.3f}+-{:.3f} mean Y_T={:.4f}",
                                    c.name, c.lambda, c.primary_cost.mean, c.primary_cost.std_error,
                                    c.log_likelihood.pathwise.mean, c.log_likelihood.pathwise.std_error,
                                    c.mean_Y_T));
      }
      files = r.artifacts;
      break;
    }
    case ExperimentKind::blue_sweep: {
      const BlueSweepReport r = run_blue_sweep(cfg, out_dir);
      for (const auto& row : r.rows) {
        lines.push_back(fmt::format("lambda={:<6} J_primary={:.4f}+-{:.4f} E log L={:.3f}+-{:.3f}",
                                    row.lambda, row.primary_cost.mean, row.primary_cost.std_error,
                                    row.log_likelihood.pathwise.mean,
                                    row.log_likelihood.pathwise.std_error));
      }
      files = r.artifacts;
      break;
    }
    case ExperimentKind::red_opt: {
      const RedOptReport r = run_red_opt(cfg, out_dir);
      for (const auto& c : r.calibration) {
        lines.push_back(fmt::format("calibration lambda={:<6} baseline E log L={:.4f} (rel. error {:.4f})",
                                    c.lambda, c.baseline, c.relative_error));
      }
      lines.push_back(fmt::format("lambda={} baseline E log L={:.4f}{}", r.lambda, r.baseline,
                                  r.calibrated ? "" : " (no candidate within tolerance)"));
      for (const auto& res : r.results) {
        lines.push_back(fmt::format("{:<3} {:<9} lambda_reg={:<4} E log L={:.4f} J_red={:.6f} iterations={}{}",
                                    to_string(res.method), to_string(res.penalty_kind), res.lambda_reg,
                                    res.expected_log_L, res.objective, res.iterations,
                                    res.converged ? "" : " (not converged)"));
      }
      for (const auto& g : r.consistency) {
        if (g.report.any_flagged()) {
          lines.push_back(fmt::format("inconsistent methods for {} lambda_reg={}", to_string(g.penalty),
                                      g.lambda_reg));
        }
      }
      files = r.artifacts;
      break;
    }
    case ExperimentKind::moments: {
      const MomentsReport r = run_moments(cfg, out_dir);
      lines.push_back(fmt::format("analytic E log L={:.6f}; invariants {}", r.expected_log_L,
                                  r.invariant_violation.value_or("hold")));
      for (const auto& t : r.terminal) {
        lines.push_back(fmt::format("{}(T) analytic={:.6f} monte carlo={:.6f}+-{:.6f} z={:.2f}", t.name,
                                    t.analytic, t.monte_carlo.mean, t.monte_carlo.std_error, t.z));
      }
      files = r.artifacts;
      break;
    }
    case ExperimentKind::validate: {
      const ValidationReport r = run_validate(cfg, out_dir);
      for (const auto& prop : r.properties) {
        lines.push_back(fmt::format("{:<7} {:<28} measured={} {}", to_string(prop.status), prop.name,
                                    format_double(prop.measured), prop.detail));
      }
      summary.passed = r.all_passed();
      files = r.artifacts;
      break;
    }
  }

  summary.artifacts = describe_artifacts(out_dir, files);
  summary.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json config = Json::object();
  for (const auto& [k, v] : cfg.entries) config[k] = v;
  Json artifacts = Json::array();
  for (const auto& a : summary.artifacts) {
    artifacts.push_back({{"file", a.file}, {"bytes", a.bytes}, {"sha256", a.sha256}});
  }
  const TimeGrid grid = cfg.grid();
  const Json manifest{{"tool", "deception-lq"},
                      {"version", library_version()},
                      {"experiment", to_string(cfg.kind)},
                      {"config", config},
                      {"grid", {{"T", grid.horizon()}, {"n_steps", grid.n_steps()}, {"dt", grid.dt()}}},
                      {"seed", cfg.seed},
                      {"n_paths", cfg.n_paths},
                      {"workers", cfg.workers},
                      {"passed", summary.passed},
                      {"duration_seconds", summary.duration_seconds},
                      {"artifacts", artifacts}};
  in_stage("output", [&] {
    std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw Error("cannot write manifest.json");
  });
  return summary;
}

}  // namespace deception_lq
