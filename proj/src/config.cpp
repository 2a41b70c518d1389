#include "deception_lq/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "deception_lq/errors.hpp"

namespace deception_lq {

std::string_view to_string(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::blue_sim: return "blue_sim";
    case ExperimentKind::blue_sweep: return "blue_sweep";
    case ExperimentKind::red_opt: return "red_opt";
    case ExperimentKind::moments: return "moments";
    case ExperimentKind::validate: return "validate";
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) noexcept {
  std::string normalized(name);
  std::replace(normalized.begin(), normalized.end(), '-', '_');
  for (auto kind : {ExperimentKind::blue_sim, ExperimentKind::blue_sweep, ExperimentKind::red_opt,
                    ExperimentKind::moments, ExperimentKind::validate}) {
    if (normalized == to_string(kind)) return kind;
  }
  return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> items;
  while (true) {
    const auto comma = s.find(',');
    items.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return items;
}

bool valid_name(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}' as a number", key, text));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ConfigError(fmt::format("{}: value must be finite", key));
  }
  return value;
}

// Key lookup that remembers which keys were read, so leftovers can be
// reported as unrecognised.
class Reader {
 public:
  explicit Reader(const ConfigEntries& entries) {
    for (const auto& [k, v] : entries) values_.emplace(k, v);
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  bool has_prefix(const std::string& prefix) const {
    const auto it = values_.lower_bound(prefix);
    return it != values_.end() && it->first.starts_with(prefix);
  }

  std::optional<std::string_view> optional_text(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  std::string_view text(const std::string& key) {
    if (auto v = optional_text(key)) return *v;
    throw ConfigError(fmt::format("missing required key '{}'", key));
  }

  double real(const std::string& key) { return parse_number<double>(key, text(key)); }

  double real(const std::string& key, double fallback) {
    const auto v = optional_text(key);
    return v ? parse_number<double>(key, *v) : fallback;
  }

  template <class T>
  T integer(const std::string& key, T fallback) {
    const auto v = optional_text(key);
    return v ? parse_number<T>(key, *v) : fallback;
  }

  std::vector<double> reals(const std::string& key) {
    std::vector<double> out;
    for (auto item : split_list(text(key))) out.push_back(parse_number<double>(key, item));
    return out;
  }

  std::vector<std::string_view> words(const std::string& key) { return split_list(text(key)); }

  void reject_leftovers(ExperimentKind kind) const {
    for (const auto& [k, v] : values_) {
      if (!used_.contains(k)) {
        throw ConfigError(
            fmt::format("key '{}' is not recognised for experiment '{}'", k, to_string(kind)));
      }
    }
  }

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::set<std::string> used_;
};

PatternSpec read_pattern(Reader& r, const std::string& prefix) {
  const std::string_view kind = r.text(prefix + ".kind");
  if (kind == "constant") return pattern_kind::Constant{r.real(prefix + ".value")};
  if (kind == "sinusoid") {
    return pattern_kind::Sinusoid{r.real(prefix + ".amp"), r.real(prefix + ".omega")};
  }
  if (kind == "affine") {
    return pattern_kind::Affine{r.real(prefix + ".intercept"), r.real(prefix + ".slope")};
  }
  if (kind == "samples") return pattern_kind::Samples{r.reals(prefix + ".values")};
  throw ConfigError(fmt::format(
      "{}.kind: unknown pattern kind '{}' (expected constant, sinusoid, affine or samples)", prefix,
      kind));
}

std::optional<PatternSpec> read_optional_pattern(Reader& r, const std::string& prefix) {
  if (!r.has_prefix(prefix + ".")) return std::nullopt;
  return read_pattern(r, prefix);
}

void check_samples(const PatternSpec& spec, std::size_t n_steps, std::string_view name) {
  if (const auto* s = std::get_if<pattern_kind::Samples>(&spec)) {
    if (s->values.size() != n_steps + 1) {
      throw ConfigError(fmt::format("{}: {} samples given, grid has {} points", name,
                                    s->values.size(), n_steps + 1));
    }
  }
}

void check_sample_counts(const ExperimentConfig& cfg) {
  check_samples(cfg.f_c, cfg.n_steps, "f_c");
  check_samples(cfg.f_d, cfg.n_steps, "f_d");
  check_samples(cfg.vbar, cfg.n_steps, "vbar");
  for (const auto& c : cfg.cases) check_samples(c.f_c, cfg.n_steps, "case." + c.name + ".f_c");
  check_samples(cfg.red.f_init, cfg.n_steps, "f_init");
  if (cfg.red.f0) check_samples(*cfg.red.f0, cfg.n_steps, "f0");
}

bool is_zero_constant(const PatternSpec& spec) {
  const auto* c = std::get_if<pattern_kind::Constant>(&spec);
  return c != nullptr && c->value == 0.0;
}

void read_monte_carlo(Reader& r, ExperimentConfig& cfg) {
  cfg.n_paths = r.integer<std::size_t>("mc.paths", cfg.n_paths);
  cfg.seed = r.integer<std::uint64_t>("mc.seed", cfg.seed);
  cfg.workers = r.integer<unsigned>("mc.workers", cfg.workers);
}

void read_red(Reader& r, RedSettings& red) {
  if (r.has("red.methods")) {
    red.methods.clear();
    for (auto w : r.words("red.methods")) {
      if (w == "fpi") red.methods.push_back(RedMethod::fpi);
      else if (w == "fbs") red.methods.push_back(RedMethod::fbs);
      else if (w == "gd") red.methods.push_back(RedMethod::gd);
      else throw ConfigError(fmt::format("red.methods: unknown method '{}'", w));
    }
  }
  for (auto w : r.words("red.penalties")) {
    if (w == "quadratic") red.penalties.push_back(PenaltyKind::quadratic);
    else if (w == "kl_log") red.penalties.push_back(PenaltyKind::kl_log);
    else throw ConfigError(fmt::format("red.penalties: unknown penalty '{}'", w));
  }
  red.lambda_regs = r.reals("red.lambda_regs");
  if (r.has("red.lambda_candidates")) red.lambda_candidates = r.reals("red.lambda_candidates");
  if (r.has("red.baseline_target")) {
    if (red.lambda_candidates.empty()) {
      throw ConfigError("red.baseline_target needs red.lambda_candidates");
    }
    red.baseline_target = r.real("red.baseline_target");
  } else if (!red.lambda_candidates.empty()) {
    throw ConfigError("red.lambda_candidates needs red.baseline_target");
  }
  red.baseline_tolerance = r.real("red.baseline_tolerance", red.baseline_tolerance);
  red.consistency_threshold = r.real("red.consistency_threshold", red.consistency_threshold);
  red.sweep.tol = r.real("red.tol", red.sweep.tol);
  red.sweep.max_iter = r.integer<std::size_t>("red.max_iter", red.sweep.max_iter);
  red.sweep.relaxation = r.real("red.relaxation", red.sweep.relaxation);
  red.gd.step = r.real("gd.step", red.gd.step);
  red.gd.max_iter = r.integer<std::size_t>("gd.max_iter", red.gd.max_iter);
  red.gd.tol = r.real("gd.tol", red.gd.tol);
  if (auto b = r.optional_text("gd.basis")) {
    if (*b == "polynomial") red.basis.kind = Basis::Kind::polynomial;
    else if (*b == "fourier") red.basis.kind = Basis::Kind::fourier;
    else throw ConfigError(fmt::format("gd.basis: unknown basis '{}'", *b));
  }
  red.basis.order = r.integer<std::size_t>("gd.order", red.basis.order);
  if (red.basis.dimension() > kMaxBasisDimension) {
    throw ConfigError(fmt::format("gd.order: basis dimension {} exceeds {}", red.basis.dimension(),
                                  kMaxBasisDimension));
  }
  red.f_init = read_pattern(r, "f_init");
  red.f0 = read_optional_pattern(r, "f0");
  if (red.penalties.empty() || red.lambda_regs.empty() || red.methods.empty()) {
    throw ConfigError("red.methods, red.penalties and red.lambda_regs must be non-empty");
  }
}

}  // namespace

ConfigEntries parse_config_text(std::string_view text) {
  ConfigEntries entries;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    const std::string_view line = trim(text.substr(0, eol));
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(fmt::format("line {}: empty key or value", line_no));
    }
    if (!seen.emplace(key).second) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key));
    }
    entries.emplace_back(std::string(key), std::string(value));
  }
  return entries;
}

std::size_t default_steps(double horizon_T) {
  return std::max<std::size_t>(1000, static_cast<std::size_t>(std::llround(2000.0 * horizon_T)));
}

ExperimentConfig load_config(std::string_view text) {
  ExperimentConfig cfg;
  cfg.entries = parse_config_text(text);
  Reader r(cfg.entries);

  const std::string_view kind_name = r.text("experiment");
  const auto kind = parse_experiment_kind(kind_name);
  if (!kind) throw ConfigError(fmt::format("experiment: unknown kind '{}'", kind_name));
  cfg.kind = *kind;

  ModelParams& p = cfg.params;
  p.horizon_T = r.real("params.T");
  p.sigma_B = r.real("params.sigma_B");
  p.sigma_W = r.real("params.sigma_W");
  p.r_alpha = r.real("params.r_alpha");
  p.r_beta = r.real("params.r_beta");
  p.r_v = r.real("params.r_v");
  p.t_v = r.real("params.t_v");
  p.vbar_T = r.real("params.vbar_T");
  p.v0 = r.real("params.V0");
  p.y0 = r.real("params.Y0");
  if (cfg.kind != ExperimentKind::blue_sweep) p.lambda = r.real("params.lambda");

  if (!(p.horizon_T > 0.0)) throw ConfigError("params.T must be positive");
  cfg.n_steps = r.integer<std::size_t>("grid.n_steps", default_steps(p.horizon_T));
  if (cfg.n_steps == 0) throw ConfigError("grid.n_steps must be positive");

  const bool simplified = cfg.kind == ExperimentKind::red_opt || cfg.kind == ExperimentKind::moments;
  if (auto f = read_optional_pattern(r, "f_d")) cfg.f_d = *f;
  if (auto f = read_optional_pattern(r, "vbar")) cfg.vbar = *f;
  if (simplified && (!is_zero_constant(cfg.f_d) || !is_zero_constant(cfg.vbar) || p.vbar_T != 0.0)) {
    throw ConfigError(fmt::format("experiment '{}' requires f_d = 0, vbar = 0 and params.vbar_T = 0",
                                  to_string(cfg.kind)));
  }

  switch (cfg.kind) {
    case ExperimentKind::blue_sim:
      read_monte_carlo(r, cfg);
      cfg.export_paths = r.integer<std::size_t>("mc.export_paths", cfg.export_paths);
      if (r.has("cases")) {
        for (auto name : r.words("cases")) {
          if (!valid_name(name)) throw ConfigError(fmt::format("cases: invalid case name '{}'", name));
          const std::string prefix = fmt::format("case.{}", name);
          if (std::any_of(cfg.cases.begin(), cfg.cases.end(),
                          [&](const BlueCase& c) { return c.name == name; })) {
            throw ConfigError(fmt::format("cases: duplicate case '{}'", name));
          }
          cfg.cases.push_back({std::string(name), read_pattern(r, prefix + ".f_c"),
                               r.real(prefix + ".lambda", p.lambda)});
        }
      } else {
        cfg.f_c = read_pattern(r, "f_c");
        cfg.cases.push_back({"main", cfg.f_c, p.lambda});
      }
      break;
    case ExperimentKind::blue_sweep:
      read_monte_carlo(r, cfg);
      cfg.f_c = read_pattern(r, "f_c");
      cfg.lambdas = r.reals("sweep.lambdas");
      break;
    case ExperimentKind::moments:
      read_monte_carlo(r, cfg);
      cfg.f_c = read_pattern(r, "f_c");
      break;
    case ExperimentKind::validate:
      read_monte_carlo(r, cfg);
      cfg.f_c = read_pattern(r, "f_c");
      cfg.validate.hjb_points = r.integer<std::size_t>("validate.hjb_points", cfg.validate.hjb_points);
      cfg.validate.order_min = r.real("validate.order_min", cfg.validate.order_min);
      cfg.validate.order_max = r.real("validate.order_max", cfg.validate.order_max);
      break;
    case ExperimentKind::red_opt:
      read_red(r, cfg.red);
      break;
  }
  r.reject_leftovers(cfg.kind);

  check_sample_counts(cfg);

  if (cfg.kind != ExperimentKind::validate) validate_params(cfg.params);
  return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& overrides) {
  auto set_entry = [&](const std::string& key, std::string value) {
    auto it = std::find_if(cfg.entries.begin(), cfg.entries.end(),
                           [&](const auto& e) { return e.first == key; });
    if (it == cfg.entries.end()) cfg.entries.emplace_back(key, std::move(value));
    else it->second = std::move(value);
  };
  if (overrides.seed) {
    cfg.seed = *overrides.seed;
    set_entry("mc.seed", std::to_string(cfg.seed));
  }
  if (overrides.paths) {
    if (*overrides.paths == 0) throw ConfigError("--paths must be positive");
    cfg.n_paths = *overrides.paths;
    set_entry("mc.paths", std::to_string(cfg.n_paths));
  }
  if (overrides.grid) {
    if (*overrides.grid == 0) throw ConfigError("--grid must be positive");
    cfg.n_steps = *overrides.grid;
    set_entry("grid.n_steps", std::to_string(cfg.n_steps));
    check_sample_counts(cfg);
  }
  if (overrides.workers) cfg.workers = *overrides.workers;
}

}  // namespace deception_lq
