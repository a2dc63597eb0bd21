#include "gfts/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gfts/error.hpp"
#include "gfts/format.hpp"
#include "gfts/io.hpp"
#include "gfts/random.hpp"

namespace gfts {

using nlohmann::json;
using nlohmann::ordered_json;

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(n)));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  if (coverage.empty()) throw ValidationError("coverage needs at least one level");
  for (double c : coverage) {
    if (!(c > 0.0 && c < 1.0)) throw ValidationError("coverage levels must lie in (0, 1)");
  }
  if (replicates < 100) throw ValidationError("bootstrap.replicates must be at least 100");
  if (paths < 0) throw ValidationError("bootstrap.paths must be nonnegative");
  if (methods.empty()) throw ValidationError("methods must not be empty");
  if (initial_window < 3) throw ValidationError("evaluation.initial_window must be at least 3");
  if (threads < 1) throw ValidationError("threads must be at least 1");
  if (open_age <= first_age) throw ValidationError("ages.open must exceed ages.first");
  if (simulate.empty() && data.empty()) throw ValidationError("config needs data entries or a simulate block");
  if (!simulate.empty() && simulate != "japan" && simulate != "toy") {
    throw ValidationError("simulate.kind must be 'japan' or 'toy'");
  }
  if (selector.kind == ComponentSelector::Kind::Threshold && !(selector.delta > 0.0 && selector.delta <= 1.0)) {
    throw ValidationError("selector.delta must lie in (0, 1]");
  }
  if (selector.kind == ComponentSelector::Kind::Fixed && selector.fixed < 1) {
    throw ValidationError("selector.fixed must be positive");
  }
  if (!(annuity.level > 0.0 && annuity.level < 1.0)) throw ValidationError("annuity.level must lie in (0, 1)");
  if (annuity.rate < 0.0) throw ValidationError("annuity.rate must be nonnegative");
  for (int m : annuity.maturities) {
    if (m < 1) throw ValidationError("annuity maturities must be positive");
  }
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    check_keys(j, "config",
               {"structure", "data", "simulate", "ages", "years", "model", "selector", "smoothing", "methods",
                "horizon", "coverage", "bootstrap", "evaluation", "annuity", "output", "threads"});
    if (j.contains("structure")) c.structure = resolve(base_dir, j["structure"].get<std::string>());
    if (j.contains("data")) {
      for (const auto& d : j["data"]) {
        check_keys(d, "data entry", {"area", "deaths", "exposures"});
        c.data.push_back({d.at("area").get<std::string>(), resolve(base_dir, d.at("deaths").get<std::string>()),
                          resolve(base_dir, d.at("exposures").get<std::string>())});
      }
    }
    if (j.contains("simulate")) {
      const auto& s = j["simulate"];
      check_keys(s, "simulate", {"kind", "seed", "years", "first_year"});
      c.simulate = s.value("kind", "japan");
      c.synthetic.seed = s.value("seed", std::uint64_t{1});
      c.synthetic.years = s.value("years", 40);
      c.synthetic.first_year = s.value("first_year", 1975);
    }
    if (j.contains("ages")) {
      check_keys(j["ages"], "ages", {"first", "open"});
      c.first_age = j["ages"].value("first", 60);
      c.open_age = j["ages"].value("open", 100);
    }
    if (j.contains("years")) {
      check_keys(j["years"], "years", {"first", "last"});
      if (j["years"].contains("first")) c.first_year = j["years"]["first"].get<int>();
      if (j["years"].contains("last")) c.last_year = j["years"]["last"].get<int>();
    }
    if (j.contains("model")) c.model = parse_model(j["model"].get<std::string>());
    if (j.contains("selector")) {
      const auto& s = j["selector"];
      check_keys(s, "selector", {"delta", "fixed"});
      if (s.contains("fixed")) {
        c.selector = ComponentSelector::fixed_count(s["fixed"].get<int>());
      } else {
        c.selector = ComponentSelector::threshold(s.value("delta", 0.95));
      }
    }
    if (j.contains("smoothing")) {
      const auto& s = j["smoothing"];
      check_keys(s, "smoothing", {"knots", "penalty_order", "monotone_from_age", "lambda"});
      c.smoothing.basis_knots = s.value("knots", c.smoothing.basis_knots);
      c.smoothing.penalty_order = s.value("penalty_order", c.smoothing.penalty_order);
      c.smoothing.monotone_from_age = s.value("monotone_from_age", c.smoothing.monotone_from_age);
      if (s.contains("lambda") && !(s["lambda"].is_string() && s["lambda"] == "auto")) {
        c.smoothing.lambda = s["lambda"].get<double>();
      }
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("coverage")) c.coverage = j["coverage"].get<std::vector<double>>();
    if (j.contains("bootstrap")) {
      const auto& b = j["bootstrap"];
      check_keys(b, "bootstrap", {"replicates", "paths", "seed", "ratio_bootstrap"});
      c.replicates = b.value("replicates", c.replicates);
      c.paths = b.value("paths", c.paths);
      c.seed = b.value("seed", c.seed);
      c.ratio_bootstrap = b.value("ratio_bootstrap", c.ratio_bootstrap);
    }
    if (j.contains("evaluation")) {
      const auto& e = j["evaluation"];
      check_keys(e, "evaluation", {"enabled", "initial_window", "intervals"});
      c.evaluate = e.value("enabled", c.evaluate);
      c.initial_window = e.value("initial_window", c.initial_window);
      c.evaluate_intervals = e.value("intervals", c.evaluate_intervals);
    }
    if (j.contains("annuity")) {
      const auto& a = j["annuity"];
      check_keys(a, "annuity", {"series", "ages", "maturities", "rate", "level", "max_age"});
      if (a.contains("series")) c.annuity.series = a["series"].get<std::vector<std::string>>();
      if (a.contains("ages")) c.annuity.ages = a["ages"].get<std::vector<int>>();
      if (a.contains("maturities")) c.annuity.maturities = a["maturities"].get<std::vector<int>>();
      c.annuity.rate = a.value("rate", c.annuity.rate);
      c.annuity.level = a.value("level", c.annuity.level);
      c.annuity.max_age = a.value("max_age", c.annuity.max_age);
    }
    if (j.contains("output")) c.output = resolve(base_dir, j["output"].get<std::string>());
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_run_config(read_text(path), base);
}

// ---------------------------------------------------------------- data

Dataset dataset_from_bottom(GroupStructure structure, const std::vector<MortalitySurface>& bottom) {
  if (bottom.size() != structure.bottom_count()) throw DimensionError("one surface per bottom series is required");
  Dataset out{std::move(structure), {}};
  const auto& s = out.structure;
  for (std::size_t g = 0; g < s.group_count(); ++g) {
    std::vector<MortalitySurface> members;
    for (std::size_t b : s.groups()[g].members) members.push_back(bottom[b]);
    out.series.push_back(aggregate_surface(s.groups()[g].id, members));
  }
  for (std::size_t b = 0; b < bottom.size(); ++b) {
    if (bottom[b].series_id() != s.bottom_series()[b]) {
      throw ReferenceError("bottom surface " + bottom[b].series_id() + " is out of order; expected " +
                           s.bottom_series()[b]);
    }
    out.series.push_back(bottom[b]);
  }
  return out;
}

namespace {

std::vector<MortalitySurface> restrict_years(const std::vector<MortalitySurface>& in, const RunConfig& c) {
  std::vector<MortalitySurface> out;
  for (const auto& s : in) {
    const int y0 = s.years().front();
    const int y1 = s.years().back();
    const int first = c.first_year.value_or(y0);
    const int last = c.last_year.value_or(y1);
    if (first < y0 || last > y1 || last < first) {
      throw StructuralError("requested years " + std::to_string(first) + "-" + std::to_string(last) +
                            " are not covered by " + s.series_id());
    }
    out.push_back(s.slice_years(static_cast<std::size_t>(first - y0), static_cast<std::size_t>(last - first + 1)));
  }
  return out;
}

}  // namespace

Dataset load_dataset(const RunConfig& c) {
  if (!c.simulate.empty()) {
    SyntheticOptions o = c.synthetic;
    o.first_age = c.first_age;
    o.open_age = c.open_age;
    SyntheticData d = c.simulate == "toy" ? simulate_toy(o) : simulate_japan(o);
    return dataset_from_bottom(std::move(d.structure), restrict_years(d.bottom, c));
  }
  GroupStructure structure = c.structure.empty() ? japan_structure() : read_group_structure(c.structure);
  std::map<std::string, MortalitySurface> by_id;
  for (const auto& entry : c.data) {
    const HmdTable deaths = collapse_ages(read_hmd_file(entry.deaths), c.first_age, c.open_age);
    const HmdTable exposures = collapse_ages(read_hmd_file(entry.exposures), c.first_age, c.open_age);
    if (deaths.years != exposures.years) {
      throw StructuralError("deaths and exposures of " + entry.area + " cover different years");
    }
    by_id.emplace(entry.area + "*F", MortalitySurface::from_counts(entry.area + "*F", deaths.years, deaths.ages,
                                                                   deaths.female, exposures.female));
    by_id.emplace(entry.area + "*M", MortalitySurface::from_counts(entry.area + "*M", deaths.years, deaths.ages,
                                                                   deaths.male, exposures.male));
  }
  std::vector<MortalitySurface> bottom;
  for (const auto& id : structure.bottom_series()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("no data entry supplies bottom series " + id);
    bottom.push_back(it->second);
  }
  bottom = restrict_years(bottom, c);
  for (const auto& b : bottom) {
    if (b.years() != bottom.front().years()) throw StructuralError("bottom series cover different years");
  }
  return dataset_from_bottom(std::move(structure), bottom);
}

Grid filled_log_rates(const MortalitySurface& observed, const MortalitySurface& smoothed) {
  Grid out = observed.log_rates();
  const Grid& s = smoothed.log_rates();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (is_missing(out(i)) || !std::isfinite(out(i))) out(i) = s(i);
  }
  return out;
}

// ---------------------------------------------------------------- forecasting

SeriesFit fit_series(const MortalitySurface& observed, const MortalitySurface& smoothed,
                     const ForecastOptions& o) {
  SeriesFit fit;
  const int error_horizon = o.error_horizon > 0 ? o.error_horizon : o.horizon;
  std::function<Eigen::MatrixXd(int)> errors_at;
  const Grid filled = filled_log_rates(observed, smoothed);
  if (o.model == ModelKind::Fts) {
    fit.fts = fpca_fit(smoothed.log_rates(), o.selector);
    fit.forecast_log = fts_forecast(fit.fts, o.horizon);
    errors_at = [&](int h) { return insample_errors(fit.fts, filled, h); };
  } else {
    fit.lc = with_adjusted_kappa(fit_lee_carter(smoothed), smoothed);
    fit.forecast_log = forecast_lee_carter(fit.lc, o.horizon);
    errors_at = [&](int h) { return insample_errors(fit.lc, filled, h); };
  }
  if (o.errors) {
    for (int h = 1; h <= error_horizon; ++h) {
      try {
        fit.errors.push_back(errors_at(h));
      } catch (const InsufficientDataError&) {
        if (fit.errors.empty()) throw;
        // Too few origins this far out: reuse the longest horizon available.
        fit.notes.push_back("h=" + std::to_string(h) + " reuses the h=" + std::to_string(fit.errors.size()) +
                            " in-sample errors");
        fit.errors.push_back(fit.errors.back());
      }
    }
  }
  return fit;
}

ForecastRun forecast_all(const GroupStructure& structure, const std::vector<MortalitySurface>& observed,
                         const std::vector<MortalitySurface>& smoothed, const ForecastOptions& o) {
  const std::size_t n = structure.series_count();
  if (observed.size() != n || smoothed.size() != n) throw DimensionError("one surface per series is required");
  ForecastRun run;
  run.fits.resize(n);
  parallel_for(n, o.threads, [&](std::size_t k) {
    try {
      run.fits[k] = fit_series(observed[k], smoothed[k], o);
    } catch (const Error& e) {
      throw Error(e.kind(), structure.series_ids()[k] + ": " + e.what());
    }
  });

  run.base.horizon = o.horizon;
  run.base.method = Method::Base;
  run.base.model = o.model;
  run.base.series = structure.series_ids();
  for (const auto& f : run.fits) run.base.rates.push_back(f.forecast_log.array().exp().matrix());
  if (o.paths > 0) {
    run.base.replicates.resize(n);
    parallel_for(n, o.threads, [&](std::size_t k) {
      auto paths = bootstrap_paths(run.fits[k].forecast_log, run.fits[k].errors, o.paths, derive_seed(o.seed, 2, k));
      for (auto& p : paths) p = p.array().exp().matrix();
      run.base.replicates[k] = std::move(paths);
    });
  }

  const bool reconcile = std::any_of(o.methods.begin(), o.methods.end(), [](Method m) { return m != Method::Base; });
  if (!reconcile) return run;

  std::vector<Grid> bottom_exposures;
  for (std::size_t b = 0; b < structure.bottom_count(); ++b) {
    bottom_exposures.push_back(observed[structure.group_count() + b].exposures());
  }
  run.ratios = forecast_exposure_ratios(structure, bottom_exposures, o.horizon);
  run.summing = run.ratios.summing();
  for (const auto& note : run.ratios.notes) run.notes.push_back(note);

  std::vector<SummingForecast> replicate_s;
  if (o.paths > 0 && o.ratio_bootstrap) {
    for (auto& shares : run.ratios.bootstrap_shares(o.paths, derive_seed(o.seed, 3, 0))) {
      replicate_s.push_back(run.summing.with_base_shares(std::move(shares)));
    }
  }
  for (Method m : o.methods) {
    if (m == Method::Base) continue;
    if (o.paths > 0) {
      run.reconciled[m] = reconcile_bootstrap(structure, run.base, m, run.summing,
                                              replicate_s.empty() ? nullptr : &replicate_s);
    } else {
      run.reconciled[m] = m == Method::BottomUp ? bottom_up(structure, run.base, run.summing)
                                                : ols_reconcile(structure, run.base, run.summing);
    }
    run.reconciled[m].model = o.model;
  }
  return run;
}

// ---------------------------------------------------------------- stages

Stage parse_stage(const std::string& s) {
  if (s == "smooth") return Stage::Smooth;
  if (s == "fit") return Stage::Fit;
  if (s == "forecast") return Stage::Forecast;
  if (s == "reconcile") return Stage::Reconcile;
  if (s == "evaluate") return Stage::Evaluate;
  if (s == "price") return Stage::Price;
  throw ValidationError("unknown stage '" + s + "'");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Smooth: return "smooth";
    case Stage::Fit: return "fit";
    case Stage::Forecast: return "forecast";
    case Stage::Reconcile: return "reconcile";
    case Stage::Evaluate: return "evaluate";
    case Stage::Price: return "price";
  }
  return "?";
}

namespace {

struct StageFailure {
  int code;
  std::string stage;
  std::string message;
};

template <typename F>
auto run_stage(int code, const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw StageFailure{code, stage, e.kind() + ": " + e.what()};
  } catch (const std::exception& e) {
    throw StageFailure{code, stage, e.what()};
  }
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kMissing;
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

std::string smoothed_csv(const Dataset& data, const std::vector<MortalitySurface>& smoothed) {
  std::ostringstream out;
  out << "series,year,age,observed_log_rate,smoothed_log_rate\n";
  for (std::size_t k = 0; k < smoothed.size(); ++k) {
    const auto& s = smoothed[k];
    for (std::size_t t = 0; t < s.year_count(); ++t) {
      for (std::size_t x = 0; x < s.age_count(); ++x) {
        const auto ti = static_cast<Eigen::Index>(t);
        const auto xi = static_cast<Eigen::Index>(x);
        const double obs = data.series[k].log_rates()(ti, xi);
        out << s.series_id() << ',' << s.years()[t] << ',' << s.ages().label(x) << ','
            << format_double(std::isfinite(obs) ? obs : kMissing) << ',' << format_double(s.log_rates()(ti, xi))
            << '\n';
      }
    }
  }
  return out.str();
}

void append_forecasts(std::ostringstream& out, const GroupStructure& structure, const ForecastSet& set,
                      const AgeGrid& ages, int last_year) {
  for (std::size_t k = 0; k < set.series.size(); ++k) {
    const std::string& level = structure.level_of(set.series[k]);
    for (int h = 1; h <= set.horizon; ++h) {
      for (std::size_t x = 0; x < ages.size(); ++x) {
        out << set.series[k] << ',' << level << ',' << to_string(set.method) << ',' << to_string(set.model) << ','
            << ages.label(x) << ',' << h << ',' << last_year + h << ','
            << format_double(set.rates[k](static_cast<Eigen::Index>(x), h - 1)) << '\n';
      }
    }
  }
}

void append_interval(std::ostringstream& out, const std::string& series, const std::string& level,
                     const std::string& method, const std::string& model, const IntervalSet& set, int h,
                     const AgeGrid& ages, int last_year, double psi) {
  for (std::size_t x = 0; x < ages.size(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    out << series << ',' << level << ',' << method << ',' << model << ',' << to_string(set.kind) << ','
        << format_double(set.level) << ',' << ages.label(x) << ',' << h << ',' << last_year + h << ','
        << format_double(set.lower(xi, 0)) << ',' << format_double(set.upper(xi, 0)) << ',' << format_double(psi)
        << '\n';
  }
}

IntervalSet column_interval(const IntervalSet& set, int h) {
  IntervalSet out = set;
  out.lower = set.lower.col(h - 1);
  out.upper = set.upper.col(h - 1);
  return out;
}

// Rate-scale band of one series at one horizon.
BandPair rate_band(const SeriesFit& fit, int h, double coverage, int replicates, std::uint64_t seed) {
  BandPair b = bootstrap_intervals(fit.errors[static_cast<std::size_t>(h - 1)], fit.forecast_log.col(h - 1), coverage,
                                   replicates, seed);
  for (IntervalSet* s : {&b.pointwise, &b.simultaneous}) {
    s->lower = s->lower.array().exp().matrix();
    s->upper = s->upper.array().exp().matrix();
  }
  return b;
}

ordered_json arima_json(const ArimaSpec& s) {
  ordered_json j;
  j["model"] = s.label();
  j["p"] = s.p;
  j["d"] = s.d;
  j["q"] = s.q;
  j["constant"] = s.include_drift ? json(s.constant) : json(nullptr);
  j["sigma2"] = s.sigma2;
  j["aicc"] = std::isfinite(s.aicc) ? json(s.aicc) : json(nullptr);
  return j;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, Stage last) {
  PipelineResult result;
  std::vector<std::pair<std::string, std::string>> outputs;  // file name, content
  ordered_json diag;
  diag["schema"] = "gfts-diagnostics/1";
  diag["stage"] = to_string(last);
  diag["model"] = to_string(config.model);
  diag["seed"] = config.seed;
  diag["threads"] = config.threads;
  diag["notes"] = ordered_json::array();
  auto note = [&](const std::string& s) { diag["notes"].push_back(s); };
  const int at_least = static_cast<int>(last);
  auto reached = [&](Stage s) { return at_least >= static_cast<int>(s); };

  try {
    const Dataset data = run_stage(kExitLoad, "load", [&] { return load_dataset(config); });
    const GroupStructure& structure = data.structure;
    const std::size_t n_series = structure.series_count();
    const MortalitySurface& first = data.series.front();
    const AgeGrid& ages = first.ages();
    const int last_year = first.years().back();
    {
      ordered_json s;
      s["series"] = n_series;
      s["bottom"] = structure.bottom_count();
      ordered_json lv;
      for (const auto& l : structure.levels()) lv[l] = structure.level_size(l);
      s["levels"] = lv;
      diag["structure"] = s;
      ordered_json g;
      g["years"] = first.year_count();
      g["first_year"] = first.years().front();
      g["last_year"] = last_year;
      g["ages"] = ages.size();
      g["first_age"] = ages.front();
      g["open_age"] = ages.back();
      diag["grid"] = g;
    }

    // Smooth.
    std::vector<MortalitySurface> smoothed;
    std::vector<std::vector<double>> lambdas(n_series);
    run_stage(kExitSmooth, "smooth", [&] {
      config.smoothing.validate(ages);
      std::vector<std::optional<MortalitySurface>> slots(n_series);
      parallel_for(n_series, config.threads, [&](std::size_t k) {
        slots[k] = smooth_surface(data.series[k], config.smoothing, &lambdas[k]);
      });
      for (auto& s : slots) smoothed.push_back(std::move(*s));
      return 0;
    });
    ordered_json series_diag = ordered_json::array();
    for (std::size_t k = 0; k < n_series; ++k) {
      ordered_json s;
      s["id"] = structure.series_ids()[k];
      s["level"] = structure.level_of(k);
      s["smoothing_lambda_median"] = median_of(lambdas[k]);
      s["rates_above_one"] = data.series[k].rates_above_one();
      series_diag.push_back(std::move(s));
    }
    outputs.emplace_back("smoothed.csv", smoothed_csv(data, smoothed));

    if (reached(Stage::Fit)) {
      // Main forecast run; pricing may need a longer horizon than the forecast table.
      int horizon = config.horizon;
      if (last == Stage::Price && !config.annuity.series.empty()) {
        const int youngest = *std::min_element(config.annuity.ages.begin(), config.annuity.ages.end());
        for (int m : config.annuity.maturities) {
          if (youngest + m <= config.annuity.max_age) horizon = std::max(horizon, m);
        }
      }
      ForecastOptions fo;
      fo.model = config.model;
      fo.selector = config.selector;
      fo.horizon = horizon;
      fo.methods = reached(Stage::Reconcile) ? config.methods : std::vector<Method>{Method::Base};
      fo.errors = reached(Stage::Forecast);
      fo.error_horizon = std::min(config.horizon, horizon);
      fo.paths = reached(Stage::Reconcile) ? config.paths : 0;
      fo.seed = config.seed;
      fo.ratio_bootstrap = config.ratio_bootstrap;
      fo.threads = config.threads;

      ForecastRun run;
      if (!reached(Stage::Forecast)) {
        run.fits.resize(n_series);
        run_stage(kExitFit, "fit", [&] {
          parallel_for(n_series, config.threads, [&](std::size_t k) {
            run.fits[k] = fit_series(data.series[k], smoothed[k], fo);
          });
          return 0;
        });
      } else {
        // Fitting errors surface here too; the series id is in the message.
        run = run_stage(kExitForecast, "forecast",
                        [&] { return forecast_all(structure, data.series, smoothed, fo); });
      }

      for (std::size_t k = 0; k < n_series; ++k) {
        auto& s = series_diag[k];
        const SeriesFit& f = run.fits[k];
        if (config.model == ModelKind::Fts) {
          s["J"] = f.fts.retained;
          double total = 0.0;
          double kept = 0.0;
          for (Eigen::Index j = 0; j < f.fts.eigenvalues.size(); ++j) {
            total += f.fts.eigenvalues(j);
            if (j < f.fts.retained) kept += f.fts.eigenvalues(j);
          }
          s["variance_explained"] = total > 0.0 ? json(kept / total) : json(nullptr);
          ordered_json models = ordered_json::array();
          for (const auto& m : f.fts.score_models) models.push_back(arima_json(m));
          s["score_models"] = models;
          try {
            s["r_squared"] = r_squared(data.series[k].log_rates(), f.fts.fitted());
          } catch (const DegenerateError&) {
            s["r_squared"] = nullptr;
          }
        } else {
          s["kappa_model"] = arima_json(f.lc.rwd);
        }
        if (!f.notes.empty()) s["notes"] = f.notes;
      }
      for (const auto& nt : run.notes) note(nt);

      if (reached(Stage::Forecast)) {
        std::ostringstream fc;
        fc << "series,level,method,model,age,horizon,year,rate\n";
        append_forecasts(fc, structure, run.base, ages, last_year);
        std::ostringstream iv;
        iv << "series,level,method,model,kind,coverage,age,horizon,year,lower,upper,psi\n";
        ordered_json calib;
        run_stage(kExitIntervals, "intervals", [&] {
          std::vector<std::string> rows(n_series);
          std::vector<double> min_cov(n_series, 1.0);
          std::vector<int> fallbacks(n_series, 0);
          std::vector<int> psi_order(n_series, 0);
          parallel_for(n_series, config.threads, [&](std::size_t k) {
            std::ostringstream part;
            for (double cov : config.coverage) {
              for (int h = 1; h <= fo.error_horizon; ++h) {
                const BandPair b =
                    rate_band(run.fits[k], h, cov, config.replicates, derive_seed(config.seed, 4, k * 1000 + h));
                append_interval(part, structure.series_ids()[k], structure.level_of(k), "base",
                                to_string(config.model), b.pointwise, h, ages, last_year, b.band.psi_pointwise);
                append_interval(part, structure.series_ids()[k], structure.level_of(k), "base",
                                to_string(config.model), b.simultaneous, h, ages, last_year,
                                b.band.psi_simultaneous);
                min_cov[k] = std::min({min_cov[k], b.band.coverage_pointwise - cov,
                                       b.band.coverage_simultaneous - cov});
                fallbacks[k] += b.band.gamma_fallback ? 1 : 0;
                psi_order[k] += b.band.psi_simultaneous < b.band.psi_pointwise ? 1 : 0;
              }
            }
            rows[k] = part.str();
          });
          for (const auto& r : rows) iv << r;
          calib["min_insample_coverage_margin"] = *std::min_element(min_cov.begin(), min_cov.end());
          int total = 0;
          for (int f : fallbacks) total += f;
          calib["gamma_fallbacks"] = total;
          int bad = 0;
          for (int v : psi_order) bad += v;
          calib["psi_order_violations"] = bad;
          return 0;
        });

        ordered_json violation;
        violation["base"] = run.reconciled.empty()
                                ? json(nullptr)
                                : json(aggregation_violation(structure, run.base, run.summing));
        for (const auto& [m, set] : run.reconciled) {
          append_forecasts(fc, structure, set, ages, last_year);
          violation[to_string(m)] = aggregation_violation(structure, set, run.summing);
          if (!set.replicates.empty()) {
            for (double cov : config.coverage) {
              for (std::size_t k = 0; k < n_series; ++k) {
                const IntervalSet q = replicate_intervals(set.replicates[k], cov);
                for (int h = 1; h <= static_cast<int>(q.lower.cols()); ++h) {
                  append_interval(iv, set.series[k], structure.level_of(k), to_string(m), to_string(config.model),
                                  column_interval(q, h), h, ages, last_year, kMissing);
                }
              }
            }
          }
        }
        if (!run.reconciled.empty()) {
          diag["aggregation_violation"] = violation;
          ordered_json ratios = ordered_json::array();
          for (std::size_t b = 0; b < run.ratios.models.size(); ++b) {
            ordered_json r = arima_json(run.ratios.models[b]);
            r["series"] = structure.bottom_series()[b];
            ratios.push_back(std::move(r));
          }
          diag["exposure_ratio_models"] = ratios;
        }
        diag["interval_calibration"] = calib;
        outputs.emplace_back("forecasts.csv", fc.str());
        outputs.emplace_back("intervals.csv", iv.str());
      }

      if (reached(Stage::Evaluate) && config.evaluate) {
        EvaluationReport report = run_stage(kExitEvaluate, "evaluate", [&] {
          EvaluationReport rep;
          rep.alpha = 1.0 - config.coverage.front();
          const int n = static_cast<int>(first.year_count());
          const int window_h = std::min(config.horizon, n - config.initial_window);
          std::vector<Grid> truth;
          for (const auto& s : data.series) truth.push_back(s.rates());
          std::map<int, std::map<Method, WindowForecast>> cache;
          for (int window = config.initial_window; window <= n - 1; ++window) {
            const int steps = std::min(window_h, n - window);
            std::vector<MortalitySurface> obs;
            std::vector<MortalitySurface> sm;
            for (std::size_t k = 0; k < n_series; ++k) {
              obs.push_back(data.series[k].slice_years(0, static_cast<std::size_t>(window)));
              sm.push_back(smoothed[k].slice_years(0, static_cast<std::size_t>(window)));
            }
            ForecastOptions wo = fo;
            wo.horizon = steps;
            wo.error_horizon = steps;
            wo.methods = config.methods;
            wo.errors = config.evaluate_intervals;
            wo.paths = config.evaluate_intervals ? std::max(config.paths, 1) : 0;
            wo.seed = derive_seed(config.seed, 5, static_cast<std::uint64_t>(window));
            const ForecastRun wr = forecast_all(structure, obs, sm, wo);
            for (Method m : config.methods) {
              const ForecastSet& set = m == Method::Base ? wr.base : wr.reconciled.at(m);
              WindowForecast w;
              w.rates = set.rates;
              if (config.evaluate_intervals) {
                for (std::size_t k = 0; k < n_series; ++k) {
                  if (m == Method::Base) {
                    Eigen::MatrixXd lo(ages.size(), steps);
                    Eigen::MatrixXd hi(ages.size(), steps);
                    for (int h = 1; h <= steps; ++h) {
                      const BandPair b = rate_band(wr.fits[k], h, config.coverage.front(), config.replicates,
                                                   derive_seed(wo.seed, 4, k * 1000 + h));
                      lo.col(h - 1) = b.pointwise.lower;
                      hi.col(h - 1) = b.pointwise.upper;
                    }
                    w.lower.push_back(lo);
                    w.upper.push_back(hi);
                  } else {
                    const IntervalSet q = replicate_intervals(set.replicates[k], config.coverage.front());
                    w.lower.push_back(q.lower);
                    w.upper.push_back(q.upper);
                  }
                }
              }
              cache[window][m] = std::move(w);
            }
          }
          for (Method m : config.methods) {
            const WindowRecords recs = expanding_window(
                truth, config.initial_window, window_h, [&](int window, int) { return cache.at(window).at(m); });
            std::vector<std::string> levels;
            for (std::size_t k = 0; k < n_series; ++k) levels.push_back(structure.level_of(k));
            add_to_report(rep, recs, structure.series_ids(), levels, to_string(m), to_string(config.model));
          }
          if (rep.ages != 41) {
            rep.notes.push_back("scores average over " + std::to_string(rep.ages) + " ages");
          }
          return rep;
        });
        outputs.emplace_back("evaluation.csv", report.to_csv());
        outputs.emplace_back("evaluation.json", report.to_json());
      }

      if (last == Stage::Price) {
        std::string quotes = run_stage(kExitPrice, "price", [&] {
          std::vector<AnnuityQuote> all;
          for (const auto& id : config.annuity.series) {
            if (!structure.contains(id)) throw ReferenceError("annuity series " + id + " is not in the structure");
            const std::size_t k = structure.index_of(id);
            for (Method m : config.methods) {
              const ForecastSet& set = m == Method::Base ? run.base : run.reconciled.at(m);
              const std::vector<Eigen::MatrixXd>* reps = set.replicates.empty() ? nullptr : &set.replicates[k];
              auto q = quote_table(id, to_string(m), set.rates[k], ages, config.annuity.ages,
                                   config.annuity.maturities, config.annuity.rate, reps, config.annuity.level,
                                   config.annuity.max_age);
              all.insert(all.end(), q.begin(), q.end());
            }
          }
          return quotes_to_csv(all);
        });
        outputs.emplace_back("annuities.csv", quotes);
      }
    }
    diag["series"] = series_diag;
  } catch (const StageFailure& f) {
    result.exit_code = f.code;
    result.failed_stage = f.stage;
    result.message = f.message;
  }

  // Single writer: everything goes out here, or into quarantine on failure.
  const std::filesystem::path dir = result.exit_code == kExitOk ? config.output : config.output / "quarantine";
  try {
    if (result.exit_code != kExitOk) {
      ordered_json err;
      err["stage"] = result.failed_stage;
      err["exit_code"] = result.exit_code;
      err["message"] = result.message;
      outputs.emplace_back("error.json", err.dump(2) + "\n");
      diag["error"] = err;
    }
    outputs.emplace_back("diagnostics.json", diag.dump(2) + "\n");
    for (const auto& [name, content] : outputs) {
      write_text(dir / name, content);
      result.written.push_back(dir / name);
    }
  } catch (const std::exception& e) {
    if (result.exit_code == kExitOk) {
      result.exit_code = kExitWrite;
      result.failed_stage = "write";
      result.message = e.what();
    }
  }
  return result;
}

}  // namespace gfts
