#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfts/annuity.hpp"
#include "gfts/domain.hpp"
#include "gfts/evaluation.hpp"
#include "gfts/fpca.hpp"
#include "gfts/grouping.hpp"
#include "gfts/leecarter.hpp"
#include "gfts/smoothing.hpp"
#include "gfts/synthetic.hpp"
#include "gfts/uncertainty.hpp"

namespace gfts {

/// Runs fn(0..n-1) on `threads` workers. Each index writes only its own slot,
/// so results do not depend on the worker count. The exception of the lowest
/// failing index is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

struct DataEntry {
  std::string area;  // feeds bottom series area*F and area*M
  std::filesystem::path deaths;
  std::filesystem::path exposures;
};

struct AnnuityConfig {
  std::vector<std::string> series;  // empty: no quotes
  std::vector<int> ages{60, 65, 70, 75, 80, 85};
  std::vector<int> maturities{5, 10, 15, 20, 25, 30};
  double rate = 0.03;
  double level = 0.95;
  int max_age = 100;
};

struct RunConfig {
  std::filesystem::path structure;  // empty: built-in Japan structure
  std::vector<DataEntry> data;
  std::string simulate;  // "", "japan" or "toy": generate data instead of reading it
  SyntheticOptions synthetic;
  int first_age = 60;
  int open_age = 100;
  std::optional<int> first_year;
  std::optional<int> last_year;

  ModelKind model = ModelKind::Fts;
  ComponentSelector selector;
  SmoothConfig smoothing;
  std::vector<Method> methods{Method::Base, Method::BottomUp, Method::Ols};
  int horizon = 15;
  std::vector<double> coverage{0.8, 0.95};
  int replicates = 400;  // resamples behind gamma
  int paths = 100;       // replicate forecast paths per series
  std::uint64_t seed = 1;
  bool ratio_bootstrap = true;

  bool evaluate = true;
  int initial_window = 25;
  bool evaluate_intervals = true;

  AnnuityConfig annuity;
  std::filesystem::path output = "gfts-out";
  int threads = 1;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Parses the JSON config; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig read_run_config(const std::filesystem::path& path);

/// All series of a structure, in structure order; aggregates are sums of
/// their bottom members.
struct Dataset {
  GroupStructure structure;
  std::vector<MortalitySurface> series;
};

Dataset load_dataset(const RunConfig& config);
Dataset dataset_from_bottom(GroupStructure structure, const std::vector<MortalitySurface>& bottom);

/// Observed log rates with missing cells taken from the smoothed surface.
Grid filled_log_rates(const MortalitySurface& observed, const MortalitySurface& smoothed);

struct SeriesFit {
  FtsModel fts;
  LeeCarterModel lc;
  Eigen::MatrixXd forecast_log;                // age x horizon
  std::vector<Eigen::MatrixXd> errors;         // per horizon, M x age (log scale)
  std::vector<std::string> notes;
};

struct ForecastOptions {
  ModelKind model = ModelKind::Fts;
  ComponentSelector selector;
  int horizon = 15;
  std::vector<Method> methods{Method::Base, Method::BottomUp, Method::Ols};
  bool errors = true;         // in-sample errors (needed for intervals and paths)
  int error_horizon = 0;      // 0: same as horizon
  int paths = 0;              // replicate paths per series, 0 for none
  std::uint64_t seed = 1;
  bool ratio_bootstrap = true;
  int threads = 1;
};

/// Forecasts of every method for every series from smoothed surfaces.
struct ForecastRun {
  std::vector<SeriesFit> fits;  // structure order
  ForecastSet base;             // rates, replicates when paths > 0
  std::map<Method, ForecastSet> reconciled;
  ExposureRatioForecast ratios;
  SummingForecast summing = SummingForecast::fixed(SummingMatrix::Identity(1, 1), 1, 1);
  std::vector<std::string> notes;
};

SeriesFit fit_series(const MortalitySurface& observed, const MortalitySurface& smoothed,
                     const ForecastOptions& options);

ForecastRun forecast_all(const GroupStructure& structure, const std::vector<MortalitySurface>& observed,
                         const std::vector<MortalitySurface>& smoothed, const ForecastOptions& options);

enum class Stage { Smooth, Fit, Forecast, Reconcile, Evaluate, Price };
Stage parse_stage(const std::string& s);
std::string to_string(Stage s);

/// Stage-tagged exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitLoad = 3,
  kExitSmooth = 4,
  kExitFit = 5,
  kExitForecast = 6,
  kExitReconcile = 7,
  kExitIntervals = 8,
  kExitEvaluate = 9,
  kExitPrice = 10,
  kExitWrite = 11,
};

struct PipelineResult {
  int exit_code = kExitOk;
  std::string failed_stage;
  std::string message;
  std::vector<std::filesystem::path> written;
};

/// smooth -> fit -> forecast -> reconcile -> intervals -> evaluate -> price,
/// stopping after `last`. Outputs are written by one writer at the end; on
/// failure whatever was produced goes to <output>/quarantine with error.json.
PipelineResult run_pipeline(const RunConfig& config, Stage last);

}  // namespace gfts
