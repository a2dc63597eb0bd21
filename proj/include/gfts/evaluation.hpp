#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfts/domain.hpp"

namespace gfts {

/// Forecasts made from one window for every evaluated series.
struct WindowForecast {
  std::vector<Eigen::MatrixXd> rates;  // per series, age x steps
  std::vector<Eigen::MatrixXd> lower;  // empty or per series, age x steps
  std::vector<Eigen::MatrixXd> upper;
};

/// One h-step forecast curve paired with its holdout truth.
struct ForecastRecord {
  int window = 0;  // number of years the model was fitted on
  int h = 0;
  Eigen::VectorXd forecast;
  Eigen::VectorXd truth;
  Eigen::VectorXd lower;  // empty without intervals
  Eigen::VectorXd upper;
};

/// records[series][h - 1] holds the (n - h - w + 1) pairs at horizon h.
struct WindowRecords {
  int years = 0;
  int initial = 0;
  int max_horizon = 0;
  std::vector<std::vector<std::vector<ForecastRecord>>> records;

  std::size_t count(int h) const;
};

/// Expanding-window experiment: windows of w, w+1, ..., n-1 years starting
/// at the first year, each forecasting min(H, n - window) steps.
/// `truth[k]` is the year x age rate grid of series k.
WindowRecords expanding_window(const std::vector<Grid>& truth, int initial, int max_horizon,
                               const std::function<WindowForecast(int window, int steps)>& forecaster);

/// Mean absolute and root mean squared error of the given errors; missing
/// values are skipped.
double mafe(const std::vector<double>& errors);
double rmsfe(const std::vector<double>& errors);

/// MAFE / RMSFE of one series at horizon h over all ages and curves.
double mafe(const std::vector<ForecastRecord>& records);
double rmsfe(const std::vector<ForecastRecord>& records);

/// (u - l) + (2/alpha)(l - y)1{y < l} + (2/alpha)(y - u)1{y > u}.
double interval_score(double lower, double upper, double y, double alpha);
/// Mean interval score over all ages and curves at one horizon.
double mean_interval_score(const std::vector<ForecastRecord>& records, double alpha);

/// Mean over horizons and the median (8th order statistic when there are 15
/// values, otherwise the lower median).
struct Summary {
  double mean = 0.0;
  double median = 0.0;
  std::string note;
};
Summary summarize(const std::vector<double>& per_horizon);

struct LevelScores {
  std::string level;
  std::string method;
  std::string model;
  std::vector<double> mafe;            // per horizon
  std::vector<double> rmsfe;           // per horizon
  std::vector<double> interval_score;  // per horizon, empty without intervals
};

struct EvaluationReport {
  int years = 0;
  int initial = 0;
  int max_horizon = 0;
  int ages = 0;
  double alpha = 0.2;
  std::vector<std::size_t> counts;  // pairs per horizon
  std::vector<LevelScores> levels;
  std::vector<std::string> notes;

  std::string to_csv() const;
  std::string to_json() const;
};

/// Scores per series, then unweighted means over the series of each level.
/// `series` and `levels` are aligned with records.records.
void add_to_report(EvaluationReport& report, const WindowRecords& records, const std::vector<std::string>& series,
                   const std::vector<std::string>& levels, const std::string& method, const std::string& model);

}  // namespace gfts
