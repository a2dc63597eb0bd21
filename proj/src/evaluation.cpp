#include "gfts/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gfts/error.hpp"
#include "gfts/format.hpp"

namespace gfts {

std::size_t WindowRecords::count(int h) const {
  if (records.empty() || h < 1 || h > max_horizon) return 0;
  return records.front()[static_cast<std::size_t>(h - 1)].size();
}

WindowRecords expanding_window(const std::vector<Grid>& truth, int initial, int max_horizon,
                               const std::function<WindowForecast(int, int)>& forecaster) {
  if (truth.empty()) throw InsufficientDataError("no series to evaluate");
  const auto n = static_cast<int>(truth.front().rows());
  for (const auto& g : truth) {
    if (g.rows() != n || g.cols() != truth.front().cols()) throw DimensionError("truth grids are not aligned");
  }
  if (initial < 1 || initial + 1 > n) {
    throw InsufficientDataError("initial window of " + std::to_string(initial) + " leaves no holdout in " +
                                std::to_string(n) + " years");
  }
  if (max_horizon < 1 || max_horizon > n - initial) {
    throw HorizonError("maximum horizon " + std::to_string(max_horizon) + " exceeds the " +
                       std::to_string(n - initial) + " holdout years");
  }

  WindowRecords out;
  out.years = n;
  out.initial = initial;
  out.max_horizon = max_horizon;
  out.records.assign(truth.size(), std::vector<std::vector<ForecastRecord>>(static_cast<std::size_t>(max_horizon)));
  for (int window = initial; window <= n - 1; ++window) {
    const int steps = std::min(max_horizon, n - window);
    const WindowForecast fc = forecaster(window, steps);
    if (fc.rates.size() != truth.size()) throw DimensionError("forecaster returned the wrong number of series");
    const bool intervals = !fc.lower.empty();
    for (std::size_t k = 0; k < truth.size(); ++k) {
      if (fc.rates[k].cols() < steps || fc.rates[k].rows() != truth[k].cols()) {
        throw DimensionError("forecaster returned a grid of the wrong shape");
      }
      for (int h = 1; h <= steps; ++h) {
        ForecastRecord rec;
        rec.window = window;
        rec.h = h;
        rec.forecast = fc.rates[k].col(h - 1);
        rec.truth = truth[k].row(window + h - 1).transpose();
        if (intervals) {
          rec.lower = fc.lower[k].col(h - 1);
          rec.upper = fc.upper[k].col(h - 1);
        }
        out.records[k][static_cast<std::size_t>(h - 1)].push_back(std::move(rec));
      }
    }
  }
  return out;
}

double mafe(const std::vector<double>& errors) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double e : errors) {
    if (is_missing(e)) continue;
    sum += std::abs(e);
    ++n;
  }
  if (n == 0) throw InsufficientDataError("no forecast errors to score");
  return sum / static_cast<double>(n);
}

double rmsfe(const std::vector<double>& errors) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double e : errors) {
    if (is_missing(e)) continue;
    sum += e * e;
    ++n;
  }
  if (n == 0) throw InsufficientDataError("no forecast errors to score");
  return std::sqrt(sum / static_cast<double>(n));
}

namespace {

std::vector<double> record_errors(const std::vector<ForecastRecord>& records) {
  std::vector<double> errors;
  for (const auto& r : records) {
    for (Eigen::Index x = 0; x < r.truth.size(); ++x) errors.push_back(r.truth(x) - r.forecast(x));
  }
  return errors;
}

}  // namespace

double mafe(const std::vector<ForecastRecord>& records) { return mafe(record_errors(records)); }
double rmsfe(const std::vector<ForecastRecord>& records) { return rmsfe(record_errors(records)); }

double interval_score(double lower, double upper, double y, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (lower > upper) throw ValidationError("invalid interval: lower bound exceeds upper bound");
  double s = upper - lower;
  if (y < lower) s += (2.0 / alpha) * (lower - y);
  if (y > upper) s += (2.0 / alpha) * (y - upper);
  return s;
}

double mean_interval_score(const std::vector<ForecastRecord>& records, double alpha) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.lower.size() != r.truth.size() || r.upper.size() != r.truth.size()) {
      throw InsufficientDataError("record has no interval forecast");
    }
    for (Eigen::Index x = 0; x < r.truth.size(); ++x) {
      if (is_missing(r.truth(x))) continue;
      sum += interval_score(r.lower(x), r.upper(x), r.truth(x), alpha);
      ++n;
    }
  }
  if (n == 0) throw InsufficientDataError("no interval forecasts to score");
  return sum / static_cast<double>(n);
}

Summary summarize(const std::vector<double>& per_horizon) {
  if (per_horizon.empty()) throw InsufficientDataError("no scores to summarize");
  Summary s;
  double total = 0.0;
  for (double v : per_horizon) total += v;
  s.mean = total / static_cast<double>(per_horizon.size());
  std::vector<double> sorted = per_horizon;
  std::sort(sorted.begin(), sorted.end());
  s.median = sorted[(sorted.size() - 1) / 2];
  if (per_horizon.size() != 15) {
    s.note = "median is the lower median of " + std::to_string(per_horizon.size()) + " horizons";
  }
  return s;
}

void add_to_report(EvaluationReport& report, const WindowRecords& records, const std::vector<std::string>& series,
                   const std::vector<std::string>& levels, const std::string& method, const std::string& model) {
  if (series.size() != records.records.size() || levels.size() != series.size()) {
    throw DimensionError("series labels do not match the records");
  }
  if (report.levels.empty()) {
    report.years = records.years;
    report.initial = records.initial;
    report.max_horizon = records.max_horizon;
    report.counts.clear();
    for (int h = 1; h <= records.max_horizon; ++h) report.counts.push_back(records.count(h));
    if (!records.records.empty() && !records.records.front().empty() && !records.records.front().front().empty()) {
      report.ages = static_cast<int>(records.records.front().front().front().truth.size());
    }
  } else if (report.max_horizon != records.max_horizon || report.initial != records.initial) {
    throw ValidationError("evaluation runs use different windows");
  }

  const auto horizons = static_cast<std::size_t>(records.max_horizon);
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (!members.count(levels[k])) order.push_back(levels[k]);
    members[levels[k]].push_back(k);
  }
  const bool intervals = !records.records.empty() && !records.records.front().empty() &&
                         !records.records.front().front().empty() &&
                         records.records.front().front().front().lower.size() > 0;

  for (const auto& level : order) {
    LevelScores scores;
    scores.level = level;
    scores.method = method;
    scores.model = model;
    for (std::size_t h = 0; h < horizons; ++h) {
      double m = 0.0;
      double r = 0.0;
      double s = 0.0;
      for (std::size_t k : members[level]) {
        const auto& recs = records.records[k][h];
        m += mafe(recs);
        r += rmsfe(recs);
        if (intervals) s += mean_interval_score(recs, report.alpha);
      }
      const auto count = static_cast<double>(members[level].size());
      scores.mafe.push_back(m / count);
      scores.rmsfe.push_back(r / count);
      if (intervals) scores.interval_score.push_back(s / count);
    }
    report.levels.push_back(std::move(scores));
  }
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream out;
  out << "level,method,model,horizon,count,mafe,rmsfe,interval_score\n";
  for (const auto& l : levels) {
    for (std::size_t h = 0; h < l.mafe.size(); ++h) {
      out << l.level << ',' << l.method << ',' << l.model << ',' << h + 1 << ',' << counts[h] << ','
          << format_double(l.mafe[h]) << ',' << format_double(l.rmsfe[h]) << ','
          << (l.interval_score.empty() ? std::string("NA") : format_double(l.interval_score[h])) << '\n';
    }
  }
  return out.str();
}

std::string EvaluationReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema"] = "gfts-evaluation/1";
  j["years"] = years;
  j["initial_window"] = initial;
  j["max_horizon"] = max_horizon;
  j["ages"] = ages;
  j["alpha"] = alpha;
  j["counts"] = counts;
  j["levels"] = ordered_json::array();
  for (const auto& l : levels) {
    ordered_json e;
    e["level"] = l.level;
    e["method"] = l.method;
    e["model"] = l.model;
    e["mafe"] = l.mafe;
    e["rmsfe"] = l.rmsfe;
    const Summary sm = summarize(l.mafe);
    const Summary sr = summarize(l.rmsfe);
    e["mean_rmsfe"] = sr.mean;
    e["median_mafe"] = sm.median;
    if (!l.interval_score.empty()) {
      const Summary si = summarize(l.interval_score);
      e["interval_score"] = l.interval_score;
      e["mean_interval_score"] = si.mean;
      e["median_interval_score"] = si.median;
    }
    if (!sm.note.empty()) e["note"] = sm.note;
    j["levels"].push_back(std::move(e));
  }
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

}  // namespace gfts
