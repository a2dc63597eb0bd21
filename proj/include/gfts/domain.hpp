#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gfts {

/// Year-by-age grid. Rows are years, columns are ages. Missing cells are NaN.
using Grid = Eigen::MatrixXd;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return v != v; }

/// Single-year age grid. The open age group ("100+") is stored as one grid
/// point at its lower bound.
class AgeGrid {
 public:
  AgeGrid(std::vector<int> ages, bool open_ended);

  /// Ages `first..last` in steps of one.
  static AgeGrid range(int first, int last, bool open_ended);
  /// 60..99 plus 100+, 41 ages.
  static AgeGrid canonical() { return range(60, 100, true); }

  const std::vector<int>& ages() const noexcept { return ages_; }
  bool open_ended() const noexcept { return open_ended_; }
  std::size_t size() const noexcept { return ages_.size(); }
  int front() const { return ages_.front(); }
  int back() const { return ages_.back(); }
  /// Index of `age`, or -1 when absent.
  int index_of(int age) const;
  std::string label(std::size_t i) const;

  bool operator==(const AgeGrid&) const = default;

 private:
  std::vector<int> ages_;
  bool open_ended_;
};

/// Cellwise D/E. Cells with E == 0 or a missing input are marked missing.
Grid compute_rates(const Grid& deaths, const Grid& exposures);

/// Cellwise natural log of positive rates; nonpositive or missing -> missing.
Grid log_of_rates(const Grid& rates);

/// One series' mortality data: deaths, exposures, rates and the log rates
/// used for modelling. Immutable once built.
///
/// `log_rates` starts as log(rates) but may be replaced by a smoothed
/// version (see `with_log_rates`); deaths, exposures and rates always hold
/// the observed values.
class MortalitySurface {
 public:
  static MortalitySurface from_counts(std::string series_id, std::vector<int> years, AgeGrid ages,
                                      Grid deaths, Grid exposures);

  /// Builds a surface from log rates and exposures; deaths are set to E * exp(log m).
  static MortalitySurface from_log_rates(std::string series_id, std::vector<int> years,
                                         AgeGrid ages, const Grid& log_rates, Grid exposures);

  MortalitySurface with_log_rates(Grid log_rates) const;
  MortalitySurface with_id(std::string series_id) const;
  /// Years [first, first + count).
  MortalitySurface slice_years(std::size_t first, std::size_t count) const;

  const std::string& series_id() const noexcept { return id_; }
  const std::vector<int>& years() const noexcept { return years_; }
  const AgeGrid& ages() const noexcept { return ages_; }
  const Grid& deaths() const noexcept { return deaths_; }
  const Grid& exposures() const noexcept { return exposures_; }
  const Grid& rates() const noexcept { return rates_; }
  const Grid& log_rates() const noexcept { return log_rates_; }

  std::size_t year_count() const noexcept { return years_.size(); }
  std::size_t age_count() const noexcept { return ages_.size(); }
  bool has_missing_log_rates() const;
  /// Number of cells with rate > 1 (allowed, reported by validation).
  std::size_t rates_above_one() const;

 private:
  MortalitySurface(std::string id, std::vector<int> years, AgeGrid ages, Grid deaths,
                   Grid exposures, Grid rates, Grid log_rates);

  std::string id_;
  std::vector<int> years_;
  AgeGrid ages_;
  Grid deaths_;
  Grid exposures_;
  Grid rates_;
  Grid log_rates_;
};

/// Sums deaths and exposures of surfaces sharing years and ages; rates are
/// recomputed from the sums.
MortalitySurface aggregate_surface(std::string series_id, std::span<const MortalitySurface> children);
MortalitySurface aggregate_surface(std::span<const MortalitySurface> children);

struct SeriesGroup {
  std::string id;
  std::string level;
  std::vector<std::size_t> members;  // indices into bottom_series()
};

/// Aggregation structure over a set of bottom-level series.
///
/// Series order (used for every all-series vector and summing-matrix row):
/// aggregate groups in declaration order, then the bottom series.
class GroupStructure {
 public:
  struct GroupSpec {
    std::string id;
    std::string level;
    std::vector<std::string> members;
  };

  GroupStructure(std::vector<std::string> bottom_series, std::string bottom_level,
                 std::vector<GroupSpec> groups);

  const std::vector<std::string>& bottom_series() const noexcept { return bottom_; }
  const std::vector<SeriesGroup>& groups() const noexcept { return groups_; }
  const std::string& bottom_level() const noexcept { return bottom_level_; }

  std::size_t bottom_count() const noexcept { return bottom_.size(); }
  std::size_t group_count() const noexcept { return groups_.size(); }
  std::size_t series_count() const noexcept { return groups_.size() + bottom_.size(); }

  /// All series ids in canonical order.
  const std::vector<std::string>& series_ids() const noexcept { return all_ids_; }
  /// Level names in order of first appearance.
  const std::vector<std::string>& levels() const noexcept { return levels_; }
  const std::string& level_of(const std::string& series_id) const;
  const std::string& level_of(std::size_t series_index) const;
  std::size_t index_of(const std::string& series_id) const;
  bool contains(const std::string& series_id) const;
  bool is_bottom(std::size_t series_index) const { return series_index >= groups_.size(); }
  /// Bottom-member indices of any series (a bottom series maps to itself).
  std::vector<std::size_t> members_of(std::size_t series_index) const;
  std::size_t level_size(const std::string& level) const;

 private:
  std::vector<std::string> bottom_;
  std::string bottom_level_;
  std::vector<SeriesGroup> groups_;
  std::vector<std::string> all_ids_;
  std::vector<std::string> levels_;
  std::map<std::string, std::size_t> index_;
};

/// Region name and member prefectures.
struct RegionSpec {
  std::string id;
  std::vector<std::string> areas;
};

/// Geography x sex structure: total, per-sex, per-region, per-region x sex,
/// per-area totals, and area x sex bottoms (F, M).
GroupStructure geo_sex_structure(const std::string& total_id, const std::vector<RegionSpec>& regions);

/// The 8-region, 47-prefecture Japanese structure (168 series).
GroupStructure japan_structure();
std::vector<RegionSpec> japan_regions();

enum class Method { Base, BottomUp, Ols };
enum class ModelKind { LeeCarter, Fts };

std::string to_string(Method m);
std::string to_string(ModelKind m);
Method parse_method(const std::string& s);
ModelKind parse_model(const std::string& s);

/// Point forecasts (rate scale) for a set of series, each an age x horizon
/// matrix, with optional bootstrap replicates. Replicates may cover only the
/// first horizons; they share one shape across series.
struct ForecastSet {
  int horizon = 0;
  Method method = Method::Base;
  ModelKind model = ModelKind::Fts;
  std::vector<std::string> series;
  std::vector<Eigen::MatrixXd> rates;
  std::vector<std::vector<Eigen::MatrixXd>> replicates;  // empty or one vector per series

  std::size_t replicate_count() const { return replicates.empty() ? 0 : replicates.front().size(); }
  /// Throws ValidationError when rates are non-positive or non-finite, shapes
  /// disagree, or replicate counts differ across series.
  void validate() const;
};

}  // namespace gfts
