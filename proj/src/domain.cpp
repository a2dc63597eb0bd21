#include "gfts/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gfts/error.hpp"

namespace gfts {

AgeGrid::AgeGrid(std::vector<int> ages, bool open_ended)
    : ages_(std::move(ages)), open_ended_(open_ended) {
  if (ages_.size() < 2) throw ValidationError("age grid needs at least 2 ages");
  for (std::size_t i = 1; i < ages_.size(); ++i) {
    if (ages_[i] <= ages_[i - 1]) throw ValidationError("ages must be strictly increasing");
  }
}

AgeGrid AgeGrid::range(int first, int last, bool open_ended) {
  std::vector<int> a;
  for (int x = first; x <= last; ++x) a.push_back(x);
  return AgeGrid(std::move(a), open_ended);
}

int AgeGrid::index_of(int age) const {
  auto it = std::lower_bound(ages_.begin(), ages_.end(), age);
  if (it == ages_.end() || *it != age) return -1;
  return static_cast<int>(it - ages_.begin());
}

std::string AgeGrid::label(std::size_t i) const {
  std::string s = std::to_string(ages_.at(i));
  if (open_ended_ && i + 1 == ages_.size()) s += "+";
  return s;
}

Grid compute_rates(const Grid& deaths, const Grid& exposures) {
  if (deaths.rows() != exposures.rows() || deaths.cols() != exposures.cols()) {
    throw DimensionError("deaths and exposures differ in shape");
  }
  Grid out(deaths.rows(), deaths.cols());
  for (Eigen::Index i = 0; i < deaths.rows(); ++i) {
    for (Eigen::Index j = 0; j < deaths.cols(); ++j) {
      const double d = deaths(i, j);
      const double e = exposures(i, j);
      if (is_missing(d) || is_missing(e) || e <= 0.0) {
        out(i, j) = kMissing;
      } else {
        out(i, j) = d / e;
      }
    }
  }
  return out;
}

Grid log_of_rates(const Grid& rates) {
  return rates.unaryExpr([](double m) { return (is_missing(m) || m <= 0.0) ? kMissing : std::log(m); });
}

MortalitySurface::MortalitySurface(std::string id, std::vector<int> years, AgeGrid ages, Grid deaths,
                                   Grid exposures, Grid rates, Grid log_rates)
    : id_(std::move(id)),
      years_(std::move(years)),
      ages_(std::move(ages)),
      deaths_(std::move(deaths)),
      exposures_(std::move(exposures)),
      rates_(std::move(rates)),
      log_rates_(std::move(log_rates)) {
  if (years_.empty()) throw ValidationError("surface " + id_ + " has no years");
  for (std::size_t i = 1; i < years_.size(); ++i) {
    if (years_[i] != years_[i - 1] + 1) {
      throw StructuralError("surface " + id_ + ": years must be contiguous and increasing");
    }
  }
  const auto rows = static_cast<Eigen::Index>(years_.size());
  const auto cols = static_cast<Eigen::Index>(ages_.size());
  for (const Grid* g : {&deaths_, &exposures_, &rates_, &log_rates_}) {
    if (g->rows() != rows || g->cols() != cols) {
      throw DimensionError("surface " + id_ + ": grid shape does not match years x ages");
    }
  }
}

MortalitySurface MortalitySurface::from_counts(std::string series_id, std::vector<int> years,
                                               AgeGrid ages, Grid deaths, Grid exposures) {
  for (Eigen::Index i = 0; i < deaths.size(); ++i) {
    const double d = deaths.data()[i];
    if (!is_missing(d) && d < 0.0) throw ValidationError("negative death count in " + series_id);
  }
  for (Eigen::Index i = 0; i < exposures.size(); ++i) {
    const double e = exposures.data()[i];
    if (!is_missing(e) && e < 0.0) throw ValidationError("negative exposure in " + series_id);
  }
  Grid rates = compute_rates(deaths, exposures);
  Grid logs = log_of_rates(rates);
  return MortalitySurface(std::move(series_id), std::move(years), std::move(ages), std::move(deaths),
                          std::move(exposures), std::move(rates), std::move(logs));
}

MortalitySurface MortalitySurface::from_log_rates(std::string series_id, std::vector<int> years,
                                                  AgeGrid ages, const Grid& log_rates, Grid exposures) {
  if (log_rates.rows() != exposures.rows() || log_rates.cols() != exposures.cols()) {
    throw DimensionError("log rates and exposures differ in shape");
  }
  Grid deaths = (exposures.array() * log_rates.array().exp()).matrix();
  Grid rates = compute_rates(deaths, exposures);
  return MortalitySurface(std::move(series_id), std::move(years), std::move(ages), std::move(deaths),
                          std::move(exposures), std::move(rates), log_rates);
}

MortalitySurface MortalitySurface::with_log_rates(Grid log_rates) const {
  return MortalitySurface(id_, years_, ages_, deaths_, exposures_, rates_, std::move(log_rates));
}

MortalitySurface MortalitySurface::with_id(std::string series_id) const {
  return MortalitySurface(std::move(series_id), years_, ages_, deaths_, exposures_, rates_, log_rates_);
}

MortalitySurface MortalitySurface::slice_years(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > years_.size()) throw DimensionError("year slice out of range");
  const auto f = static_cast<Eigen::Index>(first);
  const auto c = static_cast<Eigen::Index>(count);
  std::vector<int> yrs(years_.begin() + f, years_.begin() + f + c);
  return MortalitySurface(id_, std::move(yrs), ages_, deaths_.middleRows(f, c), exposures_.middleRows(f, c),
                          rates_.middleRows(f, c), log_rates_.middleRows(f, c));
}

bool MortalitySurface::has_missing_log_rates() const { return log_rates_.hasNaN(); }

std::size_t MortalitySurface::rates_above_one() const {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < rates_.size(); ++i) {
    if (!is_missing(rates_.data()[i]) && rates_.data()[i] > 1.0) ++n;
  }
  return n;
}

MortalitySurface aggregate_surface(std::string series_id, std::span<const MortalitySurface> children) {
  if (children.empty()) throw ValidationError("aggregate of zero surfaces");
  const MortalitySurface& first = children.front();
  Grid deaths = first.deaths();
  Grid exposures = first.exposures();
  for (std::size_t k = 1; k < children.size(); ++k) {
    const MortalitySurface& c = children[k];
    if (c.years() != first.years() || !(c.ages() == first.ages())) {
      throw DimensionError("cannot aggregate surfaces with different years or ages");
    }
    deaths += c.deaths();  // NaN propagates: any missing child makes the cell missing
    exposures += c.exposures();
  }
  return MortalitySurface::from_counts(std::move(series_id), first.years(), first.ages(), std::move(deaths),
                                       std::move(exposures));
}

MortalitySurface aggregate_surface(std::span<const MortalitySurface> children) {
  if (children.empty()) throw ValidationError("aggregate of zero surfaces");
  return aggregate_surface(children.front().series_id(), children);
}

// GroupStructure

GroupStructure::GroupStructure(std::vector<std::string> bottom_series, std::string bottom_level,
                               std::vector<GroupSpec> groups)
    : bottom_(std::move(bottom_series)), bottom_level_(std::move(bottom_level)) {
  if (bottom_.empty()) throw ValidationError("group structure has no bottom series");
  std::map<std::string, std::size_t> bottom_index;
  for (std::size_t i = 0; i < bottom_.size(); ++i) {
    if (!bottom_index.emplace(bottom_[i], i).second) {
      throw ValidationError("duplicate bottom series id: " + bottom_[i]);
    }
  }
  bool has_total = groups.empty();
  for (auto& spec : groups) {
    if (spec.members.empty()) throw ValidationError("group " + spec.id + " has no members");
    SeriesGroup g{spec.id, spec.level, {}};
    std::set<std::size_t> seen;
    for (const auto& m : spec.members) {
      auto it = bottom_index.find(m);
      if (it == bottom_index.end()) {
        throw ReferenceError("group " + spec.id + " references unknown bottom series " + m);
      }
      if (!seen.insert(it->second).second) {
        throw ValidationError("group " + spec.id + " lists " + m + " twice");
      }
    }
    g.members.assign(seen.begin(), seen.end());
    if (g.members.size() == bottom_.size()) has_total = true;
    groups_.push_back(std::move(g));
  }
  if (!has_total) throw ValidationError("no group covers every bottom series");

  for (const auto& g : groups_) all_ids_.push_back(g.id);
  for (const auto& b : bottom_) all_ids_.push_back(b);
  for (std::size_t i = 0; i < all_ids_.size(); ++i) {
    if (!index_.emplace(all_ids_[i], i).second) {
      throw ValidationError("duplicate series id: " + all_ids_[i]);
    }
  }
  auto add_level = [this](const std::string& l) {
    if (std::find(levels_.begin(), levels_.end(), l) == levels_.end()) levels_.push_back(l);
  };
  for (const auto& g : groups_) add_level(g.level);
  add_level(bottom_level_);
}

const std::string& GroupStructure::level_of(std::size_t series_index) const {
  if (series_index < groups_.size()) return groups_[series_index].level;
  if (series_index < series_count()) return bottom_level_;
  throw ReferenceError("series index out of range");
}

const std::string& GroupStructure::level_of(const std::string& series_id) const {
  return level_of(index_of(series_id));
}

std::size_t GroupStructure::index_of(const std::string& series_id) const {
  auto it = index_.find(series_id);
  if (it == index_.end()) throw ReferenceError("unknown series " + series_id);
  return it->second;
}

bool GroupStructure::contains(const std::string& series_id) const { return index_.count(series_id) > 0; }

std::vector<std::size_t> GroupStructure::members_of(std::size_t series_index) const {
  if (series_index < groups_.size()) return groups_[series_index].members;
  if (series_index < series_count()) return {series_index - groups_.size()};
  throw ReferenceError("series index out of range");
}

std::size_t GroupStructure::level_size(const std::string& level) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < series_count(); ++i) {
    if (level_of(i) == level) ++n;
  }
  return n;
}

GroupStructure geo_sex_structure(const std::string& total_id, const std::vector<RegionSpec>& regions) {
  std::vector<std::string> bottom;
  std::vector<std::string> areas;
  for (const auto& r : regions) {
    for (const auto& a : r.areas) {
      areas.push_back(a);
      bottom.push_back(a + "*F");
      bottom.push_back(a + "*M");
    }
  }
  auto with_sex = [](const std::vector<std::string>& as, const std::string& sex) {
    std::vector<std::string> out;
    for (const auto& a : as) {
      if (sex == "T") {
        out.push_back(a + "*F");
        out.push_back(a + "*M");
      } else {
        out.push_back(a + "*" + sex);
      }
    }
    return out;
  };

  std::vector<GroupStructure::GroupSpec> groups;
  groups.push_back({total_id + "*T", "Total", with_sex(areas, "T")});
  groups.push_back({total_id + "*F", "Sex", with_sex(areas, "F")});
  groups.push_back({total_id + "*M", "Sex", with_sex(areas, "M")});
  for (const auto& r : regions) groups.push_back({r.id + "*T", "Region", with_sex(r.areas, "T")});
  for (const std::string sex : {"F", "M"}) {
    for (const auto& r : regions) groups.push_back({r.id + "*" + sex, "Region x Sex", with_sex(r.areas, sex)});
  }
  for (const auto& a : areas) groups.push_back({a + "*T", "Prefecture", with_sex({a}, "T")});
  return GroupStructure(std::move(bottom), "Prefecture x Sex", std::move(groups));
}

std::vector<RegionSpec> japan_regions() {
  return {
      {"R1", {"Hokkaido"}},
      {"R2", {"Aomori", "Iwate", "Miyagi", "Akita", "Yamagata", "Fukushima"}},
      {"R3", {"Ibaraki", "Tochigi", "Gunma", "Saitama", "Chiba", "Tokyo", "Kanagawa"}},
      {"R4", {"Niigata", "Toyama", "Ishikawa", "Fukui", "Yamanashi", "Nagano", "Gifu", "Shizuoka", "Aichi"}},
      {"R5", {"Mie", "Shiga", "Kyoto", "Osaka", "Hyogo", "Nara", "Wakayama"}},
      {"R6", {"Tottori", "Shimane", "Okayama", "Hiroshima", "Yamaguchi"}},
      {"R7", {"Tokushima", "Kagawa", "Ehime", "Kochi"}},
      {"R8", {"Fukuoka", "Saga", "Nagasaki", "Kumamoto", "Oita", "Miyazaki", "Kagoshima", "Okinawa"}},
  };
}

GroupStructure japan_structure() { return geo_sex_structure("Japan", japan_regions()); }

std::string to_string(Method m) {
  switch (m) {
    case Method::Base: return "base";
    case Method::BottomUp: return "bottom-up";
    case Method::Ols: return "ols";
  }
  return "?";
}

std::string to_string(ModelKind m) { return m == ModelKind::LeeCarter ? "LC" : "FTS"; }

Method parse_method(const std::string& s) {
  if (s == "base") return Method::Base;
  if (s == "bottom-up" || s == "bu" || s == "BU") return Method::BottomUp;
  if (s == "ols" || s == "OLS") return Method::Ols;
  throw ValidationError("unknown reconciliation method: " + s);
}

ModelKind parse_model(const std::string& s) {
  if (s == "LC" || s == "lc" || s == "lee-carter") return ModelKind::LeeCarter;
  if (s == "FTS" || s == "fts") return ModelKind::Fts;
  throw ValidationError("unknown model: " + s);
}

void ForecastSet::validate() const {
  if (rates.size() != series.size()) throw ValidationError("forecast set: series/rates size mismatch");
  if (!replicates.empty() && replicates.size() != series.size()) {
    throw ValidationError("forecast set: replicates must be given for every series");
  }
  const std::size_t b = replicate_count();
  auto check = [&](const Eigen::MatrixXd& m, const std::string& id, bool replicate) {
    if (replicate ? (m.cols() < 1 || m.cols() > horizon) : m.cols() != horizon) {
      throw ValidationError("forecast for " + id + " has wrong horizon");
    }
    if (!m.allFinite() || (m.array() <= 0.0).any()) {
      throw ValidationError("forecast for " + id + " has non-positive or non-finite rates");
    }
  };
  for (std::size_t s = 0; s < series.size(); ++s) {
    check(rates[s], series[s], false);
    if (!replicates.empty()) {
      if (replicates[s].size() != b) throw ValidationError("replicate count differs across series");
      for (const auto& r : replicates[s]) {
        if (r.rows() != rates[s].rows() || r.cols() != replicates.front().front().cols()) {
          throw ValidationError("replicate shape mismatch for " + series[s]);
        }
        check(r, series[s], true);
      }
    }
  }
}

}  // namespace gfts
