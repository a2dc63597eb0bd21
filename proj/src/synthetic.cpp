#include "gfts/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "gfts/error.hpp"
#include "gfts/io.hpp"
#include "gfts/random.hpp"

namespace gfts {

namespace {

struct SexParams {
  double level;  // log offset of the Makeham baseline
  double speed;  // scale of the improvement loading
};

}  // namespace

SyntheticData simulate_geo_sex(const std::string& total_id, const std::vector<RegionSpec>& regions,
                               const SyntheticOptions& o) {
  if (o.years < 3) throw ValidationError("need at least 3 simulated years");
  if (o.open_age <= o.first_age) throw ValidationError("open age must exceed the first age");
  GroupStructure structure = geo_sex_structure(total_id, regions);
  const AgeGrid ages = AgeGrid::range(o.first_age, o.open_age, true);
  const int n = o.years;
  const int p = static_cast<int>(ages.size());
  std::vector<int> years(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) years[static_cast<std::size_t>(t)] = o.first_year + t;

  // Common improvement index: linear decline plus a random walk.
  std::mt19937_64 common(derive_seed(o.seed, 0, 0));
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> kappa(static_cast<std::size_t>(n));
  double walk = 0.0;
  for (int t = 0; t < n; ++t) {
    walk += 0.4 * z(common);
    kappa[static_cast<std::size_t>(t)] = -1.0 * (t - 0.5 * (n - 1)) + walk;
  }

  std::vector<MortalitySurface> bottom;
  std::size_t area_index = 0;
  for (const auto& region : regions) {
    for (const auto& area : region.areas) {
      ++area_index;
      std::mt19937_64 rng(derive_seed(o.seed, 1, area_index));
      const double area_level = 0.08 * z(rng);
      const double area_speed = 1.0 + 0.1 * z(rng);
      const double births = 4000.0 * std::exp(1.2 * z(rng)) + 1500.0;
      const double growth = 0.01 * z(rng);
      for (const SexParams sex : {SexParams{-0.45, 1.1}, SexParams{0.0, 0.9}}) {
        Grid log_m(n, p);
        for (int t = 0; t < n; ++t) {
          for (int x = 0; x < p; ++x) {
            const double age = ages.ages()[static_cast<std::size_t>(x)];
            const double base = std::log(2e-4 + 2e-5 * std::exp(0.1 * age));
            const double load = 0.02 * sex.speed * area_speed * (1.3 - age / 110.0);
            log_m(t, x) = base + sex.level + area_level + load * kappa[static_cast<std::size_t>(t)];
          }
        }
        // Exposures: the first age grows with the area's birth trend and each
        // cohort then survives along the diagonal.
        Grid e(n, p);
        for (int t = 0; t < n; ++t) e(t, 0) = births * std::exp(growth * t);
        for (int x = 1; x < p; ++x) {
          e(0, x) = e(0, x - 1) * std::exp(-std::exp(log_m(0, x - 1)) - growth);
        }
        for (int t = 1; t < n; ++t) {
          for (int x = 1; x < p; ++x) e(t, x) = e(t - 1, x - 1) * std::exp(-std::exp(log_m(t - 1, x - 1)));
          // The open group keeps its own survivors as well.
          e(t, p - 1) += e(t - 1, p - 1) * std::exp(-std::exp(log_m(t - 1, p - 1)));
        }
        Grid d(n, p);
        for (int t = 0; t < n; ++t) {
          for (int x = 0; x < p; ++x) {
            const double mean = e(t, x) * std::exp(log_m(t, x));
            const double sd = 1.0 / std::sqrt(std::max(mean, 1.0));
            d(t, x) = mean * std::exp(sd * z(rng));
          }
        }
        const std::string id = area + (sex.level < 0.0 ? "*F" : "*M");
        bottom.push_back(MortalitySurface::from_counts(id, years, ages, std::move(d), std::move(e)));
      }
    }
  }
  return {std::move(structure), std::move(bottom)};
}

SyntheticData simulate_japan(const SyntheticOptions& options) {
  return simulate_geo_sex("Japan", japan_regions(), options);
}

SyntheticData simulate_toy(const SyntheticOptions& options) {
  // A single area whose total is the area itself: Toy*T over Toy*F, Toy*M.
  SyntheticData full = simulate_geo_sex("ToyAll", {{"ToyRegion", {"Toy"}}}, options);
  GroupStructure structure({"Toy*F", "Toy*M"}, "Sex", {{"Toy*T", "Total", {"Toy*F", "Toy*M"}}});
  return {std::move(structure), std::move(full.bottom)};
}

std::vector<MortalitySurface> all_surfaces(const SyntheticData& data) {
  std::vector<MortalitySurface> out;
  const auto& s = data.structure;
  for (std::size_t g = 0; g < s.group_count(); ++g) {
    std::vector<MortalitySurface> members;
    for (std::size_t b : s.groups()[g].members) members.push_back(data.bottom[b]);
    out.push_back(aggregate_surface(s.groups()[g].id, members));
  }
  for (const auto& b : data.bottom) out.push_back(b);
  return out;
}

void write_hmd_directory(const std::filesystem::path& dir, const SyntheticData& data) {
  const auto& bottom = data.structure.bottom_series();
  for (std::size_t i = 0; i + 1 < bottom.size(); i += 2) {
    const std::string& fid = bottom[i];
    if (fid.size() < 2 || fid.substr(fid.size() - 2) != "*F" || bottom[i + 1] != fid.substr(0, fid.size() - 2) + "*M") {
      throw ValidationError("bottom series are not area*F, area*M pairs");
    }
    const std::string area = fid.substr(0, fid.size() - 2);
    const MortalitySurface& f = data.bottom[i];
    const MortalitySurface& m = data.bottom[i + 1];
    std::filesystem::create_directories(dir / area);
    for (const bool deaths : {true, false}) {
      HmdTable table;
      table.years = f.years();
      table.ages = f.ages();
      table.female = deaths ? f.deaths() : f.exposures();
      table.male = deaths ? m.deaths() : m.exposures();
      table.total = table.female + table.male;
      std::ofstream out(dir / area / (deaths ? "Deaths_1x1.txt" : "Exposures_1x1.txt"));
      if (!out) throw ParseError("cannot write into " + (dir / area).string());
      write_hmd_table(out, table, area + ", " + (deaths ? "Deaths" : "Exposure to risk") + " (period 1x1), synthetic");
    }
  }
}

}  // namespace gfts
