#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gfts/domain.hpp"

namespace gfts {

struct SyntheticOptions {
  int first_year = 1975;
  int years = 40;
  int first_age = 60;
  int open_age = 100;  // last grid point, open ended
  std::uint64_t seed = 1;
};

/// Bottom-level surfaces aligned with structure.bottom_series().
struct SyntheticData {
  GroupStructure structure;
  std::vector<MortalitySurface> bottom;
};

/// Seeded geography x sex data: Makeham baseline, sex and area offsets, a
/// Lee-Carter style improvement index, exposures propagated along cohorts and
/// deaths with Poisson-sized noise.
SyntheticData simulate_geo_sex(const std::string& total_id, const std::vector<RegionSpec>& regions,
                               const SyntheticOptions& options);

/// 47 prefectures in 8 regions, 168 series.
SyntheticData simulate_japan(const SyntheticOptions& options);

/// One area, two sexes: Toy*T, Toy*F, Toy*M.
SyntheticData simulate_toy(const SyntheticOptions& options);

/// Every series of the structure: aggregates summed from the bottom surfaces,
/// in structure order.
std::vector<MortalitySurface> all_surfaces(const SyntheticData& data);

/// Writes <dir>/<area>/Deaths_1x1.txt and Exposures_1x1.txt in HMD format for
/// every area of a geography x sex dataset.
void write_hmd_directory(const std::filesystem::path& dir, const SyntheticData& data);

}  // namespace gfts
