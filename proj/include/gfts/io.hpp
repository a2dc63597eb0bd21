#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gfts/domain.hpp"

namespace gfts {

/// One HMD/JMD-format table (columns Year Age Female Male Total).
struct HmdTable {
  std::vector<int> years;
  AgeGrid ages{{0, 1}, false};  // placeholder until parsed
  Grid female;  // year x age
  Grid male;
  Grid total;
};

/// Skips the header block up to the "Year Age ..." line. "." is missing and
/// a trailing "+" marks the open age group. Throws ParseError (with the line
/// number) on malformed rows and StructuralError on gaps in years or ages.
HmdTable parse_hmd_table(std::istream& in, const std::string& source = "<stream>");
HmdTable read_hmd_file(const std::filesystem::path& path);

/// Writes a table that parse_hmd_table reads back exactly.
void write_hmd_table(std::ostream& out, const HmdTable& table, const std::string& title);

/// Keeps ages first..open-1 and sums every age >= open into an open group.
/// Only meaningful for counts (deaths, exposures).
HmdTable collapse_ages(const HmdTable& table, int first, int open);

/// JSON: {"bottom_level": "...", "bottom": [...],
///        "groups": [{"id": "...", "level": "...", "members": [...]}, ...]}
GroupStructure parse_group_structure(const std::string& json_text);
GroupStructure read_group_structure(const std::filesystem::path& path);
std::string group_structure_to_json(const GroupStructure& structure);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gfts
