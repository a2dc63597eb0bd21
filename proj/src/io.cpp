#include "gfts/io.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "gfts/error.hpp"
#include "gfts/format.hpp"

namespace gfts {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line);
}

int parse_int(const std::string& s, const std::string& at) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno != 0) throw ParseError(at + ": expected an integer, got '" + s + "'");
  return static_cast<int>(v);
}

double parse_value(const std::string& s, const std::string& at) {
  if (s == ".") return kMissing;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno != 0) throw ParseError(at + ": expected a number, got '" + s + "'");
  if (!(v >= 0.0)) throw ParseError(at + ": negative or invalid value '" + s + "'");
  return v;
}

struct Row {
  int year;
  int age;
  bool open;
  double f, m, t;
};

}  // namespace

HmdTable parse_hmd_table(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.size() >= 2 && tok[0] == "Year" && tok[1] == "Age") {
      header = true;
      break;
    }
  }
  if (!header) throw ParseError(source + ": no 'Year Age' header line");

  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string at = where(source, lineno);
    if (tok.size() != 5) throw ParseError(at + ": expected 5 columns, got " + std::to_string(tok.size()));
    Row r{};
    r.year = parse_int(tok[0], at);
    std::string age = tok[1];
    r.open = !age.empty() && age.back() == '+';
    if (r.open) age.pop_back();
    r.age = parse_int(age, at);
    r.f = parse_value(tok[2], at);
    r.m = parse_value(tok[3], at);
    r.t = parse_value(tok[4], at);
    rows.push_back(r);
  }
  if (rows.empty()) throw ParseError(source + ": no data rows");

  // Ages of the first year define the grid; every year must repeat it.
  std::vector<int> ages;
  bool open = false;
  for (const Row& r : rows) {
    if (r.year != rows.front().year) break;
    ages.push_back(r.age);
    open = r.open;
  }
  for (std::size_t i = 1; i < ages.size(); ++i) {
    if (ages[i] != ages[i - 1] + 1) throw StructuralError(source + ": ages are not contiguous at " + std::to_string(ages[i]));
  }
  const std::size_t p = ages.size();
  if (rows.size() % p != 0) throw StructuralError(source + ": years do not all cover the same ages");
  const std::size_t n = rows.size() / p;

  HmdTable table;
  table.ages = AgeGrid(ages, open);
  table.female.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  table.male.resizeLike(table.female);
  table.total.resizeLike(table.female);
  for (std::size_t t = 0; t < n; ++t) {
    const int year = rows[t * p].year;
    if (t > 0 && year != table.years.back() + 1) {
      throw StructuralError(source + ": years are not contiguous (" + std::to_string(table.years.back()) + " then " +
                            std::to_string(year) + ")");
    }
    table.years.push_back(year);
    for (std::size_t x = 0; x < p; ++x) {
      const Row& r = rows[t * p + x];
      if (r.year != year || r.age != ages[x] || r.open != (open && x + 1 == p)) {
        throw StructuralError(source + ": year " + std::to_string(year) + " does not repeat the age grid");
      }
      const auto ti = static_cast<Eigen::Index>(t);
      const auto xi = static_cast<Eigen::Index>(x);
      table.female(ti, xi) = r.f;
      table.male(ti, xi) = r.m;
      table.total(ti, xi) = r.t;
    }
  }
  return table;
}

HmdTable read_hmd_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_hmd_table(in, path.string());
}

void write_hmd_table(std::ostream& out, const HmdTable& table, const std::string& title) {
  out << title << "\n\n";
  out << "  Year      Age         Female           Male          Total\n";
  auto cell = [](double v) { return is_missing(v) ? std::string(".") : format_double(v); };
  for (std::size_t t = 0; t < table.years.size(); ++t) {
    for (std::size_t x = 0; x < table.ages.size(); ++x) {
      const auto ti = static_cast<Eigen::Index>(t);
      const auto xi = static_cast<Eigen::Index>(x);
      out << std::setw(6) << table.years[t] << std::setw(9) << table.ages.label(x) << "  " << cell(table.female(ti, xi))
          << "  " << cell(table.male(ti, xi)) << "  " << cell(table.total(ti, xi)) << '\n';
    }
  }
}

HmdTable collapse_ages(const HmdTable& table, int first, int open) {
  if (open <= first) throw ValidationError("open age must exceed the first age");
  const int i0 = table.ages.index_of(first);
  const int iopen = table.ages.index_of(open);
  if (i0 < 0 || iopen < 0) {
    throw StructuralError("ages " + std::to_string(first) + " and " + std::to_string(open) + " must be in the table");
  }
  HmdTable out;
  out.years = table.years;
  out.ages = AgeGrid::range(first, open, true);
  const Eigen::Index n = table.female.rows();
  const Eigen::Index p = static_cast<Eigen::Index>(out.ages.size());
  const auto src_end = static_cast<Eigen::Index>(table.ages.size());
  auto fold = [&](const Grid& g) {
    Grid r(n, p);
    r.leftCols(p - 1) = g.middleCols(i0, p - 1);
    // NaN propagates through the sum, which is what a missing count should do.
    r.col(p - 1) = g.middleCols(iopen, src_end - iopen).rowwise().sum();
    return r;
  };
  out.female = fold(table.female);
  out.male = fold(table.male);
  out.total = fold(table.total);
  return out;
}

GroupStructure parse_group_structure(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("group structure: ") + e.what());
  }
  try {
    std::vector<GroupStructure::GroupSpec> groups;
    for (const auto& g : j.at("groups")) {
      groups.push_back({g.at("id").get<std::string>(), g.at("level").get<std::string>(),
                        g.at("members").get<std::vector<std::string>>()});
    }
    return GroupStructure(j.at("bottom").get<std::vector<std::string>>(), j.value("bottom_level", "Bottom"),
                          std::move(groups));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("group structure: ") + e.what());
  }
}

GroupStructure read_group_structure(const std::filesystem::path& path) {
  return parse_group_structure(read_text(path));
}

std::string group_structure_to_json(const GroupStructure& structure) {
  nlohmann::ordered_json j;
  j["bottom_level"] = structure.bottom_level();
  j["bottom"] = structure.bottom_series();
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : structure.groups()) {
    std::vector<std::string> members;
    for (std::size_t b : g.members) members.push_back(structure.bottom_series()[b]);
    j["groups"].push_back({{"id", g.id}, {"level", g.level}, {"members", members}});
  }
  return j.dump(2) + "\n";
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << text;
  if (!out) throw ParseError("write failed for " + path.string());
}

}  // namespace gfts
