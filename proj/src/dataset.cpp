#include "normdiff/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "normdiff/rng.hpp"

namespace normdiff::data {

namespace {

constexpr double kBinCenterOffset = 0.5;

double round_to_center(double age) { return std::floor(age + kBinCenterOffset); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
  std::size_t a = s.find_first_not_of(" \t");
  std::size_t b = s.find_last_not_of(" \t");
  if (a == std::string::npos) {
    throw std::invalid_argument("csv: missing value in row " + std::to_string(row) +
                        ", column " + col);
  }
  double v = 0.0;
  const char* first = s.data() + a;
  const char* last = s.data() + b + 1;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw std::invalid_argument("csv: non-numeric cell '" + s + "' in row " +
                        std::to_string(row) + ", column " + col);
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Strata keyed by (1-year age bin, sex); deterministic iteration order.
std::map<std::pair<long, int>, std::vector<std::size_t>> strata_of(
    const Cohort& cohort) {
  std::map<std::pair<long, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < cohort.n; ++i) {
    strata[{static_cast<long>(round_to_center(cohort.age(i))), cohort.sex(i)}]
        .push_back(i);
  }
  return strata;
}

}  // namespace

Cohort Cohort::select_rows(const std::vector<std::size_t>& rows) const {
  Cohort out;
  out.covariate_names = covariate_names;
  out.idp_names = idp_names;
  out.n = rows.size();
  const std::size_t c = cov_dim(), d = idp_dim();
  out.covariates.reserve(rows.size() * c);
  out.idps.reserve(rows.size() * d);
  for (std::size_t r : rows) {
    out.covariates.insert(out.covariates.end(), covariates.begin() + r * c,
                          covariates.begin() + (r + 1) * c);
    out.idps.insert(out.idps.end(), idps.begin() + r * d, idps.begin() + (r + 1) * d);
  }
  return out;
}

void Standardizer::transform(Cohort& cohort) const {
  const std::size_t d = cohort.idp_dim();
  for (std::size_t i = 0; i < cohort.n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      cohort.idps[i * d + j] = scale_value(j, cohort.idps[i * d + j]);
    }
  }
}

void Standardizer::inverse_transform(Cohort& cohort) const {
  const std::size_t d = cohort.idp_dim();
  for (std::size_t i = 0; i < cohort.n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      cohort.idps[i * d + j] = unscale_value(j, cohort.idps[i * d + j]);
    }
  }
}

CovariateGrid CovariateGrid::from_age_range(double age_min, double age_max,
                                            double bin_width) {
  if (bin_width <= 0.0) throw std::invalid_argument("grid: bin width must be > 0");
  CovariateGrid grid;
  grid.bin_width = bin_width;
  const double c0 = round_to_center(age_min);
  const double c1 = round_to_center(age_max);
  for (double c = c0; c <= c1 + 1e-9; c += bin_width) {
    grid.cells.push_back({c, 0});
    grid.cells.push_back({c, 1});
  }
  return grid;
}

CovariateGrid CovariateGrid::from_cohort(const Cohort& cohort, double bin_width) {
  if (cohort.n == 0) throw std::invalid_argument("grid: empty cohort");
  double lo = cohort.age(0), hi = cohort.age(0);
  for (std::size_t i = 1; i < cohort.n; ++i) {
    lo = std::min(lo, cohort.age(i));
    hi = std::max(hi, cohort.age(i));
  }
  return from_age_range(lo, hi, bin_width);
}

std::size_t CovariateGrid::cell_index(double age, int sex) const {
  const double c0 = cells.front().age_center;
  const double rel = (age - (c0 - bin_width / 2.0)) / bin_width;
  const long k = static_cast<long>(std::floor(rel));
  const long n_ages = static_cast<long>(cells.size()) / 2;
  if (k < 0 || k >= n_ages || (sex != 0 && sex != 1)) {
    throw std::invalid_argument("grid: covariates (age=" + std::to_string(age) +
                        ", sex=" + std::to_string(sex) + ") outside the grid");
  }
  return static_cast<std::size_t>(k) * 2 + static_cast<std::size_t>(sex);
}

Cohort load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw std::invalid_argument("csv: empty file " + path);
  }
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "age" || header[1] != "sex") {
    throw std::invalid_argument("csv: header must start with 'age,sex' followed by IDP columns");
  }
  Cohort cohort;
  cohort.covariate_names = {"age", "sex"};
  cohort.idp_names.assign(header.begin() + 2, header.end());
  const std::size_t d = cohort.idp_dim();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::invalid_argument("csv: row " + std::to_string(row) + " has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(header.size()));
    }
    const double age = parse_double(fields[0], row, "age");
    const double sex = parse_double(fields[1], row, "sex");
    if (sex != 0.0 && sex != 1.0) {
      throw std::invalid_argument("csv: sex must be 0 or 1 in row " + std::to_string(row));
    }
    cohort.covariates.push_back(age);
    cohort.covariates.push_back(sex);
    for (std::size_t j = 0; j < d; ++j) {
      cohort.idps.push_back(parse_double(fields[2 + j], row, cohort.idp_names[j]));
    }
  }
  cohort.n = row;
  if (cohort.n == 0) throw std::invalid_argument("csv: no data rows in " + path);
  return cohort;
}

void write_csv(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("csv: cannot write " + path);
  out << "age,sex";
  for (const auto& name : cohort.idp_names) out << "," << name;
  out << "\n";
  const std::size_t d = cohort.idp_dim();
  for (std::size_t i = 0; i < cohort.n; ++i) {
    out << format_double(cohort.age(i)) << "," << cohort.sex(i);
    for (std::size_t j = 0; j < d; ++j) {
      out << "," << format_double(cohort.idps[i * d + j]);
    }
    out << "\n";
  }
}

Cohort cohort_from_synth(const std::vector<synth::SynthRecord>& records) {
  Cohort cohort;
  cohort.covariate_names = {"age", "sex"};
  cohort.idp_names = {"struct_a", "struct_b", "struct_c", "struct_d"};
  cohort.n = records.size();
  cohort.covariates.reserve(records.size() * 2);
  cohort.idps.reserve(records.size() * synth::kNumStructures);
  for (const auto& r : records) {
    cohort.covariates.push_back(r.age);
    cohort.covariates.push_back(static_cast<double>(r.sex));
    for (double v : r.y) cohort.idps.push_back(v);
  }
  return cohort;
}

Standardizer fit_apply_zscale(Cohort& train, std::vector<Cohort*> others) {
  if (train.n < 2) throw std::invalid_argument("zscale: training cohort too small");
  const std::size_t d = train.idp_dim();
  Standardizer st;
  st.means.resize(d);
  st.sds.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < train.n; ++i) mean += train.idps[i * d + j];
    mean /= static_cast<double>(train.n);
    double ss = 0.0;
    for (std::size_t i = 0; i < train.n; ++i) {
      const double dv = train.idps[i * d + j] - mean;
      ss += dv * dv;
    }
    const double sd = std::sqrt(ss / static_cast<double>(train.n - 1));
    if (sd <= 0.0) {
      throw std::invalid_argument("zscale: zero-variance IDP column '" + train.idp_names[j] +
                          "'");
    }
    st.means[j] = mean;
    st.sds[j] = sd;
  }
  st.transform(train);
  for (Cohort* other : others) {
    if (other->idp_dim() != d) {
      throw DimensionError("zscale: cohort IDP dimension mismatch");
    }
    st.transform(*other);
  }
  return st;
}

std::pair<Cohort, Cohort> stratified_split(const Cohort& cohort, double fraction,
                                           std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("split: fraction must lie in (0,1)");
  }
  Rng rng(seed);
  std::vector<std::size_t> train_rows, holdout_rows;
  for (auto& [key, rows] : strata_of(cohort)) {
    auto shuffled = rows;
    rng.shuffle(shuffled);
    const std::size_t n_train = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(shuffled.size())));
    train_rows.insert(train_rows.end(), shuffled.begin(), shuffled.begin() + n_train);
    holdout_rows.insert(holdout_rows.end(), shuffled.begin() + n_train, shuffled.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(holdout_rows.begin(), holdout_rows.end());
  return {cohort.select_rows(train_rows), cohort.select_rows(holdout_rows)};
}

Cohort stratified_subsample(const Cohort& cohort, double fraction,
                            std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw std::invalid_argument("subsample: fraction must lie in (0,1]");
  }
  if (fraction == 1.0) return cohort;
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto& [key, rows] : strata_of(cohort)) {
    auto shuffled = rows;
    rng.shuffle(shuffled);
    const std::size_t n_keep = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(shuffled.size())));
    keep.insert(keep.end(), shuffled.begin(), shuffled.begin() + n_keep);
  }
  std::sort(keep.begin(), keep.end());
  return cohort.select_rows(keep);
}

std::vector<std::vector<std::size_t>> bin_membership(const Cohort& cohort,
                                                     const CovariateGrid& grid) {
  std::vector<std::vector<std::size_t>> cells(grid.cells.size());
  for (std::size_t i = 0; i < cohort.n; ++i) {
    cells[grid.cell_index(cohort.age(i), cohort.sex(i))].push_back(i);
  }
  return cells;
}

}  // namespace normdiff::data
