#include "normdiff/samplestore.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace normdiff::pipe {

using nlohmann::json;

SampleStoreWriter::SampleStoreWriter(const std::string& base_path)
    : base_(base_path) {
  FILE* f = std::fopen((base_ + ".bin").c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open sample store: " + base_ + ".bin");
  file_ = f;
}

SampleStoreWriter::~SampleStoreWriter() {
  if (file_) std::fclose(static_cast<FILE*>(file_));
}

void SampleStoreWriter::append(double age, int sex,
                               const std::vector<double>& values, std::size_t m,
                               std::size_t d) {
  if (values.size() != m * d)
    throw std::invalid_argument("sample store append: size mismatch");
  // host doubles are IEEE-754 little-endian on every supported target
  const std::size_t written = std::fwrite(values.data(), sizeof(double),
                                          values.size(), static_cast<FILE*>(file_));
  if (written != values.size())
    throw std::runtime_error("sample store write failed");
  cells_.push_back({age, sex, next_offset_, m, d});
  next_offset_ += values.size();
}

void SampleStoreWriter::finalize(std::uint64_t seed) {
  if (finalized_) return;
  std::fclose(static_cast<FILE*>(file_));
  file_ = nullptr;

  json idx;
  idx["format"] = "f64-le";
  idx["seed"] = seed;
  idx["cells"] = json::array();
  for (const auto& c : cells_)
    idx["cells"].push_back({{"age", c.age},
                            {"sex", c.sex},
                            {"offset", c.offset},
                            {"m", c.m},
                            {"d", c.d}});
  std::ofstream out(base_ + ".json");
  if (!out) throw std::runtime_error("cannot write sample index: " + base_ + ".json");
  out << idx.dump();
  finalized_ = true;
}

SampleStore::SampleStore(const std::string& base_path) : base_(base_path) {
  std::ifstream in(base_ + ".json");
  if (!in) throw std::runtime_error("cannot read sample index: " + base_ + ".json");
  json idx;
  in >> idx;
  if (idx.at("format").get<std::string>() != "f64-le")
    throw std::runtime_error("unsupported sample store format");
  seed_ = idx.at("seed").get<std::uint64_t>();
  for (const auto& c : idx.at("cells"))
    cells_.push_back({c.at("age").get<double>(), c.at("sex").get<int>(),
                      c.at("offset").get<std::size_t>(), c.at("m").get<std::size_t>(),
                      c.at("d").get<std::size_t>()});
}

std::vector<double> SampleStore::read_cell(std::size_t cell) const {
  const StoreCell& c = cells_.at(cell);
  std::vector<double> out(c.m * c.d);
  FILE* f = std::fopen((base_ + ".bin").c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open sample store: " + base_ + ".bin");
  std::fseek(f, static_cast<long>(c.offset * sizeof(double)), SEEK_SET);
  const std::size_t got = std::fread(out.data(), sizeof(double), out.size(), f);
  std::fclose(f);
  if (got != out.size()) throw std::runtime_error("sample store read failed");
  return out;
}

std::vector<double> SampleStore::read_column(std::size_t cell, std::size_t idp) const {
  const StoreCell& c = cells_.at(cell);
  if (idp >= c.d) throw std::out_of_range("sample store column out of range");
  const std::vector<double> block = read_cell(cell);
  std::vector<double> out(c.m);
  for (std::size_t i = 0; i < c.m; ++i) out[i] = block[i * c.d + idp];
  return out;
}

std::size_t SampleStore::find_cell(double age, int sex) const {
  for (std::size_t i = 0; i < cells_.size(); ++i)
    if (cells_[i].sex == sex && std::abs(cells_[i].age - age) < 1e-9) return i;
  throw std::out_of_range("no sample-store cell for the requested covariates");
}

}  // namespace normdiff::pipe
