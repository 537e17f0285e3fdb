#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace normdiff::pipe {

// Conditional sample store: one flat little-endian float64 block file plus
// a JSON index mapping each covariate cell to (offset, M, D).
struct StoreCell {
  double age = 0.0;
  int sex = 0;
  std::size_t offset = 0;  // element offset into the block file
  std::size_t m = 0;
  std::size_t d = 0;
};

class SampleStoreWriter {
 public:
  // base_path without extension; writes base.bin and base.json
  explicit SampleStoreWriter(const std::string& base_path);
  ~SampleStoreWriter();

  // values: m x d row-major, scaled units
  void append(double age, int sex, const std::vector<double>& values,
              std::size_t m, std::size_t d);
  void finalize(std::uint64_t seed);

 private:
  std::string base_;
  std::vector<StoreCell> cells_;
  std::size_t next_offset_ = 0;
  void* file_ = nullptr;  // FILE*
  bool finalized_ = false;
};

class SampleStore {
 public:
  explicit SampleStore(const std::string& base_path);

  const std::vector<StoreCell>& cells() const { return cells_; }
  std::uint64_t seed() const { return seed_; }
  // m x d row-major block for one cell
  std::vector<double> read_cell(std::size_t cell) const;
  // single column of one cell
  std::vector<double> read_column(std::size_t cell, std::size_t idp) const;
  // cell lookup by covariates; throws if absent
  std::size_t find_cell(double age, int sex) const;

 private:
  std::string base_;
  std::vector<StoreCell> cells_;
  std::uint64_t seed_ = 0;
};

}  // namespace normdiff::pipe
