#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace hbf {

// Writes a JSON manifest next to one flat little-endian float64 blob.
// Complex tensors are stored as interleaved (re, im) pairs, row-major.
class TensorBlobWriter {
 public:
  void add(const std::string& name, std::vector<std::int64_t> shape, bool is_complex,
           std::span<const double> values);
  // Writes <stem>.json and <stem>.bin; `meta` is merged into the manifest.
  void write(const std::string& stem, nlohmann::json meta) const;

 private:
  nlohmann::json entries_ = nlohmann::json::array();
  std::vector<double> blob_;
};

class TensorBlobReader {
 public:
  explicit TensorBlobReader(const std::string& stem);
  const nlohmann::json& manifest() const { return manifest_; }
  bool has(const std::string& name) const;
  std::vector<std::int64_t> shape(const std::string& name) const;
  // Flat float64 values (complex tensors come back interleaved).
  std::vector<double> values(const std::string& name) const;

 private:
  const nlohmann::json& entry(const std::string& name) const;
  nlohmann::json manifest_;
  std::vector<double> blob_;
};

}  // namespace hbf
