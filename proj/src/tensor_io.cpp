#include "hbf/tensor_io.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "hbf/errors.hpp"

namespace hbf {

static_assert(std::endian::native == std::endian::little,
              "blob files are written in host order, which must be little-endian");

namespace {

std::string file_name(const std::string& path) {
  return std::filesystem::path(path).filename().string();
}

}  // namespace

void TensorBlobWriter::add(const std::string& name, std::vector<std::int64_t> shape,
                           bool is_complex, std::span<const double> values) {
  std::int64_t count = std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                                       std::multiplies<>());
  if (is_complex) count *= 2;
  if (count != static_cast<std::int64_t>(values.size()))
    throw DimensionError("tensor '" + name + "': shape does not match value count");
  nlohmann::json e;
  e["name"] = name;
  e["shape"] = shape;
  e["dtype"] = is_complex ? "complex128" : "float64";
  e["offset"] = blob_.size() * sizeof(double);
  e["bytes"] = values.size() * sizeof(double);
  entries_.push_back(e);
  blob_.insert(blob_.end(), values.begin(), values.end());
}

void TensorBlobWriter::write(const std::string& stem, nlohmann::json meta) const {
  const std::string bin = stem + ".bin";
  meta["blob"] = file_name(bin);
  meta["byte_order"] = "little";
  meta["tensors"] = entries_;
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + bin + " for writing");
    out.write(reinterpret_cast<const char*>(blob_.data()),
              static_cast<std::streamsize>(blob_.size() * sizeof(double)));
  }
  std::ofstream js(stem + ".json", std::ios::trunc);
  if (!js) throw InputError("cannot open " + stem + ".json for writing");
  js << meta.dump(2) << '\n';
}

TensorBlobReader::TensorBlobReader(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw InputError("missing manifest " + stem + ".json");
  try {
    manifest_ = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed manifest " + stem + ".json: " + e.what());
  }
  auto bin = std::filesystem::path(stem).parent_path() /
             manifest_.value("blob", file_name(stem + ".bin"));
  std::ifstream in(bin, std::ios::binary | std::ios::ate);
  if (!in) throw InputError("missing blob " + bin.string());
  auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(double) != 0) throw InputError("blob size is not a multiple of 8 bytes");
  blob_.resize(bytes / sizeof(double));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(blob_.data()), static_cast<std::streamsize>(bytes));
}

const nlohmann::json& TensorBlobReader::entry(const std::string& name) const {
  for (const auto& e : manifest_.at("tensors"))
    if (e.at("name") == name) return e;
  throw LookupError("tensor '" + name + "' not in manifest");
}

bool TensorBlobReader::has(const std::string& name) const {
  for (const auto& e : manifest_.at("tensors"))
    if (e.at("name") == name) return true;
  return false;
}

std::vector<std::int64_t> TensorBlobReader::shape(const std::string& name) const {
  return entry(name).at("shape").get<std::vector<std::int64_t>>();
}

std::vector<double> TensorBlobReader::values(const std::string& name) const {
  const auto& e = entry(name);
  auto offset = e.at("offset").get<std::size_t>() / sizeof(double);
  auto count = e.at("bytes").get<std::size_t>() / sizeof(double);
  if (offset + count > blob_.size()) throw InputError("tensor '" + name + "' overruns blob");
  return {blob_.begin() + static_cast<std::ptrdiff_t>(offset),
          blob_.begin() + static_cast<std::ptrdiff_t>(offset + count)};
}

}  // namespace hbf
