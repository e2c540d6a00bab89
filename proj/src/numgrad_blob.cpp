#include "ctsnas/numgrad/blob.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace ctsnas::numgrad {

static_assert(std::endian::native == std::endian::little,
              "blob payload is little-endian float64");

void save_params(const std::filesystem::path& base, const ParamStore& params) {
  nlohmann::json manifest;
  manifest["dtype"] = "float64_le";
  nlohmann::json tensors = nlohmann::json::array();
  long offset = 0;
  for (const auto& [name, t] : params) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    tensors.push_back(e);
    offset += t.numel();
  }
  manifest["tensors"] = tensors;
  manifest["total"] = offset;

  std::filesystem::path json_path = base;
  json_path += ".json";
  std::ofstream mf(json_path);
  if (!mf) throw StateError("cannot write " + json_path.string());
  mf << manifest.dump(2) << '\n';

  std::filesystem::path bin_path = base;
  bin_path += ".bin";
  std::ofstream bf(bin_path, std::ios::binary);
  if (!bf) throw StateError("cannot write " + bin_path.string());
  for (const auto& [name, t] : params)
    bf.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * static_cast<long>(sizeof(double))));
}

ParamStore load_params(const std::filesystem::path& base) {
  std::filesystem::path json_path = base;
  json_path += ".json";
  std::ifstream mf(json_path);
  if (!mf) throw StateError("cannot read " + json_path.string());
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.at("dtype").get<std::string>() != "float64_le")
    throw StateError("unsupported blob dtype in " + json_path.string());

  std::filesystem::path bin_path = base;
  bin_path += ".bin";
  std::ifstream bf(bin_path, std::ios::binary);
  if (!bf) throw StateError("cannot read " + bin_path.string());

  ParamStore out;
  for (const auto& e : manifest.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    const long offset = e.at("offset").get<long>();
    Tensor t(shape);
    bf.seekg(offset * static_cast<long>(sizeof(double)));
    bf.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * static_cast<long>(sizeof(double))));
    if (!bf) throw StateError("truncated blob payload in " + bin_path.string());
    out.create(name, std::move(t));
  }
  return out;
}

}  // namespace ctsnas::numgrad
