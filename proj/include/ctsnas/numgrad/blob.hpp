#ifndef CTSNAS_NUMGRAD_BLOB_HPP
#define CTSNAS_NUMGRAD_BLOB_HPP

#include "ctsnas/numgrad/params.hpp"

#include <filesystem>
#include <string>

namespace ctsnas::numgrad {

// Weight blob format: <base>.json holds the manifest (tensor name -> shape and
// element offset into the payload), <base>.bin is the contiguous little-endian
// float64 payload in manifest order.
void save_params(const std::filesystem::path& base, const ParamStore& params);
ParamStore load_params(const std::filesystem::path& base);

}  // namespace ctsnas::numgrad

#endif
