#pragma once

#include <map>
#include <string>
#include <vector>

#include "docnmt/model.hpp"
#include "docnmt/tensor.hpp"

namespace docnmt {

struct StoredTensor {
  Shape shape;
  std::vector<double> values;

  bool operator==(const StoredTensor&) const = default;
};

/// Versioned binary map of named tensors plus string metadata. Values are
/// stored as raw little-endian IEEE doubles so a load/save cycle reproduces
/// the file byte for byte.
struct TensorFile {
  std::map<std::string, std::string> metadata;
  std::map<std::string, StoredTensor> tensors;
};

void write_tensor_file(const std::string& path, const TensorFile& file);
TensorFile read_tensor_file(const std::string& path);

std::string serialize_tensor_file(const TensorFile& file);
TensorFile deserialize_tensor_file(const std::string& bytes);

TensorFile to_tensor_file(const ModelParams& params);
/// Rebuilds parameters from a file. Every expected tensor must be present
/// with the shape implied by the stored dimensions, and nothing else.
ModelParams from_tensor_file(const TensorFile& file);

void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace docnmt
