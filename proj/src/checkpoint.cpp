#include "docnmt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "docnmt/error.hpp"

namespace docnmt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'O', 'C', 'N', 'M', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_doubles(std::vector<double>& out, std::size_t n) {
    need(n * sizeof(double));
    out.resize(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("tensor file truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::size_t meta_size(const TensorFile& file, const std::string& key) {
  auto it = file.metadata.find(key);
  if (it == file.metadata.end()) throw FormatError("checkpoint missing metadata '" + key + "'");
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw FormatError("checkpoint metadata '" + key + "' is not a number: " + it->second);
  }
}

}  // namespace

std::string serialize_tensor_file(const TensorFile& file) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.metadata.size()));
  for (const auto& [key, value] : file.metadata) {
    put_string(out, key);
    put_string(out, value);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, tensor] : file.tensors) {
    if (shape_size(tensor.shape) != tensor.values.size()) {
      throw DimensionError("tensor '" + name + "' shape does not match its data");
    }
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape.size()));
    for (std::size_t d : tensor.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(tensor.values.data()), tensor.values.size() * sizeof(double));
  }
  return out;
}

TensorFile deserialize_tensor_file(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a docnmt tensor file (bad magic)");
  }
  Reader in(bytes);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) in.get<char>();
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) throw FormatError("unsupported tensor file version " + std::to_string(version));
  TensorFile file;
  const auto meta_count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = in.get_string();
    file.metadata[key] = in.get_string();
  }
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.get_string();
    StoredTensor t;
    const auto rank = in.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
    in.get_doubles(t.values, shape_size(t.shape));
    file.tensors.emplace(std::move(name), std::move(t));
  }
  if (!in.done()) throw FormatError("trailing bytes after tensor file payload");
  return file;
}

void write_tensor_file(const std::string& path, const TensorFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_tensor_file(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_tensor_file(buf.str());
}

TensorFile to_tensor_file(const ModelParams& params) {
  TensorFile file;
  file.metadata["format"] = "docnmt-model";
  file.metadata["mode"] = to_string(params.mode);
  file.metadata["src_vocab"] = std::to_string(params.dims.src_vocab);
  file.metadata["tgt_vocab"] = std::to_string(params.dims.tgt_vocab);
  file.metadata["embedding"] = std::to_string(params.dims.embedding);
  file.metadata["hidden"] = std::to_string(params.dims.hidden);
  file.metadata["attention"] = std::to_string(params.dims.attention);
  for (const auto& [name, t] : params.named()) {
    file.tensors[name] = StoredTensor{t->shape(), std::vector<double>(t->values().begin(), t->values().end())};
  }
  return file;
}

ModelParams from_tensor_file(const TensorFile& file) {
  auto fmt = file.metadata.find("format");
  if (fmt == file.metadata.end() || fmt->second != "docnmt-model") throw FormatError("not a model checkpoint");
  auto mode_it = file.metadata.find("mode");
  if (mode_it == file.metadata.end()) throw FormatError("checkpoint missing metadata 'mode'");
  ModelDims dims;
  dims.src_vocab = meta_size(file, "src_vocab");
  dims.tgt_vocab = meta_size(file, "tgt_vocab");
  dims.embedding = meta_size(file, "embedding");
  dims.hidden = meta_size(file, "hidden");
  dims.attention = meta_size(file, "attention");
  Rng scratch(0);
  ModelParams params = ModelParams::initialize(parse_model_mode(mode_it->second), dims, scratch);
  auto named = params.named();
  for (auto& [name, tensor] : named) {
    auto it = file.tensors.find(name);
    if (it == file.tensors.end()) throw FormatError("checkpoint missing tensor '" + name + "'");
    if (it->second.shape != tensor->shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_to_string(it->second.shape) +
                           ", expected " + shape_to_string(tensor->shape()));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), tensor->mutable_values().begin());
  }
  if (named.size() != file.tensors.size()) {
    for (const auto& [name, t] : file.tensors) {
      if (!named.count(name)) throw FormatError("checkpoint has unexpected tensor '" + name + "'");
    }
  }
  return params;
}

void save_model(const ModelParams& params, const std::string& path) {
  write_tensor_file(path, to_tensor_file(params));
}

ModelParams load_model(const std::string& path) { return from_tensor_file(read_tensor_file(path)); }

}  // namespace docnmt
