#include "mixedquant/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <nlohmann/json.hpp>

#include "mixedquant/error.hpp"

namespace mixedquant {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr char kDatasetMagic[4] = {'Q', 'D', 'S', '1'};

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
  }
  return v;
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw IoError(IoErrorKind::kMalformed, fmt::format("{} {} exceeds 32 bits", what, v));
  return static_cast<std::uint32_t>(v);
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

// ---------------------------------------------------------------------------
// Blobs

json write_blob(const fs::path& dir, const std::string& file, const Shape& shape,
                std::span<const std::uint32_t> words, const char* dtype) {
  std::vector<std::byte> bytes;
  bytes.reserve(words.size() * 4);
  for (const std::uint32_t w : words) put_u32(bytes, w);
  write_file(dir / file, bytes);
  return json{{"file", file}, {"shape", shape}, {"dtype", dtype}, {"fnv1a64", hex64(fnv1a64(bytes))}};
}

json write_f32_blob(const fs::path& dir, const std::string& file, const Tensor& t) {
  std::vector<std::uint32_t> words(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    words[i] = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
  }
  return write_blob(dir, file, t.shape(), words, "f32");
}

json write_code_blob(const fs::path& dir, const std::string& file, const QTensor& q) {
  std::vector<std::uint32_t> words(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    words[i] = static_cast<std::uint32_t>(q.codes[i] & 0xffffffff);
  }
  return write_blob(dir, file, q.shape, words, "code32");
}

struct Blob {
  Shape shape;
  std::string dtype;
  std::vector<std::uint32_t> words;
};

Shape parse_shape(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) {
    throw IoError(IoErrorKind::kMalformed, where + ": shape must be a non-empty array");
  }
  Shape shape;
  for (const json& d : j) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
      throw IoError(IoErrorKind::kMalformed, where + ": shape dimensions must be positive integers");
    }
    shape.push_back(d.get<std::size_t>());
  }
  return shape;
}

Blob read_blob(const fs::path& dir, const json& ref, const std::string& where) {
  if (!ref.is_object() || !ref.contains("file") || !ref["file"].is_string()) {
    throw IoError(IoErrorKind::kMalformed, where + ": blob reference needs a 'file'");
  }
  const std::string file = ref["file"].get<std::string>();
  Blob blob;
  blob.shape = parse_shape(ref.value("shape", json()), where);
  blob.dtype = ref.value("dtype", std::string("f32"));
  if (blob.dtype != "f32" && blob.dtype != "code32") {
    throw IoError(IoErrorKind::kMalformed, fmt::format("{}: unknown dtype '{}'", where, blob.dtype));
  }
  const fs::path path = dir / file;
  if (!fs::is_regular_file(path)) throw IoError(IoErrorKind::kMissingBlob, path.string());
  const std::vector<std::byte> bytes = read_file(path);
  const std::size_t count = element_count(blob.shape);
  if (bytes.size() != 4 * count) {
    throw IoError(IoErrorKind::kBlobSizeMismatch,
                  fmt::format("{} has {} bytes, expected {} for shape {}", path.string(), bytes.size(),
                              4 * count, to_string(blob.shape)));
  }
  if (ref.contains("fnv1a64")) {
    const std::string want = ref["fnv1a64"].get<std::string>();
    const std::string got = hex64(fnv1a64(bytes));
    if (want != got) {
      throw IoError(IoErrorKind::kChecksumMismatch,
                    fmt::format("{}: expected {}, got {}", path.string(), want, got));
    }
  }
  blob.words.resize(count);
  for (std::size_t i = 0; i < count; ++i) blob.words[i] = get_u32(bytes, 4 * i);
  return blob;
}

Tensor blob_to_tensor(const Blob& blob, const std::string& where) {
  if (blob.dtype != "f32") throw IoError(IoErrorKind::kMalformed, where + ": expected f32 blob");
  std::vector<double> data(blob.words.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(blob.words[i]));
  }
  try {
    return Tensor(blob.shape, std::move(data));
  } catch (const Error& e) {
    throw IoError(IoErrorKind::kMalformed, where + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Layers

json layer_to_json(const Layer& layer, const fs::path& dir) {
  json j{{"name", layer.name}, {"kind", kind_name(layer.kind)}};
  std::visit(Overloaded{[&](const Conv2d& c) {
                          j["out_channels"] = c.out_channels;
                          j["kernel"] = {c.kernel_h, c.kernel_w};
                          j["stride"] = c.stride;
                          j["pad"] = c.pad;
                        },
                        [&](const FullyConnected& f) { j["out_features"] = f.out_features; },
                        [&](const MaxPool& p) {
                          j["window"] = p.window;
                          j["stride"] = p.stride;
                        },
                        [&](const AvgPool& p) {
                          j["window"] = p.window;
                          j["stride"] = p.stride;
                        },
                        [](const auto&) {}},
             layer.kind);
  if (layer.quantized) {
    j["weights"] = write_code_blob(dir, layer.name + ".weights.bin", *layer.quantized);
    j["quantization"] = {{"format", to_string(layer.quantized->format)},
                         {"scale", layer.quantized->scale}};
  } else if (layer.weights) {
    j["weights"] = write_f32_blob(dir, layer.name + ".weights.bin", *layer.weights);
  }
  if (layer.bias) j["bias"] = write_f32_blob(dir, layer.name + ".bias.bin", *layer.bias);
  return j;
}

std::size_t get_size(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    throw IoError(IoErrorKind::kMalformed, fmt::format("{}: missing or invalid '{}'", where, key));
  }
  return j[key].get<std::size_t>();
}

Layer layer_from_json(const json& j, const fs::path& dir, std::size_t index) {
  if (!j.is_object()) throw IoError(IoErrorKind::kMalformed, fmt::format("layer {} is not an object", index));
  Layer layer;
  layer.name = j.value("name", fmt::format("layer{}", index));
  const std::string where = fmt::format("layer '{}'", layer.name);
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw IoError(IoErrorKind::kMalformed, where + ": missing 'kind'");
  }
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "conv2d") {
    const json k = j.value("kernel", json());
    if (!k.is_array() || k.size() != 2 || !k[0].is_number_unsigned() || !k[1].is_number_unsigned()) {
      throw IoError(IoErrorKind::kMalformed, where + ": 'kernel' must be [h, w]");
    }
    layer.kind = Conv2d{get_size(j, "out_channels", where), k[0].get<std::size_t>(),
                        k[1].get<std::size_t>(), j.contains("stride") ? get_size(j, "stride", where) : 1,
                        j.contains("pad") ? get_size(j, "pad", where) : 0};
  } else if (kind == "fc") {
    layer.kind = FullyConnected{get_size(j, "out_features", where)};
  } else if (kind == "relu") {
    layer.kind = Relu{};
  } else if (kind == "maxpool") {
    layer.kind = MaxPool{get_size(j, "window", where), get_size(j, "stride", where)};
  } else if (kind == "avgpool") {
    layer.kind = AvgPool{get_size(j, "window", where), get_size(j, "stride", where)};
  } else if (kind == "flatten") {
    layer.kind = Flatten{};
  } else {
    throw IoError(IoErrorKind::kUnknownLayerKind, fmt::format("{}: '{}'", where, kind));
  }

  if (j.contains("weights")) {
    const Blob blob = read_blob(dir, j["weights"], where);
    if (blob.dtype == "code32") {
      if (!j.contains("quantization") || !j["quantization"].is_object()) {
        throw IoError(IoErrorKind::kMalformed, where + ": code blob without 'quantization'");
      }
      const json& qj = j["quantization"];
      try {
        const WeightFormat fmt = parse_format(qj.at("format").get<std::string>());
        std::vector<Code> codes(blob.words.size());
        const bool fixed = std::holds_alternative<FixedFormat>(fmt);
        for (std::size_t i = 0; i < codes.size(); ++i) {
          codes[i] = fixed ? Code{static_cast<std::int32_t>(blob.words[i])} : Code{blob.words[i]};
        }
        layer.quantized = make_qtensor(blob.shape, std::move(codes), fmt, qj.at("scale").get<double>());
        layer.weights = dequantize(*layer.quantized);
      } catch (const IoError&) {
        throw;
      } catch (const std::exception& e) {
        throw IoError(IoErrorKind::kMalformed, where + ": " + e.what());
      }
    } else {
      layer.weights = blob_to_tensor(blob, where);
    }
  }
  if (j.contains("bias")) layer.bias = blob_to_tensor(read_blob(dir, j["bias"], where), where);
  return layer;
}

}  // namespace

// ---------------------------------------------------------------------------
// Models

void save_model(const Model& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(IoErrorKind::kIo, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  json manifest{{"format", kManifestFormat},
                {"version", kManifestVersion},
                {"input_shape", model.input_shape()},
                {"layers", json::array()}};
  for (const Layer& layer : model.layers()) manifest["layers"].push_back(layer_to_json(layer, dir));
  const std::string text = manifest.dump(2) + "\n";
  write_file(dir / kManifestFile, std::as_bytes(std::span(text.data(), text.size())));
}

Model load_model(const fs::path& dir) {
  const fs::path path = dir / kManifestFile;
  if (!fs::is_regular_file(path)) throw IoError(IoErrorKind::kIo, "no manifest at " + path.string());
  const std::vector<std::byte> bytes = read_file(path);
  json manifest = json::parse(reinterpret_cast<const char*>(bytes.data()),
                              reinterpret_cast<const char*>(bytes.data()) + bytes.size(), nullptr,
                              false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw IoError(IoErrorKind::kMalformed, path.string() + " is not a JSON object");
  }
  if (manifest.value("format", std::string()) != kManifestFormat) {
    throw IoError(IoErrorKind::kBadMagic, fmt::format("{}: format is not '{}'", path.string(), kManifestFormat));
  }
  if (!manifest.contains("version") || !manifest["version"].is_number_integer() ||
      manifest["version"].get<int>() != kManifestVersion) {
    throw IoError(IoErrorKind::kBadVersion,
                  fmt::format("{}: expected version {}", path.string(), kManifestVersion));
  }
  try {
    const Shape input = parse_shape(manifest.value("input_shape", json()), "input_shape");
    const json layers_json = manifest.value("layers", json());
    if (!layers_json.is_array()) throw IoError(IoErrorKind::kMalformed, "'layers' must be an array");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i < layers_json.size(); ++i) {
      layers.push_back(layer_from_json(layers_json[i], dir, i));
    }
    return Model(input, std::move(layers));
  } catch (const ShapeError& e) {
    throw IoError(IoErrorKind::kShapeMismatch, e.what());
  } catch (const json::exception& e) {
    throw IoError(IoErrorKind::kMalformed, fmt::format("{}: {}", path.string(), e.what()));
  }
}

Model quantize_model(const Model& model, const WeightFormat& fmt, const RoundingMode& mode) {
  std::vector<Layer> layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Layer& layer = layers[i];
    if (!layer.has_weights()) continue;
    RoundingMode m = mode;
    m.seed = derive_seed(mode.seed, i);
    layer.quantized = quantize_tensor(*layer.weights, fmt, m);
    layer.weights = dequantize(*layer.quantized);
  }
  return Model(model.input_shape(), std::move(layers));
}

// ---------------------------------------------------------------------------
// Datasets

LabeledSet::LabeledSet(Shape sample_shape, std::size_t class_count, std::vector<Tensor> samples,
                       std::vector<std::uint32_t> labels)
    : sample_shape_(std::move(sample_shape)),
      class_count_(class_count),
      samples_(std::move(samples)),
      labels_(std::move(labels)) {
  element_count(sample_shape_);
  if (class_count_ < 1) throw ShapeError("dataset needs at least one class");
  if (samples_.size() != labels_.size()) {
    throw ShapeError(fmt::format("{} samples but {} labels", samples_.size(), labels_.size()));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].shape() != sample_shape_) {
      throw ShapeError(fmt::format("sample {} has shape {}, expected {}", i,
                                   to_string(samples_[i].shape()), to_string(sample_shape_)));
    }
    if (labels_[i] >= class_count_) {
      throw ShapeError(fmt::format("label {} of sample {} is not below class count {}", labels_[i], i,
                                   class_count_));
    }
  }
}

std::vector<std::byte> encode_dataset(const LabeledSet& set) {
  std::vector<std::byte> out;
  const std::size_t per_sample = element_count(set.sample_shape());
  out.reserve(16 + 4 * set.sample_shape().size() + 4 * set.size() * (per_sample + 1));
  for (const char c : kDatasetMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, to_u32(set.size(), "sample count"));
  put_u32(out, to_u32(set.sample_shape().size(), "rank"));
  for (const std::size_t d : set.sample_shape()) put_u32(out, to_u32(d, "dimension"));
  put_u32(out, to_u32(set.class_count(), "class count"));
  for (const Tensor& s : set.samples()) {
    for (const double v : s.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  for (const std::uint32_t label : set.labels()) put_u32(out, label);
  return out;
}

LabeledSet decode_dataset(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kDatasetMagic, 4) != 0) {
    throw IoError(IoErrorKind::kBadMagic, "dataset does not start with QDS1");
  }
  std::size_t pos = 4;
  const auto next = [&](const char* what) {
    if (pos + 4 > bytes.size()) {
      throw IoError(IoErrorKind::kMalformed, fmt::format("dataset truncated while reading {}", what));
    }
    const std::uint32_t v = get_u32(bytes, pos);
    pos += 4;
    return v;
  };
  const std::uint32_t count = next("sample count");
  const std::uint32_t rank = next("rank");
  if (rank == 0 || rank > 8) throw IoError(IoErrorKind::kMalformed, fmt::format("dataset rank {}", rank));
  Shape shape;
  std::size_t per_sample = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = next("dimension");
    if (d == 0) throw IoError(IoErrorKind::kMalformed, "dataset dimension is zero");
    shape.push_back(d);
    per_sample *= d;
  }
  const std::uint32_t classes = next("class count");
  const std::size_t expected = pos + 4 * static_cast<std::size_t>(count) * (per_sample + 1);
  if (bytes.size() != expected) {
    throw IoError(IoErrorKind::kBlobSizeMismatch,
                  fmt::format("dataset has {} bytes, header implies {}", bytes.size(), expected));
  }
  std::vector<Tensor> samples;
  samples.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    std::vector<double> data(per_sample);
    for (double& v : data) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos)));
      pos += 4;
    }
    try {
      samples.emplace_back(shape, std::move(data));
    } catch (const Error& e) {
      throw IoError(IoErrorKind::kMalformed, fmt::format("sample {}: {}", s, e.what()));
    }
  }
  std::vector<std::uint32_t> labels(count);
  for (std::uint32_t& l : labels) {
    l = get_u32(bytes, pos);
    pos += 4;
  }
  try {
    return LabeledSet(std::move(shape), classes, std::move(samples), std::move(labels));
  } catch (const ShapeError& e) {
    throw IoError(IoErrorKind::kMalformed, e.what());
  }
}

void save_dataset(const LabeledSet& set, const fs::path& path) { write_file(path, encode_dataset(set)); }

LabeledSet load_dataset(const fs::path& path) { return decode_dataset(read_file(path)); }

// ---------------------------------------------------------------------------
// Files

std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::byte> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::kIo, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError(IoErrorKind::kIo, "cannot read " + path.string());
  }
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(IoErrorKind::kIo, "cannot write " + path.string());
}

std::string checksum_listing(const fs::path& root, const std::string& exclude) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), root).generic_string();
    if (rel != exclude) files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const std::string& rel : files) {
    out += fmt::format("{}  {}\n", hex64(fnv1a64(read_file(root / rel))), rel);
  }
  return out;
}

}  // namespace mixedquant
