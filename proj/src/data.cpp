#include "bat/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "bat/errors.hpp"

namespace bat {

void Dataset::validate() const {
  if (size() < 1) throw InvalidArgument("dataset is empty");
  if (static_cast<Eigen::Index>(labels.size()) != size()) {
    throw InvalidArgument("dataset label count does not match example count");
  }
  if (!features.allFinite() || (features.array() < 0.0).any() || (features.array() > 1.0).any()) {
    throw InvalidArgument("dataset features must lie in [0, 1]");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw InvalidArgument("dataset label out of range");
  }
}

Dataset Dataset::subset(std::span<const Eigen::Index> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(features.rows(), static_cast<Eigen::Index>(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    out.features.col(static_cast<Eigen::Index>(j)) = features.col(indices[j]);
    out.labels.push_back(labels[static_cast<std::size_t>(indices[j])]);
  }
  return out;
}

Dataset Dataset::head(Eigen::Index count) const {
  count = std::min(count, size());
  Dataset out;
  out.num_classes = num_classes;
  out.features = features.leftCols(count);
  out.labels.assign(labels.begin(), labels.begin() + count);
  return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::vector<std::uint8_t> read_maybe_gzipped(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + got);
  int errnum = Z_OK;
  gzerror(f, &errnum);
  gzclose(f);
  // A truncated gzip stream surfaces here; the byte-count checks downstream
  // then report it as a length error.
  if (got < 0 && errnum != Z_BUF_ERROR) throw IoError("read error in " + path.string());
  return out;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

}  // namespace

Dataset decode_mnist_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                         std::optional<std::size_t> limit) {
  if (image_bytes.size() < 4 || label_bytes.size() < 4) throw LengthError("IDX file shorter than its magic");
  if (read_be32(image_bytes, 0) != kImageMagic) {
    throw FormatError("bad image magic " + std::to_string(read_be32(image_bytes, 0)));
  }
  if (read_be32(label_bytes, 0) != kLabelMagic) {
    throw FormatError("bad label magic " + std::to_string(read_be32(label_bytes, 0)));
  }
  if (image_bytes.size() < 16) throw LengthError("truncated image header");
  if (label_bytes.size() < 8) throw LengthError("truncated label header");

  const std::size_t count = read_be32(image_bytes, 4);
  const std::size_t rows = read_be32(image_bytes, 8);
  const std::size_t cols = read_be32(image_bytes, 12);
  const std::size_t label_count = read_be32(label_bytes, 4);
  const std::size_t pixels = rows * cols;
  if (pixels == 0) throw FormatError("image has zero pixels");
  if (image_bytes.size() < 16 + count * pixels) throw LengthError("image file truncated");
  if (label_bytes.size() < 8 + label_count) throw LengthError("label file truncated");
  if (label_count != count) {
    throw ConsistencyError("image count " + std::to_string(count) + " != label count " +
                           std::to_string(label_count));
  }

  const std::size_t n = limit ? std::min(*limit, count) : count;
  if (n == 0) throw InvalidArgument("IDX: no examples selected");
  Dataset out;
  out.num_classes = 10;
  out.features.resize(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(n));
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* src = image_bytes.data() + 16 + i * pixels;
    for (std::size_t k = 0; k < pixels; ++k) {
      out.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = src[k] / 255.0;
    }
    const int label = label_bytes[8 + i];
    if (label >= out.num_classes) throw FormatError("label " + std::to_string(label) + " out of range");
    out.labels[i] = label;
  }
  return out;
}

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       std::optional<std::size_t> limit) {
  const auto images = read_maybe_gzipped(images_path);
  const auto labels = read_maybe_gzipped(labels_path);
  return decode_mnist_idx(images, labels, limit);
}

// ---------------------------------------------------------------------------
// Synthetic data

Dataset gen_synthetic(SyntheticKind kind, int n, std::uint64_t seed, int dim) {
  if (n < 2) throw InvalidArgument("gen_synthetic: need n >= 2");
  if (dim < 2) throw InvalidArgument("gen_synthetic: need dim >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset out;
  out.num_classes = 2;
  out.features.resize(dim, n);
  out.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    out.labels[static_cast<std::size_t>(i)] = label;
    auto col = out.features.col(i);
    if (kind == SyntheticKind::kGaussBlobs) {
      // Centers at 0.5 -/+ 0.15 on every axis, isotropic spread 0.1.
      const double center = label == 0 ? 0.35 : 0.65;
      for (int k = 0; k < dim; ++k) col[k] = center + 0.1 * gauss(rng);
    } else {
      const double t = std::numbers::pi * unit(rng);
      double u = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double v = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      u += 0.1 * gauss(rng);
      v += 0.1 * gauss(rng);
      // Moons span roughly [-1.2, 2.2] x [-0.8, 1.3].
      col[0] = (u + 1.2) / 3.4;
      col[1] = (v + 0.8) / 2.1;
      for (int k = 2; k < dim; ++k) col[k] = 0.5 + 0.1 * gauss(rng);
    }
  }
  out.features = out.features.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InvalidArgument("split: test_fraction in [0, 1)");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto test_n = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(order.size())));
  const std::span<const Eigen::Index> all(order);
  return {data.subset(all.subspan(test_n)), data.subset(all.first(test_n))};
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string encode_hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double decode_hex_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw CorruptFile("bad float literal '" + s + "'");
  return v;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  validate(ckpt.net);
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (int l = 0; l < ckpt.net.num_layers(); ++l) {
    const Matrix& w = ckpt.net.params.weights[static_cast<std::size_t>(l)];
    nlohmann::json wl = nlohmann::json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) wl.push_back(encode_hex_double(w(r, c)));
    }
    weights.push_back(std::move(wl));
    nlohmann::json bl = nlohmann::json::array();
    for (double b : ckpt.net.params.biases[static_cast<std::size_t>(l)]) bl.push_back(encode_hex_double(b));
    biases.push_back(std::move(bl));
  }
  return {
      {"format", "bat-checkpoint"},
      {"version", kCheckpointVersion},
      {"layer_dims", ckpt.net.layer_dims},
      {"epoch", ckpt.epoch},
      {"seed", ckpt.seed},
      {"config", ckpt.config},
      {"metrics", ckpt.metrics},
      {"weights", std::move(weights)},
      {"biases", std::move(biases)},
  };
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw CorruptFile("checkpoint is not a JSON object");
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw CorruptFile("checkpoint has no integer version");
  }
  if (doc["version"].get<int>() != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + doc["version"].dump());
  }
  try {
    if (doc.at("format").get<std::string>() != "bat-checkpoint") throw CorruptFile("not a bat checkpoint");
    Checkpoint ckpt;
    ckpt.net.layer_dims = doc.at("layer_dims").get<std::vector<int>>();
    ckpt.epoch = doc.at("epoch").get<int>();
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.config = doc.at("config");
    ckpt.metrics = doc.at("metrics");
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    const auto& dims = ckpt.net.layer_dims;
    if (dims.size() < 2 || weights.size() + 1 != dims.size() || biases.size() + 1 != dims.size()) {
      throw CorruptFile("checkpoint layer count mismatch");
    }
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const auto rows = dims[l + 1];
      const auto cols = dims[l];
      if (rows < 1 || cols < 1 || weights[l].size() != static_cast<std::size_t>(rows) * cols ||
          biases[l].size() != static_cast<std::size_t>(rows)) {
        throw CorruptFile("checkpoint layer " + std::to_string(l) + " has the wrong parameter count");
      }
      Matrix w(rows, cols);
      std::size_t k = 0;
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) w(r, c) = decode_hex_double(weights[l][k++].get<std::string>());
      }
      Vector b(rows);
      for (int r = 0; r < rows; ++r) b[r] = decode_hex_double(biases[l][static_cast<std::size_t>(r)].get<std::string>());
      ckpt.net.params.weights.push_back(std::move(w));
      ckpt.net.params.biases.push_back(std::move(b));
    }
    validate(ckpt.net);
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("checkpoint field error: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptFile(std::string("checkpoint parameters invalid: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptFile(std::string("checkpoint does not parse: ") + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace bat
