#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bat/model.hpp"
#include "json.hpp"

namespace bat {

/// Labeled examples with features in [0,1]. Stored one example per column so
/// a batch is a contiguous block of columns.
struct Dataset {
  Matrix features;  // d x n
  std::vector<int> labels;
  int num_classes = 0;

  Eigen::Index size() const { return features.cols(); }
  int dim() const { return static_cast<int>(features.rows()); }

  /// Throws InvalidArgument when features leave [0,1], labels leave
  /// [0, num_classes) or the set is empty.
  void validate() const;

  Dataset subset(std::span<const Eigen::Index> indices) const;
  Dataset head(Eigen::Index count) const;
};

/// Reads an IDX image file (magic 2051) and label file (magic 2049).
/// Gzip-compressed files are decompressed transparently. Pixels are scaled by
/// 1/255; ten classes are assumed.
Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       std::optional<std::size_t> limit = std::nullopt);

/// Byte-level decoders behind load_mnist_idx, exposed for fixtures.
Dataset decode_mnist_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                         std::optional<std::size_t> limit = std::nullopt);

enum class SyntheticKind { kGaussBlobs, kTwoMoons };

/// Two-class toy problems. Labels alternate 0,1,0,1,... so classes are
/// balanced within one. Features are clipped into [0,1]^dim.
Dataset gen_synthetic(SyntheticKind kind, int n, std::uint64_t seed, int dim = 2);

/// Seeded random split into (train, test). `test_fraction` in [0, 1).
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  DenseNet net;
  nlohmann::json config = nlohmann::json::object();  // training config echo
  int epoch = 0;
  std::uint64_t seed = 0;
  nlohmann::json metrics = nlohmann::json::object();
};

/// JSON document; every parameter is stored as a C99 hex-float string so the
/// round trip is bit-exact.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws VersionError for an unknown version and CorruptFile for anything
/// that does not parse or has inconsistent shapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_hex_double(double v);
double decode_hex_double(const std::string& s);

}  // namespace bat
