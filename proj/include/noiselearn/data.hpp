#pragma once

#include "noiselearn/network.hpp"
#include "noiselearn/numerics.hpp"
#include "noiselearn/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace noiselearn {

enum class Split { train, test };

/// Samples are the rows of `inputs`. Classification sets fill `labels`;
/// regression sets fill `targets` instead.
struct Dataset {
  std::string name;
  Split split = Split::train;
  Matrix inputs;
  std::vector<std::size_t> labels;
  Matrix targets;
  std::size_t class_count = 0;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
  bool is_classification() const { return class_count > 0; }

  /// One-hot rows for classification sets, `targets` otherwise.
  Matrix target_rows(std::span<const std::size_t> indices) const;
  Matrix input_rows(std::span<const std::size_t> indices) const;

  void validate() const;
};

/// Keeps the first `cap` samples (cap == 0 keeps everything).
Dataset take_first(const Dataset& data, std::size_t cap);

/// Reads an IDX image file (magic 0x00000803) and its label file
/// (0x00000801). Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t cap = 0);

/// Writes 8-bit IDX image/label files; inputs are expected in [0, 1].
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& data,
               std::size_t rows, std::size_t cols);

/// Reads CIFAR binary batches. CIFAR-10 records are 1 label byte + 3072
/// pixel bytes; CIFAR-100 records carry a coarse and a fine label byte and
/// the fine label is used.
Dataset load_cifar(std::span<const std::filesystem::path> batches, int classes, std::size_t cap = 0);

/// Locates the standard file names below `dir` for the given split.
Dataset load_mnist_dir(const std::filesystem::path& dir, Split split, std::size_t cap = 0);
Dataset load_cifar_dir(const std::filesystem::path& dir, int classes, Split split, std::size_t cap = 0);

/// Subtracts the per-channel mean and divides by the per-channel standard
/// deviation of `reference` (channel-major 32x32x3 layout).
void normalize_channels(Dataset& data, const Dataset& reference);

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarDim = 3 * kCifarSide * kCifarSide;

/// Deterministic flip/crop of a channel-major 32x32x3 image against a
/// zero-padded canvas. Offsets are in [0, 2 * pad]; (pad, pad) is identity.
Vector crop_flip(const Vector& image, bool flip, std::size_t dx, std::size_t dy, std::size_t pad = 4);

/// Random horizontal flip (p = 0.5) and random 4-pixel padded crop.
Vector augment(const Vector& image, Rng& rng);

/// Regression task generated by a fixed random 2-2-2-1 network.
struct TeacherTask {
  NetworkState teacher;
  Dataset samples;
};

TeacherTask make_teacher_task(std::uint64_t seed, std::size_t count = 100);

}  // namespace noiselearn
