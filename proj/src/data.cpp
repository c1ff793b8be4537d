#include "noiselearn/data.hpp"

#include "noiselearn/errors.hpp"

#include <array>
#include <cmath>
#include <fstream>

namespace noiselearn {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw Error(ErrorCode::Parse, path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace

Matrix Dataset::target_rows(std::span<const std::size_t> indices) const {
  if (!is_classification()) {
    Matrix out(static_cast<Eigen::Index>(indices.size()), targets.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = targets.row(static_cast<Eigen::Index>(indices[i]));
    }
    return out;
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(class_count));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[indices[i]])) = 1.0;
  }
  return out;
}

Matrix Dataset::input_rows(std::span<const std::size_t> indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), inputs.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

void Dataset::validate() const {
  if (is_classification()) {
    if (labels.size() != size()) throw Error(ErrorCode::DimensionMismatch, name + ": label count mismatch");
    for (std::size_t l : labels) {
      if (l >= class_count) throw Error(ErrorCode::InvalidArgument, name + ": label out of range");
    }
  } else if (static_cast<std::size_t>(targets.rows()) != size()) {
    throw Error(ErrorCode::DimensionMismatch, name + ": target count mismatch");
  }
}

Dataset take_first(const Dataset& data, std::size_t cap) {
  if (cap == 0 || cap >= data.size()) return data;
  Dataset out;
  out.name = data.name;
  out.split = data.split;
  out.class_count = data.class_count;
  const auto n = static_cast<Eigen::Index>(cap);
  out.inputs = data.inputs.topRows(n);
  if (data.is_classification()) {
    out.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(cap));
  } else {
    out.targets = data.targets.topRows(n);
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t cap) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (read_be32(img, 0, images) != kIdxImages) throw Error(ErrorCode::Parse, images.string() + ": bad IDX image magic");
  if (read_be32(lab, 0, labels) != kIdxLabels) throw Error(ErrorCode::Parse, labels.string() + ": bad IDX label magic");
  const std::size_t count = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t label_count = read_be32(lab, 4, labels);
  if (count != label_count) {
    throw Error(ErrorCode::DimensionMismatch, "IDX image count " + std::to_string(count) + " differs from label count " +
                                      std::to_string(label_count));
  }
  const std::size_t dim = rows * cols;
  if (img.size() < 16 + count * dim) throw Error(ErrorCode::Parse, images.string() + ": truncated image data");
  if (lab.size() < 8 + count) throw Error(ErrorCode::Parse, labels.string() + ": truncated label data");

  const std::size_t n = cap == 0 ? count : std::min(cap, count);
  Dataset data;
  data.name = "idx";
  data.class_count = 10;
  data.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  data.labels.resize(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* px = img.data() + 16 + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      data.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    }
    data.labels[i] = lab[8 + i];
    max_label = std::max(max_label, data.labels[i]);
  }
  if (max_label >= data.class_count) data.class_count = max_label + 1;
  return data;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& data,
               std::size_t rows, std::size_t cols) {
  if (rows * cols != data.input_dim()) throw Error(ErrorCode::DimensionMismatch, "write_idx: rows*cols != input dim");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw Error(ErrorCode::Io, "write_idx: cannot open output files");
  write_be32(img, kIdxImages);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  write_be32(lab, kIdxLabels);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.input_dim(); ++j) {
      const double v = data.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    lab.put(static_cast<char>(static_cast<unsigned char>(data.labels.at(i))));
  }
  if (!img || !lab) throw Error(ErrorCode::Io, "write_idx: write failed");
}

Dataset load_cifar(std::span<const std::filesystem::path> batches, int classes, std::size_t cap) {
  if (classes != 10 && classes != 100) throw Error(ErrorCode::InvalidArgument, "load_cifar: classes must be 10 or 100");
  if (batches.empty()) throw Error(ErrorCode::EmptyInput, "load_cifar: no batch files");
  const std::size_t label_bytes = classes == 10 ? 1 : 2;
  const std::size_t record = label_bytes + kCifarDim;

  std::vector<std::vector<unsigned char>> files;
  std::size_t total = 0;
  for (const auto& path : batches) {
    auto bytes = read_file(path);
    if (bytes.empty()) throw Error(ErrorCode::Parse, path.string() + ": empty CIFAR batch");
    if (bytes.size() % record != 0) {
      throw Error(ErrorCode::Parse, path.string() + ": size is not a multiple of the " + std::to_string(record) +
                                        "-byte record");
    }
    total += bytes.size() / record;
    files.push_back(std::move(bytes));
  }
  const std::size_t n = cap == 0 ? total : std::min(cap, total);
  Dataset data;
  data.name = classes == 10 ? "cifar10" : "cifar100";
  data.class_count = static_cast<std::size_t>(classes);
  data.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kCifarDim));
  data.labels.reserve(n);
  std::size_t row = 0;
  for (const auto& bytes : files) {
    for (std::size_t off = 0; off < bytes.size() && row < n; off += record, ++row) {
      const std::size_t label = bytes[off + label_bytes - 1];
      if (label >= data.class_count) throw Error(ErrorCode::Parse, "CIFAR label out of range");
      data.labels.push_back(label);
      for (std::size_t j = 0; j < kCifarDim; ++j) {
        data.inputs(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = bytes[off + label_bytes + j] / 255.0;
      }
    }
  }
  return data;
}

Dataset load_mnist_dir(const std::filesystem::path& dir, Split split, std::size_t cap) {
  const std::string prefix = split == Split::train ? "train" : "t10k";
  Dataset d = load_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), cap);
  d.name = "mnist";
  d.split = split;
  return d;
}

Dataset load_cifar_dir(const std::filesystem::path& dir, int classes, Split split, std::size_t cap) {
  std::vector<std::filesystem::path> files;
  if (classes == 10) {
    if (split == Split::train) {
      for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
      files.push_back(dir / "test_batch.bin");
    }
  } else {
    files.push_back(dir / (split == Split::train ? "train.bin" : "test.bin"));
  }
  Dataset d = load_cifar(files, classes, cap);
  d.split = split;
  return d;
}

void normalize_channels(Dataset& data, const Dataset& reference) {
  if (data.input_dim() != kCifarDim || reference.input_dim() != kCifarDim) {
    throw Error(ErrorCode::DimensionMismatch, "normalize_channels: expects 32x32x3 images");
  }
  constexpr auto plane = static_cast<Eigen::Index>(kCifarSide * kCifarSide);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const auto ref = reference.inputs.middleCols(c * plane, plane);
    const double mean = ref.mean();
    const double sd = std::sqrt((ref.array() - mean).square().mean());
    if (!(sd > 0)) throw Error(ErrorCode::ZeroVariance, "normalize_channels: constant channel");
    auto block = data.inputs.middleCols(c * plane, plane);
    block.array() = (block.array() - mean) / sd;
  }
}

Vector crop_flip(const Vector& image, bool flip, std::size_t dx, std::size_t dy, std::size_t pad) {
  if (static_cast<std::size_t>(image.size()) != kCifarDim) {
    throw Error(ErrorCode::DimensionMismatch, "augment: expected a 3072-dim 32x32x3 image");
  }
  if (dx > 2 * pad || dy > 2 * pad) throw Error(ErrorCode::InvalidArgument, "augment: crop offset outside canvas");
  const auto side = static_cast<std::ptrdiff_t>(kCifarSide);
  Vector out = Vector::Zero(image.size());
  for (std::ptrdiff_t c = 0; c < 3; ++c) {
    for (std::ptrdiff_t y = 0; y < side; ++y) {
      const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(dy) - static_cast<std::ptrdiff_t>(pad);
      if (sy < 0 || sy >= side) continue;
      for (std::ptrdiff_t x = 0; x < side; ++x) {
        std::ptrdiff_t sx = x + static_cast<std::ptrdiff_t>(dx) - static_cast<std::ptrdiff_t>(pad);
        if (sx < 0 || sx >= side) continue;
        if (flip) sx = side - 1 - sx;
        out[c * side * side + y * side + x] = image[c * side * side + sy * side + sx];
      }
    }
  }
  return out;
}

Vector augment(const Vector& image, Rng& rng) {
  constexpr std::size_t pad = 4;
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
  const std::size_t dx = offset(rng);
  const std::size_t dy = offset(rng);
  return crop_flip(image, flip, dx, dy, pad);
}

TeacherTask make_teacher_task(std::uint64_t seed, std::size_t count) {
  constexpr std::array<std::size_t, 4> widths{2, 2, 2, 1};
  Rng weight_rng = make_rng(seed, "teacher-weights");
  InitOptions options;
  options.hidden = Activation::leaky_relu(0.01);
  options.output = Activation::linear();
  TeacherTask task;
  task.teacher = init_weights(widths, options, weight_rng);

  Rng input_rng = make_rng(seed, "teacher-inputs");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& s = task.samples;
  s.name = "teacher";
  s.inputs.resize(static_cast<Eigen::Index>(count), 2);
  for (Eigen::Index i = 0; i < s.inputs.size(); ++i) s.inputs.data()[i] = normal(input_rng);
  s.targets.resize(static_cast<Eigen::Index>(count), 1);
  for (Eigen::Index i = 0; i < s.inputs.rows(); ++i) {
    const Vector x = s.inputs.row(i).transpose();
    s.targets.row(i) = forward_clean(task.teacher, x).output().transpose();
  }
  return task;
}

}  // namespace noiselearn
