#include "doctest.h"
#include "test_util.hpp"

#include "noiselearn/data.hpp"
#include "noiselearn/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <string>
#include <vector>

using namespace noiselearn;

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Hand-written IDX pair: `count` 2x3 images with pixel (i, j) = 10*i + j + n.
void write_small_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::uint32_t count,
                     std::uint32_t label_count, std::uint32_t image_magic = 0x803) {
  std::ofstream im(images, std::ios::binary);
  put_be32(im, image_magic);
  put_be32(im, count);
  put_be32(im, 2);
  put_be32(im, 3);
  for (std::uint32_t n = 0; n < count; ++n) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 3; ++j) im.put(static_cast<char>(n == 0 && i == 0 && j == 0 ? 255 : 10 * i + j + n));
    }
  }
  std::ofstream lb(labels, std::ios::binary);
  put_be32(lb, 0x801);
  put_be32(lb, label_count);
  for (std::uint32_t n = 0; n < label_count; ++n) lb.put(static_cast<char>(n % 10));
}

void write_cifar(const std::filesystem::path& path, int label_bytes, int records, int classes) {
  std::ofstream out(path, std::ios::binary);
  for (int r = 0; r < records; ++r) {
    if (label_bytes == 2) out.put(static_cast<char>(r % 20));
    out.put(static_cast<char>((r * 7) % classes));
    for (std::size_t p = 0; p < kCifarDim; ++p) out.put(static_cast<char>((p + r) % 256));
  }
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("idx parsing against hand-written files") {
  testutil::TempDir dir;
  write_small_idx(dir / "img", dir / "lbl", 4, 4);
  const Dataset d = load_idx(dir / "img", dir / "lbl");
  REQUIRE(d.size() == 4);
  CHECK(d.input_dim() == 6);
  CHECK(d.inputs(0, 0) == 1.0);
  CHECK(d.inputs(1, 4) == doctest::Approx((10 + 1 + 1) / 255.0));
  CHECK(d.labels == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(d.class_count == 10);
  CHECK(d.inputs.minCoeff() >= 0.0);
  CHECK(d.inputs.maxCoeff() <= 1.0);
  CHECK(load_idx(dir / "img", dir / "lbl", 2).size() == 2);
}

TEST_CASE("idx error paths") {
  testutil::TempDir dir;
  write_small_idx(dir / "img", dir / "lbl", 4, 3);
  CHECK(code_of([&] { load_idx(dir / "img", dir / "lbl"); }) == ErrorCode::DimensionMismatch);

  write_small_idx(dir / "bad", dir / "lbl2", 4, 4, 0x804);
  CHECK(code_of([&] { load_idx(dir / "bad", dir / "lbl2"); }) == ErrorCode::Parse);

  write_small_idx(dir / "img3", dir / "lbl3", 4, 4);
  std::filesystem::resize_file(dir / "img3", std::filesystem::file_size(dir / "img3") - 5);
  CHECK(code_of([&] { load_idx(dir / "img3", dir / "lbl3"); }) == ErrorCode::Parse);

  CHECK(code_of([&] { load_idx(dir / "nope", dir / "lbl3"); }) == ErrorCode::Io);
}

TEST_CASE("idx write then read is bitwise") {
  testutil::TempDir dir;
  Dataset d;
  d.inputs.resize(3, 4);
  for (Eigen::Index i = 0; i < d.inputs.size(); ++i) d.inputs.data()[i] = double((i * 37) % 256) / 255.0;
  d.labels = {4, 0, 9};
  d.class_count = 10;
  write_idx(dir / "i", dir / "l", d, 2, 2);
  const Dataset back = load_idx(dir / "i", dir / "l");
  CHECK(back.inputs == d.inputs);
  CHECK(back.labels == d.labels);
}

TEST_CASE("real MNIST files when present") {
  const std::filesystem::path dir = NOISELEARN_MNIST_DIR;
  if (!std::filesystem::exists(dir / "train-images-idx3-ubyte")) {
    MESSAGE("MNIST not found, skipping");
    return;
  }
  const Dataset train = load_mnist_dir(dir, Split::train);
  CHECK(train.size() == 60000);
  CHECK(train.input_dim() == 784);
  CHECK(*std::max_element(train.labels.begin(), train.labels.end()) == 9);
  CHECK(train.inputs.maxCoeff() == 1.0);
  CHECK(load_mnist_dir(dir, Split::test, 500).size() == 500);
}

TEST_CASE("cifar binary batches") {
  testutil::TempDir dir;
  write_cifar(dir / "c10.bin", 1, 5, 10);
  const std::vector<std::filesystem::path> p10{dir / "c10.bin", dir / "c10.bin"};
  const Dataset d = load_cifar(p10, 10);
  CHECK(d.size() == 10);
  CHECK(d.input_dim() == 3072);
  CHECK(d.labels[1] == 7);
  CHECK(d.inputs(2, 3) == doctest::Approx(5 / 255.0));

  write_cifar(dir / "c100.bin", 2, 4, 100);
  const std::vector<std::filesystem::path> p100{dir / "c100.bin"};
  const Dataset f = load_cifar(p100, 100);
  CHECK(f.class_count == 100);
  CHECK(f.labels == std::vector<std::size_t>{0, 7, 14, 21});

  std::ofstream(dir / "empty.bin").close();
  const std::vector<std::filesystem::path> empty{dir / "empty.bin"};
  CHECK(code_of([&] { load_cifar(empty, 10); }) == ErrorCode::Parse);
  std::filesystem::resize_file(dir / "c10.bin", 3073 * 2 + 100);
  CHECK(code_of([&] { load_cifar(p10, 10); }) == ErrorCode::Parse);
}

TEST_CASE("augmentation contracts") {
  Vector img(static_cast<Eigen::Index>(kCifarDim));
  for (Eigen::Index i = 0; i < img.size(); ++i) img[i] = double(i % 97) / 97.0;
  CHECK(crop_flip(img, false, 4, 4) == img);
  CHECK(crop_flip(crop_flip(img, true, 4, 4), true, 4, 4) == img);
  const Vector shifted = crop_flip(img, false, 5, 4);
  // Shifting right by one pixel: column c of the output is column c+1 of the input.
  CHECK(shifted[0] == img[1]);
  CHECK(shifted[31] == 0.0);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) CHECK(augment(img, rng).size() == static_cast<Eigen::Index>(kCifarDim));
  CHECK_THROWS_AS(augment(Vector::Zero(10), rng), Error);
}

TEST_CASE("teacher task") {
  const TeacherTask a = make_teacher_task(3);
  const TeacherTask b = make_teacher_task(3);
  CHECK(a.samples.size() == 100);
  CHECK(a.teacher.layer_widths() == std::vector<std::size_t>{2, 2, 1});
  CHECK(a.samples.inputs == b.samples.inputs);
  CHECK(a.samples.targets == b.samples.targets);
  for (Eigen::Index r = 0; r < 100; ++r) {
    const Vector x = a.samples.inputs.row(r).transpose();
    CHECK(forward_clean(a.teacher, x).output()[0] == a.samples.targets(r, 0));
  }
  CHECK(predict(a.teacher, a.samples.inputs).isApprox(a.samples.targets, 1e-12));
  CHECK(make_teacher_task(4).samples.inputs != a.samples.inputs);
}
