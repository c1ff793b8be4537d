#include "doctest.h"
#include "test_util.hpp"

#include "noiselearn/errors.hpp"
#include "noiselearn/live.hpp"
#include "noiselearn/smtj.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

using namespace noiselearn;

namespace {

std::vector<double> sorted(const Vector& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("ring buffer fills and evicts in FIFO order") {
  LiveBuffer buffer(200);
  for (int i = 0; i < 200; ++i) buffer.push(double(i));
  CHECK(buffer.fill() == 200);
  CHECK(buffer.warm());
  buffer.push(200.0);
  CHECK(buffer.fill() == 200);
  const auto snap = buffer.snapshot();
  CHECK(snap.front() == 1.0);
  CHECK(snap.back() == 200.0);
  CHECK_THROWS_AS(LiveBuffer(0), Error);
}

TEST_CASE("poll drains the mock transport") {
  MockTransport mock(HmmNoise{}, 1, 1000.0);
  LiveBuffer buffer(200);
  CHECK(poll(mock, buffer) == 1);
  CHECK(poll(mock, buffer) == 0);
  CHECK(buffer.fill() == 1);
  mock.advance(0.0995);
  CHECK(poll(mock, buffer) == 99);
  mock.advance(0.2);
  poll(mock, buffer);
  CHECK(buffer.fill() == 200);

  mock.close();
  try {
    poll(mock, buffer);
    FAIL("expected closed transport");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TransportClosed);
  }
}

TEST_CASE("sample_buffer is a non-destructive shuffle after a wait") {
  MockTransport mock(HmmNoise{}, 2, 1000.0);
  LiveBuffer buffer(200);
  Rng rng(3);
  poll(mock, buffer);
  try {
    sample_buffer(buffer, mock, rng);
    FAIL("expected cold buffer");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ColdBuffer);
  }
  mock.advance(0.25);
  poll(mock, buffer);
  const auto before = buffer.snapshot();
  const double t0 = mock.now();
  const Vector a = sample_buffer(buffer, mock, rng, 1e-3);
  CHECK(mock.now() - t0 >= 1e-3);
  CHECK(sorted(a) == sorted(before));
  CHECK(buffer.snapshot() == before);

  Rng r1(9), r2(9);
  CHECK(sample_buffer(buffer, mock, r1) == sample_buffer(buffer, mock, r2));
  CHECK(poll(mock, buffer) >= 2);
}

TEST_CASE("mock HMM stream through the buffer keeps both levels") {
  const HmmNoise spec{};
  MockTransport mock(spec, 4, 1000.0);
  LiveBuffer buffer(200);
  Rng rng(5);
  mock.advance(0.2);
  poll(mock, buffer);
  std::vector<double> all;
  all.reserve(2'000'000);
  for (int i = 0; i < 10'000; ++i) {
    const Vector v = sample_buffer(buffer, mock, rng);
    all.insert(all.end(), v.data(), v.data() + v.size());
    poll(mock, buffer);
  }
  const auto [low, high] = bimodal_modes(all);
  CHECK(std::abs(low / spec.mu2 - 1) < 0.05);
  CHECK(std::abs(high / spec.mu1 - 1) < 0.05);
}

TEST_CASE("live feed draws are centered and deterministic") {
  auto make = [] {
    auto t = std::make_shared<MockTransport>(HmmNoise{}, 6, 1000.0);
    auto feed = std::make_shared<LiveNoiseFeed>(t, 200, 1e-3);
    feed->warm_up();
    return feed;
  };
  auto a = make();
  auto b = make();
  Rng ra(1), rb(1);
  for (int i = 0; i < 20; ++i) {
    const Vector x = a->draw(ra);
    CHECK(x.size() == 200);
    CHECK(std::abs(x.mean()) < 1e-15);
    CHECK(x == b->draw(rb));
  }
  CHECK(a->draws() == 20);

  NoiseSource src(LiveNoise{200, 1e-3}, 7, 1.0, a);
  const std::vector<std::size_t> sizes{150, 100};
  const auto layers = src.layer_noise(sizes);
  CHECK(layers[0].size() == 150);
  CHECK(layers[1].size() == 100);
}

TEST_CASE("background ingestion keeps the buffer warm") {
  auto t = std::make_shared<MockTransport>(HmmNoise{}, 8, 1000.0);
  LiveNoiseFeed feed(t, 200, 1e-3);
  feed.warm_up();
  feed.start_ingestion();
  Rng rng(2);
  for (int i = 0; i < 50; ++i) CHECK(feed.draw(rng).size() == 200);
  feed.stop_ingestion();
  CHECK(feed.buffer().warm());
}

TEST_CASE("adc framing arithmetic") {
  const AdcFraming adc{};
  CHECK(counts_to_volts(0, adc) == 0.0);
  CHECK(counts_to_volts(16383, adc) == doctest::Approx(3.3));
  CHECK(counts_to_volts(8191, adc) == doctest::Approx(3.3 * 8191.0 / 16383.0));
  // A 5 kOhm junction under a 100 kOhm divider at 3.3 V.
  const double v = 3.3 * 5e3 / (5e3 + 100e3);
  CHECK(volts_to_mtj_ohms(v, adc) == doctest::Approx(5e3));
  CHECK_THROWS_AS(volts_to_mtj_ohms(3.3, adc), Error);
  const double q = quantize(0.04, adc);
  CHECK(std::abs(q - 0.04) <= 0.5 * 3.3 / 16383.0 + 1e-15);
  CHECK(std::abs(std::round(q / (3.3 / 16383.0)) - q / (3.3 / 16383.0)) < 1e-9);
}

TEST_CASE("serial port transport reads text and binary frames") {
  testutil::TempDir dir;
  const auto text = dir / "port.txt";
  std::ofstream(text) << "0.0480\n0.0362\ngarbage\n0.05";
  SerialPortTransport port(text.string(), 115200, FrameMode::text);
  const auto readings = port.read_available();
  REQUIRE(readings.size() == 2);
  CHECK(readings[0].volts == 0.0480);
  CHECK(readings[1].volts == 0.0362);
  try {
    port.read_available();
    FAIL("expected end of stream");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TransportClosed);
  }

  const auto bin = dir / "port.bin";
  {
    std::ofstream out(bin, std::ios::binary);
    const unsigned char frames[] = {0x3F, 0xFF, 0x00, 0x00, 0x20, 0x00, 0x12};
    out.write(reinterpret_cast<const char*>(frames), sizeof frames);
  }
  SerialPortTransport raw(bin.string(), 115200, FrameMode::adc16be);
  const auto r = raw.read_available();
  REQUIRE(r.size() == 3);
  CHECK(r[0].volts == doctest::Approx(3.3));
  CHECK(r[1].volts == 0.0);
  CHECK(r[2].volts == doctest::Approx(3.3 * 8192.0 / 16383.0));

  const auto fifo = dir / "fifo";
  REQUIRE(::mkfifo(fifo.c_str(), 0600) == 0);
  SerialPortTransport pipe(fifo.string(), 115200, FrameMode::text);
  CHECK(pipe.read_available().empty());
  const int w = ::open(fifo.c_str(), O_WRONLY | O_NONBLOCK);
  REQUIRE(w >= 0);
  const std::string payload = "0.1\n0.2\n";
  CHECK(::write(w, payload.data(), payload.size()) == static_cast<ssize_t>(payload.size()));
  ::close(w);
  CHECK(pipe.read_available().size() == 2);

  CHECK_THROWS_AS(SerialPortTransport((dir / "missing").string(), 115200, FrameMode::text), Error);
  CHECK_THROWS_AS(SerialPortTransport(text.string(), 1234, FrameMode::text), Error);
}
