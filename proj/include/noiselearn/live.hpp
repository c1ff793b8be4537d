#pragma once

#include "noiselearn/noise.hpp"
#include "noiselearn/numerics.hpp"
#include "noiselearn/rng.hpp"

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace noiselearn {

struct Reading {
  double time = 0;   // [s] on the transport clock
  double volts = 0;
};

/// A source of timestamped voltage readings with its own notion of time.
class SerialTransport {
 public:
  virtual ~SerialTransport() = default;

  virtual bool is_open() const = 0;
  /// Everything that has arrived since the previous call. Throws
  /// TransportClosed when the channel is gone.
  virtual std::vector<Reading> read_available() = 0;
  virtual double now() const = 0;
  /// Blocks (or advances a simulated clock) for at least `seconds`.
  virtual void wait(double seconds) = 0;
};

/// Conversion settings for devices that send raw ADC counts. The ADC sees
/// the junction side of a divider R_fixed -- R_mtj across the supply.
struct AdcFraming {
  int bits = 14;
  double supply_volts = 3.3;
  double fixed_ohms = 100e3;
};

double counts_to_volts(std::uint16_t counts, const AdcFraming& adc);
/// Inverts the divider: R_mtj = R_fixed * V / (V_supply - V).
double volts_to_mtj_ohms(double volts, const AdcFraming& adc);
/// Uniform quantization to 2^bits levels over [0, supply].
double quantize(double volts, const AdcFraming& adc);

/// Deterministic simulated device: emits one reading per 1/rate seconds of
/// simulated time, drawn from any noise spec.
class MockTransport : public SerialTransport {
 public:
  MockTransport(NoiseSpec spec, std::uint64_t seed, double rate_hz = 1000.0,
                std::optional<AdcFraming> quantization = std::nullopt);

  bool is_open() const override { return open_; }
  std::vector<Reading> read_available() override;
  double now() const override { return clock_; }
  void wait(double seconds) override;

  void advance(double seconds) { wait(seconds); }
  void close() { open_ = false; }

 private:
  NoiseSource source_;
  double rate_hz_;
  std::optional<AdcFraming> quantization_;
  double clock_ = 0;
  std::uint64_t emitted_ = 0;
  bool open_ = true;
};

enum class FrameMode { text, adc16be };

/// POSIX serial device (or pty). Text frames are newline-terminated decimal
/// volts; binary frames are 2-byte big-endian ADC counts.
class SerialPortTransport : public SerialTransport {
 public:
  SerialPortTransport(const std::string& device, int baud, FrameMode mode, AdcFraming adc = {});
  ~SerialPortTransport() override;
  SerialPortTransport(const SerialPortTransport&) = delete;
  SerialPortTransport& operator=(const SerialPortTransport&) = delete;

  bool is_open() const override { return fd_ >= 0; }
  std::vector<Reading> read_available() override;
  double now() const override;
  void wait(double seconds) override;

 private:
  int fd_ = -1;
  FrameMode mode_;
  AdcFraming adc_;
  std::string pending_;
};

/// Fixed-capacity FIFO of the most recent readings. All access is
/// serialized so a snapshot never observes a partial update.
class LiveBuffer {
 public:
  explicit LiveBuffer(std::size_t capacity = 200);

  void push(double volts);
  void push(const std::vector<Reading>& readings);
  std::size_t capacity() const { return capacity_; }
  std::size_t fill() const;
  bool warm() const { return fill() == capacity_; }
  std::vector<double> snapshot() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::deque<double> values_;
};

/// Drains the transport into the buffer; returns the number ingested.
std::size_t poll(SerialTransport& transport, LiveBuffer& buffer);

/// Waits `min_wait` on the transport clock, then returns a uniformly
/// shuffled copy of the buffer. The buffer itself is left untouched.
Vector sample_buffer(const LiveBuffer& buffer, SerialTransport& transport, Rng& rng, double min_wait = 1e-3);

/// Noise feed used by NoiseSource for the live spec. Without a background
/// ingestor the feed polls the transport itself after each wait. Values are
/// centered on the mean of the returned snapshot.
class LiveNoiseFeed : public LiveFeed {
 public:
  LiveNoiseFeed(std::shared_ptr<SerialTransport> transport, std::size_t buffer_size = 200, double min_wait = 1e-3);
  ~LiveNoiseFeed() override;

  /// Fills the buffer, waiting on the transport as needed.
  void warm_up(double timeout_seconds = 10.0);

  /// Starts a thread that polls the transport continuously.
  void start_ingestion();
  void stop_ingestion();

  Vector draw(Rng& rng) override;

  const LiveBuffer& buffer() const { return buffer_; }
  std::uint64_t draws() const { return draws_; }

 private:
  std::shared_ptr<SerialTransport> transport_;
  LiveBuffer buffer_;
  double min_wait_;
  std::atomic<bool> ingesting_{false};
  std::thread ingestor_;
  std::mutex transport_mutex_;
  std::uint64_t draws_ = 0;
};

}  // namespace noiselearn
