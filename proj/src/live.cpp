#include "noiselearn/live.hpp"

#include "noiselearn/errors.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <termios.h>
#include <unistd.h>

namespace noiselearn {

namespace {

speed_t baud_constant(int baud) {
  switch (baud) {
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 921600: return B921600;
    default: throw Error(ErrorCode::InvalidArgument, "unsupported baud rate " + std::to_string(baud));
  }
}

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

Vector shuffled_snapshot(const LiveBuffer& buffer, Rng& rng) {
  std::vector<double> values = buffer.snapshot();
  if (values.size() < buffer.capacity()) {
    throw Error(ErrorCode::ColdBuffer, "live buffer holds " + std::to_string(values.size()) + " of " +
                                           std::to_string(buffer.capacity()) + " values; warm it up first");
  }
  std::shuffle(values.begin(), values.end(), rng);
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

double counts_to_volts(std::uint16_t counts, const AdcFraming& adc) {
  const double full_scale = std::ldexp(1.0, adc.bits) - 1.0;
  return std::min(static_cast<double>(counts), full_scale) / full_scale * adc.supply_volts;
}

double volts_to_mtj_ohms(double volts, const AdcFraming& adc) {
  if (!(volts >= 0 && volts < adc.supply_volts)) {
    throw Error(ErrorCode::InvalidArgument, "volts_to_mtj_ohms: reading outside [0, supply)");
  }
  return adc.fixed_ohms * volts / (adc.supply_volts - volts);
}

double quantize(double volts, const AdcFraming& adc) {
  const double full_scale = std::ldexp(1.0, adc.bits) - 1.0;
  const double step = adc.supply_volts / full_scale;
  return std::clamp(std::round(volts / step), 0.0, full_scale) * step;
}

MockTransport::MockTransport(NoiseSpec spec, std::uint64_t seed, double rate_hz, std::optional<AdcFraming> quantization)
    : source_(std::move(spec), derive_seed(seed, "mock-transport")), rate_hz_(rate_hz),
      quantization_(quantization) {
  if (!(rate_hz_ > 0)) throw Error(ErrorCode::InvalidArgument, "mock transport rate must be positive");
}

std::vector<Reading> MockTransport::read_available() {
  if (!open_) throw Error(ErrorCode::TransportClosed, "mock transport closed");
  const auto due = static_cast<std::uint64_t>(std::floor(clock_ * rate_hz_ + 1e-9)) + 1;
  std::vector<Reading> out;
  if (due <= emitted_) return out;
  const Vector values = source_.sample(static_cast<std::size_t>(due - emitted_));
  out.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (quantization_) v = quantize(v, *quantization_);
    out.push_back({static_cast<double>(emitted_) / rate_hz_, v});
    ++emitted_;
  }
  return out;
}

void MockTransport::wait(double seconds) {
  if (seconds > 0) clock_ += seconds;
}

SerialPortTransport::SerialPortTransport(const std::string& device, int baud, FrameMode mode, AdcFraming adc)
    : mode_(mode), adc_(adc) {
  const speed_t speed = baud_constant(baud);
  fd_ = ::open(device.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw Error(ErrorCode::Io, "cannot open " + device + ": " + std::strerror(errno));
  termios tio{};
  if (::tcgetattr(fd_, &tio) == 0) {
    ::cfmakeraw(&tio);
    ::cfsetispeed(&tio, speed);
    ::cfsetospeed(&tio, speed);
    tio.c_cc[VMIN] = 0;
    tio.c_cc[VTIME] = 0;
    if (::tcsetattr(fd_, TCSANOW, &tio) != 0) {
      const int err = errno;
      ::close(fd_);
      fd_ = -1;
      throw Error(ErrorCode::Io, "cannot configure " + device + ": " + std::strerror(err));
    }
  }
  // Not a tty (e.g. a FIFO): read it as a plain byte stream.
}

SerialPortTransport::~SerialPortTransport() {
  if (fd_ >= 0) ::close(fd_);
}

double SerialPortTransport::now() const { return steady_seconds(); }

void SerialPortTransport::wait(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

std::vector<Reading> SerialPortTransport::read_available() {
  if (fd_ < 0) throw Error(ErrorCode::TransportClosed, "serial port closed");
  char chunk[4096];
  std::string closed_reason;
  for (;;) {
    const ssize_t got = ::read(fd_, chunk, sizeof chunk);
    if (got > 0) {
      pending_.append(chunk, static_cast<std::size_t>(got));
      continue;
    }
    if (got < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
    if (got < 0 && errno == EINTR) continue;
    closed_reason = got == 0 ? std::string("serial port reached end of stream") : std::string(std::strerror(errno));
    break;
  }

  const double t = now();
  std::vector<Reading> out;
  if (mode_ == FrameMode::text) {
    std::size_t start = 0;
    for (std::size_t nl; (nl = pending_.find('\n', start)) != std::string::npos; start = nl + 1) {
      const std::string line = pending_.substr(start, nl - start);
      char* end = nullptr;
      const double v = std::strtod(line.c_str(), &end);
      // Skip garbled or partial frames (common right after the port opens).
      if (end != line.c_str() && std::isfinite(v)) out.push_back({t, v});
    }
    pending_.erase(0, start);
  } else {
    std::size_t i = 0;
    for (; i + 1 < pending_.size(); i += 2) {
      const auto hi = static_cast<unsigned char>(pending_[i]);
      const auto lo = static_cast<unsigned char>(pending_[i + 1]);
      out.push_back({t, counts_to_volts(static_cast<std::uint16_t>((hi << 8) | lo), adc_)});
    }
    pending_.erase(0, i);
  }
  if (!closed_reason.empty()) {
    // Hand out what arrived before the stream ended; the next call throws.
    ::close(fd_);
    fd_ = -1;
    if (out.empty()) throw Error(ErrorCode::TransportClosed, closed_reason);
  }
  return out;
}

LiveBuffer::LiveBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::InvalidArgument, "live buffer capacity must be positive");
}

void LiveBuffer::push(double volts) {
  std::lock_guard lock(mutex_);
  values_.push_back(volts);
  if (values_.size() > capacity_) values_.pop_front();
}

void LiveBuffer::push(const std::vector<Reading>& readings) {
  std::lock_guard lock(mutex_);
  for (const auto& r : readings) {
    values_.push_back(r.volts);
    if (values_.size() > capacity_) values_.pop_front();
  }
}

std::size_t LiveBuffer::fill() const {
  std::lock_guard lock(mutex_);
  return values_.size();
}

std::vector<double> LiveBuffer::snapshot() const {
  std::lock_guard lock(mutex_);
  return {values_.begin(), values_.end()};
}

std::size_t poll(SerialTransport& transport, LiveBuffer& buffer) {
  if (!transport.is_open()) throw Error(ErrorCode::TransportClosed, "poll: transport is not open");
  const auto readings = transport.read_available();
  buffer.push(readings);
  return readings.size();
}

Vector sample_buffer(const LiveBuffer& buffer, SerialTransport& transport, Rng& rng, double min_wait) {
  if (!buffer.warm()) {
    throw Error(ErrorCode::ColdBuffer, "live buffer is not full; poll until warm before sampling");
  }
  transport.wait(min_wait);
  return shuffled_snapshot(buffer, rng);
}

LiveNoiseFeed::LiveNoiseFeed(std::shared_ptr<SerialTransport> transport, std::size_t buffer_size, double min_wait)
    : transport_(std::move(transport)), buffer_(buffer_size), min_wait_(min_wait) {
  if (!transport_) throw Error(ErrorCode::InvalidArgument, "live feed needs a transport");
}

LiveNoiseFeed::~LiveNoiseFeed() { stop_ingestion(); }

void LiveNoiseFeed::warm_up(double timeout_seconds) {
  std::lock_guard lock(transport_mutex_);
  const double deadline = transport_->now() + timeout_seconds;
  poll(*transport_, buffer_);
  while (!buffer_.warm()) {
    if (transport_->now() > deadline) {
      throw Error(ErrorCode::ColdBuffer, "live buffer did not fill within the warm-up timeout");
    }
    transport_->wait(std::max(min_wait_, 1e-3));
    poll(*transport_, buffer_);
  }
}

void LiveNoiseFeed::start_ingestion() {
  if (ingesting_.exchange(true)) return;
  ingestor_ = std::thread([this] {
    while (ingesting_.load()) {
      {
        std::lock_guard lock(transport_mutex_);
        try {
          poll(*transport_, buffer_);
        } catch (const Error&) {
          ingesting_ = false;
          return;
        }
      }
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  });
}

void LiveNoiseFeed::stop_ingestion() {
  ingesting_ = false;
  if (ingestor_.joinable()) ingestor_.join();
}

Vector LiveNoiseFeed::draw(Rng& rng) {
  if (ingesting_.load()) {
    transport_->wait(min_wait_);
  } else {
    std::lock_guard lock(transport_mutex_);
    transport_->wait(min_wait_);
    poll(*transport_, buffer_);
  }
  Vector values = shuffled_snapshot(buffer_, rng);
  values.array() -= values.mean();
  ++draws_;
  return values;
}

}  // namespace noiselearn
