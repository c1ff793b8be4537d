#pragma once

#include "noiselearn/smtj.hpp"

#include <filesystem>
#include <string>

namespace noiselearn {

// A trace is stored as a single-channel sample file plus a sidecar header
// `<file>.hdr` of `key=value` lines:
//
//   sampling_rate_hz=40000
//   units=V
//   encoding=text        (one decimal value per line)  or  f64le
//
enum class TraceEncoding { text, f64le };

struct TraceHeader {
  double sampling_rate_hz = 1.0;
  std::string units = "V";
  TraceEncoding encoding = TraceEncoding::text;
};

std::filesystem::path header_path(const std::filesystem::path& samples);

void write_trace(const std::filesystem::path& path, const TelegraphTrace& trace,
                 TraceEncoding encoding = TraceEncoding::text, const std::string& units = "V");

TraceHeader read_trace_header(const std::filesystem::path& samples);

/// Reads samples using the sidecar header. Throws Io if either file is
/// missing and Parse on malformed content.
TelegraphTrace read_trace(const std::filesystem::path& path);

}  // namespace noiselearn
