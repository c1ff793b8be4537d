#include "noiselearn/trace_io.hpp"

#include "noiselearn/errors.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace noiselearn {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& text, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Parse, context + ": cannot parse '" + text + "'");
}

}  // namespace

std::filesystem::path header_path(const std::filesystem::path& samples) {
  auto p = samples;
  p += ".hdr";
  return p;
}

void write_trace(const std::filesystem::path& path, const TelegraphTrace& trace, TraceEncoding encoding,
                 const std::string& units) {
  {
    std::ofstream hdr(header_path(path));
    if (!hdr) throw Error(ErrorCode::Io, "cannot write " + header_path(path).string());
    hdr.precision(17);
    hdr << "sampling_rate_hz=" << trace.sampling_rate << "\n"
        << "units=" << units << "\n"
        << "encoding=" << (encoding == TraceEncoding::text ? "text" : "f64le") << "\n";
  }
  if (encoding == TraceEncoding::text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.precision(17);
    for (double v : trace.samples) out << v << "\n";
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (double v : trace.samples) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
  }
}

TraceHeader read_trace_header(const std::filesystem::path& samples) {
  const auto hp = header_path(samples);
  std::ifstream in(hp);
  if (!in) throw Error(ErrorCode::Io, "missing trace header " + hp.string());
  TraceHeader h;
  bool have_rate = false;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Parse, hp.string() + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "sampling_rate_hz") {
      h.sampling_rate_hz = parse_double(value, hp.string());
      have_rate = true;
    } else if (key == "units") {
      h.units = value;
    } else if (key == "encoding") {
      if (value == "text") h.encoding = TraceEncoding::text;
      else if (value == "f64le") h.encoding = TraceEncoding::f64le;
      else throw Error(ErrorCode::Parse, hp.string() + ": unknown encoding " + value);
    }
  }
  if (!have_rate || !(h.sampling_rate_hz > 0)) {
    throw Error(ErrorCode::Parse, hp.string() + ": sampling_rate_hz missing or non-positive");
  }
  return h;
}

TelegraphTrace read_trace(const std::filesystem::path& path) {
  const TraceHeader h = read_trace_header(path);
  TelegraphTrace trace;
  trace.sampling_rate = h.sampling_rate_hz;
  if (h.encoding == TraceEncoding::text) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      trace.samples.push_back(parse_double(line, path.string()));
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 8 != 0) throw Error(ErrorCode::Parse, path.string() + ": truncated f64 sample");
    trace.samples.resize(bytes.size() / 8);
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * i + b])) << (8 * b);
      }
      trace.samples[i] = std::bit_cast<double>(bits);
    }
  }
  if (trace.samples.empty()) throw Error(ErrorCode::EmptyInput, path.string() + ": no samples");
  return trace;
}

}  // namespace noiselearn
