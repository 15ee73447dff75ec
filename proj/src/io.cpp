#include "hal/io.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("io: " + msg); }

constexpr std::uint32_t kMagic = 0x48414c31;  // "HAL1"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail("truncated checkpoint");
  return v;
}
std::int64_t get_i64(std::istream& in) {
  std::int64_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail("truncated checkpoint");
  return v;
}
double get_f64(std::istream& in) {
  double v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelSpec& spec,
                     const Params& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path);
  put_u32(out, kMagic);
  put_u32(out, kVersion);
  put_i64(out, spec.input.c);
  put_i64(out, spec.input.h);
  put_i64(out, spec.input.w);
  put_i64(out, spec.embedding_layer);
  put_i64(out, static_cast<std::int64_t>(spec.layers.size()));
  for (const auto& l : spec.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.kind));
    put_i64(out, l.out_channels);
    put_i64(out, l.kernel);
    put_i64(out, l.units);
    put_f64(out, l.rate);
  }
  put_i64(out, static_cast<std::int64_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    put_i64(out, t.rows());
    put_i64(out, t.cols());
    for (long c = 0; c < t.cols(); ++c)
      for (long r = 0; r < t.rows(); ++r) put_f64(out, t(r, c));
  }
  if (!out) fail("write failed for " + path);
}

std::pair<ModelSpec, Params> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  if (get_u32(in) != kMagic) fail("bad checkpoint magic in " + path);
  if (get_u32(in) != kVersion) fail("unsupported checkpoint version in " + path);
  ModelSpec spec;
  spec.input.c = static_cast<int>(get_i64(in));
  spec.input.h = static_cast<int>(get_i64(in));
  spec.input.w = static_cast<int>(get_i64(in));
  spec.embedding_layer = static_cast<int>(get_i64(in));
  auto n_layers = get_i64(in);
  if (n_layers < 1 || n_layers > 1024) fail("implausible layer count in " + path);
  for (std::int64_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(get_u32(in));
    l.out_channels = static_cast<int>(get_i64(in));
    l.kernel = static_cast<int>(get_i64(in));
    l.units = static_cast<int>(get_i64(in));
    l.rate = get_f64(in);
    spec.layers.push_back(l);
  }
  Params params;
  auto n_tensors = get_i64(in);
  if (n_tensors < 0 || n_tensors > 4096) fail("implausible tensor count in " + path);
  for (std::int64_t i = 0; i < n_tensors; ++i) {
    auto rows = get_i64(in), cols = get_i64(in);
    if (rows < 0 || cols < 0 || rows * cols > (1ll << 32))
      fail("implausible tensor shape in " + path);
    Mat t(rows, cols);
    for (long c = 0; c < cols; ++c)
      for (long r = 0; r < rows; ++r) t(r, c) = get_f64(in);
    params.tensors.push_back(std::move(t));
  }
  validate_spec(spec);
  return {std::move(spec), std::move(params)};
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) fail("double formatting failed");
  return std::string(buf, res.ptr);
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);  // binary keeps line endings stable
  if (!out) fail("cannot write " + path);
  auto put_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  put_row(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) fail("csv row width mismatch");
    put_row(row);
  }
  if (!out) fail("write failed for " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (line.back() == ',') row.emplace_back();
    if (first) {
      table.header = std::move(row);
      first = false;
    } else {
      if (row.size() != table.header.size()) fail("ragged csv row in " + path);
      table.rows.push_back(std::move(row));
    }
  }
  if (first) fail("empty csv " + path);
  return table;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto ltrim = line.find_first_not_of(" \t");
    if (ltrim == std::string::npos) continue;
    auto rtrim = line.find_last_not_of(" \t");
    line = line.substr(ltrim, rtrim - ltrim + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto strip = [](std::string s) {
      auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    std::string key = strip(line.substr(0, eq));
    std::string val = strip(line.substr(eq + 1));
    if (key.empty()) fail(path + ":" + std::to_string(lineno) + ": empty key");
    out[key] = val;
  }
  return out;
}

}  // namespace hal
