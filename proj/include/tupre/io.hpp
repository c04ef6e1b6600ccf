#ifndef TUPRE_IO_HPP
#define TUPRE_IO_HPP

// Persistence helpers: CSV with round-trip precision, raw little-endian
// float64 arrays, and run-directory serialization of problem instances.

#include <Eigen/Dense>
#include <json.hpp>

#include <bit>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tupre/errors.hpp"
#include "tupre/problems.hpp"

namespace tupre {

namespace fs = std::filesystem;
using json = nlohmann::json;

// 17 significant digits, so every double survives a text round trip.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Accumulates CSV rows in memory; nothing touches disk until save().
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j) text_ += ',';
      text_ += header[j];
    }
    text_ += '\n';
  }

  // Lines starting with '#' placed before the header row.
  void set_preamble(const std::string& comment) { preamble_ = comment; }

  template <class... Cells>
  void add(const Cells&... cells) {
    if (sizeof...(Cells) != columns_) throw InputError("CSV row has the wrong number of cells");
    std::size_t j = 0;
    ((text_ += (j++ ? "," : ""), text_ += cell(cells)), ...);
    text_ += '\n';
    ++rows_;
  }

  std::size_t rows() const { return rows_; }
  std::string str() const { return preamble_ + text_; }
  void save(const fs::path& path) const { write_text_file(path, str()); }

 private:
  std::size_t columns_;
  std::string preamble_;
  std::string text_;
  std::size_t rows_ = 0;

  static std::string cell(double x) { return format_double(x); }
  static std::string cell(bool x) { return x ? "1" : "0"; }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(std::string_view s) { return std::string(s); }
  static std::string cell(const char* s) { return s; }
  template <std::integral T>
  static std::string cell(T x) { return std::to_string(x); }
};

inline void write_f64(const fs::path& path, const double* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<unsigned char> bytes(count * 8);
  for (std::size_t i = 0; i < count; ++i) {
    auto u = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<double> read_f64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) throw IoError(path.string() + " is not a float64 array");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(u);
  }
  return out;
}

// Column-major matrix or vector to <dir>/<name>.f64; returns the JSON
// descriptor {file, shape}.
template <class Derived>
json save_array(const fs::path& dir, const std::string& name, const Eigen::DenseBase<Derived>& a) {
  const Eigen::MatrixXd m = a;
  const std::string file = name + ".f64";
  write_f64(dir / file, m.data(), static_cast<std::size_t>(m.size()));
  if (m.cols() == 1) return {{"file", file}, {"shape", {m.rows()}}};
  return {{"file", file}, {"shape", {m.rows(), m.cols()}}};
}

inline Eigen::MatrixXd load_array(const fs::path& dir, const json& desc) {
  const auto shape = desc.at("shape").get<std::vector<Index>>();
  if (shape.empty() || shape.size() > 2) throw IoError("unsupported array rank");
  const Index rows = shape[0];
  const Index cols = shape.size() == 2 ? shape[1] : 1;
  const auto data = read_f64(dir / desc.at("file").get<std::string>());
  if (static_cast<Index>(data.size()) != rows * cols) throw IoError("array size does not match its shape");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

namespace detail {

inline json common_arrays(const fs::path& dir, const Vector& sigma, const Vector& x_true,
                          const Vector& b_true, const Vector& b) {
  return {{"sigma", save_array(dir, "sigma", sigma)},
          {"x_true", save_array(dir, "x_true", x_true)},
          {"b_true", save_array(dir, "b_true", b_true)},
          {"b", save_array(dir, "b", b)}};
}

inline json common_meta(double noise_sigma, Index l_true, std::uint64_t seed, double scale) {
  return {{"noise_sigma", noise_sigma}, {"l_true", l_true}, {"seed", seed}, {"scale", scale}};
}

}  // namespace detail

// Writes <dir>/instance.json plus the arrays it references. `extra` is
// merged into the metadata (problem description such as model and nu).
inline void save_instance(const fs::path& dir, const ProblemInstance<SingularSystem>& inst,
                          const json& extra = json::object()) {
  ensure_directory(dir);
  json meta = detail::common_meta(inst.noise_sigma, inst.l_true, inst.seed, inst.system.scale());
  meta["basis"] = "dense";
  meta.update(extra);
  json arrays = detail::common_arrays(dir, inst.system.sigma(), inst.x_true, inst.b_true, inst.b);
  arrays["U"] = save_array(dir, "U", inst.system.U());
  arrays["V"] = save_array(dir, "V", inst.system.V());
  meta["arrays"] = arrays;
  write_text_file(dir / "instance.json", meta.dump(2) + "\n");
}

inline void save_instance(const fs::path& dir, const ProblemInstance<DiagonalSystem>& inst,
                          const json& extra = json::object()) {
  ensure_directory(dir);
  json meta = detail::common_meta(inst.noise_sigma, inst.l_true, inst.seed, inst.system.scale());
  meta["basis"] = "canonical";
  meta.update(extra);
  meta["arrays"] = detail::common_arrays(dir, inst.system.sigma(), inst.x_true, inst.b_true, inst.b);
  write_text_file(dir / "instance.json", meta.dump(2) + "\n");
}

inline void save_instance(const fs::path& dir, const BlurProblem& prob,
                          const json& extra = json::object()) {
  ensure_directory(dir);
  const auto& inst = prob.instance;
  json meta = detail::common_meta(inst.noise_sigma, inst.l_true, inst.seed, inst.system.scale());
  meta["basis"] = "kronecker";
  meta["n_side"] = prob.blur.n_side;
  meta.update(extra);
  json arrays = detail::common_arrays(dir, inst.system.sigma(), inst.x_true, inst.b_true, inst.b);
  arrays["psf_1d"] = save_array(dir, "psf_1d", prob.blur.psf_1d);
  arrays["A_left"] = save_array(dir, "A_left", prob.blur.A_left);
  arrays["A_right"] = save_array(dir, "A_right", prob.blur.A_right);
  meta["arrays"] = arrays;
  write_text_file(dir / "instance.json", meta.dump(2) + "\n");
}

inline json load_instance_metadata(const fs::path& dir) {
  try {
    return json::parse(read_text_file(dir / "instance.json"));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed instance.json: ") + e.what());
  }
}

}  // namespace tupre

#endif  // TUPRE_IO_HPP
