#include "io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lassogeom::cli {

namespace fs = std::filesystem;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

json vec_to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json problem_to_json(const ProblemInstance& prob) {
  json j;
  j["n"] = prob.n;
  j["p"] = prob.p;
  json a = json::array();
  for (int i = 0; i < prob.n; ++i) {
    for (int k = 0; k < prob.p; ++k) a.push_back(prob.A(i, k));
  }
  j["A"] = a;
  j["y"] = vec_to_json(prob.y);
  j["seed"] = prob.seed;
  return j;
}

ProblemInstance problem_from_json(const json& j) {
  try {
    const int n = j.at("n").get<int>();
    const int p = j.at("p").get<int>();
    if (n < 1 || p < n) throw IoError("problem: need p >= n >= 1");
    std::vector<double> flat;
    for (const auto& e : j.at("A")) {
      if (e.is_array()) {
        for (const auto& x : e) flat.push_back(x.get<double>());
      } else {
        flat.push_back(e.get<double>());
      }
    }
    if (flat.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(p)) {
      throw IoError("problem: A has " + std::to_string(flat.size()) + " entries, expected n*p = " +
                    std::to_string(n * p));
    }
    Mat A(n, p);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < p; ++k) A(i, k) = flat[static_cast<std::size_t>(i * p + k)];
    }
    Vec y = Vec::Zero(n);
    if (j.contains("y")) {
      const auto& jy = j.at("y");
      if (jy.size() != static_cast<std::size_t>(n)) throw IoError("problem: y must have n entries");
      for (int i = 0; i < n; ++i) y(i) = jy.at(static_cast<std::size_t>(i)).get<double>();
    }
    const std::uint64_t seed = j.value("seed", std::uint64_t{0});
    return make_problem(std::move(A), std::move(y), seed);
  } catch (const json::exception& e) {
    throw IoError(std::string("problem: ") + e.what());
  }
}

ProblemInstance read_problem(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return problem_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) {
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw std::logic_error("CsvWriter: row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
}

json RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["argv"] = argv;
  j["config"] = config;
  j["seed"] = seed;
  j["outputs"] = outputs;
  j["version"] = version;
  return j;
}

}  // namespace lassogeom::cli
