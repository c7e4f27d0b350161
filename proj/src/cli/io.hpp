#pragma once

// File formats shared by the CLI commands: problem JSON, CSV, run manifests,
// and the error types mapped to exit codes.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lassogeom/problem.hpp"

namespace lassogeom::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFlag = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

struct FlagError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that parses back to the same double.
std::string fmt(double v);
std::string fmt_fixed(double v, int digits);

json vec_to_json(const Vec& v);

json problem_to_json(const ProblemInstance& prob);
/// Accepts A flat (row-major, n*p entries) or as nested rows.
ProblemInstance problem_from_json(const json& j);
ProblemInstance read_problem(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const json& j);

/// Comma-separated, header row, LF line endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  const std::string& str() const { return text_; }

 private:
  std::size_t width_;
  std::string text_;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::string version;

  json to_json() const;
};

}  // namespace lassogeom::cli
