#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lassogeom/problem.hpp"

namespace lassogeom::cli {

/// Entry point of the `lassogeom` tool. `args` excludes the program name.
/// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// y = A x0 + w with x0 i.i.d. Laplace(1) and w ~ N(0, I), drawn from the
/// stream of `seed` reserved for observations.
Vec planted_observation(const Mat& A, std::uint64_t seed);

}  // namespace lassogeom::cli
