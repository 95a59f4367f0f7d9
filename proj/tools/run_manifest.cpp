// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_manifest.hpp"

#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "avsal/errors.hpp"

#ifndef AVSAL_VERSION
#define AVSAL_VERSION "0.0.0"
#endif
#ifndef AVSAL_GIT_REVISION
#define AVSAL_GIT_REVISION "unknown"
#endif

namespace avsal::cli {

namespace {

std::string iso_utc(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

std::string version_string() { return std::string("avsal ") + AVSAL_VERSION + " (" + AVSAL_GIT_REVISION + ")"; }

void RunManifest::write(const std::filesystem::path& out_dir, const std::string& file_name) const {
  std::filesystem::create_directories(out_dir);
  const nlohmann::json doc = {
      {"command", command},
      {"argv", argv},
      {"config", config},
      {"seed", seed},
      {"version", version_string()},
      {"started", iso_utc(started)},
      {"finished", iso_utc(std::chrono::system_clock::now())},
      {"outputs", outputs},
  };
  const auto path = out_dir / file_name;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace avsal::cli
