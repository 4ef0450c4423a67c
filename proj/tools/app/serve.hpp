// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace splatseg::app {

struct ServeOptions {
  std::filesystem::path checkpoint; // model snapshot; or
  std::filesystem::path run_dir;    // a training run directory (final.ckpt or newest checkpoint, live metrics)
  std::filesystem::path data;       // optional dataset for frame_id poses; defaults to the run's dataset
  std::string host = "127.0.0.1";
  int port = 8080;                  // 0 picks a free port
};

/// HTTP API over one immutable model snapshot with per-session edit overlays. Never writes to disk.
class StudioServer {
public:
  explicit StudioServer(const ServeOptions &options);
  ~StudioServer();
  StudioServer(const StudioServer &) = delete;
  StudioServer &operator=(const StudioServer &) = delete;

  /// Binds the listening socket and returns the port.
  int bind();
  /// Serves until stop() is called.
  void run();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace splatseg::app
