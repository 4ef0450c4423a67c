// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
// splatseg command line: synth, train, render, eval, query, cluster, serve, config.
#include <csignal>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "app/commands.hpp"
#include "app/serve.hpp"
#include "splatseg/config.hpp"
#include "splatseg/error.hpp"

namespace {

splatseg::app::StudioServer *g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::string config_key_table() {
  std::ostringstream s;
  s << "\nConfig keys (JSON file tree or --set key=value):\n";
  for (const auto &d : splatseg::config_key_docs()) {
    s << "  " << d.key << " (" << d.type << ", default " << d.default_value << ")\n      " << d.description << '\n';
  }
  return s.str();
}

} // namespace

int main(int argc, char **argv) {
  using namespace splatseg;
  using namespace splatseg::app;

  CLI::App cli{"splatseg: feature-lifting Gaussian splatting with transient filtering and open-world segmentation"};
  cli.require_subcommand(1);
  cli.set_version_flag("--version", "splatseg 0.1.0");

  SynthOptions synth;
  std::uint64_t synth_seed = 0;
  auto *c_synth = cli.add_subcommand("synth", "Generate a synthetic benchmark dataset");
  auto *scene_opt = c_synth->add_option("--scene", synth.scene, "Builtin scene: static-8obj, dynamic-1of8, dynamic-3of8");
  c_synth->add_option("--spec", synth.spec_file, "Scene spec JSON file")->excludes(scene_opt);
  auto *seed_opt = c_synth->add_option("--seed", synth_seed, "Override the scene seed");
  c_synth->add_option("--out", synth.out, "Output dataset directory")->required();

  TrainOptions train;
  auto *c_train = cli.add_subcommand("train", "Train a model on a dataset");
  c_train->add_option("--data", train.data, "Dataset directory")->required();
  c_train->add_option("--config", train.config_file, "Config JSON file");
  c_train->add_option("--set", train.overrides, "Config override key=value (repeatable)");
  c_train->add_option("--out", train.out, "Run directory")->required();
  c_train->add_option("--init-ply", train.init_ply, "Start from this Gaussian PLY instead of the seed points");
  c_train->add_option("--resume", train.resume, "Continue from a checkpoint");
  c_train->add_flag("--quiet", train.quiet, "No progress output");
  c_train->footer(config_key_table());

  RenderOptions render;
  std::vector<std::string> render_modes{"rgb", "feature_pca", "transient"};
  auto *c_render = cli.add_subcommand("render", "Render RGB, feature-PCA and transient images as PNG");
  c_render->add_option("--checkpoint", render.checkpoint, "Checkpoint file")->required();
  auto *data_opt = c_render->add_option("--data", render.data, "Dataset directory (poses source)");
  c_render->add_option("--poses", render.poses_file, "JSON array of camera records (poses source)")->excludes(data_opt);
  c_render->add_option("--frames", render.frames, "all | train | validation | novel | comma-separated frame ids");
  c_render->add_option("--modes", render_modes, "Render modes")->delimiter(',');
  c_render->add_option("--out", render.out, "Output directory")->required();

  EvalCommandOptions eval;
  std::string eval_split = "novel";
  auto *c_eval = cli.add_subcommand("eval", "Evaluate PSNR and segmentation metrics");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--data", eval.data, "Dataset directory with ground truth")->required();
  c_eval->add_option("--out", eval.out, "Report JSON path (CSV written alongside)")->required();
  c_eval->add_option("--split", eval_split, "Frames to evaluate: train | validation | novel");
  c_eval->add_option("--seed", eval.eval.seed, "Seed for query pixel sampling");
  c_eval->add_option("--max-frames", eval.eval.max_frames, "Uniformly subsample at most this many frames (0: all)");
  c_eval->add_option("--clicks", eval.eval.cross_view_clicks, "Seen-view clicks per cross-view query");
  c_eval->add_option("--min-object-pixels", eval.eval.min_object_pixels, "Smaller GT masks count as not visible");

  QueryOptions query;
  double query_threshold = 0.0;
  auto *c_query = cli.add_subcommand("query", "Click-query 2D/3D segmentation");
  c_query->add_option("--checkpoint", query.checkpoint, "Checkpoint file")->required();
  c_query->add_option("--data", query.data, "Dataset directory")->required();
  c_query->add_option("--clicks", query.clicks_file, "Clicks JSON file")->required();
  auto *thr_opt = c_query->add_option("--threshold", query_threshold, "Feature distance threshold");
  c_query->add_option("--out", query.out, "Output directory")->required();

  ClusterOptions cluster;
  auto *c_cluster = cli.add_subcommand("cluster", "HDBSCAN decomposition of the scene; one PLY per cluster");
  c_cluster->add_option("--checkpoint", cluster.checkpoint, "Checkpoint file")->required();
  c_cluster->add_option("--min-cluster-size", cluster.params.min_cluster_size, "Minimum cluster size");
  c_cluster->add_option("--min-samples", cluster.params.min_samples, "Core-distance neighbour count (0: min cluster size)");
  c_cluster->add_option("--out", cluster.out, "Output directory")->required();

  ServeOptions serve;
  auto *c_serve = cli.add_subcommand("serve", "HTTP API for the segmentation studio");
  auto *ck_opt = c_serve->add_option("--checkpoint", serve.checkpoint, "Checkpoint file");
  c_serve->add_option("--run", serve.run_dir, "Training run directory (live metrics stream)")->excludes(ck_opt);
  c_serve->add_option("--data", serve.data, "Dataset directory for frame_id poses");
  c_serve->add_option("--host", serve.host, "Listen address");
  c_serve->add_option("--port", serve.port, "Listen port (0: any free port)");

  bool dump_defaults = false;
  auto *c_config = cli.add_subcommand("config", "Print the config key reference or the default config");
  c_config->add_flag("--defaults", dump_defaults, "Print the default config as JSON");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return cli.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (c_synth->parsed()) {
      if (seed_opt->count() > 0) synth.seed = synth_seed;
      const auto scene = cmd_synth(synth);
      std::cout << "wrote " << scene.dataset.frames.size() << " frames to " << synth.out.string() << '\n';
    } else if (c_train->parsed()) {
      const auto state = cmd_train(train);
      std::cout << "trained " << state.iteration << " iterations, " << state.cloud.size() << " Gaussians\n";
    } else if (c_render->parsed()) {
      render.modes.clear();
      for (const auto &m : render_modes) render.modes.push_back(render_mode_from_string(m));
      require(!render.data.empty() || !render.poses_file.empty(), ErrorKind::Config, "render needs --data or --poses");
      cmd_render(render);
    } else if (c_eval->parsed()) {
      eval.eval.split = split_from_string(eval_split);
      const auto report = cmd_eval(eval);
      std::cout << "psnr " << report.psnr_all << " static " << report.psnr_static << " dynamic " << report.psnr_dynamic
                << " | in-view mIoU " << EvalReport::miou(report.in_view, std::nullopt) << " cross-view mIoU "
                << EvalReport::miou(report.cross_view, std::nullopt) << " 3D mIoU " << report.miou_3d() << '\n';
    } else if (c_query->parsed()) {
      if (thr_opt->count() > 0) query.threshold = query_threshold;
      std::cout << cmd_query(query);
    } else if (c_cluster->parsed()) {
      const auto labels = cmd_cluster(cluster);
      int k = 0;
      for (int l : labels) k = std::max(k, l + 1);
      std::cout << k << " clusters\n";
    } else if (c_serve->parsed()) {
      StudioServer server(serve);
      const int port = server.bind();
      std::cout << "listening on http://" << serve.host << ':' << port << std::endl;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.run();
      g_server = nullptr;
    } else if (c_config->parsed()) {
      if (dump_defaults) {
        std::cout << config_to_json(TrainConfig{}) << '\n';
      } else {
        std::cout << config_key_table();
      }
    }
  } catch (const Error &e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
