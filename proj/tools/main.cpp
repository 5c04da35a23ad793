// Command-line driver: render, optimize, and gradcheck over scene configs.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "diffraster/diffraster.hpp"

namespace fs = std::filesystem;
using namespace diffraster;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<int> iters;
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  int workers = 1;
  std::optional<std::string> res;
  std::string group = "vertex_colors";
  std::string precision = "double";
  bool verbose = false;
};

void apply_overrides(SceneConfig& cfg, const CliOptions& opt) {
  if (opt.iters) cfg.task.iterations = *opt.iters;
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.delta) cfg.delta = *opt.delta;
  if (opt.res) {
    const auto x = opt.res->find('x');
    if (x == std::string::npos)
      throw SchemaError("--res: expected WxH, got '" + *opt.res + "'");
    try {
      cfg.width = std::stoi(opt.res->substr(0, x));
      cfg.height = std::stoi(opt.res->substr(x + 1));
    } catch (...) {
      throw SchemaError("--res: expected WxH, got '" + *opt.res + "'");
    }
    if (cfg.width < 8 || cfg.height < 8)
      throw SchemaError("--res: resolution must be at least 8x8");
  }
}

void echo_config(const SceneConfig& cfg, const fs::path& out_dir) {
  const std::string dump = config_to_json(cfg).dump(2);
  std::cout << dump << "\n";
  std::ofstream f(out_dir / "resolved_config.json");
  f << dump << "\n";
}

template <typename T>
Image<T> replicate_gray(const Image<T>& gray) {
  Image<T> rgb(gray.height, gray.width, 3);
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x)
      for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = gray.at(y, x, 0);
  return rgb;
}

template <typename T>
Image<T> depth_visualization(const Image<T>& depth) {
  T lo = std::numeric_limits<T>::infinity();
  T hi = -std::numeric_limits<T>::infinity();
  for (const T d : depth.data)
    if (std::isfinite(d)) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  Image<T> vis(depth.height, depth.width, 3);
  if (!(hi > lo)) return vis;
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) {
      const T d = depth.at(y, x);
      const T v = std::isfinite(d) ? (hi - d) / (hi - lo) : T(0);
      for (int c = 0; c < 3; ++c) vis.at(y, x, c) = v;
    }
  return vis;
}

std::string csv_row(int iteration, double total, double iou, double col,
                    double sm, double lap) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                iteration, total, iou, col, sm, lap);
  return buf;
}

template <typename T>
int cmd_render(const SceneConfig& cfg, const CliOptions& opt) {
  const fs::path out_dir(opt.out_dir);
  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);

  const Scene<T> scene = build_scene<T>(cfg);
  SoftConfig<T> soft{T(cfg.delta), T(cfg.cutoff)};
  auto [out, tapes] = forward_render(scene, scene.camera, soft, cfg.width,
                                     cfg.height, opt.workers);
  (void)tapes;
  save_png(out.color, (out_dir / "color.png").string());
  save_png(replicate_gray(out.alpha), (out_dir / "alpha.png").string());
  save_png(depth_visualization(out.frame.depth), (out_dir / "depth.png").string());
  if (opt.verbose)
    std::cerr << "wrote " << (out_dir / "color.png").string() << ", alpha.png, depth.png\n";
  return 0;
}

template <typename T>
int cmd_optimize(const SceneConfig& cfg, const CliOptions& opt) {
  const fs::path out_dir(opt.out_dir);
  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);

  TaskSetup<T> setup = make_task_setup<T>(cfg);
  SnapshotFn<T> on_snapshot = [&](int iteration, const Scene<T>& scene,
                                  const RenderOutput<T>& render) {
    char name[64];
    std::snprintf(name, sizeof(name), "snap_%06d.png", iteration);
    save_png(render.color, (out_dir / name).string());
    (void)scene;
  };

  const auto report = run_task(setup, opt.workers, on_snapshot);

  std::ofstream csv(out_dir / "loss.csv");
  csv << "iteration,total,iou,col,sm,lap\n";
  for (std::size_t i = 0; i < report.series.size(); ++i) {
    const auto& r = report.series[i];
    csv << csv_row(static_cast<int>(i), double(r.total), double(r.iou),
                   double(r.col), double(r.sm), double(r.lap));
  }
  csv.close();

  const Scene<T>& final_scene = report.final_scene;
  save_obj(final_scene.mesh, (out_dir / "mesh.obj").string());
  if (final_scene.base == BaseColorModel::Texture)
    save_png(final_scene.texture, (out_dir / "texture.png").string());

  SoftConfig<T> soft{T(cfg.delta), T(cfg.cutoff)};
  auto [final_render, tapes] = forward_render(final_scene, final_scene.camera,
                                              soft, cfg.width, cfg.height, opt.workers);
  (void)tapes;
  save_png(final_render.color, (out_dir / "color.png").string());
  save_png(replicate_gray(final_render.alpha), (out_dir / "alpha.png").string());

  std::ofstream rep(out_dir / "report.txt");
  rep << "task: " << cfg.task.kind << "\n"
      << "iterations: " << report.series.size() << "\n"
      << "wall_seconds: " << report.wall_seconds << "\n";
  if (!report.series.empty()) {
    const auto& first = report.series.front();
    const auto& last = report.series.back();
    rep << "initial: total=" << double(first.total) << " iou=" << double(first.iou)
        << " col=" << double(first.col) << " sm=" << double(first.sm)
        << " lap=" << double(first.lap) << "\n";
    rep << "final:   total=" << double(last.total) << " iou=" << double(last.iou)
        << " col=" << double(last.col) << " sm=" << double(last.sm)
        << " lap=" << double(last.lap) << "\n";
  }
  rep.close();

  if (opt.verbose)
    std::cerr << "optimization finished in " << report.wall_seconds << " s\n";
  return 0;
}

template <typename T>
int cmd_gradcheck(const SceneConfig& cfg, const CliOptions& opt) {
  const fs::path out_dir(opt.out_dir);
  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);

  const Scene<T> scene = build_scene<T>(cfg);
  SoftConfig<T> soft{T(cfg.delta), T(cfg.cutoff)};
  const auto targets = make_gradcheck_targets(scene, soft, cfg.width, cfg.height,
                                              cfg.seed + 101, opt.workers);
  GradcheckOptions<T> options;
  options.samples = cfg.gradcheck.samples;
  options.h = T(cfg.gradcheck.h);
  options.tolerance = T(cfg.gradcheck.tolerance);
  options.seed = cfg.seed;

  const auto report = gradcheck(scene, opt.group, targets, soft, cfg.width,
                                cfg.height,
                                LossWeights<T>{T(cfg.lambda_col), T(cfg.lambda_sm),
                                               T(cfg.lambda_lap)},
                                options, opt.workers);

  std::ofstream table(out_dir / "gradcheck.txt");
  auto emit = [&](const std::string& line) {
    std::cout << line << "\n";
    table << line << "\n";
  };
  if (!report.precondition_error.empty()) {
    emit("gradcheck " + report.group + ": REJECTED (" + report.precondition_error + ")");
    return 3;
  }
  emit("group " + report.group + ": " + std::to_string(report.passed) + "/" +
       std::to_string(report.total - report.skipped) + " passed, " +
       std::to_string(report.skipped) + " skipped (coverage flips)");
  char buf[160];
  for (const auto& s : report.samples) {
    if (s.skipped) {
      std::snprintf(buf, sizeof(buf), "  coord %6zu  SKIP (coverage flip)", s.coord);
    } else {
      std::snprintf(buf, sizeof(buf),
                    "  coord %6zu  analytic % .9e  numeric % .9e  %s", s.coord,
                    double(s.analytic), double(s.numeric),
                    s.passed ? "pass" : "FAIL");
    }
    emit(buf);
  }
  return report.ok() ? 0 : 3;
}

template <typename T>
int dispatch(const std::string& subcommand, const SceneConfig& cfg,
             const CliOptions& opt) {
  if (subcommand == "render") return cmd_render<T>(cfg, opt);
  if (subcommand == "optimize") return cmd_optimize<T>(cfg, opt);
  return cmd_gradcheck<T>(cfg, opt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable triangle rasterizer and inverse-rendering tool"};
  app.require_subcommand(1);

  CliOptions opt;
  auto add_common = [&](CLI::App* sub, bool with_group) {
    sub->add_option("--config", opt.config_path, "Scene configuration (JSON)")
        ->required();
    sub->add_option("--out", opt.out_dir, "Output directory (default: out)");
    sub->add_option("--iters", opt.iters, "Override optimization iteration count");
    sub->add_option("--seed", opt.seed, "Override the config seed");
    sub->add_option("--delta", opt.delta, "Override the soft-alpha delta");
    sub->add_option("--workers", opt.workers,
                    "Rasterizer worker threads (output is invariant to this)");
    sub->add_option("--res", opt.res, "Override resolution, e.g. 64x64");
    sub->add_option("--precision", opt.precision, "Float precision: single|double")
        ->check(CLI::IsMember({"single", "double"}));
    sub->add_flag("-v,--verbose", opt.verbose, "Chatty progress on stderr");
    if (with_group)
      sub->add_option("--group", opt.group,
                      "Parameter group: vertex_positions|vertex_colors|uvs|"
                      "texture|light|light_dir|sh_coeffs|material|camera_eye");
  };
  add_common(app.add_subcommand("render", "Render color/alpha/depth images"), false);
  add_common(app.add_subcommand("optimize", "Run the configured inverse-rendering task"),
             false);
  add_common(app.add_subcommand("gradcheck",
                                "Compare analytic gradients against finite differences"),
             true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    app.exit(e);
    return 1;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    SceneConfig cfg = parse_scene(opt.config_path);
    apply_overrides(cfg, opt);
    if (opt.precision == "single") return dispatch<float>(sub, cfg, opt);
    return dispatch<double>(sub, cfg, opt);
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DecodeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const UnsupportedColorType& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
