// Command-line front end: target generation, post-processing, evaluation,
// tile planning and synthetic data.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hovernet/hovernet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hovernet;

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception of
/// the lowest failing index is rethrown so failures are reproducible.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_json(const std::string& out, const json& j) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    io::write_file_atomic(out, text);
  }
}

/// Expands directory arguments into their sorted regular files with the
/// given extension; plain file arguments are kept as given.
std::vector<std::string> expand_inputs(const std::vector<std::string>& args,
                                       const std::string& extension) {
  std::vector<std::string> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(a)) {
        if (e.is_regular_file() && e.path().extension() == extension) {
          found.push_back(e.path().string());
        }
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(a);
    }
  }
  return out;
}

std::map<ClassId, std::string> classes_for(std::size_t k) {
  if (k == 5) return io::default_classes();
  std::map<ClassId, std::string> out;
  for (std::size_t c = 1; c < k; ++c) out[static_cast<ClassId>(c)] = "class_" + std::to_string(c);
  return out;
}

void require_dims(const RealGrid& a, const std::string& a_name, const RealGrid& b,
                  const std::string& b_name) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::dimension_mismatch,
                a_name + " is " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                    " but " + b_name + " is " + std::to_string(b.height()) + "x" +
                    std::to_string(b.width()));
  }
}

// ---------------------------------------------------------------------------

struct GenTargetsArgs {
  std::string instances;
  std::string types;
  std::string out_dir;
};

void run_gen_targets(const GenTargetsArgs& a) {
  const InstanceMap im = io::read_label_map(a.instances);
  const io::AnnotationFile ann = io::read_annotations(a.types);
  const TypeMap types = type_target(im, ann.type_assignment());
  const HoverMap hover = hover_targets(im);
  const BinaryMask mask = binary_target(im);
  ClassId max_class = 0;
  for (const auto& [id, name] : ann.classes) max_class = std::max(max_class, id);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  io::write_float_map(dir / "hover.f32", {{hover.horizontal, hover.vertical}, {"h", "v"}});
  io::write_float_map(dir / "np.f32", {{grid_cast<RealGrid>(mask)}, {"np"}});
  GridStack nc = one_hot(types, static_cast<std::size_t>(max_class) + 1);
  std::vector<std::string> names{"background"};
  for (ClassId c = 1; c <= max_class; ++c) {
    const auto it = ann.classes.find(c);
    names.push_back(it != ann.classes.end() ? it->second : "class_" + std::to_string(c));
  }
  io::write_float_map(dir / "nc.f32", {std::move(nc), std::move(names)});
  io::write_pgm16(dir / "mask.pgm", mask);
  io::write_pgm16(dir / "types.pgm", types);
}

struct PostprocArgs {
  std::string np;
  std::string hover;
  std::string nc;
  std::string config;
  std::string out;
  std::string types_out;
};

void run_postproc(const PostprocArgs& a) {
  const PostProcConfig cfg =
      a.config.empty() ? PostProcConfig{}
                       : io::postproc_config_from_text(io::read_file(a.config), a.config);
  io::FloatMap np = io::read_float_map(a.np);
  io::FloatMap hv = io::read_float_map(a.hover);
  if (np.channels.size() > 2) {
    throw Error(ErrorKind::invalid_argument, a.np + ": expected 1 or 2 channels");
  }
  if (hv.channels.size() != 2) {
    throw Error(ErrorKind::invalid_argument, a.hover + ": expected 2 channels (h, v)");
  }
  RealGrid q = np.channels.back();
  require_dims(q, a.np, hv.channels[0], a.hover);
  std::optional<GridStack> type_probs;
  if (!a.nc.empty()) {
    io::FloatMap nc = io::read_float_map(a.nc);
    require_dims(q, a.np, nc.channels.front(), a.nc);
    type_probs = std::move(nc.channels);
  }
  const std::size_t k = type_probs ? type_probs->size() : 0;
  const HoverMap p(std::move(hv.channels[0]), std::move(hv.channels[1]));
  const ClassifiedInstances result = run_pipeline(p, ProbMaps(std::move(q), std::move(type_probs)), cfg);
  io::write_label_map(a.out, result.instances);
  if (!a.types_out.empty()) {
    io::AnnotationFile ann;
    ann.classes = k >= 2 ? classes_for(k) : io::default_classes();
    for (const auto& s : instance_stats(result.instances)) {
      io::Annotation rec{s.label, kUnlabelled, s.centroid, std::nullopt};
      if (const auto it = result.types.find(s.label); it != result.types.end()) {
        rec.type = it->second.class_id;
        rec.probability = it->second.mean_prob;
      }
      ann.instances.push_back(rec);
    }
    io::write_annotations(a.types_out, ann);
  }
}

struct EvalSegArgs {
  std::vector<std::string> gt;
  std::vector<std::string> pred;
  std::string out;
};

void run_eval_seg(const EvalSegArgs& a, std::size_t workers) {
  const auto gt = expand_inputs(a.gt, ".pgm");
  const auto pred = expand_inputs(a.pred, ".pgm");
  if (gt.size() != pred.size()) {
    throw Error(ErrorKind::invalid_argument, std::to_string(gt.size()) + " ground-truth maps but " +
                                                 std::to_string(pred.size()) + " predictions");
  }
  if (gt.empty()) throw Error(ErrorKind::invalid_argument, "no label maps to evaluate");
  std::vector<SegMetrics> per_image(gt.size());
  parallel_for(gt.size(), workers, [&](std::size_t i) {
    const InstanceMap g = io::read_label_map(gt[i]);
    const InstanceMap p = io::read_label_map(pred[i]);
    if (!g.same_shape(p)) {
      throw Error(ErrorKind::dimension_mismatch,
                  gt[i] + " is " + std::to_string(g.height()) + "x" + std::to_string(g.width()) +
                      " but " + pred[i] + " is " + std::to_string(p.height()) + "x" +
                      std::to_string(p.width()));
    }
    per_image[i] = evaluate_segmentation(g, p);
  });
  json report;
  report["images"] = json::array();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    json row = io::to_json(per_image[i]);
    row["gt"] = gt[i];
    row["pred"] = pred[i];
    report["images"].push_back(std::move(row));
  }
  report["average"] = io::to_json(dataset_average(per_image));
  report["count"] = gt.size();
  write_json(a.out, report);
}

struct EvalClassArgs {
  std::vector<std::string> gt;
  std::vector<std::string> pred;
  double radius = 12.0;
  std::string out;
};

void run_eval_class(const EvalClassArgs& a, std::size_t workers) {
  const auto gt = expand_inputs(a.gt, ".json");
  const auto pred = expand_inputs(a.pred, ".json");
  if (gt.size() != pred.size()) {
    throw Error(ErrorKind::invalid_argument, std::to_string(gt.size()) +
                                                 " ground-truth annotation files but " +
                                                 std::to_string(pred.size()) + " predictions");
  }
  if (gt.empty()) throw Error(ErrorKind::invalid_argument, "no annotation files to evaluate");
  std::vector<ClassMetrics> per_image(gt.size());
  parallel_for(gt.size(), workers, [&](std::size_t i) {
    const auto g = io::read_annotations(gt[i]);
    const auto p = io::read_annotations(pred[i]);
    std::set<ClassId> types;
    for (const auto& [id, name] : g.classes) types.insert(id);
    std::vector<Point> gc;
    std::vector<ClassId> gtypes;
    for (const auto& r : g.instances) {
      gc.push_back(r.centroid);
      gtypes.push_back(r.type);
    }
    std::vector<Point> pc;
    std::vector<ClassId> ptypes;
    for (const auto& r : p.instances) {
      pc.push_back(r.centroid);
      ptypes.push_back(r.type);
    }
    const auto det = match_by_radius(gc, pc, a.radius);
    try {
      per_image[i] = classification_scores(det, gtypes, ptypes, types);
    } catch (const Error& e) {
      throw Error(e.kind(), pred[i] + ": " + e.what());
    }
  });
  ClassMetrics pooled;
  for (const auto& m : per_image) accumulate_counts(pooled, m);
  finalize_scores(pooled);

  json report;
  report["radius"] = a.radius;
  report["images"] = json::array();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    json row = io::to_json(per_image[i]);
    row["gt"] = gt[i];
    row["pred"] = pred[i];
    report["images"].push_back(std::move(row));
  }
  report["pooled"] = io::to_json(pooled);
  if (pooled.unlabelled_gt == 0) {
    const auto d = decomposition_check(pooled);
    report["decomposition"] = {{"f_c_all", d.f_c_all},
                               {"f_d_times_accuracy", d.f_d_times_accuracy}};
  }
  write_json(a.out, report);
}

struct TilePlanArgs {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t input = 270;
  std::size_t output = 80;
  std::string out;
};

void run_tile_plan(const TilePlanArgs& a) {
  write_json(a.out, io::to_json(plan_tiles(a.width, a.height, {a.input, a.output})));
}

struct SynthArgs {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void run_synth(const SynthArgs& a, std::size_t workers) {
  io::SynthDatasetConfig cfg = io::synth_config_from_text(io::read_file(a.config), a.config);
  if (a.seed) cfg.scene.seed = *a.seed;
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  parallel_for(cfg.images, workers, [&](std::size_t i) {
    SynthConfig sc = cfg.scene;
    sc.seed = cfg.scene.seed + i;
    const SynthScene scene = synth_scene(sc);
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04zu", i);
    io::write_label_map(dir / (std::string(stem) + ".pgm"), scene.instances);
    io::AnnotationFile ann;
    ann.classes = cfg.scene.classes == 4 ? io::default_classes()
                                         : classes_for(static_cast<std::size_t>(cfg.scene.classes) + 1);
    for (const auto& s : scene.stats) {
      ann.instances.push_back({s.label, scene.type_of.at(s.label), s.centroid, std::nullopt});
    }
    io::write_annotations(dir / (std::string(stem) + ".json"), ann);
  });
}

int report_error(std::string_view kind, const std::string& message) {
  json err;
  err["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << err.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nuclear instance segmentation post-processing and evaluation"};
  app.require_subcommand(1);
  std::size_t workers = 1;
  app.add_option("--workers", workers, "Images processed concurrently")->check(CLI::PositiveNumber);

  GenTargetsArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-targets", "Write HoVer, binary and type targets");
  gen_cmd->add_option("--instances", gen.instances, "Instance label map (16-bit PGM)")->required();
  gen_cmd->add_option("--types", gen.types, "Annotation file with per-instance types")->required();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();

  PostprocArgs post;
  auto* post_cmd = app.add_subcommand("postproc", "Turn predicted maps into instances");
  post_cmd->add_option("--np", post.np, "Nuclear-pixel probability float map")->required();
  post_cmd->add_option("--hover", post.hover, "Horizontal/vertical float map")->required();
  post_cmd->add_option("--nc", post.nc, "Per-class probability float map");
  post_cmd->add_option("--config", post.config, "Post-processing key/value config");
  post_cmd->add_option("--out", post.out, "Output label map (16-bit PGM)")->required();
  post_cmd->add_option("--types-out", post.types_out, "Output annotation file");

  EvalSegArgs seg;
  auto* seg_cmd = app.add_subcommand("eval-seg", "Segmentation metrics per image and averaged");
  seg_cmd->add_option("--gt", seg.gt, "Ground-truth label maps or directories")->required();
  seg_cmd->add_option("--pred", seg.pred, "Predicted label maps or directories")->required();
  seg_cmd->add_option("--out", seg.out, "Report path ('-' for stdout)")->default_val("-");

  EvalClassArgs cls;
  auto* cls_cmd = app.add_subcommand("eval-class", "Detection and classification scores");
  cls_cmd->add_option("--gt-ann", cls.gt, "Ground-truth annotation files or directories")->required();
  cls_cmd->add_option("--pred-ann", cls.pred, "Predicted annotation files or directories")->required();
  cls_cmd->add_option("--radius", cls.radius, "Match radius in pixels (6 at 20x, 12 at 40x)")
      ->default_val(12.0)
      ->check(CLI::PositiveNumber);
  cls_cmd->add_option("--out", cls.out, "Report path ('-' for stdout)")->default_val("-");

  TilePlanArgs tiles;
  auto* tile_cmd = app.add_subcommand("tile-plan", "Plan input/output tiles for an image");
  tile_cmd->add_option("--width", tiles.width)->required()->check(CLI::PositiveNumber);
  tile_cmd->add_option("--height", tiles.height)->required()->check(CLI::PositiveNumber);
  tile_cmd->add_option("--input", tiles.input, "Network input size")->default_val(270);
  tile_cmd->add_option("--output", tiles.output, "Network output size")->default_val(80);
  tile_cmd->add_option("--out", tiles.out, "Plan path ('-' for stdout)")->default_val("-");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic annotated dataset");
  synth_cmd->add_option("--config", synth.config, "Synthetic scene key/value config")->required();
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen_cmd) run_gen_targets(gen);
    if (*post_cmd) run_postproc(post);
    if (*seg_cmd) run_eval_seg(seg, workers);
    if (*cls_cmd) run_eval_class(cls, workers);
    if (*tile_cmd) run_tile_plan(tiles);
    if (*synth_cmd) run_synth(synth, workers);
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
