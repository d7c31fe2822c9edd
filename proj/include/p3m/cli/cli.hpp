#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "p3m/anonymize/obfuscate.hpp"
#include "p3m/core/io.hpp"
#include "p3m/core/parallel.hpp"
#include "p3m/datapipe/dataset.hpp"
#include "p3m/datapipe/synthetic.hpp"
#include "p3m/datapipe/trimap.hpp"
#include "p3m/metrics/report.hpp"
#include "p3m/p3mcp/library.hpp"
#include "p3m/trainer/trainer.hpp"

namespace p3m::cli {

namespace fs = std::filesystem;

// Flags shared by every subcommand.
struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 1;
  std::string device = "cpu";
  std::string out;
};

inline void add_common(CLI::App* cmd, Common& c, bool out_required = false) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "random seed");
  cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--device", c.device, "compute device")->check(CLI::IsMember({"cpu"}));
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
}

namespace detail {

inline std::string stem_name(const char* prefix, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

// Images live in dir/original/ when present, else directly in dir.
inline std::map<std::string, fs::path> images_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFound("no such directory: " + dir.string());
  return fs::is_directory(dir / "original") ? p3m::detail::rasters_by_stem(dir / "original")
                                            : p3m::detail::rasters_by_stem(dir);
}

inline std::optional<fs::path> landmark_sidecar(const fs::path& root, const std::string& stem) {
  for (const auto& p : {root / "landmarks" / (stem + ".landmarks.json"), root / "original" / (stem + ".landmarks.json"),
                        root / (stem + ".landmarks.json")})
    if (fs::is_regular_file(p)) return p;
  return std::nullopt;
}

inline ObfuscationConfig obfuscation_config(const std::string& path) {
  ObfuscationConfig oc;
  if (path.empty()) return oc;
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    const auto o = j.value("obfuscation", j);
    if (o.contains("method")) oc.method = parse_obfuscation(o.at("method").get<std::string>());
    p3m::detail::read_opt(o, "blur_sigma_fraction", oc.blur_sigma_fraction);
    p3m::detail::read_opt(o, "mosaic_cell_fraction", oc.mosaic_cell_fraction);
    p3m::detail::read_opt(o, "min_mosaic_cell", oc.min_mosaic_cell);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return oc;
}

}  // namespace detail

// original/ + mask/ + landmark sidecars (or manual facemask/ PNGs) in, the
// same layout with obfuscated images and <stem>.facemask.png out.
inline nlohmann::json cmd_obfuscate(const fs::path& in, const Common& c, const std::optional<std::string>& method) {
  ObfuscationConfig oc = detail::obfuscation_config(c.config);
  if (method) oc.method = parse_obfuscation(*method);
  oc.validate();
  const auto images = detail::images_in(in);
  const auto alphas = p3m::detail::rasters_by_stem(in / "mask");
  std::map<std::string, fs::path> manual;
  for (const auto& e : fs::is_directory(in / "facemask") ? fs::directory_iterator(in / "facemask") : fs::directory_iterator())
    if (e.is_regular_file() && p3m::detail::is_raster(e.path())) manual[p3m::detail::facemask_stem(e.path())] = e.path();
  std::vector<std::pair<std::string, fs::path>> jobs(images.begin(), images.end());
  for (const auto& [stem, p] : jobs) {
    if (!alphas.count(stem)) throw MissingAnnotation("no alpha matte for " + stem + " under " + (in / "mask").string());
    if (!manual.count(stem) && !detail::landmark_sidecar(in, stem))
      throw MissingAnnotation("no landmarks or facemask for " + stem);
  }
  const fs::path out(c.out);
  fs::create_directories(out / "original");
  fs::create_directories(out / "mask");
  fs::create_directories(out / "facemask");
  std::vector<std::size_t> masked(jobs.size());
  parallel_for(jobs.size(), c.workers, [&](std::size_t i) {
    const auto& [stem, path] = jobs[i];
    const ImageRGB img = load_image(path);
    const AlphaMatte alpha = load_alpha(alphas.at(stem));
    const std::uint64_t seed = c.seed * 1000003ULL + i;
    ObfuscationResult r = manual.count(stem)
                              ? obfuscate_with_mask(img, load_mask(manual.at(stem)), alpha, oc, seed)
                              : obfuscate(img, load_landmarks(*detail::landmark_sidecar(in, stem)), alpha, oc, seed);
    save_image(out / "original" / (stem + ".png"), r.image);
    fs::copy_file(alphas.at(stem), out / "mask" / alphas.at(stem).filename(), fs::copy_options::overwrite_existing);
    save_mask(out / "facemask" / (stem + ".facemask.png"), r.private_area);
    for (auto v : r.private_area.data()) masked[i] += v != 0;
  });
  std::size_t total = 0;
  for (auto m : masked) total += m;
  return {{"command", "obfuscate"}, {"images", jobs.size()}, {"method", to_string(oc.method)}, {"masked_pixels", total}};
}

inline nlohmann::json cmd_make_trimaps(const fs::path& root, const Common& c, int kernel) {
  const auto alphas = p3m::detail::rasters_by_stem(root / "mask");
  if (alphas.empty()) throw NotFound("no alpha mattes under " + (root / "mask").string());
  const fs::path out = c.out.empty() ? root / "trimap" : fs::path(c.out);
  fs::create_directories(out);
  std::vector<std::pair<std::string, fs::path>> jobs(alphas.begin(), alphas.end());
  parallel_for(jobs.size(), c.workers, [&](std::size_t i) {
    save_trimap(out / (jobs[i].first + ".png"), trimap_from_alpha(load_alpha(jobs[i].second), kernel));
  });
  return {{"command", "make-trimaps"}, {"trimaps", jobs.size()}, {"kernel", kernel}, {"out", out.string()}};
}

struct TrainFlags {
  std::optional<long long> max_steps;
  bool toy = false;
};

inline nlohmann::json cmd_train(const Common& c, const TrainFlags& f) {
  if (c.config.empty()) throw ConfigError("train needs --config");
  TrainConfig cfg = load_train_config(c.config);
  if (f.toy && !cfg.toy) cfg.apply_toy();
  if (c.seed_set) cfg.seed = c.seed;
  if (c.workers > 1) cfg.workers = c.workers;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (f.max_steps) cfg.max_steps = *f.max_steps;
  if (cfg.data_root.empty()) throw ConfigError("data.root is not set (config or P3M_DATA_ROOT)");
  Trainer<float> trainer(cfg);
  const FitResult r = trainer.fit();
  nlohmann::json ck = nlohmann::json::array(), rep = nlohmann::json::array();
  for (const auto& p : r.checkpoints) ck.push_back(p.string());
  for (const auto& p : r.reports) rep.push_back(p.string());
  return {{"command", "train"},
          {"steps", r.steps},
          {"final_loss", r.last.total},
          {"checkpoints", ck},
          {"reports", rep},
          {"log", (fs::path(cfg.out_dir) / "train_log.jsonl").string()}};
}

struct EvalFlags {
  std::string pred, gt, trimap, name = "scores", protocol = "custom";
  int kernel = 25;
};

inline nlohmann::json cmd_eval(const Common& c, const EvalFlags& f) {
  const auto preds = p3m::detail::rasters_by_stem(f.pred);
  const auto gts = p3m::detail::rasters_by_stem(f.gt);
  if (gts.empty()) throw NotFound("no ground-truth mattes under " + f.gt);
  const auto tris = f.trimap.empty() ? std::map<std::string, fs::path>{} : p3m::detail::rasters_by_stem(f.trimap);
  std::vector<std::pair<std::string, fs::path>> jobs(gts.begin(), gts.end());
  for (const auto& [stem, p] : jobs) {
    if (!preds.count(stem)) throw NotFound("no prediction for " + stem + " under " + f.pred);
    if (!f.trimap.empty() && !tris.count(stem)) throw NotFound("no trimap for " + stem + " under " + f.trimap);
  }
  std::vector<ImageScore> rows(jobs.size());
  parallel_for(jobs.size(), c.workers, [&](std::size_t i) {
    const auto& stem = jobs[i].first;
    const AlphaMatte gt = load_alpha(jobs[i].second);
    const AlphaMatte pred = load_alpha(preds.at(stem));
    if (!gt.same_spatial(pred)) throw ShapeError(stem + ": prediction and ground truth differ in size");
    const Trimap t = f.trimap.empty() ? trimap_from_alpha(gt, f.kernel) : load_trimap(tris.at(stem));
    rows[i] = {stem, evaluate(pred, gt, t)};
  });
  nlohmann::json settings{{"trimap", f.trimap.empty() ? "from_alpha" : "files"}};
  if (f.trimap.empty()) settings["trimap_kernel"] = f.kernel;
  if (!c.out.empty()) write_report(c.out, f.name, f.protocol, rows, settings);
  auto j = aggregate_json(f.protocol, rows, settings);
  j["command"] = "eval";
  return j;
}

inline nlohmann::json cmd_infer(const Common& c, const std::string& checkpoint, const fs::path& in, int canvas) {
  const auto model = load_model(checkpoint);
  const auto images = detail::images_in(in);
  std::vector<std::pair<std::string, fs::path>> jobs(images.begin(), images.end());
  fs::create_directories(c.out);
  parallel_for(jobs.size(), c.workers, [&](std::size_t i) {
    save_alpha(fs::path(c.out) / (jobs[i].first + ".png"), infer_alpha(*model, load_image(jobs[i].second), canvas));
  });
  return {{"command", "infer"}, {"images", jobs.size()}, {"out", c.out}};
}

// Grid rows of [target | merged | merged with the blur mask tinted].
inline nlohmann::json cmd_cp_preview(const Common& c, const std::string& library, const fs::path& in, int count) {
  CPConfig cp;
  if (!c.config.empty()) cp = load_train_config(c.config).cp;
  cp.mode = CPMode::kICP;
  cp.probability = 1.0;
  const auto lib = load_source_library(library);
  if (lib.empty()) throw ConfigError("source library " + library + " holds no usable faces");
  fs::path root = in;
  const auto recs = scan_dataset(root, Split::kTrain);
  std::mt19937_64 rng(c.seed);
  fs::create_directories(c.out);
  std::size_t written = 0, skipped = 0;
  for (int k = 0; k < count && !recs.empty(); ++k) {
    const Sample s = load_sample(recs[k % recs.size()]);
    std::vector<CPSample> one{{s.image, s.facemask}};
    const ICPStats st = icp_apply(one, lib, rng, cp);
    skipped += st.skipped;
    const int h = s.image.height(), w = s.image.width();
    ImageRGB grid(h, 3 * w);
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < h; ++r)
        for (int x = 0; x < w; ++x) {
          grid.at(ch, r, x) = s.image.at(ch, r, x);
          grid.at(ch, r, w + x) = one[0].image.at(ch, r, x);
          const float m = one[0].image.at(ch, r, x);
          grid.at(ch, r, 2 * w + x) = s.facemask(r, x) ? 0.5f * m + (ch == 1 ? 0.5f : 0.0f) : m;
        }
    save_image(fs::path(c.out) / (detail::stem_name("preview", k) + ".png"), grid);
    ++written;
  }
  return {{"command", "cp-preview"}, {"previews", written}, {"skipped", skipped}};
}

inline nlohmann::json cmd_report(const Common& c, const std::vector<std::string>& inputs, const std::string& name,
                                 const std::string& protocol) {
  std::vector<ImageScore> rows;
  std::map<std::string, std::string> seen;
  for (const auto& in : inputs) {
    std::vector<fs::path> files;
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in))
        if (e.path().extension() == ".csv") files.push_back(e.path());
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(in);
    }
    for (const auto& f : files)
      for (auto& r : parse_scores_csv(read_text(f))) {
        if (auto [it, fresh] = seen.emplace(r.stem, f.string()); !fresh)
          throw FormatError("image " + r.stem + " appears in both " + it->second + " and " + f.string());
        rows.push_back(std::move(r));
      }
  }
  if (rows.empty()) throw NotFound("no score rows found");
  if (!c.out.empty()) write_report(c.out, name, protocol, rows);
  auto j = aggregate_json(protocol, rows, nlohmann::json::object());
  j["command"] = "report";
  return j;
}

inline nlohmann::json cmd_make_synthetic(const Common& c, int n_train, int n_val, int size, const std::string& method) {
  const auto L = write_synthetic_dataset(c.out, n_train, n_val, size, c.seed, parse_obfuscation(method));
  return {{"command", "make-synthetic"},
          {"train", L.train.string()},
          {"val_p", L.val_p.string()},
          {"val_np", L.val_np.string()},
          {"library", L.library.string()}};
}

inline nlohmann::json cmd_import_faces(const Common& c, const std::string& in) {
  const ImportStats st = import_part_annotations(in, c.out);
  return {{"command", "import-faces"}, {"written", st.written}, {"skipped", st.skipped}};
}

// Exit codes: 0 success, 1 runtime failure (JSON error on err), 2 bad usage.
inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Privacy-preserving portrait matting toolkit", "p3m"};
  app.require_subcommand(1);
  Common common;

  auto* ob = app.add_subcommand("obfuscate", "blur, mosaic or mask faces of a dataset split");
  std::string ob_in;
  std::optional<std::string> ob_method;
  ob->add_option("--in", ob_in, "dataset directory with original/, mask/ and landmarks")->required()->check(CLI::ExistingDirectory);
  ob->add_option("--method", ob_method, "blur|mosaic|zero")->check(CLI::IsMember({"blur", "mosaic", "zero"}));
  add_common(ob, common, true);

  auto* mt = app.add_subcommand("make-trimaps", "write trimap/ from mask/");
  std::string mt_in;
  int mt_kernel = 25;
  mt->add_option("--in", mt_in, "dataset directory")->required()->check(CLI::ExistingDirectory);
  mt->add_option("--kernel", mt_kernel, "odd dilation kernel in pixels");
  add_common(mt, common);

  auto* tr = app.add_subcommand("train", "train a model from a config file");
  TrainFlags tf;
  tr->add_option("--max-steps", tf.max_steps, "stop after this many steps");
  tr->add_flag("--toy", tf.toy, "apply the small-scale overrides");
  add_common(tr, common);

  auto* ev = app.add_subcommand("eval", "score predicted mattes against ground truth");
  EvalFlags ef;
  ev->add_option("--pred", ef.pred, "predicted alpha directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", ef.gt, "ground-truth alpha directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--trimap", ef.trimap, "trimap directory (default: derived from gt)")->check(CLI::ExistingDirectory);
  ev->add_option("--kernel", ef.kernel, "trimap kernel when deriving from gt");
  ev->add_option("--name", ef.name, "report file name");
  ev->add_option("--protocol", ef.protocol, "protocol label");
  add_common(ev, common);

  auto* in = app.add_subcommand("infer", "predict alpha mattes for a directory of images");
  std::string in_ckpt, in_dir;
  int in_canvas = 0;
  in->add_option("--checkpoint", in_ckpt, "trainer checkpoint")->required()->check(CLI::ExistingFile);
  in->add_option("--in", in_dir, "image directory")->required()->check(CLI::ExistingDirectory);
  in->add_option("--canvas", in_canvas, "square inference size (0: round to 32)");
  add_common(in, common, true);

  auto* cp = app.add_subcommand("cp-preview", "write copy-paste merge previews");
  std::string cp_lib, cp_in;
  int cp_count = 8;
  cp->add_option("--library", cp_lib, "source face library")->required()->check(CLI::ExistingDirectory);
  cp->add_option("--in", cp_in, "target dataset directory with facemask/")->required()->check(CLI::ExistingDirectory);
  cp->add_option("--count", cp_count, "number of previews")->check(CLI::PositiveNumber);
  add_common(cp, common, true);

  auto* rp = app.add_subcommand("report", "merge per-image score CSVs into an aggregate report");
  std::vector<std::string> rp_in;
  std::string rp_name = "report", rp_protocol = "custom";
  rp->add_option("--in", rp_in, "CSV files or directories")->required()->check(CLI::ExistingPath);
  rp->add_option("--name", rp_name, "report file name");
  rp->add_option("--protocol", rp_protocol, "protocol label");
  add_common(rp, common);

  auto* ms = app.add_subcommand("make-synthetic", "write a procedural portrait dataset");
  int ms_train = 8, ms_val = 4, ms_size = 64;
  std::string ms_method = "blur";
  ms->add_option("--train", ms_train, "training images")->check(CLI::NonNegativeNumber);
  ms->add_option("--val", ms_val, "validation images per split")->check(CLI::NonNegativeNumber);
  ms->add_option("--size", ms_size, "image side")->check(CLI::Range(32, 4096));
  ms->add_option("--method", ms_method, "obfuscation method")->check(CLI::IsMember({"blur", "mosaic", "zero"}));
  add_common(ms, common, true);

  auto* im = app.add_subcommand("import-faces", "build a source face library from part annotations");
  std::string im_in;
  im->add_option("--in", im_in, "archive with images/ and parts/")->required()->check(CLI::ExistingDirectory);
  add_common(im, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    nlohmann::json result;
    if (*ob) result = cmd_obfuscate(ob_in, common, ob_method);
    else if (*mt) result = cmd_make_trimaps(mt_in, common, mt_kernel);
    else if (*tr) result = cmd_train(common, tf);
    else if (*ev) result = cmd_eval(common, ef);
    else if (*in) result = cmd_infer(common, in_ckpt, in_dir, in_canvas);
    else if (*cp) result = cmd_cp_preview(common, cp_lib, cp_in, cp_count);
    else if (*rp) result = cmd_report(common, rp_in, rp_name, rp_protocol);
    else if (*ms) result = cmd_make_synthetic(common, ms_train, ms_val, ms_size, ms_method);
    else if (*im) result = cmd_import_faces(common, im_in);
    out << result.dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    err << nlohmann::json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << '\n';
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", {{"kind", "InternalError"}, {"message", e.what()}}}}.dump() << '\n';
  }
  return 1;
}

}  // namespace p3m::cli
