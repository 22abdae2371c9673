#include "darkdeblur/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "darkdeblur/blur_synth.hpp"
#include "darkdeblur/config.hpp"
#include "darkdeblur/data.hpp"
#include "darkdeblur/errors.hpp"
#include "darkdeblur/log.hpp"
#include "darkdeblur/metrics.hpp"
#include "darkdeblur/model.hpp"
#include "darkdeblur/training.hpp"

namespace darkdeblur::cli {
namespace fs = std::filesystem;

namespace {

void print_config(const std::string& command, const KeyValues& kv) {
  std::cout << "# " << command << " configuration\n" << kv.to_text() << std::flush;
}

std::string path_text(const fs::path& p) { return p.lexically_normal().string(); }

// ---------------------------------------------------------------------------

struct SynthesizeArgs {
  fs::path in;
  fs::path out;
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  bool save_kernels = false;
};

int synthesize(const SynthesizeArgs& args) {
  SynthConfig cfg;
  if (args.config) {
    const KeyValues kv = KeyValues::load(*args.config);
    const auto used = apply_synth_keys(cfg, kv);
    for (const auto& [key, value] : kv.entries()) {
      if (std::find(used.begin(), used.end(), key) == used.end()) {
        throw ConfigError("unknown synthesize config key '" + key + "'");
      }
    }
  }
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();

  const auto inputs = list_images(args.in);
  if (inputs.empty()) throw InputError("no images found in " + args.in.string());

  KeyValues resolved = synth_to_key_values(cfg);
  resolved.set("in", path_text(args.in));
  resolved.set("out", path_text(args.out));
  resolved.set("save_kernels", args.save_kernels ? "true" : "false");
  print_config("synthesize", resolved);

  fs::create_directories(args.out / "blur");
  fs::create_directories(args.out / "sharp");
  if (args.save_kernels) fs::create_directories(args.out / "kernels");

  DatasetManifest manifest;
  manifest.split = "train";
  manifest.source = "synthetic";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Image sharp = load_image(inputs[i]);
    Rng rng(Rng::derive_seed(cfg.seed, i));
    const SynthesizedPair pair = synthesize_pair(sharp, cfg, rng);
    const std::string name = inputs[i].stem().string() + ".png";
    save_image(pair.blurry, args.out / "blur" / name);
    save_image(pair.sharp, args.out / "sharp" / name);
    if (args.save_kernels) save_image(pair.kernel.to_image(), args.out / "kernels" / name);
    manifest.entries.push_back({fs::path("blur") / name, fs::path("sharp") / name});
  }
  manifest.save(args.out / "manifest.tsv");
  log_info("synthesized " + std::to_string(inputs.size()) + " pairs into " + args.out.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AlignArgs {
  fs::path blurry;
  fs::path sharp;
  fs::path out;
  AlignmentOptions options;
};

int align(const AlignArgs& args) {
  KeyValues resolved;
  resolved.set("blurry", path_text(args.blurry));
  resolved.set("sharp", path_text(args.sharp));
  resolved.set("out", path_text(args.out));
  resolved.set("ratio_test", format_double(args.options.ratio_test));
  resolved.set("ransac_threshold", format_double(args.options.ransac_threshold));
  resolved.set("min_inliers", std::to_string(args.options.min_inliers));
  resolved.set("low_confidence_error", format_double(args.options.low_confidence_error));
  print_config("align", resolved);

  const auto blurry_files = list_images(args.blurry);
  if (blurry_files.empty()) throw InputError("no images found in " + args.blurry.string());
  fs::create_directories(args.out / "blur");
  fs::create_directories(args.out / "sharp");
  std::ofstream log(args.out / "alignment_log.jsonl");

  DatasetManifest manifest;
  manifest.source = args.out.filename().string();
  std::size_t failed = 0;
  for (const auto& blurry_path : blurry_files) {
    const std::string id = blurry_path.filename().string();
    const std::string name = blurry_path.stem().string() + ".png";
    nlohmann::ordered_json record{{"image_id", id}};
    try {
      fs::path sharp_path = args.sharp / id;
      if (!fs::exists(sharp_path)) {
        for (const auto& candidate : list_images(args.sharp)) {
          if (candidate.stem() == blurry_path.stem()) sharp_path = candidate;
        }
      }
      if (!fs::exists(sharp_path)) throw InputError("no sharp counterpart for " + id);
      const AlignedPair aligned =
          align_pair(load_image(blurry_path), load_image(sharp_path), args.options);
      save_image(aligned.blurry, args.out / "blur" / name);
      save_image(aligned.sharp, args.out / "sharp" / name);
      manifest.entries.push_back({fs::path("blur") / name, fs::path("sharp") / name});
      const auto& r = aligned.result;
      nlohmann::ordered_json h = nlohmann::json::array();
      for (const auto& row : r.homography) h.push_back(row);
      record["status"] = "ok";
      record["homography"] = h;
      record["matches"] = r.match_count;
      record["inliers"] = r.inlier_count;
      record["mean_reprojection_error"] = r.mean_reprojection_error;
      record["crop"] = {r.crop.x, r.crop.y, r.crop.width, r.crop.height};
      record["low_confidence"] = r.low_confidence;
      if (r.low_confidence) log_warning(id + ": low-confidence alignment");
    } catch (const std::exception& e) {
      ++failed;
      record["status"] = "failed";
      record["reason"] = e.what();
      log_warning(id + ": " + e.what());
    }
    log << record.dump() << "\n";
  }
  manifest.save(args.out / "manifest.tsv");
  if (failed == blurry_files.size()) throw AlignmentError("no pair could be aligned");
  log_info("aligned " + std::to_string(blurry_files.size() - failed) + " of " +
           std::to_string(blurry_files.size()) + " pairs");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::optional<fs::path> config;
  fs::path data;
  fs::path out;
  std::optional<std::string> ablation;
  std::optional<std::int64_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<int> batch_size;
  std::optional<fs::path> resume;
  std::optional<fs::path> vgg_weights;
  bool untrained_extractor = false;
};

int train_command(const TrainArgs& args) {
  TrainConfig cfg;
  if (args.config) cfg.apply(KeyValues::load(*args.config));
  if (args.ablation) cfg.ablation = parse_ablation(*args.ablation);
  if (args.steps) cfg.total_steps = *args.steps;
  if (args.seed) cfg.seed = *args.seed;
  if (args.batch_size) cfg.batch_size = *args.batch_size;
  cfg.generator = variant_config(cfg.ablation, cfg.generator);
  cfg.validate();

  std::shared_ptr<FeatureExtractor> extractor;
  if (uses_multi_term_loss(cfg.ablation)) {
    extractor = resolve_perceptual_extractor(args.vgg_weights, args.untrained_extractor, cfg.seed);
  }

  KeyValues resolved = cfg.to_key_values();
  resolved.set("data", path_text(args.data));
  resolved.set("out", path_text(args.out));
  resolved.set("resume", args.resume ? path_text(*args.resume) : "none");
  resolved.set("perceptual_extractor", extractor ? extractor->name() : "none");
  print_config("train", resolved);

  const torch::Device device = select_device();
  PatchSpec patches{cfg.patch_size, cfg.patch_size};
  SynthConfig synth = cfg.synth;
  synth.seed = cfg.seed;
  TrainingStream stream = TrainingStream::open(args.data, patches, synth, cfg.batch_size, cfg.seed);
  log_info(std::to_string(stream.patches_per_epoch()) + " patches per epoch, " +
           std::to_string(stream.batches_per_epoch()) + " batches");
  const Trainer trainer = train(cfg, stream, args.out, args.resume, extractor, device);
  log_info("finished at step " + std::to_string(trainer.step()) + "; checkpoints in " +
           args.out.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  fs::path ckpt;
  fs::path in;
  fs::path out;
};

bool looks_like_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

int infer(const InferArgs& args) {
  KeyValues resolved;
  resolved.set("ckpt", path_text(args.ckpt));
  resolved.set("in", path_text(args.in));
  resolved.set("out", path_text(args.out));
  print_config("infer", resolved);

  const torch::Device device = select_device();
  Generator generator = load_generator(args.ckpt, device);

  if (!fs::exists(args.in)) throw InputError("input not found: " + args.in.string());
  if (fs::is_regular_file(args.in)) {
    const fs::path target =
        looks_like_image_file(args.out) ? args.out : args.out / args.in.filename();
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    save_image(deblur(generator, load_image(args.in), device), target);
    return kExitOk;
  }

  const auto inputs = list_images(args.in);
  if (inputs.empty()) throw InputError("no images found in " + args.in.string());
  fs::create_directories(args.out);
  std::size_t failed = 0;
  for (const auto& path : inputs) {
    try {
      save_image(deblur(generator, load_image(path), device), args.out / path.filename());
    } catch (const std::exception& e) {
      ++failed;
      log_warning(path.filename().string() + ": " + e.what());
    }
  }
  log_info("deblurred " + std::to_string(inputs.size() - failed) + " of " +
           std::to_string(inputs.size()) + " images");
  if (failed == inputs.size()) throw InputError("every input failed");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  fs::path manifest;
  std::optional<fs::path> ckpt;
  std::optional<fs::path> outputs_dir;
  std::optional<fs::path> report;
  std::optional<std::string> method;
  std::optional<std::string> dataset;
};

int evaluate_command(const EvaluateArgs& args) {
  if (!args.ckpt == !args.outputs_dir) {
    throw ConfigError("evaluate needs exactly one of --ckpt or --outputs-dir");
  }
  const DatasetManifest manifest = DatasetManifest::load(args.manifest);
  const std::string method =
      args.method ? *args.method
                  : (args.ckpt ? args.ckpt->stem().string() : args.outputs_dir->filename().string());

  KeyValues resolved;
  resolved.set("manifest", path_text(args.manifest));
  resolved.set("source", args.ckpt ? "ckpt:" + path_text(*args.ckpt)
                                   : "outputs:" + path_text(*args.outputs_dir));
  resolved.set("method", method);
  resolved.set("dataset", args.dataset.value_or(manifest.source));
  resolved.set("report", args.report ? path_text(*args.report) : "stdout");
  print_config("evaluate", resolved);

  EvalReport report;
  if (args.ckpt) {
    const torch::Device device = select_device();
    Generator generator = load_generator(*args.ckpt, device);
    report = evaluate([&](const Image& blurry) { return deblur(generator, blurry, device); },
                      manifest, method);
  } else {
    report = evaluate_outputs(*args.outputs_dir, manifest, method);
  }
  if (args.dataset) report.dataset = *args.dataset;

  std::cout << report.to_table();
  if (args.report) {
    if (args.report->has_parent_path()) fs::create_directories(args.report->parent_path());
    std::ofstream(*args.report) << report.to_json() << "\n";
  }
  if (report.records.empty()) throw InputError("no image could be evaluated");
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Low-light motion deblurring toolkit", "darkdeblur"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SynthesizeArgs syn;
  auto* syn_cmd = app.add_subcommand("synthesize", "Blur sharp images with random camera-shake kernels");
  syn_cmd->add_option("--in", syn.in, "Directory of sharp images")->required();
  syn_cmd->add_option("--out", syn.out, "Output directory (blur/, sharp/, manifest.tsv)")->required();
  syn_cmd->add_option("--config", syn.config, "Synthesis config file (key = value)");
  syn_cmd->add_option("--seed", syn.seed, "Random seed");
  syn_cmd->add_flag("--save-kernels", syn.save_kernels, "Also write the kernels as images");

  AlignArgs al;
  auto* al_cmd = app.add_subcommand("align", "Register real blurry/sharp pairs by homography");
  al_cmd->add_option("--blurry", al.blurry, "Directory of blurry captures")->required();
  al_cmd->add_option("--sharp", al.sharp, "Directory of sharp captures (same filenames)")->required();
  al_cmd->add_option("--out", al.out, "Output directory")->required();
  al_cmd->add_option("--ratio", al.options.ratio_test, "Lowe ratio-test threshold");
  al_cmd->add_option("--ransac-threshold", al.options.ransac_threshold, "RANSAC inlier threshold (px)");
  al_cmd->add_option("--min-inliers", al.options.min_inliers, "Minimum RANSAC inliers");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a deblurring model");
  tr_cmd->add_option("--data", tr.data, "Sharp-image directory or pair manifest")->required();
  tr_cmd->add_option("--out", tr.out, "Run directory for logs and checkpoints")->required();
  tr_cmd->add_option("--config", tr.config, "Training config file (key = value)");
  tr_cmd->add_option("--ablation", tr.ablation, "Variant: base, ca, cg or full");
  tr_cmd->add_option("--steps", tr.steps, "Total optimisation steps");
  tr_cmd->add_option("--seed", tr.seed, "Random seed");
  tr_cmd->add_option("--batch-size", tr.batch_size, "Patches per step");
  tr_cmd->add_option("--resume", tr.resume, "Checkpoint to resume from");
  tr_cmd->add_option("--vgg-weights", tr.vgg_weights, "TorchScript VGG-19 features file");
  tr_cmd->add_flag("--untrained-extractor", tr.untrained_extractor,
                   "Allow a randomly initialised perceptual network when no weights exist");

  InferArgs inf;
  auto* inf_cmd = app.add_subcommand("infer", "Deblur an image or a directory of images");
  inf_cmd->add_option("--ckpt", inf.ckpt, "Checkpoint file")->required();
  inf_cmd->add_option("--in", inf.in, "Image file or directory")->required();
  inf_cmd->add_option("--out", inf.out, "Output directory (or file for a single image)")->required();

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Score restorations with PSNR, SSIM and CIEDE2000");
  ev_cmd->add_option("--manifest", ev.manifest, "Pair manifest (blurry<TAB>sharp)")->required();
  ev_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint to run on the blurry side");
  ev_cmd->add_option("--outputs-dir", ev.outputs_dir, "Pre-computed outputs named like the inputs");
  ev_cmd->add_option("--report", ev.report, "Write the JSON report here");
  ev_cmd->add_option("--method", ev.method, "Method label in the report");
  ev_cmd->add_option("--dataset", ev.dataset, "Dataset label in the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*syn_cmd) return synthesize(syn);
    if (*al_cmd) return align(al);
    if (*tr_cmd) return train_command(tr);
    if (*inf_cmd) return infer(inf);
    if (*ev_cmd) return evaluate_command(ev);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"darkdeblur"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace darkdeblur::cli
