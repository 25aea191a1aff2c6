// sdt - text-image super-resolution and deblurring toolkit.
//
// Subcommands: degrade, train, infer, eval-iqa, eval-ocr, gradcheck.
// Exit codes: 0 success, 2 invalid arguments/config, 3 I/O failure,
// 4 model-file failure, 5 external-tool failure (1 for anything else,
// including a failed gradcheck).

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "sdt/degrade.hpp"
#include "sdt/errors.hpp"
#include "sdt/gradcheck.hpp"
#include "sdt/image.hpp"
#include "sdt/iqa.hpp"
#include "sdt/model.hpp"
#include "sdt/model_io.hpp"
#include "sdt/ocreval.hpp"
#include "sdt/pipeline.hpp"
#include "sdt/png_io.hpp"
#include "sdt/train.hpp"
#include "sdt/version.hpp"

namespace {

using nlohmann::json;

std::string format6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw sdt::IoError("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out.flush()) throw sdt::IoError("failed to write '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw sdt::IoError("failed to move '" + tmp + "' into place");
}

// Every run drops a JSON manifest (resolved config, seed, tool version)
// next to its outputs so results can be reproduced.
void write_run_manifest(const std::string& path, const std::string& command,
                        const json& config, std::uint64_t seed) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["seed"] = seed;
  manifest["tool_version"] = sdt::kVersion;
  write_text_atomic(path, manifest.dump(2) + "\n");
}

struct DegradeArgs {
  std::string in_dir, out_dir, kind = "motion";
  int scale = 2;
  double length = -1.0, angle = -1.0, radius = -1.0;  // <0 means "draw"
  std::uint64_t seed = 0;
};

int run_degrade(const DegradeArgs& args) {
  const std::vector<std::string> names = sdt::list_pngs(args.in_dir);
  if (names.empty())
    throw sdt::IoError("no PNG files found in '" + args.in_dir + "'");
  std::filesystem::create_directories(args.out_dir);

  const sdt::BlurKind kind = args.kind == "motion"  ? sdt::BlurKind::Motion
                             : args.kind == "defocus" ? sdt::BlurKind::Defocus
                                                      : sdt::BlurKind::None;
  std::string manifest = "stem,kind,length,angle,radius,scale,seed\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string stem =
        names[i].substr(0, names[i].size() - 4);  // drop ".png"
    sdt::Image<float> img = sdt::to_luma(
        sdt::load_png<float>(args.in_dir + "/" + names[i]));

    if (img.width % args.scale != 0 || img.height % args.scale != 0) {
      const int cw = img.width - img.width % args.scale;
      const int ch = img.height - img.height % args.scale;
      if (cw == 0 || ch == 0)
        throw std::invalid_argument("'" + names[i] +
                                    "' is smaller than the scale factor");
      img = sdt::crop(img, (img.width - cw) / 2, (img.height - ch) / 2, cw,
                      ch);
    }

    sdt::DegradeConfig cfg;
    cfg.kind = kind;
    cfg.scale = args.scale;
    cfg.seed = args.seed;
    cfg.length = 0.0;
    cfg.angle = 0.0;
    cfg.radius = 0.0;
    if (kind != sdt::BlurKind::None) {
      sdt::Rng rng(sdt::derive_seed(args.seed, 0xde6ade, i));
      if (kind == sdt::BlurKind::Motion) {
        cfg.length = args.length >= 0 ? args.length : rng.uniform(3.0, 15.0);
        cfg.angle = args.angle >= 0 ? args.angle : rng.uniform(0.0, 180.0);
      } else {
        cfg.radius = args.radius >= 0 ? args.radius : rng.uniform(1.0, 4.0);
      }
    }

    auto [lr, hr] = sdt::degrade_pair(img, cfg);
    sdt::save_png(args.out_dir + "/" + stem + "_lr.png", lr);
    sdt::save_png(args.out_dir + "/" + stem + "_hr.png", hr);

    char row[256];
    std::snprintf(row, sizeof row, "%s,%s,%.6g,%.6g,%.6g,%d,%" PRIu64 "\n",
                  stem.c_str(), args.kind.c_str(), cfg.length, cfg.angle,
                  cfg.radius, args.scale, args.seed);
    manifest += row;
  }
  write_text_atomic(args.out_dir + "/manifest.csv", manifest);

  json config;
  config["in"] = args.in_dir;
  config["out"] = args.out_dir;
  config["kind"] = args.kind;
  config["scale"] = args.scale;
  if (args.length >= 0) config["length"] = args.length;
  if (args.angle >= 0) config["angle"] = args.angle;
  if (args.radius >= 0) config["radius"] = args.radius;
  config["images"] = names.size();
  write_run_manifest(args.out_dir + "/run_manifest.json", "degrade", config,
                     args.seed);
  std::fprintf(stderr, "degraded %zu image(s) into %s\n", names.size(),
               args.out_dir.c_str());
  return 0;
}

struct TrainArgs {
  std::string data_dir, out_path, mode = "sdt", profile = "table1";
  std::string log_path;
  int scale = 2, steps = 0, batch = 20, patch = 32, patches_per_image = 20;
  int threads = 0;
  double lr = 0.002, dropout_keep = 0.8;
  std::uint64_t seed = 0;
  // Architecture overrides (negative = keep profile default).
  int feature_layers = -1, first_filters = -1, last_filters = -1;
  int recon_a1 = -1, recon_b1 = -1, recon_b2 = -1;
  double gamma = -1.0;
};

sdt::ModelConfig model_config_from(const TrainArgs& args) {
  sdt::ModelConfig cfg;
  cfg.scale = args.scale;
  if (args.profile == "desk") {
    // Reduced profile for laptop-scale experiments: a 4-layer cascade with
    // filter counts 64/48/38/32 and the standard reconstruction head.
    cfg.feature_filters = {64, 48, 38, 32};
    cfg.feature_layers = 4;
    cfg.first_filters = 64;
    cfg.last_filters = 32;
  } else if (args.profile != "table1") {
    throw std::invalid_argument("unknown profile '" + args.profile + "'");
  }
  if (args.feature_layers > 0) {
    cfg.feature_layers = args.feature_layers;
    cfg.feature_filters.clear();
  }
  if (args.first_filters > 0) {
    cfg.first_filters = args.first_filters;
    cfg.feature_filters.clear();
  }
  if (args.last_filters > 0) {
    cfg.last_filters = args.last_filters;
    cfg.feature_filters.clear();
  }
  if (args.gamma > 0) {
    cfg.filter_decay_gamma = args.gamma;
    cfg.feature_filters.clear();
  }
  if (args.recon_a1 > 0) cfg.recon_a1 = args.recon_a1;
  if (args.recon_b1 > 0) cfg.recon_b1 = args.recon_b1;
  if (args.recon_b2 > 0) cfg.recon_b2 = args.recon_b2;
  cfg.dropout_keep = args.dropout_keep;
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& args) {
  const sdt::ModelConfig mcfg = model_config_from(args);
  sdt::TrainConfig tcfg;
  tcfg.mode = args.mode == "st" ? sdt::TrainMode::ST : sdt::TrainMode::SDT;
  tcfg.steps = args.steps;
  tcfg.batch = args.batch;
  tcfg.learning_rate = args.lr;
  tcfg.dropout_keep = args.dropout_keep;
  tcfg.threads = args.threads > 0
                     ? args.threads
                     : std::max(1u, std::thread::hardware_concurrency());
  tcfg.seed = args.seed;
  tcfg.validate();

  std::fprintf(stderr, "loading patches from %s ...\n", args.data_dir.c_str());
  const std::vector<sdt::PatchPair<float>> dataset =
      sdt::build_patch_dataset<float>(args.data_dir, args.patch,
                                      args.patches_per_image, args.seed);
  std::fprintf(stderr, "training on %zu patch pairs (%d steps, batch %d)\n",
               dataset.size(), tcfg.steps, tcfg.batch);

  const auto progress = [&](int step, double loss) {
    if (step == 1 || step % 50 == 0 || step == tcfg.steps)
      std::fprintf(stderr, "step %d  loss %.6g\n", step, loss);
    return true;
  };
  const sdt::TrainResult<float> result =
      sdt::train(dataset, mcfg, tcfg, progress);

  sdt::save_model(args.out_path, result.weights, mcfg);

  std::string log_path = args.log_path;
  if (log_path.empty()) {
    std::filesystem::path p(args.out_path);
    p.replace_extension(".loss.csv");
    log_path = p.string();
  }
  std::string log_text = "step,loss\n";
  for (std::size_t i = 0; i < result.loss_log.size(); ++i) {
    char row[64];
    std::snprintf(row, sizeof row, "%zu,%.9g\n", i + 1, result.loss_log[i]);
    log_text += row;
  }
  write_text_atomic(log_path, log_text);

  json config;
  config["data"] = args.data_dir;
  config["mode"] = args.mode;
  config["scale"] = args.scale;
  config["steps"] = args.steps;
  config["batch"] = args.batch;
  config["lr"] = args.lr;
  config["patch"] = args.patch;
  config["patches_per_image"] = args.patches_per_image;
  config["dropout_keep"] = args.dropout_keep;
  config["threads"] = tcfg.threads;
  config["profile"] = args.profile;
  config["out"] = args.out_path;
  config["log"] = log_path;
  config["feature_filters"] = mcfg.filters();
  write_run_manifest(args.out_path + ".run.json", "train", config, args.seed);
  return 0;
}

int run_infer(const std::string& model_path, const std::string& in_path,
              const std::string& out_path) {
  auto [weights, cfg] = sdt::load_model(model_path);
  const sdt::Image<float> input = sdt::load_png<float>(in_path);
  const sdt::Image<float> output = sdt::infer_image(weights, cfg, input);
  sdt::save_png(out_path, output);

  json config;
  config["model"] = model_path;
  config["in"] = in_path;
  config["out"] = out_path;
  config["scale"] = cfg.scale;
  write_run_manifest(out_path + ".run.json", "infer", config, 0);
  return 0;
}

// Filenames present in both directories, sorted; complains (stderr) about
// unmatched ones.
std::vector<std::string> matched_names(const std::string& ref_dir,
                                       const std::string& test_dir) {
  const std::vector<std::string> ref = sdt::list_pngs(ref_dir);
  const std::vector<std::string> test = sdt::list_pngs(test_dir);
  const std::set<std::string> test_set(test.begin(), test.end());
  std::vector<std::string> matched;
  for (const std::string& name : ref) {
    if (test_set.count(name))
      matched.push_back(name);
    else
      std::fprintf(stderr, "warning: '%s' has no counterpart in %s\n",
                   name.c_str(), test_dir.c_str());
  }
  if (matched.empty())
    throw sdt::IoError("no matching PNG pairs between '" + ref_dir +
                       "' and '" + test_dir + "'");
  return matched;
}

int run_eval_iqa(const std::string& ref_dir, const std::string& test_dir,
                 const std::string& out_path) {
  const std::vector<std::string> names = matched_names(ref_dir, test_dir);
  std::string csv = "name,psnr,ssim,ifc,vif\n";
  for (const std::string& name : names) {
    const sdt::Image<double> ref =
        sdt::to_luma(sdt::load_png<double>(ref_dir + "/" + name));
    const sdt::Image<double> test =
        sdt::to_luma(sdt::load_png<double>(test_dir + "/" + name));
    const sdt::IqaReport r = sdt::evaluate_iqa(ref, test);
    csv += name + "," + format6(r.psnr) + "," + format6(r.ssim) + "," +
           format6(r.ifc) + "," + format6(r.vif) + "\n";
  }
  write_text_atomic(out_path, csv);

  json config;
  config["ref_dir"] = ref_dir;
  config["test_dir"] = test_dir;
  config["out"] = out_path;
  config["pairs"] = names.size();
  write_run_manifest(out_path + ".run.json", "eval-iqa", config, 0);
  return 0;
}

int run_eval_ocr(const std::string& ref_dir, const std::string& test_dir,
                 const std::string& engine, const std::string& out_path,
                 int jobs) {
  const std::vector<std::string> names = matched_names(ref_dir, test_dir);
  std::vector<std::string> ref_paths, test_paths;
  for (const std::string& name : names) {
    ref_paths.push_back(ref_dir + "/" + name);
    test_paths.push_back(test_dir + "/" + name);
  }
  const std::vector<std::string> ref_texts =
      sdt::run_ocr_batch(ref_paths, engine, jobs);
  const std::vector<std::string> test_texts =
      sdt::run_ocr_batch(test_paths, engine, jobs);

  std::string csv = "name,lev_ratio,cosine\n";
  double lev_sum = 0.0, cos_sum = 0.0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const sdt::TextComparison c =
        sdt::compare_texts(ref_texts[i], test_texts[i]);
    lev_sum += c.levenshtein;
    cos_sum += c.cosine;
    csv += names[i] + "," + format6(c.levenshtein) + "," + format6(c.cosine) +
           "\n";
  }
  const double n = static_cast<double>(names.size());
  csv += "AVERAGE," + format6(lev_sum / n) + "," + format6(cos_sum / n) + "\n";
  write_text_atomic(out_path, csv);

  json config;
  config["ref_dir"] = ref_dir;
  config["test_dir"] = test_dir;
  config["engine"] = engine;
  config["out"] = out_path;
  config["jobs"] = jobs;
  config["pairs"] = names.size();
  write_run_manifest(out_path + ".run.json", "eval-ocr", config, 0);
  return 0;
}

int run_gradcheck(double eps, double tol, std::uint64_t seed) {
  const sdt::ModelConfig cfg = sdt::tiny_gradcheck_config();
  const sdt::GradCheckReport report = sdt::gradient_check(cfg, eps, seed);
  for (const auto& e : report.entries)
    std::fprintf(stderr, "%-18s max_rel_err %.3e\n", e.name.c_str(),
                 e.max_rel_err);

  json out;
  out["command"] = "gradcheck";
  out["config"] = {{"eps", eps}, {"tol", tol}};
  out["seed"] = seed;
  out["tool_version"] = sdt::kVersion;
  out["max_rel_err"] = report.max_rel_err;
  out["pass"] = report.passed(tol);
  std::printf("%s\n", out.dump().c_str());
  return report.passed(tol) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-image super-resolution and deblurring toolkit"};
  app.set_version_flag("--version", sdt::kVersion);
  app.set_config("--config", "", "Read options from an INI/TOML file");
  app.require_subcommand(1);

  DegradeArgs dg;
  CLI::App* degrade = app.add_subcommand(
      "degrade", "Synthesise blurred+downsampled LR/HR training pairs");
  degrade->add_option("--in", dg.in_dir, "Directory of sharp input PNGs")
      ->required();
  degrade->add_option("--out", dg.out_dir, "Output directory")->required();
  degrade->add_option("--kind", dg.kind, "Blur kind")
      ->check(CLI::IsMember({"motion", "defocus", "none"}))
      ->required();
  degrade->add_option("--scale", dg.scale, "Downsampling factor")
      ->check(CLI::IsMember({2, 4}));
  degrade->add_option("--length", dg.length, "Motion streak length (pixels)");
  degrade->add_option("--angle", dg.angle, "Motion angle (degrees)");
  degrade->add_option("--radius", dg.radius, "Defocus disk radius (pixels)");
  degrade->add_option("--seed", dg.seed, "RNG seed");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train a model on LR/HR pairs");
  train->add_option("--data", tr.data_dir, "Directory of *_lr/*_hr pairs")
      ->required();
  train->add_option("--mode", tr.mode, "Data regime label (st or sdt)")
      ->check(CLI::IsMember({"st", "sdt"}));
  train->add_option("--scale", tr.scale, "Upsampling factor")
      ->check(CLI::IsMember({2, 4}));
  train->add_option("--steps", tr.steps, "Training steps")->required();
  train->add_option("--batch", tr.batch, "Mini-batch size");
  train->add_option("--lr", tr.lr, "Adam learning rate");
  train->add_option("--out", tr.out_path, "Output model file (.sdtd)")
      ->required();
  train->add_option("--seed", tr.seed, "RNG seed");
  train->add_option("--patch", tr.patch, "LR patch size");
  train->add_option("--patches-per-image", tr.patches_per_image,
                    "Patches sampled per training image");
  train->add_option("--dropout-keep", tr.dropout_keep,
                    "Dropout keep probability");
  train->add_option("--threads", tr.threads,
                    "Worker threads (default: hardware)");
  train->add_option("--profile", tr.profile, "Architecture profile")
      ->check(CLI::IsMember({"table1", "desk"}));
  train->add_option("--log", tr.log_path, "Loss log CSV path");
  train->add_option("--feature-layers", tr.feature_layers,
                    "Override: cascade depth");
  train->add_option("--first-filters", tr.first_filters,
                    "Override: filters in layer 1");
  train->add_option("--last-filters", tr.last_filters,
                    "Override: filters in the last layer");
  train->add_option("--gamma", tr.gamma, "Override: filter decay gamma");
  train->add_option("--recon-a1", tr.recon_a1, "Override: A1 width");
  train->add_option("--recon-b1", tr.recon_b1, "Override: B1 width");
  train->add_option("--recon-b2", tr.recon_b2, "Override: B2 width");

  std::string infer_model, infer_in, infer_out;
  CLI::App* infer = app.add_subcommand("infer", "Super-resolve one image");
  infer->add_option("--model", infer_model, "Model file (.sdtd)")->required();
  infer->add_option("--in", infer_in, "Input PNG")->required();
  infer->add_option("--out", infer_out, "Output PNG")->required();

  std::string iqa_ref, iqa_test, iqa_out;
  CLI::App* eval_iqa =
      app.add_subcommand("eval-iqa", "Image-quality metrics over a directory");
  eval_iqa->add_option("--ref-dir", iqa_ref, "Reference PNGs")->required();
  eval_iqa->add_option("--test-dir", iqa_test, "Test PNGs")->required();
  eval_iqa->add_option("--out", iqa_out, "Report CSV path")->required();

  std::string ocr_ref, ocr_test, ocr_out;
  std::string ocr_engine = "tesseract {input} stdout";
  int ocr_jobs = static_cast<int>(
      std::max(1u, std::thread::hardware_concurrency()));
  CLI::App* eval_ocr = app.add_subcommand(
      "eval-ocr", "OCR-fidelity metrics via an external engine");
  eval_ocr->add_option("--ref-dir", ocr_ref, "Reference images")->required();
  eval_ocr->add_option("--test-dir", ocr_test, "Test images")->required();
  eval_ocr->add_option("--engine", ocr_engine,
                       "Engine command with {input} placeholder");
  eval_ocr->add_option("--out", ocr_out, "Report CSV path")->required();
  eval_ocr->add_option("--jobs", ocr_jobs, "Max concurrent engine processes")
      ->check(CLI::PositiveNumber);

  double gc_eps = 1e-4, gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference validation of the gradients");
  gradcheck->add_option("--eps", gc_eps, "Finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "Max relative error to pass");
  gradcheck->add_option("--seed", gc_seed, "RNG seed");

  try {
    app.parse(argc, argv);
    if (degrade->parsed()) return run_degrade(dg);
    if (train->parsed()) return run_train(tr);
    if (infer->parsed()) return run_infer(infer_model, infer_in, infer_out);
    if (eval_iqa->parsed()) return run_eval_iqa(iqa_ref, iqa_test, iqa_out);
    if (eval_ocr->parsed())
      return run_eval_ocr(ocr_ref, ocr_test, ocr_engine, ocr_out, ocr_jobs);
    if (gradcheck->parsed()) return run_gradcheck(gc_eps, gc_tol, gc_seed);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const sdt::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const sdt::ModelFileError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const sdt::ExternalToolNotFound& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const sdt::ExternalToolFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (!e.stderr_text().empty())
      std::fprintf(stderr, "engine stderr:\n%s\n", e.stderr_text().c_str());
    return 5;
  } catch (const sdt::Utf8DecodeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
