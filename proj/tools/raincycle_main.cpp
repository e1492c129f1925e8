#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "raincycle/engine.hpp"
#include "raincycle/error.hpp"
#include "raincycle/version.hpp"

namespace fs = std::filesystem;
using namespace raincycle;

namespace {

std::string read_text(const std::string& path) {
  const std::vector<uint8_t> bytes = read_binary_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// preset first, --set overrides second, then validation
TrainingConfig resolve_config(const std::string& config_path, const std::string& losses,
                              const std::vector<std::string>& sets) {
  TrainingConfig cfg;
  if (!config_path.empty()) cfg = parse_config_text(read_text(config_path));
  if (!losses.empty()) apply_loss_preset(cfg, losses);
  for (const std::string& kv : sets) apply_override_kv(cfg, kv);
  validate_config(cfg);
  return cfg;
}

void write_run_stamp(const std::string& dir, const TrainingConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  write_text_file(dir + "/effective-config.cfg", effective_config_text(cfg));
  write_text_file(dir + "/version.txt", std::string(kToolVersion) + "\n");
}

int run(int argc, char** argv) {
  CLI::App app{"Unsupervised attention-guided deraining: training, inference and dataset tooling"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path, losses, out_dir, resume_path, checkpoint_path, input_path,
      data_root;
  std::vector<std::string> sets;

  auto add_config_opts = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (key = value lines)")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "Override a config key (key=value, repeatable)");
    sub->add_option("--losses", losses,
                    "Loss preset: base, base+p, base+p+att, base+p+att+gmm, total");
  };

  CLI::App* train = app.add_subcommand("train", "Train the two-branch cycle model");
  add_config_opts(train);
  train->add_option("--out", out_dir, "Run directory")->required();
  train->add_option("--resume", resume_path, "Checkpoint to continue from")
      ->check(CLI::ExistingFile);

  CLI::App* derain = app.add_subcommand("derain", "Remove rain from one image");
  derain->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  derain->add_option("--input", input_path, "Rainy PNG")->required()->check(CLI::ExistingFile);
  derain->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* rainmake = app.add_subcommand("rainmake", "Synthesize rainy pairs from clean images");
  rainmake->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  rainmake->add_option("--input", input_path, "Directory of clean PNGs")
      ->required()
      ->check(CLI::ExistingDirectory);
  rainmake->add_option("--out", out_dir, "Output dataset root")->required();

  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint on filename-matched pairs");
  eval->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", data_root, "Root with rain/ and norain/")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* synth = app.add_subcommand("synth-data", "Write a procedural toy dataset");
  add_config_opts(synth);
  synth->add_option("--out", out_dir, "Output dataset root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (train->parsed()) {
    Checkpoint ckpt;
    const bool resuming = !resume_path.empty();
    if (resuming) ckpt = load_checkpoint(resume_path);
    TrainingConfig cfg = (resuming && config_path.empty() && sets.empty() && losses.empty())
                             ? ckpt.cfg
                             : resolve_config(config_path, losses, sets);
    write_run_stamp(out_dir, cfg);
    Trainer trainer(cfg);
    if (resuming) trainer.resume_from(ckpt);
    const std::string final_ckpt = trainer.train(out_dir);
    std::cout << final_ckpt << "\n";
    return 0;
  }
  if (derain->parsed()) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const DerainResult res = raincycle::derain(ckpt, load_png(input_path));
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());
    const std::string stem = fs::path(input_path).stem().string();
    save_png(out_dir + "/" + stem + "-derained.png", res.derained);
    Image mask_vis = res.mask;
    for (double& v : mask_vis.t.data) v = 2.0 * v - 1.0;
    save_png(out_dir + "/" + stem + "-mask.png", mask_vis);
    return 0;
  }
  if (rainmake->parsed()) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    write_run_stamp(out_dir, ckpt.cfg);
    raincycle::rainmake(ckpt, input_path, out_dir);
    return 0;
  }
  if (eval->parsed()) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    write_run_stamp(out_dir, ckpt.cfg);
    const MetricReport report = evaluate(ckpt, data_root);
    write_text_file(out_dir + "/metrics.csv", report.to_csv());
    std::printf("mean psnr %.4f dB, mean ssim %.6f over %zu pairs\n", report.mean_psnr,
                report.mean_ssim, report.rows.size());
    return 0;
  }
  if (synth->parsed()) {
    const TrainingConfig cfg = resolve_config(config_path, losses, sets);
    write_run_stamp(out_dir, cfg);
    write_toy_dataset(out_dir, cfg);
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 2;
  } catch (const DecodeError& e) {
    std::cerr << "decode error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
