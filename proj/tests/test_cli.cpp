#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "raincycle/data.hpp"
#include "raincycle/image.hpp"

using namespace raincycle;
namespace fs = std::filesystem;

#ifndef RAINCYCLE_CLI_PATH
#error "RAINCYCLE_CLI_PATH must point at the built binary"
#endif

namespace {

const std::string kRoot = "tmp-test-cli";

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + RAINCYCLE_CLI_PATH + "\" " + args + " >" +
                          kRoot + "/stdout.txt 2>" + kRoot + "/stderr.txt";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return s;
}

std::string captured_stderr() { return slurp(kRoot + "/stderr.txt"); }
std::string captured_stdout() { return slurp(kRoot + "/stdout.txt"); }

struct Setup {
  Setup() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    std::ofstream cfg(kRoot + "/tiny.cfg");
    cfg << "# smallest trainable setup\n"
        << "epochs = 1\n"
        << "lr_decay_start = 1\n"
        << "lr = 1e-3\n"
        << "crop = 16\n"
        << "stages = 1\n"
        << "uarse_width = 2\n"
        << "gen_width = 2\n"
        << "disc_width = 2\n"
        << "hybrid_res_layers = 1\n"
        << "hybrid_dense_layers = 1\n"
        << "gmm_k = 2\n"
        << "gmm_em_iters = 2\n"
        << "perceptual_width = 2\n"
        << "checkpoint_interval = 1\n"
        << "seed = 3\n"
        << "synth_images = 2\n"
        << "synth_test_pairs = 2\n"
        << "synth_size = 24\n"
        << "data_root = " << kRoot << "/data\n";
  }
};
const Setup setup_once;

std::string tiny_args() { return "--config " + kRoot + "/tiny.cfg"; }

}  // namespace

TEST_CASE("cli rejects bad invocations without touching the filesystem") {
  CHECK(run_cli("") == 1);
  CHECK(run_cli("--frobnicate") == 1);
  CHECK(run_cli("no-such-command") == 1);
  CHECK(run_cli("train") == 1);  // --out is required

  CHECK(run_cli("synth-data " + tiny_args() + " --set epochs=banana --out " + kRoot +
                "/never") == 1);
  CHECK(captured_stderr().find("epochs") != std::string::npos);
  CHECK(!fs::exists(kRoot + "/never"));

  CHECK(run_cli("synth-data " + tiny_args() + " --set no_such_key=1 --out " + kRoot +
                "/never") == 1);
  CHECK(captured_stderr().find("no_such_key") != std::string::npos);

  CHECK(run_cli("derain --checkpoint missing.rcta --input missing.png --out " + kRoot) == 1);
}

TEST_CASE("synth-data writes the dataset plus a run stamp") {
  REQUIRE(run_cli("synth-data " + tiny_args() + " --out " + kRoot + "/data") == 0);
  CHECK(fs::exists(kRoot + "/data/manifest.json"));
  CHECK(fs::exists(kRoot + "/data/effective-config.cfg"));
  CHECK(slurp(kRoot + "/data/version.txt") == "0.1.0\n");
  CHECK(list_pngs(kRoot + "/data/rain").size() == 2);
  CHECK(list_pngs(kRoot + "/data/norain").size() == 2);
  CHECK(load_paired(kRoot + "/data/paired_test").size() == 2);
  // the stamp reflects overrides and parses back to the same config
  CHECK(slurp(kRoot + "/data/effective-config.cfg").find("crop = 16") != std::string::npos);
}

TEST_CASE("train, eval and derain round trip through the binary") {
  REQUIRE(fs::exists(kRoot + "/data/manifest.json"));  // ordered after synth-data

  REQUIRE(run_cli("train " + tiny_args() + " --out " + kRoot + "/run1") == 0);
  const std::string final_ckpt = kRoot + "/run1/checkpoint-final.rcta";
  CHECK(captured_stdout().find("checkpoint-final.rcta") != std::string::npos);
  CHECK(fs::exists(final_ckpt));
  CHECK(fs::exists(kRoot + "/run1/train-log.csv"));
  CHECK(fs::exists(kRoot + "/run1/em-trajectory.csv"));
  CHECK(fs::exists(kRoot + "/run1/effective-config.cfg"));

  // identical invocation reproduces identical artifacts
  REQUIRE(run_cli("train " + tiny_args() + " --out " + kRoot + "/run2") == 0);
  CHECK(read_binary_file(final_ckpt) ==
        read_binary_file(kRoot + "/run2/checkpoint-final.rcta"));
  CHECK(slurp(kRoot + "/run1/train-log.csv") == slurp(kRoot + "/run2/train-log.csv"));

  REQUIRE(run_cli("eval --checkpoint " + final_ckpt + " --data " + kRoot +
                  "/data/paired_test --out " + kRoot + "/eval1") == 0);
  const std::string csv = slurp(kRoot + "/eval1/metrics.csv");
  CHECK(csv.rfind("filename,psnr_db,ssim\n", 0) == 0);
  CHECK(csv.find("pair_0000.png,") != std::string::npos);
  CHECK(csv.find("mean,") != std::string::npos);
  CHECK(captured_stdout().find("mean psnr") != std::string::npos);

  REQUIRE(run_cli("derain --checkpoint " + final_ckpt + " --input " + kRoot +
                  "/data/paired_test/rain/pair_0000.png --out " + kRoot + "/derained") == 0);
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(kRoot + "/derained")) {
    (void)e;
    ++files;
  }
  CHECK(files == 2);
  const Image der = load_png(kRoot + "/derained/pair_0000-derained.png");
  const Image mask = load_png(kRoot + "/derained/pair_0000-mask.png");
  CHECK(der.channels() == 3);
  CHECK(der.height() == 24);
  CHECK(mask.height() == 24);

  REQUIRE(run_cli("rainmake --checkpoint " + final_ckpt + " --input " + kRoot +
                  "/data/norain --out " + kRoot + "/made") == 0);
  CHECK(load_paired(kRoot + "/made").size() == 2);

  // resume from the final checkpoint with one more epoch requested
  REQUIRE(run_cli("train " + tiny_args() + " --set epochs=2 --out " + kRoot +
                  "/run3 --resume " + kRoot + "/run1/checkpoint-epoch-0001.rcta") == 1);
  CHECK(captured_stderr().find("config") != std::string::npos);

  REQUIRE(run_cli("train --out " + kRoot + "/run4 --resume " + final_ckpt) == 0);
  CHECK(fs::exists(kRoot + "/run4/checkpoint-final.rcta"));
}
