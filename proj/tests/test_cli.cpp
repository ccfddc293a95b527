#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "dft/util/io.hpp"

// Exercises the installed binary end to end. The ctest harness passes the
// CLI path through the DFT_CLI environment variable.

namespace fs = std::filesystem;
using dft::read_file;

namespace {

std::string cli() {
  const char* path = std::getenv("DFT_CLI");
  REQUIRE_MESSAGE(path != nullptr, "DFT_CLI must point at the dft binary");
  return path;
}

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " > cli_stdout.txt 2> cli_stderr.txt";
  return std::system(cmd.c_str());
}

const char* kTrainConfig = R"({
  "model": {"n_layers": 2, "hidden": 32, "n_heads": 2, "vocab": 64, "max_seq_len": 32},
  "data": {"path": "cli_data.jsonl"},
  "method": "dft",
  "supervision": {"lc_mode": "logits", "et_mode": "logits", "layer_i": 1, "layer_j": 2},
  "optimizer": {"kind": "adam", "lr": 0.003},
  "train": {"batch_size": 8, "epochs": 8, "seed": 5},
  "out_dir": "cli_run"
})";

}  // namespace

TEST_CASE("gen-data twice produces byte-identical files") {
  const std::string flags =
      "gen-data --task kv --vocab 64 --train 24 --dev 6 --test 6 --seed 7 --language-seed 2 "
      "--payload-min 2 --payload-max 2";
  REQUIRE(run(flags + " --out cli_a.jsonl") == 0);
  REQUIRE(run(flags + " --out cli_b.jsonl") == 0);
  CHECK(read_file("cli_a.jsonl") == read_file("cli_b.jsonl"));
  fs::remove("cli_b.jsonl");
  fs::rename("cli_a.jsonl", "cli_data.jsonl");
}

TEST_CASE("train emits a manifest that evaluate can consume directly") {
  fs::remove_all("cli_run");
  dft::write_file("cli_config.json", kTrainConfig);
  REQUIRE(run("train --config cli_config.json") == 0);
  CHECK(fs::exists("cli_run/final.ckpt"));
  CHECK(fs::exists("cli_run/final.ckpt.opt"));
  CHECK(fs::exists("cli_run/metrics.jsonl"));
  CHECK(fs::exists("cli_run/manifest.json"));
  CHECK(read_file("cli_run/config.json") == kTrainConfig);

  REQUIRE(run("evaluate --manifest cli_run/manifest.json --split dev --out cli_report") == 0);
  const std::string report = read_file("cli_report.txt");
  CHECK(report.find("token_accuracy") != std::string::npos);
  CHECK(report.find("lc_readout@1") != std::string::npos);
  CHECK(report.find("et_readout@2") != std::string::npos);

  // Re-evaluating unchanged inputs reproduces the report byte for byte.
  REQUIRE(run("evaluate --manifest cli_run/manifest.json --split dev --out cli_report2") == 0);
  CHECK(read_file("cli_report.txt") == read_file("cli_report2.txt"));
  CHECK(read_file("cli_report.jsonl") == read_file("cli_report2.jsonl"));
}

TEST_CASE("profile, align, project and plot emit their artifacts") {
  REQUIRE(fs::exists("cli_run/final.ckpt"));
  REQUIRE(run("profile-entropy --checkpoint cli_run/final.ckpt --data cli_data.jsonl --split train "
              "--out cli_entropy") == 0);
  CHECK(fs::exists("cli_entropy.txt"));
  CHECK(fs::exists("cli_entropy.svg"));
  CHECK(fs::exists("cli_entropy.heatmap.csv"));
  CHECK(read_file("cli_entropy.svg").find("<svg") != std::string::npos);

  REQUIRE(run("align --checkpoint cli_run/final.ckpt --data cli_data.jsonl --split train "
              "--out cli_align") == 0);
  CHECK(fs::exists("cli_align.jsonl"));

  REQUIRE(run("project --checkpoint cli_run/final.ckpt --data cli_data.jsonl --split train --layer 1 "
              "--out cli_proj") == 0);
  CHECK(read_file("cli_proj.svg").find("circle") != std::string::npos);

  REQUIRE(run("plot --kind entropy --in cli_entropy.txt --out cli_entropy2.svg") == 0);
  CHECK(read_file("cli_entropy2.svg") == read_file("cli_entropy.svg"));
  REQUIRE(run("plot --kind metrics --in cli_run/metrics.jsonl --out cli_metrics.svg") == 0);
  CHECK(read_file("cli_metrics.svg").find("polyline") != std::string::npos);
  REQUIRE(run("plot --kind align --in cli_align.jsonl --out cli_align.svg") == 0);
}

TEST_CASE("unknown flags and bad inputs fail with one-line errors") {
  CHECK(run("gen-data --task kv --out x.jsonl --no-such-flag 3") != 0);
  CHECK(run("evaluate --checkpoint missing.ckpt --data cli_data.jsonl --split dev --out y") != 0);
  const std::string err = read_file("cli_stderr.txt");
  CHECK(err.rfind("error: ", 0) == 0);
  CHECK(err.find('\n') == err.size() - 1);  // single line

  CHECK(run("train --config cli_config.json --resume does_not_exist.ckpt") != 0);
  CHECK(run("plot --kind nonsense --in cli_entropy.txt --out z.svg") != 0);
}

TEST_CASE("cleanup") {
  for (const char* f : {"cli_a.jsonl", "cli_data.jsonl", "cli_config.json", "cli_report.txt",
                        "cli_report.jsonl", "cli_report2.txt", "cli_report2.jsonl", "cli_entropy.txt",
                        "cli_entropy.svg", "cli_entropy2.svg", "cli_entropy.heatmap.csv",
                        "cli_align.jsonl", "cli_align.txt", "cli_align.svg", "cli_proj.jsonl",
                        "cli_proj.svg", "cli_metrics.svg", "cli_stdout.txt", "cli_stderr.txt"})
    fs::remove(f);
  fs::remove_all("cli_run");
  CHECK(true);
}
