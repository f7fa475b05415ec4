#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "seqstn/trainer.hpp"

using namespace seqstn;

namespace {

void add_common(CLI::App* cmd, TrainConfig& cfg, std::string& model_name,
                std::string& scale_name) {
  cmd->add_option("--model", model_name, "lstm-stn-cnn | ffn-stn-cnn | cnn")
      ->default_val("lstm-stn-cnn");
  cmd->add_option("--d", cfg.d, "down-sampling factor")->check(CLI::Range(1, 4))->default_val(1);
  cmd->add_option("--epochs", cfg.epochs)->default_val(15);
  cmd->add_option("--batch-size", cfg.batch_size, "0 = scale default (64 desk / 256 full)")
      ->default_val(0);
  cmd->add_option("--lr", cfg.lr)->default_val(0.01);
  cmd->add_option("--momentum", cfg.momentum)->default_val(0.9);
  cmd->add_option("--seed", cfg.seed)->default_val(1);
  cmd->add_option("--mnist-dir", cfg.mnist_dir, "directory with uncompressed MNIST IDX files");
  cmd->add_option("--data-dir", cfg.data_dir, "directory for SQMN splits")->default_val("data");
  cmd->add_option("--out-dir", cfg.out_dir, "directory for checkpoints/metrics")
      ->default_val("out");
  cmd->add_option("--scale", scale_name, "desk | full")->default_val("desk");
  cmd->add_flag("--deterministic", cfg.deterministic,
                "pin internal parallelism for bit-reproducible runs");
}

RunScale parse_scale(const std::string& s) {
  if (s == "desk") return RunScale::desk;
  if (s == "full") return RunScale::full;
  throw ValueError("unknown scale '" + s + "' (expected desk | full)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM-guided spatial transformer pipeline for multi-digit MNIST sequences"};
  app.require_subcommand(1);

  TrainConfig cfg;
  std::string model_name = "lstm-stn-cnn", scale_name = "desk";

  CLI::App* gen = app.add_subcommand("gen-data", "synthesize the SQMN dataset splits");
  add_common(gen, cfg, model_name, scale_name);

  CLI::App* train = app.add_subcommand("train", "train a model; writes metrics.csv + best.ckpt");
  add_common(train, cfg, model_name, scale_name);

  CLI::App* eval = app.add_subcommand("eval", "per-digit error of a checkpoint on a split");
  std::string ckpt_path, split_name = "test";
  eval->add_option("--checkpoint", ckpt_path)->required();
  eval->add_option("--data-dir", cfg.data_dir)->default_val("data");
  eval->add_option("--split", split_name, "train | val | test")->default_val("test");

  CLI::App* dump = app.add_subcommand("dump-glimpses",
                                      "export canvas + the 4 glimpses of one example as PGM");
  int64_t index = 0;
  dump->add_option("--checkpoint", ckpt_path)->required();
  dump->add_option("--data-dir", cfg.data_dir)->default_val("data");
  dump->add_option("--split", split_name)->default_val("test");
  dump->add_option("--index", index)->default_val(0);
  dump->add_option("--out-dir", cfg.out_dir)->default_val("glimpses");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.scale = parse_scale(scale_name);
    cfg.model = model_kind_from_name(model_name);
    if (gen->parsed()) {
      if (cfg.mnist_dir.empty()) throw ValueError("gen-data requires --mnist-dir");
      cmd_gen_data(cfg);
    } else if (train->parsed()) {
      cmd_train(cfg);
    } else if (eval->parsed()) {
      set_deterministic(cfg.deterministic);
      cmd_eval(ckpt_path, cfg.data_dir, split_name);
    } else if (dump->parsed()) {
      set_deterministic(cfg.deterministic);
      cmd_dump_glimpses(ckpt_path, cfg.data_dir, split_name, index, cfg.out_dir);
    }
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
