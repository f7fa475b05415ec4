#include "seqstn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "seqstn/pgm.hpp"

namespace fs = std::filesystem;

namespace seqstn {

void write_pgm(const std::string& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm: image must be [H x W]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << "P5\n" << image.extent(1) << " " << image.extent(0) << "\n255\n";
  for (int64_t i = 0; i < image.size(); ++i) {
    const long q = std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0);
    os.put(static_cast<char>(q));
  }
  if (!os) throw FormatError("short write to " + path);
}

SplitSizes scale_sizes(RunScale scale) {
  return scale == RunScale::desk ? SplitSizes{5000, 1000, 1000} : SplitSizes{70000, 20000, 2000};
}

void MomentumSgd::step(std::vector<ParamRef>& params, double lr) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const ParamRef& r : params) velocity_.push_back(Tensor::zeros_like(*r.value));
  }
  if (velocity_.size() != params.size()) throw ValueError("MomentumSgd: parameter set changed");
  for (size_t i = 0; i < params.size(); ++i) {
    double* v = velocity_[i].data();
    double* w = params[i].value->data();
    const double* g = params[i].grad->data();
    const int64_t n = params[i].value->size();
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < n; ++j) {
      v[j] = momentum_ * v[j] - lr * g[j];
      w[j] += v[j];
    }
  }
}

namespace {
double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string split_path(const std::string& data_dir, const std::string& name) {
  return (fs::path(data_dir) / (name + ".sqmn")).string();
}

void append_metrics(std::ofstream& os, int epoch, const std::string& split, double loss,
                    double error, double wall) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.3f\n", epoch, split.c_str(), loss, error,
                wall);
  os << buf;
  os.flush();
}

ModelConfig standard_config(int d) {
  ModelConfig cfg;
  cfg.d = d;
  return cfg;
}
}  // namespace

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  std::unique_ptr<Model> m = make_model(ckpt.kind, standard_config(ckpt.d), /*init_seed=*/0);
  load_model_params(*m, ckpt);
  return m;
}

void cmd_gen_data(const TrainConfig& cfg) {
  const fs::path mnist(cfg.mnist_dir);
  std::vector<MnistDigit> train_pool = load_mnist((mnist / "train-images-idx3-ubyte").string(),
                                                  (mnist / "train-labels-idx1-ubyte").string());
  std::vector<MnistDigit> test_pool = load_mnist((mnist / "t10k-images-idx3-ubyte").string(),
                                                 (mnist / "t10k-labels-idx1-ubyte").string());
  const SplitSizes sizes = scale_sizes(cfg.scale);
  fs::create_directories(cfg.data_dir);

  DatasetSplit train = generate_split(Rng::derive(cfg.seed, 1), sizes.train, train_pool,
                                      SplitRole::train);
  write_split(split_path(cfg.data_dir, "train"), train);
  train.examples.clear();
  DatasetSplit val = generate_split(Rng::derive(cfg.seed, 2), sizes.val, train_pool,
                                    SplitRole::val);
  write_split(split_path(cfg.data_dir, "val"), val);
  val.examples.clear();
  DatasetSplit test = generate_split(Rng::derive(cfg.seed, 3), sizes.test, test_pool,
                                     SplitRole::test);
  write_split(split_path(cfg.data_dir, "test"), test);
  std::printf("gen-data: wrote %lld/%lld/%lld examples to %s\n",
              static_cast<long long>(sizes.train), static_cast<long long>(sizes.val),
              static_cast<long long>(sizes.test), cfg.data_dir.c_str());
}

TrainSummary cmd_train(const TrainConfig& cfg) {
  set_deterministic(cfg.deterministic);
  const int batch = cfg.batch_size > 0 ? cfg.batch_size : (cfg.scale == RunScale::desk ? 64 : 256);

  CompactSplit train = read_split_compact(split_path(cfg.data_dir, "train"));
  CompactSplit val = read_split_compact(split_path(cfg.data_dir, "val"));
  CompactSplit test = read_split_compact(split_path(cfg.data_dir, "test"));

  std::unique_ptr<Model> model =
      make_model(cfg.model, standard_config(cfg.d), Rng::derive(cfg.seed, 0xB00));
  MomentumSgd sgd(cfg.momentum);

  fs::create_directories(cfg.out_dir);
  TrainSummary summary;
  summary.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  summary.checkpoint_path = (fs::path(cfg.out_dir) / "best.ckpt").string();
  std::ofstream metrics(summary.metrics_path, std::ios::trunc);
  if (!metrics) throw FormatError("cannot open " + summary.metrics_path + " for writing");
  metrics << "epoch,split,loss,per_digit_error,wall_seconds\n";

  std::vector<int64_t> order(static_cast<size_t>(train.count));
  for (int64_t i = 0; i < train.count; ++i) order[static_cast<size_t>(i)] = i;
  uint64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(0.5, epoch / 10);  // halve every 10 epochs
    const auto t0 = std::chrono::steady_clock::now();

    Rng shuffle_rng(Rng::derive(cfg.seed, 0xE0000 + static_cast<uint64_t>(epoch)));
    for (int64_t i = train.count - 1; i > 0; --i) {
      const int64_t j = shuffle_rng.next_below(static_cast<uint64_t>(i + 1));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double loss_sum = 0.0;
    int64_t loss_batches = 0, wrong = 0;
    for (int64_t start = 0; start < train.count; start += batch) {
      const int64_t stop = std::min(train.count, start + batch);
      std::vector<int64_t> idx(order.begin() + start, order.begin() + stop);
      Tensor canvases = canvases_from_compact(train, idx);
      std::vector<std::array<int, 4>> labels = labels_from_compact(train, idx);
      const uint64_t batch_seed = Rng::derive(cfg.seed, 0xD0000000ull + global_step);
      model->zero_grads();
      int64_t batch_wrong = 0;
      const double loss =
          model->loss_and_backward(canvases, labels, batch_seed, /*dropout=*/true, &batch_wrong);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at step " + std::to_string(global_step) +
                                " (epoch " + std::to_string(epoch) + "); replay with batch seed " +
                                std::to_string(batch_seed),
                            batch_seed);
      std::vector<ParamRef> params = model->params();
      sgd.step(params, lr);
      loss_sum += loss;
      wrong += batch_wrong;
      ++loss_batches;
      ++global_step;
    }
    const double train_loss = loss_sum / static_cast<double>(loss_batches);
    const double train_err = static_cast<double>(wrong) / (4.0 * static_cast<double>(train.count));
    append_metrics(metrics, epoch, "train", train_loss, train_err, elapsed_s(t0));
    summary.final_train_loss = train_loss;

    const auto tv = std::chrono::steady_clock::now();
    const EvalResult v = evaluate(*model, val);
    append_metrics(metrics, epoch, "val", v.loss, v.error, elapsed_s(tv));
    if (v.error < summary.best_val_error) {
      summary.best_val_error = v.error;
      summary.best_epoch = epoch;
      const std::vector<Tensor>& vel = sgd.velocity();
      Checkpoint ckpt = snapshot_model(*model, global_step, vel.empty() ? nullptr : &vel);
      write_checkpoint(summary.checkpoint_path, ckpt);
    }
    std::printf("epoch %2d  lr %.4f  train loss %.4f err %.3f  val loss %.4f err %.3f\n", epoch,
                lr, train_loss, train_err, v.loss, v.error);
  }

  // Test error of the best-validation parameters.
  load_model_params(*model, read_checkpoint(summary.checkpoint_path));
  const auto tt = std::chrono::steady_clock::now();
  const EvalResult t = evaluate(*model, test);
  summary.test_error = t.error;
  append_metrics(metrics, summary.best_epoch, "test", t.loss, t.error, elapsed_s(tt));
  std::printf("best epoch %d  val err %.3f  test err %.3f (%.1f%%)\n", summary.best_epoch,
              summary.best_val_error, t.error, 100.0 * t.error);
  return summary;
}

double cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                const std::string& split_name) {
  std::unique_ptr<Model> model = model_from_checkpoint(read_checkpoint(checkpoint_path));
  CompactSplit split = read_split_compact(split_path(data_dir, split_name));
  const EvalResult r = evaluate(*model, split);
  std::printf("per-digit error on %s: %.1f%%\n", split_name.c_str(), 100.0 * r.error);
  return r.error;
}

void cmd_dump_glimpses(const std::string& checkpoint_path, const std::string& data_dir,
                       const std::string& split_name, int64_t index, const std::string& out_dir) {
  const Checkpoint ckpt = read_checkpoint(checkpoint_path);
  if (ckpt.kind != ModelKind::LstmStnCnn)
    throw ValueError("dump-glimpses needs an lstm-stn-cnn checkpoint, got " +
                     model_kind_name(ckpt.kind));
  std::unique_ptr<Model> model = model_from_checkpoint(ckpt);
  CompactSplit split = read_split_compact(split_path(data_dir, split_name));
  if (index < 0 || index >= split.count)
    throw ValueError("example index " + std::to_string(index) + " out of range [0, " +
                     std::to_string(split.count) + ")");
  Tensor canvas = canvases_from_compact(split, {index}).reshaped({split.h, split.w});
  GlimpseSet set = lstm_stn_glimpses(*model, canvas);
  fs::create_directories(out_dir);
  write_pgm((fs::path(out_dir) / "canvas.pgm").string(), set.canvas);
  for (size_t t = 0; t < 4; ++t)
    write_pgm((fs::path(out_dir) / ("glimpse_" + std::to_string(t) + ".pgm")).string(),
              set.glimpses[t]);
  std::printf("wrote canvas.pgm and glimpse_0..3.pgm to %s\n", out_dir.c_str());
}

}  // namespace seqstn
