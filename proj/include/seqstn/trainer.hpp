#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "seqstn/checkpoint.hpp"
#include "seqstn/models.hpp"

namespace seqstn {

enum class RunScale { desk, full };

struct SplitSizes {
  int64_t train, val, test;
};
/// desk: 5000/1000/1000 (sized for single-machine runs); full: the 70000/
/// 20000/2000 reproduction setup.
SplitSizes scale_sizes(RunScale scale);

struct TrainConfig {
  ModelKind model = ModelKind::LstmStnCnn;
  int d = 1;
  int epochs = 15;
  int batch_size = 0;  // 0: scale default (64 desk, 256 full)
  double lr = 0.01;
  double momentum = 0.9;
  uint64_t seed = 1;
  std::string mnist_dir;
  std::string data_dir;
  std::string out_dir;
  bool deterministic = false;
  RunScale scale = RunScale::desk;
};

/// v = momentum*v - lr*grad; w += v. Velocity tensors are created on first
/// use, aligned with the params() order (and saved as checkpoint slots).
class MomentumSgd {
 public:
  explicit MomentumSgd(double momentum) : momentum_(momentum) {}
  void step(std::vector<ParamRef>& params, double lr);
  const std::vector<Tensor>& velocity() const { return velocity_; }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

/// Synthesizes the three SQMN splits from MNIST IDX files. Train/val canvases
/// draw digits from MNIST's train images, test canvases from MNIST's test
/// images, so no digit image leaks across the split boundary.
void cmd_gen_data(const TrainConfig& cfg);

struct TrainSummary {
  double best_val_error = 1.0;
  int best_epoch = -1;
  double final_train_loss = 0.0;
  double test_error = 1.0;
  std::string checkpoint_path;
  std::string metrics_path;
};

/// Momentum-SGD training with the learning rate halved every 10 epochs.
/// Appends one train and one val MetricsRow per epoch to metrics.csv, keeps
/// the best-validation checkpoint, and reports the test error of that
/// checkpoint. A non-finite loss aborts with the offending batch seed.
TrainSummary cmd_train(const TrainConfig& cfg);

/// Per-digit error of a checkpoint on one split, as a fraction; also prints
/// it as a percentage with 0.1 resolution.
double cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                const std::string& split_name);

/// Writes canvas.pgm plus glimpse_0..3.pgm for one example (LSTM-STN only).
void cmd_dump_glimpses(const std::string& checkpoint_path, const std::string& data_dir,
                       const std::string& split_name, int64_t index, const std::string& out_dir);

/// Rebuilds a model from a checkpoint (standard architecture, the
/// checkpoint's d) and loads its parameters.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace seqstn
