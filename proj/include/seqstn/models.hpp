#pragma once
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "seqstn/dataset.hpp"
#include "seqstn/downsample.hpp"
#include "seqstn/locnet.hpp"

namespace seqstn {

enum class ModelKind : uint16_t { LstmStnCnn = 1, FfnStnCnn = 2, PlainCnn = 3 };

ModelKind model_kind_from_name(const std::string& name);  // lstm-stn-cnn | ffn-stn-cnn | cnn
std::string model_kind_name(ModelKind kind);

/// Architecture knobs. Defaults are the full-size models; tests shrink them
/// for gradient checks (the structure is identical at any size).
struct ModelConfig {
  int canvas = 100;       // square canvas side
  int d = 1;              // down-sampling factor before the classifier
  int loc_filters = 20;   // localization conv stack
  int lstm_cells = 256;
  int steps = 4;          // LSTM time steps = digits per canvas
  int glimpse = 48;       // sampled glimpse side (divisible by every Table d)
  int cls_filters = 32;   // glimpse classifier conv
  int cnn_filters = 96;   // contrast/plain classifier conv
  int fc_width = 400;
  double dropout_keep = 0.5;
};

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

/// A trainable architecture: batched forward for evaluation, fused
/// forward+backward for training. Gradients accumulate into the param-paired
/// grad tensors; the optimizer and checkpointing work off params().
class Model {
 public:
  virtual ~Model() = default;
  virtual ModelKind kind() const = 0;
  virtual const ModelConfig& config() const = 0;

  /// Eval-mode logits, one [B x 10] tensor per head, canvases are [B x H x W].
  virtual std::array<Tensor, 4> forward(const Tensor& canvases) = 0;

  /// Mean loss over batch and heads; accumulates parameter gradients.
  /// `dropout=false` makes the pass deterministic for finite-difference tests.
  /// `out_wrong`, when given, receives the count of misclassified digit
  /// positions in this (training-mode) pass.
  virtual double loss_and_backward(const Tensor& canvases,
                                   const std::vector<std::array<int, 4>>& labels, uint64_t seed,
                                   bool dropout = true, int64_t* out_wrong = nullptr) = 0;

  virtual std::vector<ParamRef> params() = 0;
  void zero_grads();
};

std::unique_ptr<Model> make_model(ModelKind kind, const ModelConfig& cfg, uint64_t init_seed);

/// argmax per head for a single [H x W] canvas.
std::array<int, 4> predict(Model& m, const Tensor& canvas);

struct EvalResult {
  double loss = 0.0;
  double error = 0.0;  // fraction of digit positions misclassified
};
EvalResult evaluate(Model& m, const CompactSplit& split, int64_t max_examples = -1,
                    int64_t batch = 256);

/// The four sampled views (pre-downsample) the LSTM-STN extracts from one
/// canvas, eval mode. Fails for other model kinds.
struct GlimpseSet {
  Tensor canvas;
  std::array<Tensor, 4> glimpses;  // [glimpse x glimpse]
};
GlimpseSet lstm_stn_glimpses(Model& m, const Tensor& canvas);

/// Batch assembly from a byte-backed split.
Tensor canvases_from_compact(const CompactSplit& split, const std::vector<int64_t>& indices);
std::vector<std::array<int, 4>> labels_from_compact(const CompactSplit& split,
                                                    const std::vector<int64_t>& indices);

}  // namespace seqstn
