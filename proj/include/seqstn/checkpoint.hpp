#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seqstn/models.hpp"

namespace seqstn {

// "CKPT" container: magic, u16 version, u16 model kind, u16 down-sampling
// factor, named parameter table, named optimizer-slot table, u64 step
// counter. Tables are u32 count then (u32 name length, name, TNSR blob) per
// entry, little-endian throughout. Entry order is the model's canonical
// parameter order, so identical state writes identical bytes.
struct Checkpoint {
  ModelKind kind = ModelKind::PlainCnn;
  uint16_t d = 1;
  uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> slots;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Copies the model's current parameters (and optional optimizer slots, in
/// params() order) into a checkpoint.
Checkpoint snapshot_model(Model& m, uint64_t step, const std::vector<Tensor>* slots = nullptr);

/// Restores parameters by name; any missing/extra/mis-shaped tensor is a
/// FormatError ("checkpoint/model mismatch").
void load_model_params(Model& m, const Checkpoint& ckpt);

}  // namespace seqstn
