#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pfm/params.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

struct HistoryRecord {
  std::uint32_t iteration = 0;
  float loss = 0.0f;
  float val_acc = 0.0f;  // NaN when no validation ran at this record

  bool operator==(const HistoryRecord&) const = default;
};

struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  std::uint64_t fingerprint = 0;
  // "<layer>.weight" / "<layer>.bias", in layer-name order.
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<HistoryRecord> history;

  const Tensor& tensor(const std::string& name) const;
};

Checkpoint make_checkpoint(const ParamSet& params, std::uint64_t fingerprint,
                           std::vector<HistoryRecord> history = {});

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Overwrites `params` from the checkpoint. A fingerprint mismatch throws
// FingerprintError with a per-layer shape diff.
void restore_params(const Checkpoint& checkpoint, ParamSet& params, std::uint64_t fingerprint);

// Layers stored in the checkpoint as a standalone parameter set.
ParamSet params_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace pfm
