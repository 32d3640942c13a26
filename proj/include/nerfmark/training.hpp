// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "nerfmark/losses.hpp"
#include "nerfmark/model.hpp"

namespace nerfmark {

// Uniform message draw: for n_bits <= 16 the full message set is enumerated
// and drawn uniformly; longer payloads use independent uniform bits.
Message sample_training_message(std::mt19937_64& rng, int n_bits);

// Line-delimited JSON metric records.
class JsonlLogger {
 public:
  JsonlLogger() = default;
  explicit JsonlLogger(const std::string& path);
  void log(const std::string& json_line);
  bool active() const { return active_; }

 private:
  bool active_ = false;
  std::string path_;
};

struct StageStats {
  uint64_t steps_run = 0;
  double first_window_median_loss = 0;
  double last_window_median_loss = 0;
  double final_metric = 0;  // held-out PSNR (base) or training-patch bit accuracy (watermark)
};

// Stage one: fits the coarse and fine base fields to the posed images with
// the per-ray reconstruction loss. Resumes from model.base_step.
StageStats train_base_stage(SceneModel& model, const Dataset& data, uint64_t steps,
                            JsonlLogger* log);

// Stage two: freezes the base fields and trains the watermark field plus the
// message extractor through the distortion-resistant patch pipeline.
// Resumes from model.wm_step.
StageStats train_watermark_stage(SceneModel& model, const Dataset& data, uint64_t steps,
                                 JsonlLogger* log);

}  // namespace nerfmark
