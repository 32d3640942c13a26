// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "nerfmark/distortion.hpp"
#include "nerfmark/model.hpp"

namespace nerfmark {

// A named evaluation condition: either the clean channel or one 2D
// distortion whose free parameters are drawn per view from the stated range.
struct EvalCondition {
  std::string name = "clean";
  DistortionKind kind = DistortionKind::identity;
  double noise_mean = 0, noise_std = 0;
  double blur_sigma = 0;
  double rot_max = 0;
  double scale_min = 1, scale_max = 1;

  DistortionSpec draw(std::mt19937_64& rng) const;
};

// The clean channel plus the four standard distortions at their
// evaluation settings from the config.
std::vector<EvalCondition> standard_conditions(const Config& cfg);

struct EvalRow {
  int message_index = 0;
  std::string message;
  int view = 0;
  std::string condition;
  double accuracy = 0;
  std::string recovered_bits;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::map<std::string, double> accuracy_by_condition;  // mean over rows
  double clean_accuracy = 0;
  double mean_psnr_wm_vs_base = 0;
  double mean_ssim_wm_vs_base = 0;
  double mean_psnr_base_vs_gt = 0;
  double mean_ssim_base_vs_gt = 0;
  int n_views = 0;
  int message_length = 0;
  std::string preset;
  bool untrained_warning = false;  // watermark stage never ran

  void recompute_aggregates();
  void dump_jsonl(const std::string& path, const std::string& config_snapshot) const;
  std::string table() const;
};

// Applies a distortion to a rendered image (inference path).
ImageRGB distort_image(const ImageRGB& img, const DistortionSpec& spec, std::mt19937_64& rng);

// Renders each requested test view for each message, applies every
// condition, extracts, and aggregates. The clean condition is always
// included.
EvalReport evaluate_views(const SceneModel& model, const Dataset& data,
                          const std::vector<Message>& messages, int n_views,
                          const SamplingPreset& preset, const std::vector<EvalCondition>& conditions,
                          uint64_t eval_seed);

// Clean-channel bit accuracy per sampling preset.
std::vector<std::pair<std::string, double>> sampling_robustness_suite(
    const SceneModel& model, const Dataset& data, const std::vector<Message>& messages,
    int n_views, const std::vector<SamplingPreset>& presets, uint64_t eval_seed);

// Gaussian parameter-noise attack on a copy of the model: re-renders and
// extracts, returning clean-channel accuracy.
double weight_perturbation_attack(const SceneModel& model, double noise_std,
                                  const std::vector<Message>& messages, const Dataset& data,
                                  int n_views, const SamplingPreset& preset, uint64_t eval_seed,
                                  uint64_t noise_seed);

// Trains and evaluates one model variant per toggle on top of a base-stage
// checkpoint. Supported toggles: "full", "wo_mff", "wo_cff", "wo_drr"
// (training changes) and "drs" (full model evaluated with the randomized
// training-style rendering).
struct AblationResult {
  std::string name;
  EvalReport report;
};

std::vector<AblationResult> ablation_suite(const SceneModel& base_model, const Dataset& data,
                                           const std::vector<std::string>& toggles,
                                           uint64_t wm_steps, const std::vector<Message>& messages,
                                           int n_views, uint64_t eval_seed);

}  // namespace nerfmark
