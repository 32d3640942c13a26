// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "nerfmark/checkpoint.hpp"
#include "nerfmark/config.hpp"
#include "nerfmark/dataset.hpp"
#include "nerfmark/extractor.hpp"
#include "nerfmark/radiance_field.hpp"
#include "nerfmark/renderer.hpp"
#include "nerfmark/watermark_field.hpp"

namespace nerfmark {

BaseFieldConfig base_field_config(const Config& cfg);
WatermarkFieldConfig watermark_field_config(const Config& cfg);
ExtractorConfig extractor_config(const Config& cfg);

// Everything learned, in runtime (float) precision: coarse and fine base
// fields, the watermark field, the message extractor, plus optimizer state
// and step counters so checkpoints capture an exact training snapshot.
struct SceneModel {
  Config cfg;
  uint64_t seed = 0;
  BaseField<float> coarse;
  BaseField<float> fine;
  WatermarkField<float> wm;
  MessageExtractor<float> extractor;
  nn::Adam<float> base_opt{0.9f, 0.999f, 1e-8f};
  nn::Adam<float> wm_opt{0.9f, 0.999f, 1e-8f};
  uint64_t base_step = 0;
  uint64_t wm_step = 0;

  static SceneModel create(const Config& cfg);

  nn::ParamList<float> base_params();
  nn::ParamList<float> wm_params();  // watermark field + extractor
  nn::ParamList<float> all_params();

  uint64_t base_param_hash() const;

  Checkpoint to_checkpoint() const;
  static SceneModel from_checkpoint(const Checkpoint& ck);

  // Additive Gaussian parameter noise on the stolen-model surface (base +
  // watermark fields; the extractor is the owner's tool, not part of the
  // distributed weights).
  void perturb_model_weights(double std, uint64_t noise_seed);
};

// Inference rendering: full pixel grid of `cam` through the fine field,
// optionally with the watermarked color representation. Both images come
// from identical sample points, chunked and rendered in parallel.
struct ViewRender {
  ImageRGB base;
  ImageRGB wm;  // equals base when no message was given
};

ViewRender render_view(const SceneModel& model, const CameraModel& cam, double t_near,
                       double t_far, const SamplingPreset& preset, const Message* message,
                       uint64_t tag);

// K x K patch render (training-style geometry, inference parameters).
ViewRender render_patch_image(const SceneModel& model, const CameraModel& cam, double t_near,
                              double t_far, const PatchSpec& patch, const SamplingPreset& preset,
                              const Message* message, uint64_t tag);

// Logits from the extractor for a planar [0,1] image.
Eigen::MatrixXf extract_from_image(const SceneModel& model, const ImageRGB& img);

}  // namespace nerfmark
