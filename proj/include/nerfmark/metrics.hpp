// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nerfmark/image.hpp"

namespace nerfmark {

// 10*log10(1/MSE) over all pixels and channels, inputs in [0,1].
// Identical images report +infinity.
double psnr(const ImageRGB& a, const ImageRGB& b);

// Mean local SSIM with the standard 11-tap Gaussian window (sigma 1.5),
// constants C1=(0.01)^2, C2=(0.03)^2 on unit dynamic range. Channels are
// scored independently and averaged. Windows are evaluated only where they
// fit entirely inside the image; images smaller than the window are
// rejected.
double ssim(const ImageRGB& a, const ImageRGB& b);

}  // namespace nerfmark
