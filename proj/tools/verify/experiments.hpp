#pragma once

// Training protocols shared by the CLI `ablate` command and the acceptance
// suite.

#include <cstdint>
#include <string>
#include <vector>

#include "s3mamba/config.hpp"
#include "s3mamba/trainer.hpp"

namespace s3::verify {

/// Toy profile: 32 + 8 procedural 96x96 images, d_model 32, 4 residual
/// blocks, 2 SSSM blocks, N = 8, Q = 64, 100 epochs, decay every 20.
RunConfig toy_profile();

/// Ablation profile: the toy profile with training scales U(1, 2.5) and a
/// shortened schedule (see README).
RunConfig ablation_profile();

/// Decoder mixer grid: mlp, ssm, sssm.
std::vector<AblationVariant> decoder_variants(const ModelConfig& base);
/// Module grid on the sssm model: neither, sfatt, gfe, both.
std::vector<AblationVariant> module_variants(const ModelConfig& base);

/// Median PSNR per variant at one scale, in the order variants first appear.
std::vector<std::pair<std::string, double>> median_by_variant(const std::vector<AblationResult>& results,
                                                              double scale);

}  // namespace s3::verify
