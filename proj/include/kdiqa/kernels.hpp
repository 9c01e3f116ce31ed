#pragma once

// Batched per-sample kernels. `serial` is the reference implementation kept
// for testing; `omp` fans the per-sample work out with OpenMP and reduces in
// sample order, so both produce bit-identical results.

#include <span>
#include <vector>

#include "kdiqa/nets.hpp"
#include "kdiqa/scoring.hpp"

namespace kdiqa::kernels {

namespace serial {

std::vector<Embedding> encode_batch(const EncoderParams& params, std::span<const Vec> xs,
                                    std::vector<ForwardCache>* caches = nullptr);
std::vector<double> score_batch(std::span<const Embedding> imgs, const PromptBank& bank);
/// Sum over samples of backward(params, caches[i], upstream.row(i)).
GradBundle backward_batch(const EncoderParams& params, std::span<const ForwardCache> caches,
                          const Matrix& upstream);

}  // namespace serial

namespace omp {

std::vector<Embedding> encode_batch(const EncoderParams& params, std::span<const Vec> xs,
                                    std::vector<ForwardCache>* caches = nullptr);
std::vector<double> score_batch(std::span<const Embedding> imgs, const PromptBank& bank);
GradBundle backward_batch(const EncoderParams& params, std::span<const ForwardCache> caches,
                          const Matrix& upstream);

}  // namespace omp

}  // namespace kdiqa::kernels
