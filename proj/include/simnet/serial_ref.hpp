#pragma once

#include "simnet/mex.hpp"
#include "simnet/similarity.hpp"
#include "simnet/tensor.hpp"

// Serial reference implementations of the OpenMP kernels. Plain nested loops,
// no pragmas; kept for testing the parallel paths and as the baseline in the
// kernel benchmark. Outputs must match the parallel kernels bit for bit.
namespace simnet::ref {

Matrix extract_patches(const Tensor3& input, const PatchGeometry& geom);
Tensor3 similarity_map(const Tensor3& input, const SimilarityLayer& layer);
Matrix transform_rows(const Matrix& patches, const Matrix& filters);
Tensor3 conv_lp_sim(const Tensor3& input, const ConvLpSim& block);
Tensor3 mex_pool(const Tensor3& input, const PoolSpec& spec);

}  // namespace simnet::ref
