#pragma once

#include <optional>

#include "ctiunet/autograd.hpp"

namespace ctiunet {

enum class Padding {
  kValid,  // no padding
  kSame,   // k/2 zeros on every side; odd kernels only
};

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::kSame;
};

// Output extent along one axis for the given convolution geometry.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, Padding padding);

// input (N, Cin, H, W); weights (Cout, Cin, k, k); bias (1, Cout, 1, 1).
Value conv2d(Value input, Value weights, std::optional<Value> bias,
             Conv2dOptions options = {});

// 2x2 max pooling with stride 2; ties go to the first element in scan order.
Value maxpool2(Value input);

Value upsample_nearest2(Value input);

// a's channels first, then b's.
Value concat_channels(Value a, Value b);

// Per (batch, channel) plane standardization followed by a per-channel
// affine map. scale and shift have shape (1, C, 1, 1).
Value instance_norm(Value input, Value scale, Value shift, double eps = 1e-5);

Value relu(Value input);
Value sigmoid(Value input);

// Reductions to a (1,1,1,1) scalar.
Value mean(Value input);
Value sum_of_squares(Value input);

// Elementwise helpers shared with non-taped code.
double stable_sigmoid(double x);
Tensor4 sigmoid(const Tensor4& logits);

}  // namespace ctiunet
