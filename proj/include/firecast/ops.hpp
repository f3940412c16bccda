#pragma once

#include <cstdint>
#include <vector>

#include "firecast/rng.hpp"
#include "firecast/tensor.hpp"

namespace firecast {

// Dense-tensor operations with hand-paired analytic gradients. Each
// backward() is a pure function of the inputs its forward consumed plus the
// upstream gradient, and is checked against central finite differences in the
// test suite.

// c[i][j] = sum_p a[i][p] * b[p][j]
Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
    Tensor a_grad;
    Tensor b_grad;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b,
                            const Tensor& upstream);

// Cross-correlation (no kernel flip) with zero padding.
// input: [c×h×w], kernels: [f×c×kh×kw] -> [f×h'×w'] where
// h' = (h + 2*pad - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t pad);

struct Conv2dGrads {
    Tensor input_grad;
    Tensor kernel_grad;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            std::size_t stride, std::size_t pad,
                            const Tensor& upstream);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
// Takes the forward *output* y: dL/dx = up * y * (1 - y).
Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream);

Tensor tanh(const Tensor& x);
Tensor tanh_backward(const Tensor& output, const Tensor& upstream);

Tensor relu(const Tensor& x);
// Needs the forward *input* for the mask.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// -(y ln p + (1-y) ln(1-p)) with p clamped to [eps, 1-eps], eps = 1e-7.
inline constexpr double kBceEps = 1e-7;
double bce_loss(double p, double y);
// dL/dp at the clamped point.
double bce_loss_grad(double p, double y);
// Mean over a batch of probabilities and binary labels.
double bce_loss_mean(const std::vector<double>& p, const std::vector<std::uint8_t>& y);

// Max over non-overlapping 2x2 windows; odd trailing row/col dropped.
// Gradient routes to the first maximal element in row-major scan order.
Tensor maxpool2(const Tensor& x);
Tensor maxpool2_backward(const Tensor& x, const Tensor& upstream);

// [c×h×w] -> [c], mean over the spatial extent.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const std::vector<std::size_t>& input_shape,
                                const Tensor& upstream);

// y = x·w + b for x: [n×in] or [in], w: [in×out], b: [out].
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

struct DenseGrads {
    Tensor x_grad;
    Tensor w_grad;
    Tensor b_grad;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& w,
                          const Tensor& upstream);

// Per-channel bias for conv activations: x[ch][i][j] + b[ch].
Tensor add_channel_bias(const Tensor& x, const Tensor& b);
Tensor channel_bias_backward(const Tensor& upstream);

// Inverted dropout: each entry zeroed with probability rate, survivors scaled
// by 1/(1-rate) so inference needs no rescaling. The kept mask is returned
// for the backward pass.
struct DropoutResult {
    Tensor output;
    std::vector<std::uint8_t> kept;
    double scale = 1.0;
    bool training = false;
};
DropoutResult dropout(const Tensor& x, double rate, RngState& rng, bool training);
Tensor dropout_backward(const DropoutResult& record, const Tensor& upstream);

}  // namespace firecast
