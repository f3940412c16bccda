#include "firecast/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "firecast/errors.hpp"

namespace firecast {

namespace {
void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + " must have rank " +
                             std::to_string(rank) + ", got shape " +
                             t.shape_string());
    }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul inner dimensions disagree: " +
                             a.shape_string() + " vs " + b.shape_string());
    }
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            const double* brow = pb + p * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b,
                            const Tensor& upstream) {
    require_rank(upstream, 2, "matmul upstream");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (upstream.dim(0) != m || upstream.dim(1) != n) {
        throw DimensionError("matmul upstream shape " + upstream.shape_string() +
                             " does not match output [" + std::to_string(m) +
                             "x" + std::to_string(n) + "]");
    }
    MatmulGrads grads{Tensor({m, k}), Tensor({k, n})};
    const double* pa = a.data();
    const double* pb = b.data();
    const double* pu = upstream.data();
    // dA = U * B^T, dB = A^T * U
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += pu[i * n + j] * pb[p * n + j];
            }
            grads.a_grad.data()[i * k + p] = acc;
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                acc += pa[i * k + p] * pu[i * n + j];
            }
            grads.b_grad.data()[p * n + j] = acc;
        }
    }
    return grads;
}

namespace {
struct ConvDims {
    std::size_t c, h, w, f, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels,
                   std::size_t stride, std::size_t pad) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    if (stride == 0) {
        throw ConfigError("conv2d stride must be positive");
    }
    ConvDims d{};
    d.c = input.dim(0);
    d.h = input.dim(1);
    d.w = input.dim(2);
    d.f = kernels.dim(0);
    d.kh = kernels.dim(2);
    d.kw = kernels.dim(3);
    if (kernels.dim(1) != d.c) {
        throw DimensionError("conv2d kernel channels " + kernels.shape_string() +
                             " do not match input " + input.shape_string());
    }
    if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad) {
        throw DimensionError("conv2d kernel " + kernels.shape_string() +
                             " larger than padded input " + input.shape_string());
    }
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}
}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t pad) {
    const ConvDims d = conv_dims(input, kernels, stride, pad);
    Tensor out({d.f, d.oh, d.ow});
    const double* pin = input.data();
    const double* pk = kernels.data();
    double* pout = out.data();
    for (std::size_t f = 0; f < d.f; ++f) {
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
                double acc = 0.0;
                for (std::size_t ch = 0; ch < d.c; ++ch) {
                    for (std::size_t ky = 0; ky < d.kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * stride + ky) -
                            static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                        for (std::size_t kx = 0; kx < d.kw; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                            acc += pin[(ch * d.h + iy) * d.w + ix] *
                                   pk[((f * d.c + ch) * d.kh + ky) * d.kw + kx];
                        }
                    }
                }
                pout[(f * d.oh + oy) * d.ow + ox] = acc;
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            std::size_t stride, std::size_t pad,
                            const Tensor& upstream) {
    const ConvDims d = conv_dims(input, kernels, stride, pad);
    require_rank(upstream, 3, "conv2d upstream");
    if (upstream.dim(0) != d.f || upstream.dim(1) != d.oh ||
        upstream.dim(2) != d.ow) {
        throw DimensionError("conv2d upstream shape " + upstream.shape_string() +
                             " does not match output");
    }
    Conv2dGrads grads{Tensor(input.shape()), Tensor(kernels.shape())};
    const double* pin = input.data();
    const double* pk = kernels.data();
    const double* pu = upstream.data();
    double* pgi = grads.input_grad.data();
    double* pgk = grads.kernel_grad.data();
    for (std::size_t f = 0; f < d.f; ++f) {
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
            for (std::size_t ox = 0; ox < d.ow; ++ox) {
                const double up = pu[(f * d.oh + oy) * d.ow + ox];
                if (up == 0.0) continue;
                for (std::size_t ch = 0; ch < d.c; ++ch) {
                    for (std::size_t ky = 0; ky < d.kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * stride + ky) -
                            static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                        for (std::size_t kx = 0; kx < d.kw; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                            const std::size_t in_idx = (ch * d.h + iy) * d.w + ix;
                            const std::size_t k_idx =
                                ((f * d.c + ch) * d.kh + ky) * d.kw + kx;
                            pgi[in_idx] += up * pk[k_idx];
                            pgk[k_idx] += up * pin[in_idx];
                        }
                    }
                }
            }
        }
    }
    return grads;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {
template <typename F>
Tensor elementwise(const Tensor& x, F f) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shapes " + a.shape_string() +
                             " and " + b.shape_string() + " differ");
    }
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
    return elementwise(x, [](double v) { return sigmoid(v); });
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream) {
    require_same_shape(output, upstream, "sigmoid_backward");
    Tensor out(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i) {
        out[i] = upstream[i] * output[i] * (1.0 - output[i]);
    }
    return out;
}

Tensor tanh(const Tensor& x) {
    return elementwise(x, [](double v) { return std::tanh(v); });
}

Tensor tanh_backward(const Tensor& output, const Tensor& upstream) {
    require_same_shape(output, upstream, "tanh_backward");
    Tensor out(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i) {
        out[i] = upstream[i] * (1.0 - output[i] * output[i]);
    }
    return out;
}

Tensor relu(const Tensor& x) {
    return elementwise(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    require_same_shape(input, upstream, "relu_backward");
    Tensor out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = input[i] > 0.0 ? upstream[i] : 0.0;
    }
    return out;
}

double bce_loss(double p, double y) {
    const double q = std::clamp(p, kBceEps, 1.0 - kBceEps);
    return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

double bce_loss_grad(double p, double y) {
    const double q = std::clamp(p, kBceEps, 1.0 - kBceEps);
    return -(y / q) + (1.0 - y) / (1.0 - q);
}

double bce_loss_mean(const std::vector<double>& p,
                     const std::vector<std::uint8_t>& y) {
    if (p.size() != y.size()) {
        throw ArgumentError("bce_loss_mean: " + std::to_string(p.size()) +
                            " scores vs " + std::to_string(y.size()) + " labels");
    }
    if (p.empty()) {
        throw ArgumentError("bce_loss_mean: empty batch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        total += bce_loss(p[i], static_cast<double>(y[i]));
    }
    return total / static_cast<double>(p.size());
}

Tensor maxpool2(const Tensor& x) {
    require_rank(x, 3, "maxpool2 input");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h < 2 || w < 2) {
        throw DimensionError("maxpool2 needs spatial extent >= 2, got " +
                             x.shape_string());
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out({c, oh, ow});
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        best = std::max(
                            best, px[(ch * h + oy * 2 + dy) * w + ox * 2 + dx]);
                    }
                }
                po[(ch * oh + oy) * ow + ox] = best;
            }
        }
    }
    return out;
}

Tensor maxpool2_backward(const Tensor& x, const Tensor& upstream) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = h / 2, ow = w / 2;
    if (upstream.rank() != 3 || upstream.dim(0) != c || upstream.dim(1) != oh ||
        upstream.dim(2) != ow) {
        throw DimensionError("maxpool2 upstream shape " + upstream.shape_string() +
                             " does not match pooled output");
    }
    Tensor grad(x.shape());
    const double* px = x.data();
    const double* pu = upstream.data();
    double* pg = grad.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                // First maximum in row-major scan order takes the gradient.
                std::size_t best_idx = 0;
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx =
                            (ch * h + oy * 2 + dy) * w + ox * 2 + dx;
                        if (px[idx] > best) {
                            best = px[idx];
                            best_idx = idx;
                        }
                    }
                }
                pg[best_idx] += pu[(ch * oh + oy) * ow + ox];
            }
        }
    }
    return grad;
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 3, "global_avg_pool input");
    const std::size_t c = x.dim(0), spatial = x.dim(1) * x.dim(2);
    Tensor out({c});
    const double* px = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < spatial; ++i) acc += px[ch * spatial + i];
        out[ch] = acc / static_cast<double>(spatial);
    }
    return out;
}

Tensor global_avg_pool_backward(const std::vector<std::size_t>& input_shape,
                                const Tensor& upstream) {
    if (input_shape.size() != 3) {
        throw DimensionError("global_avg_pool expects a rank-3 input shape");
    }
    const std::size_t c = input_shape[0], spatial = input_shape[1] * input_shape[2];
    if (upstream.rank() != 1 || upstream.dim(0) != c) {
        throw DimensionError("global_avg_pool upstream shape " +
                             upstream.shape_string() + " does not match channels");
    }
    Tensor grad(input_shape);
    double* pg = grad.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double share = upstream[ch] / static_cast<double>(spatial);
        for (std::size_t i = 0; i < spatial; ++i) pg[ch * spatial + i] = share;
    }
    return grad;
}

namespace {
bool is_vector_input(const Tensor& x) { return x.rank() == 1; }
}  // namespace

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(w, 2, "dense weights");
    require_rank(b, 1, "dense bias");
    const std::size_t in = w.dim(0), out_dim = w.dim(1);
    if (b.dim(0) != out_dim) {
        throw DimensionError("dense bias shape " + b.shape_string() +
                             " does not match weights " + w.shape_string());
    }
    const bool vec = is_vector_input(x);
    if (vec ? x.dim(0) != in : (x.rank() != 2 || x.dim(1) != in)) {
        throw DimensionError("dense input shape " + x.shape_string() +
                             " does not match weights " + w.shape_string());
    }
    const std::size_t n = vec ? 1 : x.dim(0);
    Tensor y(vec ? std::vector<std::size_t>{out_dim}
                 : std::vector<std::size_t>{n, out_dim});
    const double* px = x.data();
    const double* pw = w.data();
    double* py = y.data();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) py[r * out_dim + o] = b[o];
        for (std::size_t i = 0; i < in; ++i) {
            const double xv = px[r * in + i];
            if (xv == 0.0) continue;
            for (std::size_t o = 0; o < out_dim; ++o) {
                py[r * out_dim + o] += xv * pw[i * out_dim + o];
            }
        }
    }
    return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& w,
                          const Tensor& upstream) {
    const std::size_t in = w.dim(0), out_dim = w.dim(1);
    const bool vec = is_vector_input(x);
    const std::size_t n = vec ? 1 : x.dim(0);
    if (vec ? (upstream.rank() != 1 || upstream.dim(0) != out_dim)
            : (upstream.rank() != 2 || upstream.dim(0) != n ||
               upstream.dim(1) != out_dim)) {
        throw DimensionError("dense upstream shape " + upstream.shape_string() +
                             " does not match output");
    }
    DenseGrads grads{Tensor(x.shape()), Tensor(w.shape()), Tensor({out_dim})};
    const double* px = x.data();
    const double* pw = w.data();
    const double* pu = upstream.data();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double up = pu[r * out_dim + o];
            if (up == 0.0) continue;
            grads.b_grad[o] += up;
            for (std::size_t i = 0; i < in; ++i) {
                grads.x_grad.data()[r * in + i] += up * pw[i * out_dim + o];
                grads.w_grad.data()[i * out_dim + o] += up * px[r * in + i];
            }
        }
    }
    return grads;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    require_rank(x, 3, "channel bias input");
    require_rank(b, 1, "channel bias");
    const std::size_t c = x.dim(0), spatial = x.dim(1) * x.dim(2);
    if (b.dim(0) != c) {
        throw DimensionError("channel bias shape " + b.shape_string() +
                             " does not match input " + x.shape_string());
    }
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < spatial; ++i) {
            po[ch * spatial + i] = px[ch * spatial + i] + b[ch];
        }
    }
    return out;
}

Tensor channel_bias_backward(const Tensor& upstream) {
    const std::size_t c = upstream.dim(0);
    const std::size_t spatial = upstream.dim(1) * upstream.dim(2);
    Tensor grad({c});
    const double* pu = upstream.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < spatial; ++i) acc += pu[ch * spatial + i];
        grad[ch] = acc;
    }
    return grad;
}

DropoutResult dropout(const Tensor& x, double rate, RngState& rng,
                      bool training) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1), got " +
                          std::to_string(rate));
    }
    DropoutResult result;
    result.training = training;
    if (!training || rate == 0.0) {
        result.output = x;
        result.kept.assign(x.size(), 1);
        result.scale = 1.0;
        return result;
    }
    result.scale = 1.0 / (1.0 - rate);
    result.kept.resize(x.size());
    result.output = Tensor(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool keep = rng.next_uniform() >= rate;
        result.kept[i] = keep ? 1 : 0;
        result.output[i] = keep ? x[i] * result.scale : 0.0;
    }
    return result;
}

Tensor dropout_backward(const DropoutResult& record, const Tensor& upstream) {
    if (record.kept.empty()) {
        throw StateError("dropout_backward called before forward");
    }
    if (record.kept.size() != upstream.size()) {
        throw DimensionError("dropout upstream shape " + upstream.shape_string() +
                             " does not match forward record");
    }
    Tensor grad(upstream.shape());
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        grad[i] = record.kept[i] ? upstream[i] * record.scale : 0.0;
    }
    return grad;
}

}  // namespace firecast
