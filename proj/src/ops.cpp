#include "ctiunet/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "ctiunet/errors.hpp"

namespace ctiunet {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t in_c, in_h, in_w;
  std::size_t k, stride, pad;
  std::size_t out_h, out_w;
};

std::size_t padding_amount(std::size_t kernel, Padding padding) {
  return padding == Padding::kSame ? kernel / 2 : 0;
}

// cols: (in_c * k * k, out_h * out_w)
void im2col(const double* in, const ConvGeometry& g, double* cols) {
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const double* src = in + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * out_plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* line = src + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w))
                          ? 0.0
                          : line[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* out) {
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.in_c; ++c) {
    double* dst = out + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * out_plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          double* line = dst + static_cast<std::size_t>(iy) * g.in_w;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            line[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

Value scalar(Tape& tape, double v, const std::vector<Value>& inputs,
             Tape::BackwardFn fn) {
  return tape.record(Tensor4({1, 1, 1, 1}, v), inputs, std::move(fn));
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, Padding padding) {
  const std::size_t padded = in + 2 * padding_amount(kernel, padding);
  if (stride == 0) throw ConfigError("conv2d stride must be >= 1");
  if (kernel == 0 || kernel > padded) {
    throw ConfigError("conv2d kernel " + std::to_string(kernel) +
                      " exceeds padded input extent " +
                      std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

Value conv2d(Value input, Value weights, std::optional<Value> bias,
             Conv2dOptions options) {
  Tape& tape = *input.tape;
  const Shape xs = input.shape();
  const Shape ws = weights.shape();
  if (ws.h != ws.w) {
    throw ConfigError("conv2d expects square kernels, got " + ws.str());
  }
  if (ws.c != xs.c) {
    throw ConfigError("conv2d weights " + ws.str() + " expect " +
                      std::to_string(ws.c) + " input channels, input is " +
                      xs.str());
  }
  if (options.padding == Padding::kSame && ws.h % 2 == 0) {
    throw ConfigError("same padding needs an odd kernel, got " +
                      std::to_string(ws.h));
  }
  if (bias && bias->shape() != Shape{1, ws.n, 1, 1}) {
    throw ConfigError("conv2d bias " + bias->shape().str() +
                      " does not match " + std::to_string(ws.n) +
                      " output channels");
  }

  ConvGeometry g{};
  g.in_c = xs.c;
  g.in_h = xs.h;
  g.in_w = xs.w;
  g.k = ws.h;
  g.stride = options.stride;
  g.pad = padding_amount(g.k, options.padding);
  g.out_h = conv_output_extent(xs.h, g.k, g.stride, options.padding);
  g.out_w = conv_output_extent(xs.w, g.k, g.stride, options.padding);

  const std::size_t out_c = ws.n;
  const std::size_t rows = g.in_c * g.k * g.k;
  const std::size_t out_plane = g.out_h * g.out_w;
  const bool direct = g.k == 1 && g.stride == 1 && g.pad == 0;

  Tensor4 out({xs.n, out_c, g.out_h, g.out_w});
  RowMatrix cols(rows, out_plane);
  ConstMatrixMap w(weights.value().data().data(), out_c, rows);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const double* x = &input.value().data()[xs.c * xs.plane() * n];
    MatrixMap y(&out.at(n, 0, 0, 0), out_c, out_plane);
    if (direct) {
      y.noalias() = w * ConstMatrixMap(x, rows, out_plane);
    } else {
      im2col(x, g, cols.data());
      y.noalias() = w * cols;
    }
    if (bias) {
      const auto& b = bias->value();
      for (std::size_t c = 0; c < out_c; ++c) y.row(c).array() += b[c];
    }
  }

  std::vector<Value> inputs{input, weights};
  if (bias) inputs.push_back(*bias);
  const Tensor4* x_val = &input.value();
  const Tensor4* w_val = &weights.value();
  return tape.record(
      std::move(out), inputs,
      [=](const Tensor4& gy, std::vector<Tensor4*>& gin) {
        ConstMatrixMap wm(w_val->data().data(), out_c, rows);
        RowMatrix cols_b(rows, out_plane);
        RowMatrix dcols(rows, out_plane);
        for (std::size_t n = 0; n < xs.n; ++n) {
          const double* x = &x_val->data()[xs.c * xs.plane() * n];
          ConstMatrixMap dy(&gy.data()[out_c * out_plane * n], out_c,
                            out_plane);
          if (gin[1] != nullptr) {
            MatrixMap dw(gin[1]->data().data(), out_c, rows);
            if (direct) {
              dw.noalias() += dy * ConstMatrixMap(x, rows, out_plane).transpose();
            } else {
              im2col(x, g, cols_b.data());
              dw.noalias() += dy * cols_b.transpose();
            }
          }
          if (gin.size() > 2 && gin[2] != nullptr) {
            auto& db = *gin[2];
            for (std::size_t c = 0; c < out_c; ++c) db[c] += dy.row(c).sum();
          }
          if (gin[0] != nullptr) {
            double* dx = &gin[0]->data()[xs.c * xs.plane() * n];
            if (direct) {
              MatrixMap dxm(dx, rows, out_plane);
              dxm.noalias() += wm.transpose() * dy;
            } else {
              dcols.noalias() = wm.transpose() * dy;
              col2im_add(dcols.data(), g, dx);
            }
          }
        }
      });
}

Value maxpool2(Value input) {
  Tape& tape = *input.tape;
  const Shape s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ConfigError("maxpool2 needs even spatial extents, got " + s.str());
  }
  const Tensor4& x = input.value();
  Tensor4 out({s.n, s.c, s.h / 2, s.w / 2});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; y += 2)
        for (std::size_t xx = 0; xx < s.w; xx += 2, ++o) {
          const std::size_t cand[4] = {x.index(n, c, y, xx),
                                       x.index(n, c, y, xx + 1),
                                       x.index(n, c, y + 1, xx),
                                       x.index(n, c, y + 1, xx + 1)};
          std::size_t best = cand[0];
          for (std::size_t k = 1; k < 4; ++k)
            if (x[cand[k]] > x[best]) best = cand[k];
          out[o] = x[best];
          argmax[o] = best;
          if (tape.tracking_kinks()) tape.mix_kink_index(best);
        }
  return tape.record(std::move(out), {input},
                     [argmax = std::move(argmax)](const Tensor4& gy,
                                                  std::vector<Tensor4*>& gin) {
                       Tensor4& gx = *gin[0];
                       for (std::size_t i = 0; i < argmax.size(); ++i)
                         gx[argmax[i]] += gy[i];
                     });
}

Value upsample_nearest2(Value input) {
  Tape& tape = *input.tape;
  const Shape s = input.shape();
  const Tensor4& x = input.value();
  Tensor4 out({s.n, s.c, s.h * 2, s.w * 2});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < 2 * s.h; ++y)
        for (std::size_t xx = 0; xx < 2 * s.w; ++xx)
          out.at(n, c, y, xx) = x.at(n, c, y / 2, xx / 2);
  return tape.record(std::move(out), {input},
                     [s](const Tensor4& gy, std::vector<Tensor4*>& gin) {
                       Tensor4& gx = *gin[0];
                       for (std::size_t n = 0; n < s.n; ++n)
                         for (std::size_t c = 0; c < s.c; ++c)
                           for (std::size_t y = 0; y < 2 * s.h; ++y)
                             for (std::size_t xx = 0; xx < 2 * s.w; ++xx)
                               gx.at(n, c, y / 2, xx / 2) += gy.at(n, c, y, xx);
                     });
}

Value concat_channels(Value a, Value b) {
  Tape& tape = *a.tape;
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ConfigError("concat_channels needs equal batch and spatial extents, "
                      "got " + sa.str() + " and " + sb.str());
  }
  const std::size_t plane = sa.plane();
  Tensor4 out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (std::size_t n = 0; n < sa.n; ++n) {
    auto src_a = a.value().data().subspan(n * sa.c * plane, sa.c * plane);
    auto src_b = b.value().data().subspan(n * sb.c * plane, sb.c * plane);
    double* dst = &out.at(n, 0, 0, 0);
    std::copy(src_a.begin(), src_a.end(), dst);
    std::copy(src_b.begin(), src_b.end(), dst + sa.c * plane);
  }
  return tape.record(
      std::move(out), {a, b},
      [sa, sb, plane](const Tensor4& gy, std::vector<Tensor4*>& gin) {
        for (std::size_t n = 0; n < sa.n; ++n) {
          const double* src = &gy.data()[n * (sa.c + sb.c) * plane];
          if (gin[0] != nullptr) {
            double* da = &gin[0]->data()[n * sa.c * plane];
            for (std::size_t i = 0; i < sa.c * plane; ++i) da[i] += src[i];
          }
          if (gin[1] != nullptr) {
            double* db = &gin[1]->data()[n * sb.c * plane];
            src += sa.c * plane;
            for (std::size_t i = 0; i < sb.c * plane; ++i) db[i] += src[i];
          }
        }
      });
}

Value instance_norm(Value input, Value scale, Value shift, double eps) {
  Tape& tape = *input.tape;
  if (!(eps > 0.0)) throw ConfigError("instance_norm eps must be > 0");
  const Shape s = input.shape();
  const Shape affine{1, s.c, 1, 1};
  if (scale.shape() != affine || shift.shape() != affine) {
    throw ConfigError("instance_norm affine parameters must be " +
                      affine.str() + " for input " + s.str());
  }
  const std::size_t m = s.plane();
  const Tensor4& x = input.value();
  const Tensor4& gamma = scale.value();
  const Tensor4& beta = shift.value();
  Tensor4 xhat(s);
  std::vector<double> inv_std(s.n * s.c);
  Tensor4 out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto p = x.plane(n, c);
      double mu = 0.0;
      for (double v : p) mu += v;
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (double v : p) var += (v - mu) * (v - mu);
      var /= static_cast<double>(m);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * s.c + c] = is;
      auto xh = xhat.plane(n, c);
      auto o = out.plane(n, c);
      for (std::size_t i = 0; i < m; ++i) {
        xh[i] = (p[i] - mu) * is;
        o[i] = gamma[c] * xh[i] + beta[c];
      }
    }
  return tape.record(
      std::move(out), {input, scale, shift},
      [s, m, xhat = std::move(xhat), inv_std = std::move(inv_std),
       gamma_val = &gamma](const Tensor4& gy, std::vector<Tensor4*>& gin) {
        const double md = static_cast<double>(m);
        for (std::size_t n = 0; n < s.n; ++n)
          for (std::size_t c = 0; c < s.c; ++c) {
            auto dy = gy.plane(n, c);
            auto xh = xhat.plane(n, c);
            double sum_dy = 0.0;
            double sum_dy_xh = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              sum_dy += dy[i];
              sum_dy_xh += dy[i] * xh[i];
            }
            if (gin[1] != nullptr) (*gin[1])[c] += sum_dy_xh;
            if (gin[2] != nullptr) (*gin[2])[c] += sum_dy;
            if (gin[0] != nullptr) {
              const double g = (*gamma_val)[c];
              const double k = g * inv_std[n * s.c + c] / md;
              auto dx = gin[0]->plane(n, c);
              for (std::size_t i = 0; i < m; ++i)
                dx[i] += k * (md * dy[i] - sum_dy - xh[i] * sum_dy_xh);
            }
          }
      });
}

Value relu(Value input) {
  Tape& tape = *input.tape;
  const Tensor4& x = input.value();
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (tape.tracking_kinks())
    for (std::size_t i = 0; i < x.size(); ++i) tape.mix_kink_bit(x[i] > 0.0);
  const Tensor4* xv = &x;
  return tape.record(std::move(out), {input},
                     [xv](const Tensor4& gy, std::vector<Tensor4*>& gin) {
                       Tensor4& gx = *gin[0];
                       for (std::size_t i = 0; i < gy.size(); ++i)
                         if ((*xv)[i] > 0.0) gx[i] += gy[i];
                     });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor4 sigmoid(const Tensor4& logits) {
  Tensor4 out(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i)
    out[i] = stable_sigmoid(logits[i]);
  return out;
}

Value sigmoid(Value input) {
  Tape& tape = *input.tape;
  const Tensor4* xv = &input.value();
  return tape.record(sigmoid(*xv), {input},
                     [xv](const Tensor4& gy, std::vector<Tensor4*>& gin) {
                       Tensor4& gx = *gin[0];
                       for (std::size_t i = 0; i < gy.size(); ++i) {
                         const double y = stable_sigmoid((*xv)[i]);
                         gx[i] += gy[i] * y * (1.0 - y);
                       }
                     });
}

Value mean(Value input) {
  const Tensor4& x = input.value();
  const double count = static_cast<double>(x.size());
  return scalar(*input.tape, x.sum() / count, {input},
                [count](const Tensor4& gy, std::vector<Tensor4*>& gin) {
                  Tensor4& gx = *gin[0];
                  const double g = gy[0] / count;
                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
                });
}

Value sum_of_squares(Value input) {
  const Tensor4& x = input.value();
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  const Tensor4* xv = &x;
  return scalar(*input.tape, acc, {input},
                [xv](const Tensor4& gy, std::vector<Tensor4*>& gin) {
                  Tensor4& gx = *gin[0];
                  for (std::size_t i = 0; i < gx.size(); ++i)
                    gx[i] += 2.0 * (*xv)[i] * gy[0];
                });
}

}  // namespace ctiunet
