#include "cadsketch/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "cadsketch/error.hpp"

namespace cadsketch::ad {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
}

[[noreturn]] void bad_shape(const char* op, const Shape& a, const std::string& why) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_string(a) + " " + why);
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor finish(Tensor out, bool rec, std::function<void(Node&)> backward) {
  if (rec) {
    out.node()->requires_grad = true;
    out.node()->backward = std::move(backward);
    Tape::active()->record(out.node());
  }
  return out;
}

// Number of times b repeats inside a when b's shape is a suffix of a's shape.
std::size_t broadcast_reps(const char* op, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) mismatch(op, sa, sb);
  return b.size() == 0 ? 0 : a.size() / b.size();
}

std::size_t row_length(const Tensor& a) { return a.rank() == 0 ? 1 : static_cast<std::size_t>(a.dim(-1)); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  const int m = a.dim(0);
  const int k = a.dim(1);
  const int n = b.dim(1);
  Tensor out(Shape{m, n});
  MapR(out.data().data(), m, n).noalias() = CMapR(a.data().data(), m, k) * CMapR(b.data().data(), k, n);
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish(out, recording({&a, &b}), [an, bn, m, k, n](Node& self) {
    CMapR g(self.grad.data(), m, n);
    if (an->requires_grad) {
      MapR(an->ensure_grad().data(), m, k).noalias() += g * CMapR(bn->value.data(), k, n).transpose();
    }
    if (bn->requires_grad) {
      MapR(bn->ensure_grad().data(), k, n).noalias() += CMapR(an->value.data(), m, k).transpose() * g;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_reps("add", a, b);
  const std::size_t inner = b.size();
  Tensor out = a.clone();
  auto o = out.data();
  const auto bv = b.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < inner; ++i) o[r * inner + i] += bv[i];
  }
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish(out, recording({&a, &b}), [an, bn, reps, inner](Node& self) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < inner; ++i) gb[i] += self.grad[r * inner + i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_reps("sub", a, b);
  const std::size_t inner = b.size();
  Tensor out = a.clone();
  auto o = out.data();
  const auto bv = b.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < inner; ++i) o[r * inner + i] -= bv[i];
  }
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish(out, recording({&a, &b}), [an, bn, reps, inner](Node& self) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < inner; ++i) gb[i] -= self.grad[r * inner + i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_reps("mul", a, b);
  const std::size_t inner = b.size();
  Tensor out = a.clone();
  auto o = out.data();
  const auto bv = b.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < inner; ++i) o[r * inner + i] *= bv[i];
  }
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish(out, recording({&a, &b}), [an, bn, reps, inner](Node& self) {
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < inner; ++i) ga[r * inner + i] += self.grad[r * inner + i] * bn->value[i];
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < inner; ++i) gb[i] += self.grad[r * inner + i] * an->value[r * inner + i];
      }
    }
  });
}

Tensor scale(const Tensor& a, float s) {
  Tensor out = a.clone();
  for (float& v : out.data()) v *= s;
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an, s](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, float s) {
  Tensor out = a.clone();
  for (float& v : out.data()) v += s;
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) mismatch("reshape", a.shape(), shape);
  Tensor out(std::move(shape), std::vector<float>(a.data().begin(), a.data().end()));
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) bad_shape("transpose", a.shape(), "needs rank >= 2");
  const int m = a.dim(-2);
  const int n = a.dim(-1);
  const std::size_t batch = a.size() / (static_cast<std::size_t>(m) * n);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Tensor out(shape);
  const std::size_t block = static_cast<std::size_t>(m) * n;
  for (std::size_t b = 0; b < batch; ++b) {
    MapR(out.data().data() + b * block, n, m) = CMapR(a.data().data() + b * block, m, n).transpose();
  }
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an, m, n, batch, block](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      MapR(ga.data() + b * block, m, n) += CMapR(self.grad.data() + b * block, n, m).transpose();
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) bad_shape("concat", parts[0].shape(), "axis out of range");
  Shape shape = parts[0].shape();
  shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (static_cast<int>(s.size()) != rank) mismatch("concat", parts[0].shape(), s);
    for (int i = 0; i < rank; ++i) {
      if (i != axis && s[i] != parts[0].shape()[i]) mismatch("concat", parts[0].shape(), s);
    }
    shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  std::size_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];

  Tensor out(shape);
  const std::size_t out_row = static_cast<std::size_t>(shape[axis]) * inner;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = static_cast<std::size_t>(p.shape()[axis]) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(o * width), width,
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    offsets.push_back(offset);
    widths.push_back(width);
    offset += width;
  }

  bool rec = false;
  for (const auto& p : parts) rec = rec || recording({&p});
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return finish(out, rec, [nodes, offsets, widths, outer, out_row](Node& self) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (!nodes[k]->requires_grad) continue;
      auto& g = nodes[k]->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += self.grad[o * out_row + offsets[k] + i];
      }
    }
  });
}

Tensor slice(const Tensor& a, int axis, int begin, int end) {
  const int rank = a.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) bad_shape("slice", a.shape(), "axis out of range");
  if (begin < 0 || end > a.shape()[axis] || begin >= end) bad_shape("slice", a.shape(), "bad range");
  Shape shape = a.shape();
  shape[axis] = end - begin;
  std::size_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  std::size_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];
  const std::size_t in_row = static_cast<std::size_t>(a.shape()[axis]) * inner;
  const std::size_t out_row = static_cast<std::size_t>(end - begin) * inner;
  const std::size_t start = static_cast<std::size_t>(begin) * inner;
  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(o * in_row + start), out_row,
                out.data().begin() + static_cast<std::ptrdiff_t>(o * out_row));
  }
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an, outer, in_row, out_row, start](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < out_row; ++i) ga[o * in_row + start + i] += self.grad[o * out_row + i];
    }
  });
}

Tensor select_rows(const Tensor& a, const std::vector<int>& rows) {
  if (a.rank() != 2) bad_shape("select_rows", a.shape(), "needs rank 2");
  const int n = a.dim(0);
  const std::size_t d = static_cast<std::size_t>(a.dim(1));
  Tensor out(Shape{static_cast<int>(rows.size()), static_cast<int>(d)});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= n) bad_shape("select_rows", a.shape(), "row index out of range");
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an, rows, d](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t i = 0; i < d; ++i) ga[static_cast<std::size_t>(rows[r]) * d + i] += self.grad[r * d + i];
    }
  });
}

Tensor softmax(const Tensor& a) {
  const std::size_t n = row_length(a);
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.data() + r * n;
    float* o = y.data() + r * n;
    const float mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - mx);
      total += o[i];
    }
    const float inv = static_cast<float>(1.0 / total);
    for (std::size_t i = 0; i < n; ++i) o[i] *= inv;
  }
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an, n, rows](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const float* y = self.value.data() + r * n;
      const float* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += static_cast<double>(g[i]) * y[i];
      for (std::size_t i = 0; i < n; ++i) ga[r * n + i] += y[i] * (g[i] - static_cast<float>(dot));
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  Tensor out(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * self.value[i] * (1.0f - self.value[i]);
  });
}

Tensor gelu(const Tensor& a) {
  constexpr float inv_sqrt2 = 0.70710678118654752f;
  constexpr float inv_sqrt_2pi = 0.39894228040143268f;
  Tensor out(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.5f * x[i] * (1.0f + std::erf(x[i] * inv_sqrt2));
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an](Node& self) {
    auto& ga = an->ensure_grad();
    const auto& x = an->value;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const float cdf = 0.5f * (1.0f + std::erf(x[i] * inv_sqrt2));
      const float pdf = inv_sqrt_2pi * std::exp(-0.5f * x[i] * x[i]);
      ga[i] += self.grad[i] * (cdf + x[i] * pdf);
    }
  });
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an](Node& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (an->value[i] > 0.0f) ga[i] += self.grad[i];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  const std::size_t n = row_length(x);
  if (gain.size() != n || bias.size() != n) mismatch("layer_norm", x.shape(), gain.shape());
  const std::size_t rows = x.size() / n;
  Tensor out(x.shape());
  Buffer xhat(x.size());
  Buffer inv_std(rows);
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += in[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<float>(is);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (in[i] - mu) * is;
      xhat[r * n + i] = static_cast<float>(h);
      y[r * n + i] = static_cast<float>(h * gv[i] + bv[i]);
    }
  }
  NodePtr xn = x.node();
  NodePtr gn = gain.node();
  NodePtr bn = bias.node();
  return finish(out, recording({&x, &gain, &bias}),
                [xn, gn, bn, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                  const auto& g = self.grad;
                  if (gn->requires_grad) {
                    auto& gg = gn->ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t i = 0; i < n; ++i) gg[i] += g[r * n + i] * xhat[r * n + i];
                    }
                  }
                  if (bn->requires_grad) {
                    auto& gb = bn->ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t i = 0; i < n; ++i) gb[i] += g[r * n + i];
                    }
                  }
                  if (xn->requires_grad) {
                    auto& gx = xn->ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (std::size_t i = 0; i < n; ++i) {
                        const double d = static_cast<double>(g[r * n + i]) * gn->value[i];
                        mean_d += d;
                        mean_dx += d * xhat[r * n + i];
                      }
                      mean_d /= static_cast<double>(n);
                      mean_dx /= static_cast<double>(n);
                      for (std::size_t i = 0; i < n; ++i) {
                        const double d = static_cast<double>(g[r * n + i]) * gn->value[i];
                        gx[r * n + i] += static_cast<float>(inv_std[r] * (d - mean_d - xhat[r * n + i] * mean_dx));
                      }
                    }
                  }
                });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0) || weight.dim(2) != weight.dim(3) ||
      weight.dim(2) % 2 == 0) {
    mismatch("conv2d", x.shape(), weight.shape());
  }
  const int cout = weight.dim(0);
  if (bias.size() != static_cast<std::size_t>(cout)) mismatch("conv2d", weight.shape(), bias.shape());
  const int cin = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  const int k = weight.dim(2);
  const int pad = k / 2;
  const int patch = cin * k * k;
  const int pixels = h * w;

  // im2col: row (c, ky, kx), column (y, x).
  auto cols = std::make_shared<Buffer>(static_cast<std::size_t>(patch) * pixels, 0.0f);
  const auto xv = x.data();
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols->data() + static_cast<std::size_t>((c * k + ky) * k + kx) * pixels;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx < 0 || sx >= w) continue;
            row[y * w + xx] = xv[(static_cast<std::size_t>(c) * h + sy) * w + sx];
          }
        }
      }
    }
  }
  Tensor out(Shape{cout, h, w});
  MapR o(out.data().data(), cout, pixels);
  o.noalias() = CMapR(weight.data().data(), cout, patch) * CMapR(cols->data(), patch, pixels);
  const auto bv = bias.data();
  for (int c = 0; c < cout; ++c) o.row(c).array() += bv[c];

  NodePtr xn = x.node();
  NodePtr wn = weight.node();
  NodePtr bn = bias.node();
  const bool rec = recording({&x, &weight, &bias});
  if (!rec) return out;
  return finish(out, rec, [xn, wn, bn, cols, cin, cout, h, w, k, pad, patch, pixels](Node& self) {
    CMapR g(self.grad.data(), cout, pixels);
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (int c = 0; c < cout; ++c) gb[c] += g.row(c).sum();
    }
    if (wn->requires_grad) {
      MapR(wn->ensure_grad().data(), cout, patch).noalias() += g * CMapR(cols->data(), patch, pixels).transpose();
    }
    if (xn->requires_grad) {
      MatR gcols = CMapR(wn->value.data(), cout, patch).transpose() * g;
      auto& gx = xn->ensure_grad();
      for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const float* row = gcols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * pixels;
            for (int y = 0; y < h; ++y) {
              const int sy = y + ky - pad;
              if (sy < 0 || sy >= h) continue;
              for (int xx = 0; xx < w; ++xx) {
                const int sx = xx + kx - pad;
                if (sx < 0 || sx >= w) continue;
                gx[(static_cast<std::size_t>(c) * h + sy) * w + sx] += row[y * w + xx];
              }
            }
          }
        }
      }
    }
  });
}

Tensor avg_pool2(const Tensor& x) {
  if (x.rank() < 2 || x.dim(-1) % 2 != 0 || x.dim(-2) % 2 != 0) bad_shape("avg_pool2", x.shape(), "needs even H,W");
  const int h = x.dim(-2);
  const int w = x.dim(-1);
  const std::size_t planes = x.size() / (static_cast<std::size_t>(h) * w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = h / 2;
  shape[shape.size() - 1] = w / 2;
  Tensor out(shape);
  const auto xv = x.data();
  auto y = out.data();
  const int oh = h / 2;
  const int ow = w / 2;
  for (std::size_t p = 0; p < planes; ++p) {
    const float* in = xv.data() + p * h * w;
    float* o = y.data() + p * oh * ow;
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c) {
        o[r * ow + c] = 0.25f * (in[2 * r * w + 2 * c] + in[2 * r * w + 2 * c + 1] + in[(2 * r + 1) * w + 2 * c] +
                                 in[(2 * r + 1) * w + 2 * c + 1]);
      }
    }
  }
  NodePtr xn = x.node();
  return finish(out, recording({&x}), [xn, planes, h, w, oh, ow](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t p = 0; p < planes; ++p) {
      float* gi = gx.data() + p * h * w;
      const float* g = self.grad.data() + p * oh * ow;
      for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
          const float v = 0.25f * g[r * ow + c];
          gi[2 * r * w + 2 * c] += v;
          gi[2 * r * w + 2 * c + 1] += v;
          gi[(2 * r + 1) * w + 2 * c] += v;
          gi[(2 * r + 1) * w + 2 * c + 1] += v;
        }
      }
    }
  });
}

namespace {

// Index map from patch layout [P, C*p*p] to image layout [C,H,W].
std::vector<std::uint32_t> patch_index(int channels, int patch, int height, int width) {
  const int grid_w = width / patch;
  const int per_patch = channels * patch * patch;
  const int count = (height / patch) * grid_w;
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(count) * per_patch);
  for (int pi = 0; pi < count; ++pi) {
    const int py = pi / grid_w;
    const int px = pi % grid_w;
    for (int c = 0; c < channels; ++c) {
      for (int dy = 0; dy < patch; ++dy) {
        for (int dx = 0; dx < patch; ++dx) {
          const std::size_t dst = static_cast<std::size_t>(pi) * per_patch + (c * patch + dy) * patch + dx;
          idx[dst] = static_cast<std::uint32_t>((c * height + py * patch + dy) * width + px * patch + dx);
        }
      }
    }
  }
  return idx;
}

}  // namespace

Tensor patchify(const Tensor& x, int patch) {
  if (x.rank() != 3 || patch <= 0 || x.dim(1) % patch != 0 || x.dim(2) % patch != 0) {
    bad_shape("patchify", x.shape(), "not divisible by patch " + std::to_string(patch));
  }
  const int c = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  auto idx = std::make_shared<std::vector<std::uint32_t>>(patch_index(c, patch, h, w));
  Tensor out(Shape{(h / patch) * (w / patch), c * patch * patch});
  const auto xv = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < idx->size(); ++i) o[i] = xv[(*idx)[i]];
  NodePtr xn = x.node();
  return finish(out, recording({&x}), [xn, idx](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += self.grad[i];
  });
}

Tensor unpatchify(const Tensor& x, int patch, int height, int width) {
  if (x.rank() != 2 || patch <= 0 || height % patch != 0 || width % patch != 0 ||
      x.dim(0) != (height / patch) * (width / patch) || x.dim(1) % (patch * patch) != 0) {
    bad_shape("unpatchify", x.shape(), "does not tile " + std::to_string(height) + "x" + std::to_string(width));
  }
  const int c = x.dim(1) / (patch * patch);
  auto idx = std::make_shared<std::vector<std::uint32_t>>(patch_index(c, patch, height, width));
  Tensor out(Shape{c, height, width});
  const auto xv = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < idx->size(); ++i) o[(*idx)[i]] = xv[i];
  NodePtr xn = x.node();
  return finish(out, recording({&x}), [xn, idx](Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i) gx[i] += self.grad[(*idx)[i]];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (float v : a.data()) total += v;
  Tensor out = Tensor::scalar(static_cast<float>(total));
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an](Node& self) {
    auto& ga = an->ensure_grad();
    for (float& g : ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double total = 0.0;
  for (float v : a.data()) total += v;
  const double n = static_cast<double>(a.size());
  Tensor out = Tensor::scalar(static_cast<float>(total / n));
  NodePtr an = a.node();
  return finish(out, recording({&a}), [an, n](Node& self) {
    auto& ga = an->ensure_grad();
    const float g = static_cast<float>(self.grad[0] / n);
    for (float& v : ga) v += g;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mse", a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    total += d * d;
  }
  const double n = static_cast<double>(av.size());
  Tensor out = Tensor::scalar(static_cast<float>(total / n));
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return finish(out, recording({&a, &b}), [an, bn, n](Node& self) {
    const float k = static_cast<float>(2.0 * self.grad[0] / n);
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += k * (an->value[i] - bn->value[i]);
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= k * (an->value[i] - bn->value[i]);
    }
  });
}

Tensor cross_entropy(const Tensor& pred, const Tensor& target) {
  constexpr float floor = 1e-9f;
  if (pred.shape() != target.shape()) mismatch("cross_entropy", pred.shape(), target.shape());
  const std::size_t n = row_length(pred);
  const double rows = static_cast<double>(pred.size() / n);
  const auto p = pred.data();
  const auto t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != 0.0f) total -= t[i] * std::log(static_cast<double>(std::max(p[i], floor)));
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / rows));
  NodePtr pn = pred.node();
  NodePtr tn = target.node();
  return finish(out, recording({&pred}), [pn, tn, rows](Node& self) {
    if (!pn->requires_grad) return;
    auto& gp = pn->ensure_grad();
    const double k = self.grad[0] / rows;
    for (std::size_t i = 0; i < gp.size(); ++i) {
      if (tn->value[i] != 0.0f && pn->value[i] >= floor) {
        gp[i] -= static_cast<float>(k * tn->value[i] / pn->value[i]);
      }
    }
  });
}

Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target) {
  constexpr float lo = 1e-6f;
  constexpr float hi = 1.0f - 1e-6f;
  if (pred.shape() != target.shape()) mismatch("binary_cross_entropy", pred.shape(), target.shape());
  const auto p = pred.data();
  const auto t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], lo, hi);
    total -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
  }
  const double n = static_cast<double>(p.size());
  Tensor out = Tensor::scalar(static_cast<float>(total / n));
  NodePtr pn = pred.node();
  NodePtr tn = target.node();
  return finish(out, recording({&pred}), [pn, tn, n, lo, hi](Node& self) {
    if (!pn->requires_grad) return;
    auto& gp = pn->ensure_grad();
    const double k = self.grad[0] / n;
    for (std::size_t i = 0; i < gp.size(); ++i) {
      const double q = pn->value[i];
      if (q < lo || q > hi) continue;
      gp[i] += static_cast<float>(k * (q - tn->value[i]) / (q * (1.0 - q)));
    }
  });
}

}  // namespace cadsketch::ad
