#include "spikegate/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace spikegate {
namespace {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BroadcastPlan {
  Shape out;
  std::vector<Index> stride_a;  // aligned to out, 0 on broadcast axes
  std::vector<Index> stride_b;
};

std::vector<Index> dense_strides(const Shape& s) {
  std::vector<Index> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  p.out = broadcast_shape(a, b);
  const std::size_t r = p.out.size();
  const auto sa = dense_strides(a);
  const auto sb = dense_strides(b);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t back = r - 1 - i;
    if (i < a.size()) {
      const std::size_t ai = a.size() - 1 - i;
      p.stride_a[back] = a[ai] == 1 ? 0 : sa[ai];
    }
    if (i < b.size()) {
      const std::size_t bi = b.size() - 1 - i;
      p.stride_b[back] = b[bi] == 1 ? 0 : sb[bi];
    }
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t r = p.out.size();
  const Index total = numel(p.out);
  const Index inner = p.out[r - 1];
  const Index ia_in = p.stride_a[r - 1];
  const Index ib_in = p.stride_b[r - 1];
  std::vector<Index> idx(r, 0);
  for (Index base = 0; base < total; base += inner) {
    Index oa = 0, ob = 0;
    for (std::size_t d = 0; d + 1 < r; ++d) {
      oa += idx[d] * p.stride_a[d];
      ob += idx[d] * p.stride_b[d];
    }
    for (Index j = 0; j < inner; ++j) f(base + j, oa + j * ia_in, ob + j * ib_in);
    for (std::size_t d = r - 1; d-- > 0;) {
      if (++idx[d] < p.out[d]) break;
      idx[d] = 0;
    }
  }
}

template <typename Scalar>
void require_rank(const BasicTensor<Scalar>& x, Index rank, const char* what) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got shape " +
                     to_string(x.shape()));
  }
}

template <typename Scalar>
void check_window(const BasicTensor<Scalar>& x, Index k, Index stride, Index padding, const char* what) {
  if (k % 2 == 0) throw ShapeError(std::string(what) + ": kernel axes 2,3 have even extent " + std::to_string(k));
  if (stride < 1) throw ShapeError(std::string(what) + ": stride must be >= 1");
  if (padding < 0) throw ShapeError(std::string(what) + ": padding must be >= 0");
  if (x.dim(2) + 2 * padding < k || x.dim(3) + 2 * padding < k) {
    throw ShapeError(std::string(what) + ": input spatial axes 2,3 " + to_string(x.shape()) +
                     " smaller than kernel " + std::to_string(k) + " after padding");
  }
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const Index ea = i < a.size() ? a[a.size() - 1 - i] : 1;
    const Index eb = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) + " do not broadcast on trailing axis " +
                       std::to_string(i));
    }
    out[r - 1 - i] = std::max(ea, eb);
  }
  return out;
}

Index default_groups(Index channels) {
  if (channels >= 32) return std::gcd(channels, Index{32});
  if (channels >= 16) return std::gcd(channels, Index{16});
  return channels;
}

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  if (a.shape() == b.shape()) {
    return record_op<Scalar>(a.shape(), a.values() + b.values(), {a, b}, [a, b](const Vector& g) {
      accumulate_grad(a, g);
      accumulate_grad(b, g);
    });
  }
  const BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  Vector out(numel(plan.out));
  const Vector& av = a.values();
  const Vector& bv = b.values();
  for_each_broadcast(plan, [&](Index i, Index ia, Index ib) { out[i] = av[ia] + bv[ib]; });
  return record_op<Scalar>(plan.out, std::move(out), {a, b}, [a, b, plan](const Vector& g) {
    Vector ga = Vector::Zero(a.numel());
    Vector gb = Vector::Zero(b.numel());
    for_each_broadcast(plan, [&](Index i, Index ia, Index ib) {
      ga[ia] += g[i];
      gb[ib] += g[i];
    });
    accumulate_grad(a, ga);
    accumulate_grad(b, gb);
  });
}

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return add(a, scalar_mul(b, Scalar(-1)));
}

template <typename Scalar>
BasicTensor<Scalar> hadamard(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  if (a.shape() == b.shape()) {
    Vector out = a.values().cwiseProduct(b.values());
    return record_op<Scalar>(a.shape(), std::move(out), {a, b}, [a, b](const Vector& g) {
      if (a.requires_grad()) accumulate_grad(a, g.cwiseProduct(b.values()));
      if (b.requires_grad()) accumulate_grad(b, g.cwiseProduct(a.values()));
    });
  }
  const BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  Vector out(numel(plan.out));
  const Vector& av = a.values();
  const Vector& bv = b.values();
  for_each_broadcast(plan, [&](Index i, Index ia, Index ib) { out[i] = av[ia] * bv[ib]; });
  return record_op<Scalar>(plan.out, std::move(out), {a, b}, [a, b, plan](const Vector& g) {
    Vector ga = Vector::Zero(a.numel());
    Vector gb = Vector::Zero(b.numel());
    const Vector& av = a.values();
    const Vector& bv = b.values();
    for_each_broadcast(plan, [&](Index i, Index ia, Index ib) {
      ga[ia] += g[i] * bv[ib];
      gb[ib] += g[i] * av[ia];
    });
    accumulate_grad(a, ga);
    accumulate_grad(b, gb);
  });
}

template <typename Scalar>
BasicTensor<Scalar> scalar_mul(const BasicTensor<Scalar>& x, Scalar s) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  return record_op<Scalar>(x.shape(), x.values() * s, {x}, [x, s](const Vector& g) { accumulate_grad(x, g * s); });
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  Vector out = x.values().cwiseMax(Scalar(0));
  return record_op<Scalar>(x.shape(), std::move(out), {x}, [x](const Vector& g) {
    accumulate_grad(x, (x.values().array() > Scalar(0)).select(g, Scalar(0)).matrix());
  });
}

template <typename Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& x) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  constexpr Scalar lo = std::numeric_limits<Scalar>::min();
  constexpr Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon();
  Vector out = x.values().unaryExpr([lo, hi](Scalar v) {
    const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
    return std::clamp(s, lo, hi);
  });
  Vector saved = out;
  return record_op<Scalar>(x.shape(), std::move(out), {x}, [x, saved](const Vector& g) {
    accumulate_grad(x, (g.array() * saved.array() * (Scalar(1) - saved.array())).matrix());
  });
}

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& x) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  Vector out(1);
  out[0] = x.values().sum();
  return record_op<Scalar>({1}, std::move(out), {x}, [x](const Vector& g) {
    accumulate_grad(x, Vector::Constant(x.numel(), g[0]));
  });
}

template <typename Scalar>
BasicTensor<Scalar> mean(const BasicTensor<Scalar>& x) {
  return scalar_mul(sum(x), Scalar(1) / static_cast<Scalar>(x.numel()));
}

template <typename Scalar>
BasicTensor<Scalar> reshape(const BasicTensor<Scalar>& x, Shape shape) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  if (numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + to_string(x.shape()) + " into " + to_string(shape));
  }
  return record_op<Scalar>(std::move(shape), x.values(), {x}, [x](const Vector& g) { accumulate_grad(x, g); });
}

template <typename Scalar>
BasicTensor<Scalar> spatial_mean(const BasicTensor<Scalar>& x) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  require_rank(x, 4, "spatial_mean");
  const Index nc = x.dim(0) * x.dim(1);
  const Index hw = x.dim(2) * x.dim(3);
  Eigen::Map<const RowMat<Scalar>> in(x.values().data(), nc, hw);
  Vector out = in.rowwise().mean();
  return record_op<Scalar>({x.dim(0), x.dim(1), 1, 1}, std::move(out), {x}, [x, nc, hw](const Vector& g) {
    if (!x.requires_grad()) return;
    RowMat<Scalar> gx = (g / static_cast<Scalar>(hw)).replicate(1, hw);
    accumulate_grad(x, Eigen::Map<const Vector>(gx.data(), nc * hw));
  });
}

template <typename Scalar>
BasicTensor<Scalar> time_mean(const BasicTensor<Scalar>& x) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  if (x.rank() < 2) throw ShapeError("time_mean expects a leading time axis, got " + to_string(x.shape()));
  const Index steps = x.dim(0);
  const Index inner = x.numel() / steps;
  Eigen::Map<const RowMat<Scalar>> in(x.values().data(), steps, inner);
  Vector out = in.colwise().mean().transpose();
  Shape shape(x.shape().begin() + 1, x.shape().end());
  return record_op<Scalar>(std::move(shape), std::move(out), {x}, [x, steps, inner](const Vector& g) {
    if (!x.requires_grad()) return;
    RowMat<Scalar> gx = (g.transpose() / static_cast<Scalar>(steps)).replicate(steps, 1);
    accumulate_grad(x, Eigen::Map<const Vector>(gx.data(), steps * inner));
  });
}

template <typename Scalar>
BasicTensor<Scalar> repeat_time(const BasicTensor<Scalar>& x, Index steps) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  if (steps < 1) throw ShapeError("repeat_time needs at least one step");
  Vector out = x.values().replicate(steps, 1);
  Shape shape{steps};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  return record_op<Scalar>(std::move(shape), std::move(out), {x}, [x, steps](const Vector& g) {
    if (!x.requires_grad()) return;
    Eigen::Map<const RowMat<Scalar>> gm(g.data(), steps, x.numel());
    accumulate_grad(x, gm.colwise().sum().transpose());
  });
}

template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight, Index stride,
                           Index padding) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  require_rank(x, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv2d: weight axis 1 (" + std::to_string(weight.dim(1)) + ") != input axis 1 (" +
                     std::to_string(cin) + ")");
  }
  if (weight.dim(3) != k) throw ShapeError("conv2d: weight axes 2,3 must be square, got " + to_string(weight.shape()));
  check_window(x, k, stride, padding, "conv2d");
  const Index ho = conv_out_extent(h, k, stride, padding);
  const Index wo = conv_out_extent(w, k, stride, padding);
  const Index p = ho * wo;
  const Index ckk = cin * k * k;

  auto cols = std::make_shared<RowMat<Scalar>>(RowMat<Scalar>::Zero(ckk, n * p));
  const Scalar* xv = x.values().data();
  for (Index b = 0; b < n; ++b) {
    for (Index c = 0; c < cin; ++c) {
      const Scalar* plane = xv + (b * cin + c) * h * w;
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          Scalar* row = cols->row((c * k + ky) * k + kx).data() + b * p;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (Index ox = 0; ox < wo; ++ox) {
              const Index ix = ox * stride - padding + kx;
              if (ix >= 0 && ix < w) row[oy * wo + ox] = plane[iy * w + ix];
            }
          }
        }
      }
    }
  }

  Eigen::Map<const RowMat<Scalar>> wm(weight.values().data(), cout, ckk);
  RowMat<Scalar> tmp = wm * (*cols);
  Vector out(n * cout * p);
  for (Index b = 0; b < n; ++b) {
    for (Index co = 0; co < cout; ++co) {
      Eigen::Map<Vector>(out.data() + (b * cout + co) * p, p) = tmp.row(co).segment(b * p, p).transpose();
    }
  }

  return record_op<Scalar>(
      {n, cout, ho, wo}, std::move(out), {x, weight},
      [x, weight, cols, n, cin, h, w, cout, k, stride, padding, ho, wo, p, ckk](const Vector& g) {
        RowMat<Scalar> gm(cout, n * p);
        for (Index b = 0; b < n; ++b) {
          for (Index co = 0; co < cout; ++co) {
            gm.row(co).segment(b * p, p) = Eigen::Map<const Vector>(g.data() + (b * cout + co) * p, p).transpose();
          }
        }
        Eigen::Map<const RowMat<Scalar>> wm(weight.values().data(), cout, ckk);
        if (weight.requires_grad()) {
          RowMat<Scalar> gw = gm * cols->transpose();
          accumulate_grad(weight, Eigen::Map<const Vector>(gw.data(), cout * ckk));
        }
        if (x.requires_grad()) {
          RowMat<Scalar> gcols = wm.transpose() * gm;
          Vector gx = Vector::Zero(x.numel());
          for (Index b = 0; b < n; ++b) {
            for (Index c = 0; c < cin; ++c) {
              Scalar* plane = gx.data() + (b * cin + c) * h * w;
              for (Index ky = 0; ky < k; ++ky) {
                for (Index kx = 0; kx < k; ++kx) {
                  const Scalar* row = gcols.row((c * k + ky) * k + kx).data() + b * p;
                  for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (Index ox = 0; ox < wo; ++ox) {
                      const Index ix = ox * stride - padding + kx;
                      if (ix >= 0 && ix < w) plane[iy * w + ix] += row[oy * wo + ox];
                    }
                  }
                }
              }
            }
          }
          accumulate_grad(x, gx);
        }
      });
}

template <typename Scalar>
BasicTensor<Scalar> depthwise_conv2d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight,
                                     Index stride, Index padding) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  require_rank(x, 4, "depthwise_conv2d input");
  require_rank(weight, 4, "depthwise_conv2d weight");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index k = weight.dim(2);
  if (weight.dim(0) != c || weight.dim(1) != 1 || weight.dim(3) != k) {
    throw ShapeError("depthwise_conv2d: weight " + to_string(weight.shape()) + " must be [" + std::to_string(c) +
                     ",1,k,k] for input axis 1 = " + std::to_string(c));
  }
  check_window(x, k, stride, padding, "depthwise_conv2d");
  const Index ho = conv_out_extent(h, k, stride, padding);
  const Index wo = conv_out_extent(w, k, stride, padding);

  Vector out = Vector::Zero(n * c * ho * wo);
  const Scalar* xv = x.values().data();
  const Scalar* wv = weight.values().data();
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Scalar* plane = xv + (b * c + ch) * h * w;
      const Scalar* ker = wv + ch * k * k;
      Scalar* dst = out.data() + (b * c + ch) * ho * wo;
      for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox) {
          Scalar acc = 0;
          for (Index ky = 0; ky < k; ++ky) {
            const Index iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (Index kx = 0; kx < k; ++kx) {
              const Index ix = ox * stride - padding + kx;
              if (ix >= 0 && ix < w) acc += ker[ky * k + kx] * plane[iy * w + ix];
            }
          }
          dst[oy * wo + ox] = acc;
        }
      }
    }
  }

  return record_op<Scalar>({n, c, ho, wo}, std::move(out), {x, weight},
                           [x, weight, n, c, h, w, k, stride, padding, ho, wo](const Vector& g) {
                             Vector gx = Vector::Zero(x.numel());
                             Vector gw = Vector::Zero(weight.numel());
                             const Scalar* xv = x.values().data();
                             const Scalar* wv = weight.values().data();
                             for (Index b = 0; b < n; ++b) {
                               for (Index ch = 0; ch < c; ++ch) {
                                 const Scalar* plane = xv + (b * c + ch) * h * w;
                                 Scalar* gplane = gx.data() + (b * c + ch) * h * w;
                                 const Scalar* ker = wv + ch * k * k;
                                 Scalar* gker = gw.data() + ch * k * k;
                                 const Scalar* src = g.data() + (b * c + ch) * ho * wo;
                                 for (Index oy = 0; oy < ho; ++oy) {
                                   for (Index ox = 0; ox < wo; ++ox) {
                                     const Scalar go = src[oy * wo + ox];
                                     if (go == Scalar(0)) continue;
                                     for (Index ky = 0; ky < k; ++ky) {
                                       const Index iy = oy * stride - padding + ky;
                                       if (iy < 0 || iy >= h) continue;
                                       for (Index kx = 0; kx < k; ++kx) {
                                         const Index ix = ox * stride - padding + kx;
                                         if (ix < 0 || ix >= w) continue;
                                         gker[ky * k + kx] += go * plane[iy * w + ix];
                                         gplane[iy * w + ix] += go * ker[ky * k + kx];
                                       }
                                     }
                                   }
                                 }
                               }
                             }
                             accumulate_grad(x, gx);
                             accumulate_grad(weight, gw);
                           });
}

template <typename Scalar>
BasicTensor<Scalar> pointwise_conv2d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  require_rank(x, 4, "pointwise_conv2d input");
  require_rank(weight, 4, "pointwise_conv2d weight");
  const Index n = x.dim(0), cin = x.dim(1), p = x.dim(2) * x.dim(3);
  const Index cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != 1 || weight.dim(3) != 1) {
    throw ShapeError("pointwise_conv2d: weight " + to_string(weight.shape()) + " must be [Cout," +
                     std::to_string(cin) + ",1,1] for input axis 1 = " + std::to_string(cin));
  }
  Eigen::Map<const RowMat<Scalar>> wm(weight.values().data(), cout, cin);
  Vector out(n * cout * p);
  for (Index b = 0; b < n; ++b) {
    Eigen::Map<const RowMat<Scalar>> xb(x.values().data() + b * cin * p, cin, p);
    Eigen::Map<RowMat<Scalar>>(out.data() + b * cout * p, cout, p).noalias() = wm * xb;
  }
  return record_op<Scalar>({n, cout, x.dim(2), x.dim(3)}, std::move(out), {x, weight},
                           [x, weight, n, cin, cout, p](const Vector& g) {
                             Eigen::Map<const RowMat<Scalar>> wm(weight.values().data(), cout, cin);
                             RowMat<Scalar> gw = RowMat<Scalar>::Zero(cout, cin);
                             Vector gx(x.requires_grad() ? x.numel() : 0);
                             for (Index b = 0; b < n; ++b) {
                               Eigen::Map<const RowMat<Scalar>> gb(g.data() + b * cout * p, cout, p);
                               Eigen::Map<const RowMat<Scalar>> xb(x.values().data() + b * cin * p, cin, p);
                               if (weight.requires_grad()) gw.noalias() += gb * xb.transpose();
                               if (x.requires_grad()) {
                                 Eigen::Map<RowMat<Scalar>>(gx.data() + b * cin * p, cin, p).noalias() =
                                     wm.transpose() * gb;
                               }
                             }
                             accumulate_grad(weight, Eigen::Map<const Vector>(gw.data(), cout * cin));
                             if (x.requires_grad()) accumulate_grad(x, gx);
                           });
}

template <typename Scalar>
BasicTensor<Scalar> linear(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight,
                           const std::optional<BasicTensor<Scalar>>& bias) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  require_rank(weight, 2, "linear weight");
  const Index m = weight.dim(0), nin = weight.dim(1);
  if (x.dim(-1) != nin) {
    throw ShapeError("linear: trailing axis of input " + to_string(x.shape()) + " != weight axis 1 (" +
                     std::to_string(nin) + ")");
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != m)) {
    throw ShapeError("linear: bias " + to_string(bias->shape()) + " must be [" + std::to_string(m) + "]");
  }
  const Index rows = x.numel() / nin;
  Eigen::Map<const RowMat<Scalar>> xm(x.values().data(), rows, nin);
  Eigen::Map<const RowMat<Scalar>> wm(weight.values().data(), m, nin);
  RowMat<Scalar> om = xm * wm.transpose();
  if (bias) om.rowwise() += bias->values().transpose();
  Shape shape = x.shape();
  shape.back() = m;
  std::vector<BasicTensor<Scalar>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  BasicTensor<Scalar> b = bias ? *bias : BasicTensor<Scalar>();
  return record_op<Scalar>(std::move(shape), Eigen::Map<const Vector>(om.data(), rows * m), inputs,
                           [x, weight, b, rows, m, nin](const Vector& g) {
                             Eigen::Map<const RowMat<Scalar>> gm(g.data(), rows, m);
                             Eigen::Map<const RowMat<Scalar>> xm(x.values().data(), rows, nin);
                             Eigen::Map<const RowMat<Scalar>> wm(weight.values().data(), m, nin);
                             if (x.requires_grad()) {
                               RowMat<Scalar> gx = gm * wm;
                               accumulate_grad(x, Eigen::Map<const Vector>(gx.data(), rows * nin));
                             }
                             if (weight.requires_grad()) {
                               RowMat<Scalar> gw = gm.transpose() * xm;
                               accumulate_grad(weight, Eigen::Map<const Vector>(gw.data(), m * nin));
                             }
                             if (b.defined() && b.requires_grad()) accumulate_grad(b, gm.colwise().sum().transpose());
                           });
}

template <typename Scalar>
BasicTensor<Scalar> group_norm(const BasicTensor<Scalar>& x, Index groups, const BasicTensor<Scalar>& gamma,
                               const BasicTensor<Scalar>& beta, double eps) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  require_rank(x, 4, "group_norm");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("group_norm: channel axis 1 (" + std::to_string(c) + ") not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("group_norm: affine parameters must hold " + std::to_string(c) + " values");
  }
  const Index per_group = (c / groups) * hw;
  const Index blocks = n * groups;
  Vector xhat(x.numel());
  Vector inv_std(blocks);
  const Scalar* xv = x.values().data();
  for (Index bg = 0; bg < blocks; ++bg) {
    const Scalar* src = xv + bg * per_group;
    double m = 0.0;
    for (Index i = 0; i < per_group; ++i) m += src[i];
    m /= static_cast<double>(per_group);
    double v = 0.0;
    for (Index i = 0; i < per_group; ++i) {
      const double d = src[i] - m;
      v += d * d;
    }
    v /= static_cast<double>(per_group);
    const double is = 1.0 / std::sqrt(v + eps);
    inv_std[bg] = static_cast<Scalar>(is);
    for (Index i = 0; i < per_group; ++i) xhat[bg * per_group + i] = static_cast<Scalar>((src[i] - m) * is);
  }
  Vector out(x.numel());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * hw;
      out.segment(off, hw) = (xhat.segment(off, hw).array() * gamma[ch] + beta[ch]).matrix();
    }
  }
  return record_op<Scalar>(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, n, c, hw, groups, per_group](const Vector& g) {
        Vector gg = Vector::Zero(c);
        Vector gb = Vector::Zero(c);
        Vector dxhat(x.numel());
        for (Index b = 0; b < n; ++b) {
          for (Index ch = 0; ch < c; ++ch) {
            const Index off = (b * c + ch) * hw;
            gg[ch] += g.segment(off, hw).dot(xhat.segment(off, hw));
            gb[ch] += g.segment(off, hw).sum();
            dxhat.segment(off, hw) = g.segment(off, hw) * gamma[ch];
          }
        }
        accumulate_grad(gamma, gg);
        accumulate_grad(beta, gb);
        if (!x.requires_grad()) return;
        Vector gx(x.numel());
        const Scalar count = static_cast<Scalar>(per_group);
        for (Index bg = 0; bg < n * groups; ++bg) {
          auto d = dxhat.segment(bg * per_group, per_group);
          auto xh = xhat.segment(bg * per_group, per_group);
          const Scalar sum_d = d.sum();
          const Scalar sum_dx = d.dot(xh);
          gx.segment(bg * per_group, per_group) =
              ((d.array() * count - sum_d - xh.array() * sum_dx) * (inv_std[bg] / count)).matrix();
        }
        accumulate_grad(x, gx);
      });
}

template <typename Scalar>
BasicTensor<Scalar> softmax_cross_entropy(const BasicTensor<Scalar>& logits, const std::vector<int>& labels) {
  using Vector = typename BasicTensor<Scalar>::Vector;
  require_rank(logits, 2, "softmax_cross_entropy");
  const Index b = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != b) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch axis 0 of " +
                     std::to_string(b));
  }
  Eigen::Map<const RowMat<Scalar>> lm(logits.values().data(), b, k);
  RowMat<Scalar> probs(b, k);
  double total = 0.0;
  for (Index i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    const Scalar mx = lm.row(i).maxCoeff();
    probs.row(i) = (lm.row(i).array() - mx).exp().matrix();
    const Scalar z = probs.row(i).sum();
    probs.row(i) /= z;
    total += std::log(static_cast<double>(z)) + mx - lm(i, y);
  }
  Vector out(1);
  out[0] = static_cast<Scalar>(total / static_cast<double>(b));
  return record_op<Scalar>({1}, std::move(out), {logits}, [logits, labels, probs, b, k](const Vector& g) {
    RowMat<Scalar> gl = probs;
    for (Index i = 0; i < b; ++i) gl(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
    gl *= g[0] / static_cast<Scalar>(b);
    accumulate_grad(logits, Eigen::Map<const Vector>(gl.data(), b * k));
  });
}

#define SPIKEGATE_INSTANTIATE(S)                                                                             \
  template BasicTensor<S> add<S>(const BasicTensor<S>&, const BasicTensor<S>&);                              \
  template BasicTensor<S> sub<S>(const BasicTensor<S>&, const BasicTensor<S>&);                              \
  template BasicTensor<S> hadamard<S>(const BasicTensor<S>&, const BasicTensor<S>&);                         \
  template BasicTensor<S> scalar_mul<S>(const BasicTensor<S>&, S);                                           \
  template BasicTensor<S> relu<S>(const BasicTensor<S>&);                                                    \
  template BasicTensor<S> sigmoid<S>(const BasicTensor<S>&);                                                 \
  template BasicTensor<S> sum<S>(const BasicTensor<S>&);                                                     \
  template BasicTensor<S> mean<S>(const BasicTensor<S>&);                                                    \
  template BasicTensor<S> reshape<S>(const BasicTensor<S>&, Shape);                                          \
  template BasicTensor<S> spatial_mean<S>(const BasicTensor<S>&);                                            \
  template BasicTensor<S> time_mean<S>(const BasicTensor<S>&);                                               \
  template BasicTensor<S> repeat_time<S>(const BasicTensor<S>&, Index);                                      \
  template BasicTensor<S> conv2d<S>(const BasicTensor<S>&, const BasicTensor<S>&, Index, Index);             \
  template BasicTensor<S> depthwise_conv2d<S>(const BasicTensor<S>&, const BasicTensor<S>&, Index, Index);   \
  template BasicTensor<S> pointwise_conv2d<S>(const BasicTensor<S>&, const BasicTensor<S>&);                 \
  template BasicTensor<S> linear<S>(const BasicTensor<S>&, const BasicTensor<S>&,                            \
                                    const std::optional<BasicTensor<S>>&);                                   \
  template BasicTensor<S> group_norm<S>(const BasicTensor<S>&, Index, const BasicTensor<S>&,                 \
                                        const BasicTensor<S>&, double);                                      \
  template BasicTensor<S> softmax_cross_entropy<S>(const BasicTensor<S>&, const std::vector<int>&);

SPIKEGATE_INSTANTIATE(float)
SPIKEGATE_INSTANTIATE(double)

#undef SPIKEGATE_INSTANTIATE

}  // namespace spikegate
