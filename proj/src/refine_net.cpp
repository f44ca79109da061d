/*
 * Copyright 2025 The FrustumFit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "frustumfit/refine_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include "frustumfit/priors.hpp"
#include "frustumfit/random.hpp"

namespace frustumfit::refine {

namespace {

constexpr double kMinDim = 1e-9;
constexpr char kNetMagic[4] = {'F', 'F', 'N', 'P'};
constexpr uint32_t kNetVersion = 1;

// Normalized-frame point: x length fraction, y height fraction, z width
// fraction of the expanded box.
struct NormPoint {
  double x = 0.0, y = 0.0, z = 0.0;
};

NormPoint to_normalized(const ContextBox& ctx, const Vec3& p) {
  const Vec3 q = to_box_frame(ctx.expanded, p);
  return {q.x / ctx.expanded.l + 0.5, q.z / ctx.expanded.h + 0.5,
          q.y / ctx.expanded.w + 0.5};
}

Vec3 normalized_to_local(const ContextBox& ctx, const NormPoint& n) {
  return {(n.x - 0.5) * ctx.expanded.l, (n.z - 0.5) * ctx.expanded.w,
          (n.y - 0.5) * ctx.expanded.h};
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad_from_pre(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

void conv3x3_forward(const double* in, int cin, int rows, int cols,
                     const double* w, const double* b, int cout, double* out) {
  const int hw = rows * cols;
  for (int oc = 0; oc < cout; ++oc) {
    double* o = out + oc * hw;
    std::fill(o, o + hw, b[oc]);
    for (int ic = 0; ic < cin; ++ic) {
      const double* x = in + ic * hw;
      const double* wk = w + (oc * cin + ic) * 9;
      for (int kr = 0; kr < 3; ++kr) {
        const int dr = kr - 1;
        const int r0 = std::max(0, -dr), r1 = std::min(rows, rows - dr);
        for (int kc = 0; kc < 3; ++kc) {
          const int dc = kc - 1;
          const int c0 = std::max(0, -dc), c1 = std::min(cols, cols - dc);
          const double wv = wk[kr * 3 + kc];
          if (wv == 0.0) continue;
          for (int r = r0; r < r1; ++r) {
            const double* xr = x + (r + dr) * cols + dc;
            double* orow = o + r * cols;
            for (int c = c0; c < c1; ++c) orow[c] += wv * xr[c];
          }
        }
      }
    }
  }
}

void conv3x3_backward(const double* in, const double* dout, int cin, int rows,
                      int cols, const double* w, int cout, double* din,
                      double* dw, double* db) {
  const int hw = rows * cols;
  for (int oc = 0; oc < cout; ++oc) {
    const double* go = dout + oc * hw;
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) acc += go[i];
    db[oc] += acc;
    for (int ic = 0; ic < cin; ++ic) {
      const double* x = in + ic * hw;
      double* dx = din ? din + ic * hw : nullptr;
      const double* wk = w + (oc * cin + ic) * 9;
      double* dwk = dw + (oc * cin + ic) * 9;
      for (int kr = 0; kr < 3; ++kr) {
        const int dr = kr - 1;
        const int r0 = std::max(0, -dr), r1 = std::min(rows, rows - dr);
        for (int kc = 0; kc < 3; ++kc) {
          const int dc = kc - 1;
          const int c0 = std::max(0, -dc), c1 = std::min(cols, cols - dc);
          const double wv = wk[kr * 3 + kc];
          double wg = 0.0;
          for (int r = r0; r < r1; ++r) {
            const double* xr = x + (r + dr) * cols + dc;
            const double* grow = go + r * cols;
            if (dx) {
              double* dxr = dx + (r + dr) * cols + dc;
              for (int c = c0; c < c1; ++c) {
                wg += grow[c] * xr[c];
                dxr[c] += wv * grow[c];
              }
            } else {
              for (int c = c0; c < c1; ++c) wg += grow[c] * xr[c];
            }
          }
          dwk[kr * 3 + kc] += wg;
        }
      }
    }
  }
}

void maxpool2_forward(const double* in, int channels, int rows, int cols,
                      double* out, int* argmax) {
  const int orows = rows / 2, ocols = cols / 2;
  for (int ch = 0; ch < channels; ++ch) {
    const double* x = in + ch * rows * cols;
    double* o = out + ch * orows * ocols;
    int* am = argmax + ch * orows * ocols;
    for (int r = 0; r < orows; ++r)
      for (int c = 0; c < ocols; ++c) {
        const int base = 2 * r * cols + 2 * c;
        int best = base;
        double bv = x[base];
        const int cand[3] = {base + 1, base + cols, base + cols + 1};
        for (int k = 0; k < 3; ++k)
          if (x[cand[k]] > bv) {
            bv = x[cand[k]];
            best = cand[k];
          }
        o[r * ocols + c] = bv;
        am[r * ocols + c] = best;
      }
  }
}

void maxpool2_backward(const double* dout, int channels, int rows, int cols,
                       const int* argmax, double* din) {
  const int orows = rows / 2, ocols = cols / 2;
  for (int ch = 0; ch < channels; ++ch) {
    const double* go = dout + ch * orows * ocols;
    const int* am = argmax + ch * orows * ocols;
    double* dx = din + ch * rows * cols;
    for (int i = 0; i < orows * ocols; ++i) dx[am[i]] += go[i];
  }
}

void dense_forward(const double* in, int nin, const double* w, const double* b,
                   int nout, double* out) {
  for (int o = 0; o < nout; ++o) {
    const double* wr = w + o * nin;
    double acc = b[o];
    for (int i = 0; i < nin; ++i) acc += wr[i] * in[i];
    out[o] = acc;
  }
}

void dense_backward(const double* in, const double* dout, int nin,
                    const double* w, int nout, double* din, double* dw,
                    double* db) {
  for (int o = 0; o < nout; ++o) {
    const double g = dout[o];
    db[o] += g;
    const double* wr = w + o * nin;
    double* dwr = dw + o * nin;
    for (int i = 0; i < nin; ++i) {
      dwr[i] += g * in[i];
      if (din) din[i] += g * wr[i];
    }
  }
}

// Forward activations for one sample.
struct Activations {
  std::vector<std::vector<double>> conv_in;   // input to conv i
  std::vector<std::vector<double>> conv_pre;  // conv output pre-ELU
  std::vector<std::vector<double>> pool_out;  // post-ELU + pool
  std::vector<std::vector<int>> pool_arg;
  std::vector<double> trunk_pre, trunk_post;
  std::array<double, 7> reg{};
  std::array<double, 2> logits{};
};

void run_forward(const RefineNet& net, const std::vector<double>& input,
                 Activations& act) {
  const auto& convs = net.conv_layers();
  const auto& p = net.parameters();
  act.conv_in.resize(convs.size());
  act.conv_pre.resize(convs.size());
  act.pool_out.resize(convs.size());
  act.pool_arg.resize(convs.size());

  const std::vector<double>* cur = &input;
  for (size_t i = 0; i < convs.size(); ++i) {
    const auto& L = convs[i];
    act.conv_in[i] = *cur;
    act.conv_pre[i].assign(size_t(L.cout) * L.rows * L.cols, 0.0);
    conv3x3_forward(act.conv_in[i].data(), L.cin, L.rows, L.cols,
                    p.data() + L.woff, p.data() + L.boff, L.cout,
                    act.conv_pre[i].data());
    std::vector<double> post(act.conv_pre[i].size());
    for (size_t k = 0; k < post.size(); ++k) post[k] = elu(act.conv_pre[i][k]);
    const int orows = L.rows / 2, ocols = L.cols / 2;
    act.pool_out[i].assign(size_t(L.cout) * orows * ocols, 0.0);
    act.pool_arg[i].assign(size_t(L.cout) * orows * ocols, 0);
    maxpool2_forward(post.data(), L.cout, L.rows, L.cols,
                     act.pool_out[i].data(), act.pool_arg[i].data());
    cur = &act.pool_out[i];
  }

  const auto& T = net.trunk();
  act.trunk_pre.assign(T.nout, 0.0);
  dense_forward(cur->data(), T.nin, p.data() + T.woff, p.data() + T.boff,
                T.nout, act.trunk_pre.data());
  act.trunk_post.resize(T.nout);
  for (int i = 0; i < T.nout; ++i) act.trunk_post[i] = elu(act.trunk_pre[i]);

  if (net.stage() == 1) {
    const auto& R = net.reg_head();
    dense_forward(act.trunk_post.data(), R.nin, p.data() + R.woff,
                  p.data() + R.boff, R.nout, act.reg.data());
  }
  const auto& C = net.cls_head();
  dense_forward(act.trunk_post.data(), C.nin, p.data() + C.woff,
                p.data() + C.boff, C.nout, act.logits.data());
}

// Backward from head gradients; accumulates into grad (parameter layout) and
// optionally din (input layout).
void run_backward(const RefineNet& net, const Activations& act,
                  const std::array<double, 7>& dreg,
                  const std::array<double, 2>& dlogits,
                  std::vector<double>* grad, std::vector<double>* din) {
  const auto& p = net.parameters();
  const auto& T = net.trunk();
  std::vector<double> dtrunk_post(T.nout, 0.0);

  auto gptr = [&](size_t off) -> double* {
    return grad ? grad->data() + off : nullptr;
  };

  if (grad) {
    if (net.stage() == 1) {
      const auto& R = net.reg_head();
      dense_backward(act.trunk_post.data(), dreg.data(), R.nin,
                     p.data() + R.woff, R.nout, dtrunk_post.data(),
                     gptr(R.woff), gptr(R.boff));
    }
    const auto& C = net.cls_head();
    dense_backward(act.trunk_post.data(), dlogits.data(), C.nin,
                   p.data() + C.woff, C.nout, dtrunk_post.data(), gptr(C.woff),
                   gptr(C.boff));
  } else {
    // Gradients w.r.t. input only: still need dtrunk_post.
    if (net.stage() == 1) {
      const auto& R = net.reg_head();
      for (int o = 0; o < R.nout; ++o)
        for (int i = 0; i < R.nin; ++i)
          dtrunk_post[i] += dreg[o] * p[R.woff + size_t(o) * R.nin + i];
    }
    const auto& C = net.cls_head();
    for (int o = 0; o < C.nout; ++o)
      for (int i = 0; i < C.nin; ++i)
        dtrunk_post[i] += dlogits[o] * p[C.woff + size_t(o) * C.nin + i];
  }

  std::vector<double> dtrunk_pre(T.nout);
  for (int i = 0; i < T.nout; ++i)
    dtrunk_pre[i] = dtrunk_post[i] * elu_grad_from_pre(act.trunk_pre[i]);

  const auto& convs = net.conv_layers();
  const std::vector<double>& flat_in = act.pool_out.back();
  std::vector<double> dflat(flat_in.size(), 0.0);
  if (grad) {
    dense_backward(flat_in.data(), dtrunk_pre.data(), T.nin, p.data() + T.woff,
                   T.nout, dflat.data(), gptr(T.woff), gptr(T.boff));
  } else {
    for (int o = 0; o < T.nout; ++o)
      for (int i = 0; i < T.nin; ++i)
        dflat[i] += dtrunk_pre[o] * p[T.woff + size_t(o) * T.nin + i];
  }

  std::vector<double> dcur = std::move(dflat);
  for (int i = static_cast<int>(convs.size()) - 1; i >= 0; --i) {
    const auto& L = convs[i];
    std::vector<double> dpost(size_t(L.cout) * L.rows * L.cols, 0.0);
    maxpool2_backward(dcur.data(), L.cout, L.rows, L.cols,
                      act.pool_arg[i].data(), dpost.data());
    for (size_t k = 0; k < dpost.size(); ++k)
      dpost[k] *= elu_grad_from_pre(act.conv_pre[i][k]);
    const bool need_din = i > 0 || din != nullptr;
    std::vector<double> dprev;
    if (need_din) dprev.assign(act.conv_in[i].size(), 0.0);
    if (grad) {
      conv3x3_backward(act.conv_in[i].data(), dpost.data(), L.cin, L.rows,
                       L.cols, p.data() + L.woff, L.cout,
                       need_din ? dprev.data() : nullptr, gptr(L.woff),
                       gptr(L.boff));
    } else {
      // Input gradient only.
      std::vector<double> dummy_w(size_t(L.cout) * L.cin * 9, 0.0);
      std::vector<double> dummy_b(L.cout, 0.0);
      conv3x3_backward(act.conv_in[i].data(), dpost.data(), L.cin, L.rows,
                       L.cols, p.data() + L.woff, L.cout,
                       need_din ? dprev.data() : nullptr, dummy_w.data(),
                       dummy_b.data());
    }
    dcur = std::move(dprev);
  }
  if (din) *din = std::move(dcur);
}

std::vector<double> voxels_to_input(const RefineNet& net,
                                    const ContextVoxels& v) {
  const NetConfig& cfg = net.config();
  const size_t expect =
      size_t(cfg.input_channels) * cfg.grid_rows * cfg.grid_cols;
  if (v.occ.size() != expect)
    throw ShapeMismatch("context voxel grid does not match the net input");
  std::vector<double> input(expect);
  for (size_t i = 0; i < expect; ++i) input[i] = v.occ[i] ? 1.0 : 0.0;
  return input;
}

// Loss heads for one sample; fills dreg/dlogits scaled by `scale`.
LossParts sample_heads(const RefineNet& net, const Activations& act,
                       const TrainSample& s, double reg_weight, double scale,
                       std::array<double, 7>* dreg,
                       std::array<double, 2>* dlogits) {
  LossParts parts;
  const std::array<double, 2> prob = softmax2(act.logits);
  parts.cls = -std::log(std::max(prob[s.label], 1e-300));
  if (dlogits) {
    (*dlogits)[0] = scale * (prob[0] - (s.label == 0 ? 1.0 : 0.0));
    (*dlogits)[1] = scale * (prob[1] - (s.label == 1 ? 1.0 : 0.0));
  }
  if (dreg) dreg->fill(0.0);
  if (net.stage() == 1 && s.label == 1 && s.has_target) {
    for (int i = 0; i < 7; ++i) {
      const double d = act.reg[i] - s.target[i];
      parts.reg += priors::smooth_l1(d);
      if (dreg) (*dreg)[i] = scale * reg_weight * priors::smooth_l1_grad(d);
    }
  }
  parts.total = parts.cls + reg_weight * parts.reg;
  return parts;
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

ContextBox expand_context(const Box3& b) {
  ContextBox ctx;
  ctx.base = b;
  ctx.expanded = b;
  ctx.expanded.h = b.h * kExpandH;
  ctx.expanded.l = b.l * kExpandL;
  ctx.expanded.w = b.w * kExpandW;
  return ctx;
}

double ContextVoxels::occupancy_fraction() const {
  int n = 0;
  for (uint8_t v : occ) n += v != 0;
  return double(n) / double(kCtxSize);
}

ContextVoxels voxelize_context(const PointCloud& cloud,
                               const ContextBox& ctx) {
  ContextVoxels out;
  const Box3& e = ctx.expanded;
  for (const Point& p : cloud) {
    if (!box_contains(e, p.position)) continue;
    const Vec3 q = to_box_frame(e, p.position);
    const int il = std::clamp(
        static_cast<int>(std::floor((q.x / e.l + 0.5) * kCtxL)), 0, kCtxL - 1);
    const int iw = std::clamp(
        static_cast<int>(std::floor((q.y / e.w + 0.5) * kCtxW)), 0, kCtxW - 1);
    const int ih = std::clamp(
        static_cast<int>(std::floor((q.z / e.h + 0.5) * kCtxH)), 0, kCtxH - 1);
    out.occ[ContextVoxels::index(ih, il, iw)] = 1;
  }
  return out;
}

CanonicalAnchor CanonicalAnchor::standard() {
  CanonicalAnchor a;
  a.length = 1.0 / kExpandL;
  a.height = 1.0 / kExpandH;
  a.width = 1.0 / kExpandW;
  a.xc = a.yc = a.zc = 0.5;
  a.xl = 0.5 - 0.5 * a.length;
  a.yl = 0.5 - 0.5 * a.height;
  a.zl = 0.5 - 0.5 * a.width;
  return a;
}

RegressionTarget7 encode_targets(const CanonicalAnchor& anchor,
                                 const ContextBox& ctx, const Box3& gt) {
  if (gt.w <= 0.0) throw NonPositiveWidth("encode_targets: width must be > 0");
  const NormPoint c = to_normalized(ctx, gt.center);

  // The box's own left-bottom corner: local (-l/2, -w/2, -h/2). A fixed
  // local corner keeps the seven-element encoding invertible for any yaw;
  // a view-dependent corner choice would collapse mirror-symmetric boxes
  // onto the same vector.
  const NormPoint corner = to_normalized(ctx, corners(gt)[2]);

  RegressionTarget7 t;
  t.dxc = (c.x - anchor.xc) / anchor.length;
  t.dyc = (c.y - anchor.yc) / anchor.height;
  t.dzc = (c.z - anchor.zc) / anchor.width;
  t.dxl = (corner.x - anchor.xl) / anchor.length;
  t.dyl = (corner.y - anchor.yl) / anchor.height;
  t.dzl = (corner.z - anchor.zl) / anchor.width;
  t.dw = std::log((gt.w / ctx.expanded.w) / anchor.width);
  return t;
}

Box3 align_heading(const Box3& box, double reference_yaw) {
  Box3 out = box;
  if (std::abs(normalize_yaw(box.yaw - reference_yaw)) > 0.5 * kPi)
    out.yaw = normalize_yaw(box.yaw + kPi);
  return out;
}

Box3 decode_box(const CanonicalAnchor& anchor, const ContextBox& ctx,
                const RegressionTarget7& delta) {
  for (int i = 0; i < 7; ++i)
    if (!std::isfinite(delta[i]))
      throw NoValidSolution("decode_box: non-finite delta");

  const NormPoint nc = {anchor.xc + delta.dxc * anchor.length,
                        anchor.yc + delta.dyc * anchor.height,
                        anchor.zc + delta.dzc * anchor.width};
  const NormPoint nl = {anchor.xl + delta.dxl * anchor.length,
                        anchor.yl + delta.dyl * anchor.height,
                        anchor.zl + delta.dzl * anchor.width};
  const Vec3 center_local = normalized_to_local(ctx, nc);
  const Vec3 corner_local = normalized_to_local(ctx, nl);
  const Vec3 v = corner_local - center_local;

  const double h = -2.0 * v.z;
  if (!(h > kMinDim)) throw NoValidSolution("decode_box: non-positive height");
  const double w = ctx.expanded.w * anchor.width * std::exp(delta.dw);
  if (!(w > kMinDim) || !std::isfinite(w))
    throw NoValidSolution("decode_box: width underflow");

  // Horizontal corner system: v2 = R(t) * (-l/2, -w/2). The rotation keeps
  // |v2|, so l and then t follow in closed form.
  const double vx = v.x, vz = v.y;
  const double radius2 = vx * vx + vz * vz;
  const double l2 = 4.0 * radius2 - w * w;
  if (!(l2 > kMinDim * kMinDim))
    throw NoValidSolution("decode_box: corner too close for a positive length");
  const double l = std::sqrt(l2);
  const double t =
      std::atan2(vz, vx) - std::atan2(-0.5 * w, -0.5 * l);

  Box3 out;
  out.center = from_box_frame(ctx.expanded, center_local);
  out.h = h;
  out.l = l;
  out.w = w;
  out.yaw = normalize_yaw(ctx.base.yaw + t);

  double res = 0.0;
  const RegressionTarget7 re = encode_targets(anchor, ctx, out);
  for (int i = 0; i < 7; ++i)
    res = std::max(res, std::abs(re[i] - delta[i]));
  if (res > 1e-6)
    throw NoValidSolution("decode_box: residual " + std::to_string(res));
  return out;
}

RefineNet::RefineNet(const NetConfig& cfg, int stage, uint64_t seed)
    : cfg_(cfg), stage_(stage) {
  if (stage != 1 && stage != 2) throw Error("RefineNet: stage must be 1 or 2");
  if (cfg_.conv_channels.empty()) throw Error("RefineNet: no conv layers");

  size_t off = 0;
  int cin = cfg_.input_channels;
  int rows = cfg_.grid_rows, cols = cfg_.grid_cols;
  for (int cout : cfg_.conv_channels) {
    if (rows < 2 || cols < 2)
      throw Error("RefineNet: spatial extent exhausted by pooling");
    ConvLayer L;
    L.cin = cin;
    L.cout = cout;
    L.rows = rows;
    L.cols = cols;
    L.woff = off;
    off += size_t(cout) * cin * 9;
    L.boff = off;
    off += cout;
    conv_.push_back(L);
    cin = cout;
    rows /= 2;
    cols /= 2;
  }
  flat_size_ = cin * rows * cols;

  trunk_ = {flat_size_, cfg_.fc_dim, 0, 0};
  trunk_.woff = off;
  off += size_t(trunk_.nout) * trunk_.nin;
  trunk_.boff = off;
  off += trunk_.nout;

  if (stage_ == 1) {
    reg_head_ = {cfg_.fc_dim, 7, 0, 0};
    reg_head_.woff = off;
    off += size_t(7) * cfg_.fc_dim;
    reg_head_.boff = off;
    off += 7;
  }
  cls_head_ = {cfg_.fc_dim, 2, 0, 0};
  cls_head_.woff = off;
  off += size_t(2) * cfg_.fc_dim;
  cls_head_.boff = off;
  off += 2;

  params_.assign(off, 0.0);

  // He-style init for the body; heads stay at zero.
  Rng rng(seed);
  for (const ConvLayer& L : conv_) {
    const double scale = std::sqrt(2.0 / (double(L.cin) * 9.0));
    for (size_t i = 0; i < size_t(L.cout) * L.cin * 9; ++i)
      params_[L.woff + i] = scale * rng.normal();
  }
  const double tscale = std::sqrt(2.0 / double(trunk_.nin));
  for (size_t i = 0; i < size_t(trunk_.nout) * trunk_.nin; ++i)
    params_[trunk_.woff + i] = tscale * rng.normal();
}

RefineNet::Output RefineNet::forward_raw(const std::vector<double>& input) const {
  const size_t expect = size_t(cfg_.input_channels) * cfg_.grid_rows *
                        cfg_.grid_cols;
  if (input.size() != expect)
    throw ShapeMismatch("forward: input size mismatch");
  Activations act;
  run_forward(*this, input, act);
  Output out;
  for (int i = 0; i < 7; ++i) out.target[i] = act.reg[i];
  out.logits = act.logits;
  return out;
}

RefineNet::Output RefineNet::forward(const ContextVoxels& voxels) const {
  return forward_raw(voxels_to_input(*this, voxels));
}

double softmax_cross_entropy(const std::array<double, 2>& logits, int label) {
  const std::array<double, 2> p = softmax2(logits);
  return -std::log(std::max(p[label], 1e-300));
}

int assign_label(const Box3& candidate, const std::vector<Box3>& gts,
                 double iou_threshold, int* best_gt) {
  double best = 0.0;
  int arg = -1;
  for (size_t i = 0; i < gts.size(); ++i) {
    const double iou = iou_bev(candidate, gts[i]);
    if (iou > best) {
      best = iou;
      arg = static_cast<int>(i);
    }
  }
  if (best_gt) *best_gt = arg;
  return best >= iou_threshold ? 1 : 0;
}

LossParts batch_loss(const RefineNet& net,
                     const std::vector<TrainSample>& samples,
                     const std::vector<int>& indices, double reg_weight) {
  LossParts sum;
  for (int idx : indices) {
    const TrainSample& s = samples[idx];
    Activations act;
    run_forward(net, voxels_to_input(net, s.voxels), act);
    const LossParts p = sample_heads(net, act, s, reg_weight, 1.0, nullptr,
                                     nullptr);
    sum.total += p.total;
    sum.cls += p.cls;
    sum.reg += p.reg;
  }
  const double inv = indices.empty() ? 0.0 : 1.0 / indices.size();
  return {sum.total * inv, sum.cls * inv, sum.reg * inv};
}

LossParts batch_loss_grad(const RefineNet& net,
                          const std::vector<TrainSample>& samples,
                          const std::vector<int>& indices, double reg_weight,
                          std::vector<double>& grad_out) {
  grad_out.assign(net.parameters().size(), 0.0);
  LossParts sum;
  const double scale = indices.empty() ? 0.0 : 1.0 / indices.size();
  for (int idx : indices) {
    const TrainSample& s = samples[idx];
    Activations act;
    run_forward(net, voxels_to_input(net, s.voxels), act);
    std::array<double, 7> dreg;
    std::array<double, 2> dlogits;
    const LossParts p =
        sample_heads(net, act, s, reg_weight, scale, &dreg, &dlogits);
    sum.total += p.total;
    sum.cls += p.cls;
    sum.reg += p.reg;
    run_backward(net, act, dreg, dlogits, &grad_out, nullptr);
  }
  return {sum.total * scale, sum.cls * scale, sum.reg * scale};
}

std::vector<double> input_gradient(const RefineNet& net, const TrainSample& s,
                                   double reg_weight) {
  Activations act;
  run_forward(net, voxels_to_input(net, s.voxels), act);
  std::array<double, 7> dreg;
  std::array<double, 2> dlogits;
  sample_heads(net, act, s, reg_weight, 1.0, &dreg, &dlogits);
  std::vector<double> din;
  run_backward(net, act, dreg, dlogits, nullptr, &din);
  return din;
}

void train(RefineNet& net, const std::vector<TrainSample>& samples,
           const TrainConfig& cfg, std::ostream* log) {
  if (samples.empty()) throw EmptyDataset("train: empty dataset");
  std::vector<int> pos, neg;
  for (size_t i = 0; i < samples.size(); ++i)
    (samples[i].label == 1 ? pos : neg).push_back(static_cast<int>(i));
  if (pos.empty()) throw NoPositives("train: no positive samples");

  Rng rng(cfg.seed);
  auto draw = [&](const std::vector<int>& pool, int count,
                  std::vector<int>& out) {
    if (count <= 0 || pool.empty()) return;
    if (static_cast<size_t>(count) >= pool.size()) {
      // Scarce pool: resample with replacement.
      for (int k = 0; k < count; ++k)
        out.push_back(pool[rng.below(pool.size())]);
      return;
    }
    std::vector<int> copy = pool;
    for (int k = 0; k < count; ++k) {
      const size_t j = k + rng.below(copy.size() - k);
      std::swap(copy[k], copy[j]);
      out.push_back(copy[k]);
    }
  };

  std::vector<double> grad, velocity(net.parameters().size(), 0.0);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const int want_pos =
        std::max(1, static_cast<int>(std::lround(cfg.batch_size *
                                                 cfg.positive_fraction)));
    std::vector<int> batch;
    draw(pos, std::min(want_pos, cfg.batch_size), batch);
    draw(neg, cfg.batch_size - static_cast<int>(batch.size()), batch);
    if (batch.empty()) break;
    // All-positive fill when there are no negatives at all.
    while (static_cast<int>(batch.size()) < cfg.batch_size && neg.empty())
      batch.push_back(pos[rng.below(pos.size())]);

    const LossParts parts =
        batch_loss_grad(net, samples, batch, cfg.reg_weight, grad);
    auto& p = net.parameters();
    for (size_t i = 0; i < p.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] + grad[i];
      p[i] -= cfg.learning_rate * velocity[i];
    }
    if (log && (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations))
      (*log) << "iter=" << iter << " loss=" << parts.total
             << " cls=" << parts.cls << " reg=" << parts.reg << "\n";
  }
}

void save_net(const std::string& path, const RefineNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(kNetMagic, 4);
  write_pod(out, kNetVersion);
  const uint32_t stage = net.stage();
  write_pod(out, stage);
  const NetConfig& cfg = net.config();
  const uint32_t n_conv = cfg.conv_channels.size();
  write_pod(out, n_conv);
  for (int c : cfg.conv_channels) {
    const int32_t v = c;
    write_pod(out, v);
  }
  const int32_t shape[4] = {cfg.fc_dim, cfg.input_channels, cfg.grid_rows,
                            cfg.grid_cols};
  out.write(reinterpret_cast<const char*>(shape), sizeof(shape));
  const double anchor[9] = {net.anchor.xc, net.anchor.yc, net.anchor.zc,
                            net.anchor.xl, net.anchor.yl, net.anchor.zl,
                            net.anchor.length, net.anchor.height,
                            net.anchor.width};
  out.write(reinterpret_cast<const char*>(anchor), sizeof(anchor));
  const uint64_t count = net.parameters().size();
  write_pod(out, count);
  for (double v : net.parameters()) {
    const float f = static_cast<float>(v);
    write_pod(out, f);
  }
  if (!out) throw Error("write failed for " + path);
}

RefineNet load_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kNetMagic, 4) != 0)
    throw Error(path + ": not a net params file");
  uint32_t version = 0, stage = 0, n_conv = 0;
  read_pod(in, version);
  if (version != kNetVersion)
    throw Error(path + ": unsupported net params version");
  read_pod(in, stage);
  read_pod(in, n_conv);
  if (n_conv == 0 || n_conv > 64) throw Error(path + ": bad layer count");
  NetConfig cfg;
  cfg.conv_channels.clear();
  for (uint32_t i = 0; i < n_conv; ++i) {
    int32_t v = 0;
    read_pod(in, v);
    cfg.conv_channels.push_back(v);
  }
  int32_t shape[4];
  in.read(reinterpret_cast<char*>(shape), sizeof(shape));
  cfg.fc_dim = shape[0];
  cfg.input_channels = shape[1];
  cfg.grid_rows = shape[2];
  cfg.grid_cols = shape[3];
  double anchor[9];
  in.read(reinterpret_cast<char*>(anchor), sizeof(anchor));
  uint64_t count = 0;
  read_pod(in, count);
  RefineNet net(cfg, static_cast<int>(stage), 0);
  net.anchor = {anchor[0], anchor[1], anchor[2], anchor[3], anchor[4],
                anchor[5], anchor[6], anchor[7], anchor[8]};
  if (count != net.parameters().size())
    throw Error(path + ": parameter count mismatch");
  for (double& v : net.parameters()) {
    float f = 0.0f;
    read_pod(in, f);
    v = f;
  }
  if (!in) throw Error(path + ": truncated net params file");
  return net;
}

}  // namespace frustumfit::refine
