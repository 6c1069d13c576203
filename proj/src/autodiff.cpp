#include "scsr/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace scsr {

template <typename T>
typename Tape<T>::NodeId Tape<T>::push(Tensor<T> val, bool rg, std::function<void(Tape&, NodeId)> back) {
  Node n;
  n.val = std::move(val);
  n.requires_grad = rg;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::leaf(Tensor<T> v, bool requires_grad) {
  NodeId id = push(std::move(v), requires_grad, nullptr);
  nodes_[static_cast<size_t>(id)].keep = true;
  return id;
}

template <typename T>
Tensor<T>& Tape<T>::grad(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor<T>(n.val.shape);
  return n.grad;
}

template <typename T>
void Tape<T>::accum(NodeId id, const T* src, int64_t n) {
  Tensor<T>& g = grad(id);
  VecMap<T>(g.ptr(), n) += ConstVecMap<T>(src, n);
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::add(NodeId a, NodeId b) {
  if (val(a).numel() != val(b).numel()) throw std::invalid_argument("add: size mismatch");
  Tensor<T> out = val(a);
  out.vec() += val(b).vec();
  bool rg = needs_grad(a) || needs_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(a)) t.accum(a, g.ptr(), g.numel());
    if (t.needs_grad(b)) t.accum(b, g.ptr(), g.numel());
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::sub(NodeId a, NodeId b) {
  if (val(a).numel() != val(b).numel()) throw std::invalid_argument("sub: size mismatch");
  Tensor<T> out = val(a);
  out.vec() -= val(b).vec();
  bool rg = needs_grad(a) || needs_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(a)) t.accum(a, g.ptr(), g.numel());
    if (t.needs_grad(b)) t.grad(b).vec() -= g.vec();
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::scale(NodeId a, double c) {
  Tensor<T> out = val(a);
  out.vec() *= static_cast<T>(c);
  return push(std::move(out), needs_grad(a), [a, c](Tape& t, NodeId self) {
    if (!t.needs_grad(a)) return;
    t.grad(a).vec() += static_cast<T>(c) * t.grad(self).vec();
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::relu(NodeId a) {
  Tensor<T> out = val(a);
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return push(std::move(out), needs_grad(a), [a](Tape& t, NodeId self) {
    if (!t.needs_grad(a)) return;
    const Tensor<T>& o = t.val(self);
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(a);
    for (int64_t i = 0; i < o.numel(); ++i)
      if (o.at(i) > T(0)) ga.at(i) += g.at(i);
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::add_const(NodeId a, Tensor<T> c) {
  if (val(a).numel() != c.numel()) throw std::invalid_argument("add_const: size mismatch");
  Tensor<T> out = val(a);
  out.vec() += c.vec();
  return push(std::move(out), needs_grad(a), [a](Tape& t, NodeId self) {
    if (!t.needs_grad(a)) return;
    const Tensor<T>& g = t.grad(self);
    t.accum(a, g.ptr(), g.numel());
  });
}

// --------------------------------------------------------------------------
// convolutions

template <typename T>
void Tape<T>::im2col1d(const Tensor<T>& x, int64_t B, int64_t L, int64_t cin) {
  cols_.assign(static_cast<size_t>(B * L * 3 * cin), T(0));
  const T* xp = x.ptr();
  T* cp = cols_.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l) {
      T* row = cp + (b * L + l) * 3 * cin;
      for (int64_t t = 0; t < 3; ++t) {
        int64_t s = l + t - 1;
        if (s < 0 || s >= L) continue;
        std::memcpy(row + t * cin, xp + (b * L + s) * cin, sizeof(T) * static_cast<size_t>(cin));
      }
    }
}

template <typename T>
void Tape<T>::im2col2d(const Tensor<T>& x, int64_t B, int64_t H, int64_t W, int64_t cin) {
  int64_t P = H * W;
  cols_.assign(static_cast<size_t>(B * P * 9 * cin), T(0));
  const T* xp = x.ptr();
  T* cp = cols_.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        T* row = cp + (b * P + i * W + j) * 9 * cin;
        for (int64_t di = -1; di <= 1; ++di) {
          int64_t si = i + di;
          if (si < 0 || si >= H) continue;
          for (int64_t dj = -1; dj <= 1; ++dj) {
            int64_t sj = j + dj;
            if (sj < 0 || sj >= W) continue;
            int64_t t = (di + 1) * 3 + (dj + 1);
            std::memcpy(row + t * cin, xp + (b * P + si * W + sj) * cin,
                        sizeof(T) * static_cast<size_t>(cin));
          }
        }
      }
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::conv_common(NodeId x, NodeId w, NodeId b, int64_t B, int64_t P,
                                              int64_t cin, int64_t cout, int64_t k, bool two_d,
                                              int64_t H, int64_t W) {
  const Tensor<T>& xv = val(x);
  if (xv.numel() != B * P * cin) throw std::invalid_argument("conv: input size mismatch");
  if (val(w).numel() != k * cin * cout) throw std::invalid_argument("conv: weight size mismatch");
  if (val(b).numel() != cout) throw std::invalid_argument("conv: bias size mismatch");
  if (two_d)
    im2col2d(xv, B, H, W, cin);
  else
    im2col1d(xv, B, P, cin);
  Tensor<T> out({B, P, cout});
  {
    ConstMatMap<T> cm(cols_.data(), B * P, k * cin);
    MatMap<T> om = out.mat(B * P, cout);
    om.noalias() = cm * val(w).mat(k * cin, cout);
    om.rowwise() += val(b).vec().transpose();
  }
  bool rg = needs_grad(x) || needs_grad(w) || needs_grad(b);
  auto back = [x, w, b, B, P, cin, cout, k, two_d, H, W](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grad(self);
    ConstMatMap<T> gm(g.ptr(), B * P, cout);
    if (t.needs_grad(b)) t.grad(b).vec() += gm.colwise().sum().transpose();
    if (t.needs_grad(w)) {
      if (two_d)
        t.im2col2d(t.val(x), B, H, W, cin);
      else
        t.im2col1d(t.val(x), B, P, cin);
      ConstMatMap<T> cm(t.cols_.data(), B * P, k * cin);
      t.grad(w).mat(k * cin, cout).noalias() += cm.transpose() * gm;
    }
    if (t.needs_grad(x)) {
      t.dcols_.resize(static_cast<size_t>(B * P * k * cin));
      MatMap<T> dcm(t.dcols_.data(), B * P, k * cin);
      dcm.noalias() = gm * t.val(w).mat(k * cin, cout).transpose();
      Tensor<T>& gx = t.grad(x);
      T* gxp = gx.ptr();
      const T* dcp = t.dcols_.data();
      if (!two_d) {
        int64_t L = P;
        for (int64_t bb = 0; bb < B; ++bb)
          for (int64_t l = 0; l < L; ++l) {
            const T* row = dcp + (bb * L + l) * 3 * cin;
            for (int64_t tap = 0; tap < 3; ++tap) {
              int64_t q = l + tap - 1;
              if (q < 0 || q >= L) continue;
              VecMap<T>(gxp + (bb * L + q) * cin, cin) += ConstVecMap<T>(row + tap * cin, cin);
            }
          }
      } else {
        for (int64_t bb = 0; bb < B; ++bb)
          for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
              const T* row = dcp + (bb * P + i * W + j) * 9 * cin;
              for (int64_t di = -1; di <= 1; ++di) {
                int64_t qi = i + di;
                if (qi < 0 || qi >= H) continue;
                for (int64_t dj = -1; dj <= 1; ++dj) {
                  int64_t qj = j + dj;
                  if (qj < 0 || qj >= W) continue;
                  int64_t tap = (di + 1) * 3 + (dj + 1);
                  VecMap<T>(gxp + (bb * P + qi * W + qj) * cin, cin) +=
                      ConstVecMap<T>(row + tap * cin, cin);
                }
              }
            }
      }
    }
  };
  return push(std::move(out), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::conv1d(NodeId x, NodeId w, NodeId b, int64_t B, int64_t L,
                                         int64_t cin, int64_t cout) {
  return conv_common(x, w, b, B, L, cin, cout, 3, false, 0, 0);
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::conv2d(NodeId x, NodeId w, NodeId b, int64_t B, int64_t H,
                                         int64_t W, int64_t cin, int64_t cout) {
  return conv_common(x, w, b, B, H * W, cin, cout, 9, true, H, W);
}

// --------------------------------------------------------------------------
// structure ops

template <typename T>
typename Tape<T>::NodeId Tape<T>::concat_channels(NodeId a, NodeId b, int64_t B, int64_t P,
                                                  int64_t ca, int64_t cb) {
  Tensor<T> out({B, P, ca + cb});
  const T* ap = val(a).ptr();
  const T* bp = val(b).ptr();
  T* op = out.ptr();
  for (int64_t r = 0; r < B * P; ++r) {
    std::memcpy(op + r * (ca + cb), ap + r * ca, sizeof(T) * static_cast<size_t>(ca));
    std::memcpy(op + r * (ca + cb) + ca, bp + r * cb, sizeof(T) * static_cast<size_t>(cb));
  }
  bool rg = needs_grad(a) || needs_grad(b);
  return push(std::move(out), rg, [a, b, B, P, ca, cb](Tape& t, NodeId self) {
    const T* gp = t.grad(self).ptr();
    if (t.needs_grad(a)) {
      T* ga = t.grad(a).ptr();
      for (int64_t r = 0; r < B * P; ++r)
        VecMap<T>(ga + r * ca, ca) += ConstVecMap<T>(gp + r * (ca + cb), ca);
    }
    if (t.needs_grad(b)) {
      T* gb = t.grad(b).ptr();
      for (int64_t r = 0; r < B * P; ++r)
        VecMap<T>(gb + r * cb, cb) += ConstVecMap<T>(gp + r * (ca + cb) + ca, cb);
    }
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::add_channel_vec(NodeId x, NodeId v, int64_t B, int64_t P,
                                                  int64_t C) {
  if (val(v).numel() != C) throw std::invalid_argument("add_channel_vec: vector size mismatch");
  Tensor<T> out = val(x);
  ConstVecMap<T> vv(val(v).ptr(), C);
  MatMap<T> om = out.mat(B * P, C);
  om.rowwise() += vv.transpose();
  bool rg = needs_grad(x) || needs_grad(v);
  return push(std::move(out), rg, [x, v, B, P, C](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(x)) t.accum(x, g.ptr(), g.numel());
    if (t.needs_grad(v))
      t.grad(v).vec() += ConstMatMap<T>(g.ptr(), B * P, C).colwise().sum().transpose();
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::upsample_add(NodeId x, NodeId e, std::shared_ptr<const Tensor<T>> W_up,
                                               int64_t B, int64_t P, int64_t C, int64_t hw) {
  if (val(e).numel() != hw * C) throw std::invalid_argument("upsample_add: embedding size mismatch");
  if (W_up->numel() != P * hw) throw std::invalid_argument("upsample_add: interpolation map mismatch");
  Tensor<T> out = val(x);
  RowMat<T> U(P, C);
  U.noalias() = W_up->mat(P, hw) * val(e).mat(hw, C);
  for (int64_t b = 0; b < B; ++b) MatMap<T>(out.ptr() + b * P * C, P, C) += U;
  bool rg = needs_grad(x) || needs_grad(e);
  return push(std::move(out), rg, [x, e, W_up, B, P, C, hw](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grad(self);
    if (t.needs_grad(x)) t.accum(x, g.ptr(), g.numel());
    if (t.needs_grad(e)) {
      RowMat<T> gsum = RowMat<T>::Zero(P, C);
      for (int64_t b = 0; b < B; ++b) gsum += ConstMatMap<T>(g.ptr() + b * P * C, P, C);
      t.grad(e).mat(hw, C).noalias() += W_up->mat(P, hw).transpose() * gsum;
    }
  });
}

namespace {
template <typename T>
void pack_channel0(const Tensor<T>& X, int64_t B, int64_t P, int64_t C, T* out) {
  const T* xp = X.ptr();
  for (int64_t r = 0; r < B * P; ++r) out[r] = xp[r * C];
}
}  // namespace

template <typename T>
typename Tape<T>::NodeId Tape<T>::gd_step(NodeId X, NodeId y, std::shared_ptr<const BatchedOp<T>> op,
                                          int64_t B, int64_t P, int64_t C, NodeId tau) {
  const Tensor<T>& Xv = val(X);
  if (Xv.numel() != B * P * C) throw std::invalid_argument("gd_step: feature size mismatch");
  int64_t Mmax = op->m_max();
  if (val(y).numel() != B * Mmax) throw std::invalid_argument("gd_step: measurement size mismatch");
  double rho = 1.0;
  if (tau != kNone) rho = 1.0 / (1.0 + std::exp(-static_cast<double>(val(tau).at(0))));

  Tensor<T> xhat({B, P});
  if (C == 1)
    std::memcpy(xhat.ptr(), Xv.ptr(), sizeof(T) * static_cast<size_t>(B * P));
  else
    pack_channel0(Xv, B, P, C, xhat.ptr());
  Tensor<T> R({B, Mmax});
  op->apply(xhat.ptr(), B, R.ptr());
  R.vec() -= val(y).vec();
  auto G = std::make_shared<Tensor<T>>(std::vector<int64_t>{B, P});
  op->adjoint(R.ptr(), B, G->ptr());

  Tensor<T> out = Xv;
  {
    T* op_ = out.ptr();
    const T* gp = G->ptr();
    const T* xp = xhat.ptr();
    T rhoT = static_cast<T>(rho);
    for (int64_t r = 0; r < B * P; ++r) op_[r * C] = xp[r] - rhoT * gp[r];
  }
  bool rg = needs_grad(X) || needs_grad(y) || (tau != kNone && needs_grad(tau));
  bool keep_G = tau != kNone && needs_grad(tau);
  std::shared_ptr<Tensor<T>> Gcap = keep_G ? G : nullptr;
  auto back = [X, y, op, B, P, C, tau, rho, Gcap](Tape& t, NodeId self) {
    const Tensor<T>& gZ = t.grad(self);
    Tensor<T> dz0({B, P});
    if (C == 1)
      std::memcpy(dz0.ptr(), gZ.ptr(), sizeof(T) * static_cast<size_t>(B * P));
    else
      pack_channel0(gZ, B, P, C, dz0.ptr());
    int64_t Mmax = op->m_max();
    Tensor<T> U({B, Mmax});
    op->apply(dz0.ptr(), B, U.ptr());
    if (t.needs_grad(y)) {
      Tensor<T>& gy = t.grad(y);
      gy.vec() += static_cast<T>(rho) * U.vec();
    }
    if (t.needs_grad(X)) {
      Tensor<T> V({B, P});
      op->adjoint(U.ptr(), B, V.ptr());
      Tensor<T>& gX = t.grad(X);
      T* gxp = gX.ptr();
      const T* gzp = gZ.ptr();
      const T* dzp = dz0.ptr();
      const T* vp = V.ptr();
      T rhoT = static_cast<T>(rho);
      if (C == 1) {
        for (int64_t r = 0; r < B * P; ++r) gxp[r] += dzp[r] - rhoT * vp[r];
      } else {
        for (int64_t r = 0; r < B * P; ++r) {
          gxp[r * C] += dzp[r] - rhoT * vp[r];
          for (int64_t c = 1; c < C; ++c) gxp[r * C + c] += gzp[r * C + c];
        }
      }
    }
    if (tau != Tape::kNone && t.needs_grad(tau) && Gcap) {
      double dot = 0.0;
      const T* dzp = dz0.ptr();
      const T* gp = Gcap->ptr();
      for (int64_t r = 0; r < B * P; ++r) dot += static_cast<double>(dzp[r]) * static_cast<double>(gp[r]);
      double drho = -dot;
      double ds = rho * (1.0 - rho);  // sigmoid'
      t.grad(tau).at(0) += static_cast<T>(drho * ds);
    }
  };
  return push(std::move(out), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::measure(NodeId x, std::shared_ptr<const BatchedOp<T>> op,
                                          int64_t B, int64_t P) {
  if (val(x).numel() != B * P) throw std::invalid_argument("measure: signal size mismatch");
  Tensor<T> out({B, op->m_max()});
  op->apply(val(x).ptr(), B, out.ptr());
  return push(std::move(out), needs_grad(x), [x, op, B, P](Tape& t, NodeId self) {
    if (!t.needs_grad(x)) return;
    Tensor<T> tmp({B, P});
    op->adjoint(t.grad(self).ptr(), B, tmp.ptr());
    t.accum(x, tmp.ptr(), tmp.numel());
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::adjoint_init(NodeId y, std::shared_ptr<const BatchedOp<T>> op,
                                               int64_t B, int64_t P) {
  if (val(y).numel() != B * op->m_max()) throw std::invalid_argument("adjoint_init: size mismatch");
  Tensor<T> out({B, P});
  op->adjoint(val(y).ptr(), B, out.ptr());
  double s = op->init_scale();
  if (s != 1.0) out.vec() *= static_cast<T>(s);
  return push(std::move(out), needs_grad(y), [y, op, B, P, s](Tape& t, NodeId self) {
    if (!t.needs_grad(y)) return;
    Tensor<T> tmp({B, op->m_max()});
    op->apply(t.grad(self).ptr(), B, tmp.ptr());
    if (s != 1.0) tmp.vec() *= static_cast<T>(s);
    t.accum(y, tmp.ptr(), tmp.numel());
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::permute(NodeId x,
                                          std::shared_ptr<const std::vector<std::vector<int64_t>>> src,
                                          int64_t B, int64_t P) {
  if (val(x).numel() != B * P) throw std::invalid_argument("permute: size mismatch");
  Tensor<T> out({B, P});
  const T* xp = val(x).ptr();
  for (int64_t b = 0; b < B; ++b) {
    const auto& s = (*src)[static_cast<size_t>(b)];
    T* ob = out.ptr() + b * P;
    const T* xb = xp + b * P;
    for (int64_t p = 0; p < P; ++p) ob[p] = xb[s[static_cast<size_t>(p)]];
  }
  return push(std::move(out), needs_grad(x), [x, src, B, P](Tape& t, NodeId self) {
    if (!t.needs_grad(x)) return;
    const T* gp = t.grad(self).ptr();
    T* gx = t.grad(x).ptr();
    for (int64_t b = 0; b < B; ++b) {
      const auto& s = (*src)[static_cast<size_t>(b)];
      for (int64_t p = 0; p < P; ++p) gx[b * P + s[static_cast<size_t>(p)]] += gp[b * P + p];
    }
  });
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::lp_loss(NodeId v, double p, int64_t B, std::vector<int64_t> valid) {
  const Tensor<T>& vv = val(v);
  int64_t stride = vv.numel() / B;
  double acc = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    int64_t m = valid.empty() ? stride : valid[static_cast<size_t>(b)];
    const T* vb = vv.ptr() + b * stride;
    for (int64_t k = 0; k < m; ++k) acc += std::pow(std::abs(static_cast<double>(vb[k])), p);
  }
  Tensor<T> out({1});
  out.at(0) = static_cast<T>(acc / static_cast<double>(B));
  return push(std::move(out), needs_grad(v),
              [v, p, B, stride, valid = std::move(valid)](Tape& t, NodeId self) {
                if (!t.needs_grad(v)) return;
                double gl = static_cast<double>(t.grad(self).at(0)) / static_cast<double>(B);
                const Tensor<T>& vv = t.val(v);
                Tensor<T>& gv = t.grad(v);
                for (int64_t b = 0; b < B; ++b) {
                  int64_t m = valid.empty() ? stride : valid[static_cast<size_t>(b)];
                  const T* vb = vv.ptr() + b * stride;
                  T* gb = gv.ptr() + b * stride;
                  for (int64_t k = 0; k < m; ++k) {
                    double x = static_cast<double>(vb[k]);
                    if (x == 0.0) continue;  // subgradient 0 at exact zero
                    double g = p * std::pow(std::abs(x), p - 1.0) * (x > 0 ? 1.0 : -1.0);
                    gb[k] += static_cast<T>(gl * g);
                  }
                }
              });
}

template <typename T>
void Tape<T>::backward(NodeId loss_node) {
  if (swept_) throw std::logic_error("tape already swept");
  swept_ = true;
  Node& loss = nodes_[static_cast<size_t>(loss_node)];
  if (loss.val.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  grad(loss_node).at(0) = T(1);
  for (NodeId i = loss_node; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && !n.grad.empty() && n.back) n.back(*this, i);
    if (!n.keep) {
      n.val = Tensor<T>();
      n.grad = Tensor<T>();
    }
  }
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  swept_ = false;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace scsr
