#include "scsr/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "scsr/splitting.hpp"
#include "scsr/transforms.hpp"

namespace scsr {

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::mc: return "MC";
    case Scheme::dmc: return "DMC";
    case Scheme::mc_oc: return "MC+OC";
    case Scheme::mc_doc: return "MC+DOC";
    case Scheme::dmc_doc: return "DMC+DOC";
    case Scheme::sup: return "SUP";
    case Scheme::sup_doc: return "SUP_DOC";
  }
  return "?";
}

std::optional<Scheme> parse_scheme(std::string_view name) {
  std::string u;
  for (char c : name) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "MC") return Scheme::mc;
  if (u == "DMC") return Scheme::dmc;
  if (u == "MC+OC") return Scheme::mc_oc;
  if (u == "MC+DOC") return Scheme::mc_doc;
  if (u == "DMC+DOC") return Scheme::dmc_doc;
  if (u == "SUP") return Scheme::sup;
  if (u == "SUP_DOC" || u == "SUP+DOC") return Scheme::sup_doc;
  return std::nullopt;
}

bool scheme_needs_truth(Scheme s) { return s == Scheme::sup || s == Scheme::sup_doc; }

void LossConfig::validate() const {
  if (p < 1.0) throw std::invalid_argument("loss: p must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("loss: alpha must be >= 0");
  if (sigma < 0.0) throw std::invalid_argument("loss: sigma must be >= 0");
}

double lp_penalty(const double* v, int64_t n, double p) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::pow(std::abs(v[i]), p);
  return acc;
}

namespace {

std::vector<int64_t> random_subset(int64_t n, int64_t k, Rng& rng) {
  std::vector<int64_t> pool(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < k; ++i) {
    int64_t j = rng.uniform_int(i, n - 1);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  std::vector<int64_t> out(pool.begin(), pool.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

// Per-sample fresh matrices are affordable for short signals; above this the
// step draws one fresh full frame and hands out per-sample row subsets (row
// subsets preserve both operator families).
constexpr int64_t kFreshPerSampleMaxN = 64;

template <typename T>
Tensor<T> gen_frame(MatrixKind kind, int64_t M, int64_t N, uint64_t seed) {
  if (kind == MatrixKind::bernoulli_pm1) {
    if constexpr (std::is_same_v<T, double>)
      return gen_bernoulli_d(M, N, seed).data;
    else
      return gen_bernoulli(M, N, seed).data.template cast<T>();
  }
  if constexpr (std::is_same_v<T, double>)
    return gen_gaussian_orthonormal_d(M, N, seed).data;
  else
    return gen_gaussian_orthonormal(M, N, seed).data.template cast<T>();
}

template <typename T>
std::shared_ptr<const BatchedOp<T>> make_fresh_op(MatrixKind kind, int64_t N,
                                                  const std::vector<int64_t>& msizes, Rng& rng) {
  if (kind != MatrixKind::gaussian_orthonormal && kind != MatrixKind::bernoulli_pm1)
    throw std::invalid_argument("fresh operator draws need a gaussian or bernoulli base family");
  double scale = kind == MatrixKind::bernoulli_pm1 ? 1.0 / static_cast<double>(N) : 1.0;
  int64_t B = static_cast<int64_t>(msizes.size());
  if (kind == MatrixKind::gaussian_orthonormal && N <= kFreshPerSampleMaxN) {
    std::vector<Tensor<T>> mats;
    mats.reserve(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b)
      mats.push_back(gen_frame<T>(kind, msizes[static_cast<size_t>(b)], N, rng.raw()()));
    return std::make_shared<PerSampleBOp<T>>(std::move(mats), N, scale);
  }
  auto base = std::make_shared<Tensor<T>>(gen_frame<T>(kind, N, N, rng.raw()()));
  std::vector<std::vector<int64_t>> rows(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b)
    rows[static_cast<size_t>(b)] = random_subset(N, msizes[static_cast<size_t>(b)], rng);
  return std::make_shared<RowSubsetBOp<T>>(base, N, N, std::move(rows), scale);
}

template <typename T>
struct Builder {
  using NodeId = typename Tape<T>::NodeId;
  Tape<T>& tape;
  const LossConfig& lcfg;
  const SCNetConfig& ncfg;
  const NetBind<T>& bind;
  EmbedActive active;
  const TrainBatch<T>& batch;
  Rng& rng;

  int64_t B() const { return batch.B; }
  int64_t P() const { return batch.H * batch.W; }

  NodeId fwd(NodeId y, std::shared_ptr<const BatchedOp<T>> op) {
    return scnet_forward(tape, ncfg, bind, y, std::move(op), B(), batch.H, batch.W, active).xhat;
  }

  NodeId residual_lp(NodeId xhat, const std::shared_ptr<const BatchedOp<T>>& op, NodeId y_leaf) {
    NodeId r = tape.sub(tape.measure(xhat, op, B(), P()), y_leaf);
    std::vector<int64_t> valid(static_cast<size_t>(B()));
    for (int64_t b = 0; b < B(); ++b) valid[static_cast<size_t>(b)] = op->m_of(b);
    return tape.lp_loss(r, lcfg.p, B(), std::move(valid));
  }

  std::shared_ptr<const Tensor<T>> base_tensor() const {
    return std::shared_ptr<const Tensor<T>>(batch.A, &batch.A->data);
  }

  double base_init_scale() const {
    return batch.A->kind == MatrixKind::bernoulli_pm1 ? 1.0 / static_cast<double>(batch.A->N)
                                                      : 1.0;
  }

  struct Dmc {
    NodeId loss, xhat1, xhat2;
  };

  Dmc build_dmc() {
    int64_t M = batch.A->M;
    if (M < 2) throw std::invalid_argument("division needs at least two measurements");
    SplitPlan plan = draw_splits(M, B(), rng);
    auto base = base_tensor();
    double s = base_init_scale();
    auto op1 = std::make_shared<RowSubsetBOp<T>>(base, M, batch.A->N, plan.idx1, s);
    auto op2 = std::make_shared<RowSubsetBOp<T>>(base, M, batch.A->N, plan.idx2, s);
    NodeId y1 = tape.leaf(gather_measurements(batch.y, plan.idx1), false);
    NodeId y2 = tape.leaf(gather_measurements(batch.y, plan.idx2), false);
    NodeId xhat1 = fwd(y1, op1);
    NodeId xhat2 = fwd(y2, op2);
    NodeId l = residual_lp(xhat1, op2, y2);
    if (lcfg.symmetric) l = tape.add(l, residual_lp(xhat2, op1, y1));
    return {l, xhat1, xhat2};
  }

  NodeId build_doc(const std::vector<NodeId>& xhats) {
    int64_t N = P();
    TransformDomain domain = domain_for(batch.H, batch.W);
    NodeId total = Tape<T>::kNone;
    for (NodeId xhat : xhats) {
      auto srcs = std::make_shared<std::vector<std::vector<int64_t>>>();
      srcs->reserve(static_cast<size_t>(B()));
      std::vector<int64_t> msizes(static_cast<size_t>(B()));
      for (int64_t b = 0; b < B(); ++b) {
        Dihedral t = sample_uniform(rng, domain);
        srcs->push_back(perm_of(t, batch.H, batch.W).src);
        msizes[static_cast<size_t>(b)] = rng.uniform_int(1, N);
      }
      auto op = make_fresh_op<T>(batch.A->kind, N, msizes, rng);
      NodeId xt = tape.permute(xhat, srcs, B(), N);
      NodeId yt = tape.measure(xt, op, B(), N);
      if (lcfg.sigma > 0.0) {
        Tensor<T> noise({B(), op->m_max()});
        for (int64_t b = 0; b < B(); ++b) {
          T* row = noise.ptr() + b * op->m_max();
          for (int64_t k = 0; k < op->m_of(b); ++k)
            row[k] = static_cast<T>(lcfg.sigma * rng.normal());
        }
        yt = tape.add_const(yt, std::move(noise));
      }
      NodeId xbar = fwd(yt, op);
      NodeId li = tape.lp_loss(tape.sub(xbar, xt), lcfg.p, B());
      total = total == Tape<T>::kNone ? li : tape.add(total, li);
    }
    return total;
  }

  struct Mc {
    NodeId loss, xhat, op_y;
    std::shared_ptr<const BatchedOp<T>> op;
  };

  Mc build_mc() {
    auto op = std::static_pointer_cast<const BatchedOp<T>>(DenseBOp<T>::from(*batch.A));
    NodeId y = tape.leaf(batch.y, false);
    NodeId xhat = fwd(y, op);
    return {residual_lp(xhat, op, y), xhat, y, op};
  }

  NodeId build_oc(NodeId xhat, const std::shared_ptr<const BatchedOp<T>>& op) {
    NodeId yhat = tape.measure(xhat, op, B(), P());
    NodeId xbar = fwd(yhat, op);
    return tape.lp_loss(tape.sub(xhat, xbar), lcfg.p, B());
  }

  NodeId build_sup() {
    auto op = std::static_pointer_cast<const BatchedOp<T>>(DenseBOp<T>::from(*batch.A));
    NodeId y = tape.leaf(batch.y, false);
    NodeId xhat = fwd(y, op);
    NodeId x = tape.leaf(batch.x, false);
    return tape.lp_loss(tape.sub(xhat, x), lcfg.p, B());
  }

  NodeId build_sup_doc() {
    int64_t N = P();
    std::vector<int64_t> msizes(static_cast<size_t>(B()));
    for (int64_t b = 0; b < B(); ++b) msizes[static_cast<size_t>(b)] = rng.uniform_int(1, N);
    auto op = make_fresh_op<T>(batch.A->kind, N, msizes, rng);
    NodeId x = tape.leaf(batch.x, false);
    NodeId yt = tape.measure(x, op, B(), N);
    NodeId xbar = fwd(yt, op);
    return tape.lp_loss(tape.sub(xbar, x), lcfg.p, B());
  }
};

}  // namespace

template <typename T>
LossGraph<T> build_scheme_loss(Tape<T>& tape, Scheme scheme, const LossConfig& lcfg,
                               const SCNetConfig& ncfg, const NetBind<T>& bind,
                               EmbedActive active, const TrainBatch<T>& batch, Rng& rng) {
  lcfg.validate();
  if (!batch.A) throw std::invalid_argument("loss: batch has no operator");
  if (batch.H * batch.W != batch.A->N) throw std::invalid_argument("loss: geometry mismatch");
  if (scheme_needs_truth(scheme) && batch.x.empty())
    throw std::invalid_argument("loss: scheme needs ground truth");
  if (scheme != Scheme::sup_doc && batch.y.empty())
    throw std::invalid_argument("loss: scheme needs measurements");
  Builder<T> b{tape, lcfg, ncfg, bind, active, batch, rng};
  switch (scheme) {
    case Scheme::mc: {
      auto m = b.build_mc();
      return {m.loss, m.xhat};
    }
    case Scheme::dmc: {
      auto d = b.build_dmc();
      return {d.loss, d.xhat1, d.xhat2};
    }
    case Scheme::mc_oc: {
      auto m = b.build_mc();
      auto l = tape.add(m.loss, tape.scale(b.build_oc(m.xhat, m.op), lcfg.alpha));
      return {l, m.xhat};
    }
    case Scheme::mc_doc: {
      auto m = b.build_mc();
      auto l = tape.add(m.loss, tape.scale(b.build_doc({m.xhat}), lcfg.alpha));
      return {l, m.xhat};
    }
    case Scheme::dmc_doc: {
      auto d = b.build_dmc();
      auto l = tape.add(d.loss, tape.scale(b.build_doc({d.xhat1, d.xhat2}), lcfg.alpha));
      return {l, d.xhat1, d.xhat2};
    }
    case Scheme::sup:
      return {b.build_sup()};
    case Scheme::sup_doc:
      return {b.build_sup_doc()};
  }
  throw std::invalid_argument("loss: unknown scheme");
}

template <typename T>
StepResult<T> loss_step(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                        SCNetParams<T>& params, const TrainMask& mask,
                        std::optional<int64_t> image_id, EmbedActive active,
                        const TrainBatch<T>& batch, Rng& rng) {
  Tape<T> tape;
  NetBind<T> bind = bind_net(tape, params, mask, image_id, active);
  LossGraph<T> g = build_scheme_loss(tape, scheme, lcfg, ncfg, bind, active, batch, rng);
  StepResult<T> res;
  res.loss = static_cast<double>(tape.val(g.loss).at(0));
  if (!bind.bound.empty()) {
    tape.backward(g.loss);
    res.grads.reserve(bind.bound.size());
    for (auto& [ptr, nid] : bind.bound) {
      Tensor<T> gt = std::move(tape.grad(nid));
      if (gt.empty()) gt = Tensor<T>(ptr->shape);
      res.grads.emplace_back(ptr, std::move(gt));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// expectation identity check

StubNet theorem_adjoint_stub() {
  return [](const SamplingMatrixD& A1, const Tensor<double>& y1) { return adjoint(A1, y1); };
}

TheoremReport verify_theorem(const SamplingMatrixD& A, int64_t M1, const StubNet& stub,
                             const SignalSampler& sample_signal, double sigma, int64_t n_samples,
                             Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("verify: sigma must be >= 0");
  if (M1 < 1 || M1 >= A.M) throw std::invalid_argument("verify: M1 must lie in [1, M-1]");
  if (n_samples < 2) throw std::invalid_argument("verify: need at least two samples");
  int64_t M = A.M, N = A.N, M2 = M - M1;
  double sum_j = 0.0, sum_j2 = 0.0, sum_rhs = 0.0;
  Tensor<double> y1({M1}), y2({M2});
  for (int64_t t = 0; t < n_samples; ++t) {
    Tensor<double> x = sample_signal(rng);
    if (x.numel() != N) throw std::invalid_argument("verify: sampler dimension mismatch");
    std::vector<int64_t> idx1 = random_subset(M, M1, rng);
    std::vector<int64_t> idx2;
    idx2.reserve(static_cast<size_t>(M2));
    {
      size_t k = 0;
      for (int64_t i = 0; i < M; ++i) {
        if (k < idx1.size() && idx1[k] == i)
          ++k;
        else
          idx2.push_back(i);
      }
    }
    SamplingMatrixD A1 = row_subset(A, idx1);
    SamplingMatrixD A2 = row_subset(A, idx2);
    y1 = apply(A1, x);
    for (int64_t i = 0; i < M1; ++i) y1.at(i) += sigma * rng.normal();
    y2 = apply(A2, x);
    for (int64_t i = 0; i < M2; ++i) y2.at(i) += sigma * rng.normal();
    Tensor<double> f = stub(A1, y1);
    Tensor<double> pf = apply(A2, f);
    double jt = 0.0, rt = 0.0;
    Tensor<double> px = apply(A2, x);
    for (int64_t i = 0; i < M2; ++i) {
      double dj = pf.at(i) - y2.at(i);
      jt += dj * dj;
      double dr = pf.at(i) - px.at(i);
      rt += dr * dr;
    }
    sum_j += jt;
    sum_j2 += jt * jt;
    sum_rhs += rt;
  }
  double n = static_cast<double>(n_samples);
  TheoremReport r;
  r.M = M;
  r.N = N;
  r.M1 = M1;
  r.M2 = M2;
  r.sigma = sigma;
  r.n_samples = n_samples;
  r.j_hat = sum_j / n;
  r.rhs_hat = sum_rhs / n + static_cast<double>(M2) * sigma * sigma;
  if (r.rhs_hat != 0.0)
    r.rel_error = std::abs(r.j_hat - r.rhs_hat) / r.rhs_hat;
  else
    r.rel_error = r.j_hat == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  double var = sum_j2 / n - (sum_j / n) * (sum_j / n);
  r.stderr_j = std::sqrt(std::max(0.0, var) / n);
  return r;
}

std::string theorem_csv_header() {
  return "M,N,M1,M2,sigma,n_samples,J_hat,rhs_hat,rel_error,stderr\n";
}

std::string theorem_csv_row(const TheoremReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.M << ',' << r.N << ',' << r.M1 << ',' << r.M2 << ',' << r.sigma << ',' << r.n_samples
     << ',' << r.j_hat << ',' << r.rhs_hat << ',' << r.rel_error << ',' << r.stderr_j
     << '\n';
  return os.str();
}

template LossGraph<float> build_scheme_loss(Tape<float>&, Scheme, const LossConfig&,
                                            const SCNetConfig&, const NetBind<float>&, EmbedActive,
                                            const TrainBatch<float>&, Rng&);
template LossGraph<double> build_scheme_loss(Tape<double>&, Scheme, const LossConfig&,
                                             const SCNetConfig&, const NetBind<double>&,
                                             EmbedActive, const TrainBatch<double>&, Rng&);
template StepResult<float> loss_step(Scheme, const LossConfig&, const SCNetConfig&,
                                     SCNetParams<float>&, const TrainMask&, std::optional<int64_t>,
                                     EmbedActive, const TrainBatch<float>&, Rng&);
template StepResult<double> loss_step(Scheme, const LossConfig&, const SCNetConfig&,
                                      SCNetParams<double>&, const TrainMask&,
                                      std::optional<int64_t>, EmbedActive,
                                      const TrainBatch<double>&, Rng&);

}  // namespace scsr
