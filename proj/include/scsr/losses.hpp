#pragma once

// Training objectives. The self-supervised pair: a measurement-division
// cross-consistency term (reconstruct from each half of a random split of the
// measurements, check against the other half) and a sampling-reconstruction
// cycle term (re-measure a transformed estimate under a freshly drawn operator
// and require the new reconstruction to come back to it). Baseline objectives
// and a Monte-Carlo check of the expectation identity behind the cross term
// live here too.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scsr/autodiff.hpp"
#include "scsr/rng.hpp"
#include "scsr/scnet.hpp"
#include "scsr/sensing.hpp"
#include "scsr/tensor.hpp"

namespace scsr {

enum class Scheme : uint8_t {
  mc = 0,       // measurement consistency on the full operator
  dmc = 1,      // divided measurement cross-consistency
  mc_oc = 2,    // mc + original-domain consistency
  mc_doc = 3,   // mc + cycle term on its estimate
  dmc_doc = 4,  // the full dual-domain objective
  sup = 5,      // supervised regression on ground truth
  sup_doc = 6,  // supervised with fresh operators per instance
};

const char* scheme_name(Scheme s);
std::optional<Scheme> parse_scheme(std::string_view name);
bool scheme_needs_truth(Scheme s);

struct LossConfig {
  double p = 1.0;
  double alpha = 0.1;
  double sigma = 0.0;
  bool symmetric = true;
  void validate() const;
};

// sum_i |v_i|^p
double lp_penalty(const double* v, int64_t n, double p);

template <typename T>
struct TrainBatch {
  Tensor<T> y;  // [B, M] measurements under A; unused by sup_doc
  Tensor<T> x;  // [B, N] ground truth; required by sup and sup_doc
  std::shared_ptr<const SamplingMatrixT<T>> A;
  int64_t B = 0, H = 0, W = 0;
};

template <typename T>
struct LossGraph {
  typename Tape<T>::NodeId loss;
  typename Tape<T>::NodeId xhat1 = Tape<T>::kNone;
  typename Tape<T>::NodeId xhat2 = Tape<T>::kNone;
};

// Builds the scheme's objective on the tape against shared parameter leaves.
// All randomness (splits, fresh operators, grid transforms, noise) is drawn
// from `rng` in a fixed order, so re-running with an identically seeded rng
// replays the exact same draws.
template <typename T>
LossGraph<T> build_scheme_loss(Tape<T>& tape, Scheme scheme, const LossConfig& lcfg,
                               const SCNetConfig& ncfg, const NetBind<T>& bind,
                               EmbedActive active, const TrainBatch<T>& batch, Rng& rng);

// One full evaluation: bind, build, backward; returns the loss value and the
// gradient for every trainable parameter in bind order.
template <typename T>
struct StepResult {
  double loss = 0.0;
  std::vector<std::pair<Tensor<T>*, Tensor<T>>> grads;
};

template <typename T>
StepResult<T> loss_step(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                        SCNetParams<T>& params, const TrainMask& mask,
                        std::optional<int64_t> image_id, EmbedActive active,
                        const TrainBatch<T>& batch, Rng& rng);

// ---------------------------------------------------------------------------
// Monte-Carlo check of the split-consistency identity
//   E ||A2 F(y1) - y2||^2 = E ||A2 (F(y1) - x)||^2 + M2 sigma^2
// for a fixed deterministic map F, squared-error form. Both expectations are
// estimated on common random draws.

struct TheoremReport {
  int64_t M = 0, N = 0, M1 = 0, M2 = 0;
  double sigma = 0.0;
  int64_t n_samples = 0;
  double j_hat = 0.0;
  double rhs_hat = 0.0;
  double rel_error = 0.0;
  double stderr_j = 0.0;
};

using StubNet = std::function<Tensor<double>(const SamplingMatrixD& A1, const Tensor<double>& y1)>;
using SignalSampler = std::function<Tensor<double>(Rng& rng)>;

// Transpose-apply stub: exact pseudoinverse for orthonormal-row operators.
StubNet theorem_adjoint_stub();

TheoremReport verify_theorem(const SamplingMatrixD& A, int64_t M1, const StubNet& stub,
                             const SignalSampler& sample_signal, double sigma, int64_t n_samples,
                             Rng& rng);

std::string theorem_csv_header();
std::string theorem_csv_row(const TheoremReport& r);

}  // namespace scsr
