#pragma once

// Unrolled reconstruction network: a shallow feature extractor seeded from the
// adjoint initialization and a sampling-ratio map, optional per-image embedding
// injection, K modules of (gradient step on channel 0, residual block), and a
// final 1-channel readout with an optional trailing gradient step that pins the
// output to the measurements when the operator has orthonormal rows.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scsr/autodiff.hpp"
#include "scsr/rng.hpp"
#include "scsr/sensing.hpp"
#include "scsr/tensor.hpp"

namespace scsr {

enum class RhoMode : uint8_t { fixed_one = 0, sigmoid_tau = 1 };

struct SCNetConfig {
  int64_t K = 20;
  int64_t C = 32;
  RhoMode rho_mode = RhoMode::sigmoid_tau;
  bool use_final_gd = true;
  int64_t embed_h = 8;
  int64_t embed_w = 8;
  int conv_dim = 2;  // 1 for 1-D signals, 2 for images

  int64_t kernel_taps() const { return conv_dim == 2 ? 9 : 3; }
  void validate() const;
};

template <typename T>
struct SCNetParams {
  SCNetConfig cfg;

  Tensor<T> fext_w, fext_b;  // [taps*2, C], [C]
  struct Block {
    Tensor<T> w1, b1, w2, b2;  // [taps*C, C], [C] each
  };
  std::vector<Block> blocks;
  Tensor<T> frec_w, frec_b;  // [taps*C, 1], [1]
  Tensor<T> tau;             // [1], present iff rho_mode == sigmoid_tau

  std::map<int64_t, Tensor<T>> e_img;  // image id -> [C]
  std::map<int64_t, Tensor<T>> e_pos;  // image id -> [embed_h*embed_w*C]

  Tensor<T>& ensure_img(int64_t image_id);
  Tensor<T>& ensure_pos(int64_t image_id);

  template <typename U>
  SCNetParams<U> cast() const;
};

template <typename T>
SCNetParams<T> init_params(const SCNetConfig& cfg, Rng& rng);

// Which parameter groups receive gradients in the current pass.
struct TrainMask {
  bool backbone = true;  // convs
  bool tau = true;
  bool e_img = false;
  bool e_pos = false;
};

struct EmbedActive {
  bool img = false;
  bool pos = false;
};

// Tape leaves for one optimization step. `bound` lists the trainable
// (parameter, leaf) pairs in a stable canonical order.
template <typename T>
struct NetBind {
  using NodeId = typename Tape<T>::NodeId;
  NodeId fext_w, fext_b;
  struct Block {
    NodeId w1, b1, w2, b2;
  };
  std::vector<Block> blocks;
  NodeId frec_w, frec_b;
  NodeId tau = Tape<T>::kNone;
  NodeId e_img = Tape<T>::kNone;
  NodeId e_pos = Tape<T>::kNone;
  std::vector<std::pair<Tensor<T>*, NodeId>> bound;
};

template <typename T>
NetBind<T> bind_net(Tape<T>& tape, SCNetParams<T>& params, const TrainMask& trainable,
                    std::optional<int64_t> image_id, EmbedActive active);

template <typename T>
struct ForwardResult {
  typename Tape<T>::NodeId xhat;  // [B, P] final estimate
  typename Tape<T>::NodeId u;     // [B, P] readout before the final gradient step
};

// Runs the network on measurements already on the tape. H*W must equal the
// operator's signal dimension; use H=1 for 1-D signals.
template <typename T>
ForwardResult<T> scnet_forward(Tape<T>& tape, const SCNetConfig& cfg, const NetBind<T>& bind,
                               typename Tape<T>::NodeId y,
                               std::shared_ptr<const BatchedOp<T>> op, int64_t B, int64_t H,
                               int64_t W, EmbedActive active);

// Convenience non-differentiating evaluation on raw measurements [B, Mmax].
template <typename T>
Tensor<T> scnet_infer(const SCNetConfig& cfg, SCNetParams<T>& params, const Tensor<T>& y,
                      std::shared_ptr<const BatchedOp<T>> op, int64_t B, int64_t H, int64_t W,
                      std::optional<int64_t> image_id, EmbedActive active);

// Separable bicubic interpolation matrix [H*W, eh*ew], half-pixel centers,
// clamped borders. Exact identity when sizes match; preserves constants.
template <typename T>
std::shared_ptr<const Tensor<T>> upsample_matrix(int64_t H, int64_t W, int64_t eh, int64_t ew);

template <typename T>
void save_checkpoint(const std::string& path, const SCNetParams<T>& params);
template <typename T>
SCNetParams<T> load_checkpoint(const std::string& path);

extern template struct SCNetParams<float>;
extern template struct SCNetParams<double>;

}  // namespace scsr
