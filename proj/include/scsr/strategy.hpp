#pragma once

// The four-stage progressive reconstruction driver: offline training on an
// external measurement set, test-set adaptation, per-image adaptation, and
// masked-operator self-ensemble inference with a per-pixel uncertainty map.

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "scsr/losses.hpp"
#include "scsr/optimizer.hpp"
#include "scsr/scnet.hpp"
#include "scsr/sensing.hpp"
#include "scsr/transforms.hpp"

namespace scsr {

struct StagePlan {
  int stage = 1;
  int64_t iters = 0;           // optimization steps at lr
  int64_t finetune_iters = 0;  // extra steps at lr_finetune, same optimizer state
  double lr = 1e-4;
  double lr_finetune = 2.5e-5;
  int64_t batch = 0;  // samples per step; 0 = whole set. Stages 2-3 require 1.
  int64_t ensemble_D = 80;
  double ensemble_r = 0.015;
  int64_t log_every = 0;   // 0 = log nothing between start and end
  int64_t ckpt_every = 0;  // 0 = no interval checkpoints
  void validate() const;
};

StagePlan default_plan(int stage);

// Embedding schedule: stage 1 trains none, stage 2 adds per-image vectors,
// stages 3-4 add the positional grid as well.
EmbedActive stage_embeddings(int stage);
TrainMask stage_mask(int stage);

template <typename T>
struct MeasurementDataset {
  Tensor<T> y;  // [count, M]
  Tensor<T> x;  // [count, N] ground truth; may be empty
  std::shared_ptr<const SamplingMatrixT<T>> A;
  int64_t H = 1, W = 0;
  int64_t count() const { return y.shape.empty() ? 0 : y.shape[0]; }
  TrainBatch<T> gather(const std::vector<int64_t>& idx) const;
};

// Deterministic full-set objective under frozen draws; used to compare
// parameter states across stage boundaries. Per-image embeddings participate
// whenever they exist for an image.
template <typename T>
double frozen_objective(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                        SCNetParams<T>& params, const MeasurementDataset<T>& set, uint64_t seed);

template <typename T>
void run_stage1(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                SCNetParams<T>& params, const MeasurementDataset<T>& train_set,
                const StagePlan& plan, uint64_t seed, std::ostream* log,
                const std::string& ckpt_prefix = "");

template <typename T>
void run_stage2(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                SCNetParams<T>& params, const MeasurementDataset<T>& test_set,
                const StagePlan& plan, uint64_t seed, std::ostream* log,
                const std::string& ckpt_prefix = "");

template <typename T>
void run_stage3(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                SCNetParams<T>& params, const MeasurementDataset<T>& test_set, int64_t image,
                const StagePlan& plan, uint64_t seed, std::ostream* log,
                const std::string& ckpt_prefix = "");

// Full-operator forward over a whole set; uses each image's embeddings when
// the registries hold them.
template <typename T>
Tensor<T> infer_set(const SCNetConfig& ncfg, SCNetParams<T>& params,
                    const MeasurementDataset<T>& set);

template <typename T>
struct EnsembleResult {
  Tensor<T> mean;  // [N]
  Tensor<T> std;   // [N], population standard deviation over the D draws
};

template <typename T>
EnsembleResult<T> ensemble_stage4(const SCNetConfig& ncfg, SCNetParams<T>& params,
                                  const Tensor<T>& y, const SamplingMatrixT<T>& A, int64_t H,
                                  int64_t W, std::optional<int64_t> image_id, EmbedActive active,
                                  int64_t D, double r, Rng& rng,
                                  std::optional<TransformDomain> domain_override = {});

struct PipelineConfig {
  std::vector<StagePlan> stages;  // strictly ascending stage numbers
  Scheme scheme = Scheme::dmc_doc;
  LossConfig lcfg;
  SCNetConfig ncfg;
  uint64_t seed = 0;
  std::string out_dir;  // when set, a checkpoint is written per stage boundary
  void validate() const;
};

template <typename T>
struct StageReport {
  int stage = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
};

template <typename T>
struct PipelineResult {
  std::vector<StageReport<T>> reports;
  Tensor<T> recon;        // [count, N] final reconstruction per test image
  Tensor<T> uncertainty;  // [count, N] when stage 4 ran, else empty
};

// Runs the configured stages in order on shared parameters. Stage 3 clones
// the incoming parameters per test image so each image adapts independently;
// stage 4 consumes whichever parameters the previous stages produced.
template <typename T>
PipelineResult<T> run_pipeline(const PipelineConfig& cfg, SCNetParams<T>& params,
                               const MeasurementDataset<T>& train_set,
                               const MeasurementDataset<T>& test_set, std::ostream* log);

extern template struct MeasurementDataset<float>;
extern template struct MeasurementDataset<double>;

}  // namespace scsr
