#include "scsr/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "scsr/metrics.hpp"

namespace scsr {

void StagePlan::validate() const {
  if (stage < 1 || stage > 4) throw std::invalid_argument("plan: stage must be 1..4");
  if (iters < 0 || finetune_iters < 0) throw std::invalid_argument("plan: negative iteration count");
  if (lr <= 0.0 || lr_finetune <= 0.0) throw std::invalid_argument("plan: learning rate must be positive");
  if (batch < 0) throw std::invalid_argument("plan: negative batch");
  if ((stage == 2 || stage == 3) && batch > 1)
    throw std::invalid_argument("plan: stages 2 and 3 adapt one image per step (batch 1)");
  if (ensemble_D < 1) throw std::invalid_argument("plan: ensemble needs D >= 1");
  if (ensemble_r < 0.0 || ensemble_r > 1.0)
    throw std::invalid_argument("plan: masking probability outside [0, 1]");
}

StagePlan default_plan(int stage) {
  StagePlan p;
  p.stage = stage;
  switch (stage) {
    case 1:
      p.iters = 30000;
      p.batch = 0;
      break;
    case 2:
      p.iters = 500000;
      p.finetune_iters = 100000;
      p.batch = 1;
      break;
    case 3:
      p.iters = 5000;
      p.finetune_iters = 1000;
      p.batch = 1;
      break;
    case 4:
      p.iters = 0;
      break;
    default:
      throw std::invalid_argument("plan: stage must be 1..4");
  }
  return p;
}

EmbedActive stage_embeddings(int stage) {
  switch (stage) {
    case 1: return {false, false};
    case 2: return {true, false};
    case 3:
    case 4: return {true, true};
    default: throw std::invalid_argument("stage must be 1..4");
  }
}

TrainMask stage_mask(int stage) {
  EmbedActive e = stage_embeddings(stage);
  if (stage == 4) return {false, false, false, false};
  return {true, true, e.img, e.pos};
}

template <typename T>
TrainBatch<T> MeasurementDataset<T>::gather(const std::vector<int64_t>& idx) const {
  TrainBatch<T> b;
  b.A = A;
  b.H = H;
  b.W = W;
  b.B = static_cast<int64_t>(idx.size());
  for (int64_t i : idx)
    if (i < 0 || i >= count()) throw std::out_of_range("gather: sample index out of range");
  int64_t M = y.shape.size() == 2 ? y.shape[1] : 0;
  b.y = Tensor<T>({b.B, M});
  for (int64_t i = 0; i < b.B; ++i)
    std::copy_n(y.ptr() + idx[static_cast<size_t>(i)] * M, M, b.y.ptr() + i * M);
  if (!x.empty()) {
    int64_t N = x.shape[1];
    b.x = Tensor<T>({b.B, N});
    for (int64_t i = 0; i < b.B; ++i)
      std::copy_n(x.ptr() + idx[static_cast<size_t>(i)] * N, N, b.x.ptr() + i * N);
  }
  return b;
}

namespace {

constexpr uint64_t kStepStreamBase = 0x5710;
constexpr uint64_t kFrozenStream = 0xF12E;

template <typename T>
void check_finite(const SCNetParams<T>& p) {
  auto scan = [](const Tensor<T>& t) {
    for (T v : t.data)
      if (!std::isfinite(static_cast<double>(v)))
        throw std::runtime_error("training produced non-finite parameters");
  };
  scan(p.fext_w);
  scan(p.fext_b);
  for (const auto& b : p.blocks) {
    scan(b.w1);
    scan(b.b1);
    scan(b.w2);
    scan(b.b2);
  }
  scan(p.frec_w);
  scan(p.frec_b);
  scan(p.tau);
  for (const auto& [id, t] : p.e_img) scan(t);
  for (const auto& [id, t] : p.e_pos) scan(t);
}

std::vector<int64_t> step_indices(int stage, int64_t count, int64_t batch, uint64_t seed,
                                  int64_t step, int64_t fixed_image) {
  if (stage == 3) return {fixed_image};
  if (stage == 2) return {step % count};
  if (batch <= 0 || batch >= count) {
    std::vector<int64_t> all(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) all[static_cast<size_t>(i)] = i;
    return all;
  }
  Rng rng = make_rng(seed, streams::batch_order, static_cast<uint64_t>(step));
  std::vector<int64_t> pool(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) pool[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < batch; ++i) {
    int64_t j = rng.uniform_int(i, count - 1);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  return {pool.begin(), pool.begin() + batch};
}

template <typename T>
double mean_snr(const Tensor<T>& truth, const Tensor<T>& recon) {
  int64_t count = truth.shape[0], N = truth.shape[1];
  double acc = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    TensorD a({N}), b({N});
    for (int64_t j = 0; j < N; ++j) {
      a.at(j) = static_cast<double>(truth.at(i * N + j));
      b.at(j) = static_cast<double>(recon.at(i * N + j));
    }
    double s = snr_db(a, b);
    acc += std::isfinite(s) ? s : 300.0;
  }
  return acc / static_cast<double>(count);
}

template <typename T>
void train_loop(int stage, Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                SCNetParams<T>& params, const MeasurementDataset<T>& set, const StagePlan& plan,
                uint64_t seed, std::ostream* log, const std::string& ckpt_prefix,
                int64_t fixed_image) {
  plan.validate();
  if (plan.stage != stage) throw std::invalid_argument("plan: stage number mismatch");
  if (set.count() == 0) throw std::invalid_argument("training set is empty");
  if (stage == 3 && (fixed_image < 0 || fixed_image >= set.count()))
    throw std::invalid_argument("stage 3: image index out of range");

  EmbedActive active = stage_embeddings(stage);
  TrainMask mask = stage_mask(stage);
  if (active.img) {
    if (stage == 3)
      params.ensure_img(fixed_image);
    else
      for (int64_t i = 0; i < set.count(); ++i) params.ensure_img(i);
  }
  if (active.pos) params.ensure_pos(fixed_image);

  typename Adam<T>::Config ocfg;
  ocfg.lr = plan.lr;
  Adam<T> opt(ocfg);
  int64_t total = plan.iters + plan.finetune_iters;
  for (int64_t step = 0; step < total; ++step) {
    if (step == plan.iters) opt.set_lr(plan.lr_finetune);
    std::vector<int64_t> idx = step_indices(stage, set.count(), plan.batch, seed, step, fixed_image);
    TrainBatch<T> tb = set.gather(idx);
    std::optional<int64_t> image_id;
    if (active.img || active.pos) image_id = idx[0];
    Rng rng = make_rng(seed, kStepStreamBase + static_cast<uint64_t>(stage),
                       static_cast<uint64_t>(step));
    StepResult<T> res = loss_step(scheme, lcfg, ncfg, params, mask, image_id, active, tb, rng);
    if (!std::isfinite(res.loss)) throw std::runtime_error("training loss diverged");
    opt.step(res.grads);
    bool last = step + 1 == total;
    bool due = plan.log_every > 0 ? step % plan.log_every == 0 : step == 0;
    if (log && (due || last)) {
      (*log) << stage << ',' << step << ',' << res.loss << ',';
      if (!set.x.empty()) (*log) << mean_snr(set.x, infer_set(ncfg, params, set));
      (*log) << '\n';
      log->flush();
    }
    if (!ckpt_prefix.empty() && plan.ckpt_every > 0 && (step + 1) % plan.ckpt_every == 0 && !last)
      save_checkpoint(ckpt_prefix + "_step" + std::to_string(step + 1) + ".scsc", params);
  }
  check_finite(params);
  if (!ckpt_prefix.empty()) save_checkpoint(ckpt_prefix + "_final.scsc", params);
}

}  // namespace

template <typename T>
double frozen_objective(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                        SCNetParams<T>& params, const MeasurementDataset<T>& set, uint64_t seed) {
  if (set.count() == 0) throw std::invalid_argument("frozen objective: empty set");
  TrainMask none{false, false, false, false};
  double acc = 0.0;
  for (int64_t i = 0; i < set.count(); ++i) {
    TrainBatch<T> tb = set.gather({i});
    EmbedActive act{params.e_img.count(i) > 0, params.e_pos.count(i) > 0};
    Rng rng = make_rng(seed, kFrozenStream, static_cast<uint64_t>(i));
    acc += loss_step(scheme, lcfg, ncfg, params, none, i, act, tb, rng).loss;
  }
  return acc / static_cast<double>(set.count());
}

template <typename T>
void run_stage1(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                SCNetParams<T>& params, const MeasurementDataset<T>& train_set,
                const StagePlan& plan, uint64_t seed, std::ostream* log,
                const std::string& ckpt_prefix) {
  train_loop(1, scheme, lcfg, ncfg, params, train_set, plan, seed, log, ckpt_prefix, -1);
}

template <typename T>
void run_stage2(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                SCNetParams<T>& params, const MeasurementDataset<T>& test_set,
                const StagePlan& plan, uint64_t seed, std::ostream* log,
                const std::string& ckpt_prefix) {
  train_loop(2, scheme, lcfg, ncfg, params, test_set, plan, seed, log, ckpt_prefix, -1);
}

template <typename T>
void run_stage3(Scheme scheme, const LossConfig& lcfg, const SCNetConfig& ncfg,
                SCNetParams<T>& params, const MeasurementDataset<T>& test_set, int64_t image,
                const StagePlan& plan, uint64_t seed, std::ostream* log,
                const std::string& ckpt_prefix) {
  train_loop(3, scheme, lcfg, ncfg, params, test_set, plan, seed, log, ckpt_prefix, image);
}

template <typename T>
Tensor<T> infer_set(const SCNetConfig& ncfg, SCNetParams<T>& params,
                    const MeasurementDataset<T>& set) {
  int64_t count = set.count();
  int64_t N = set.A->N, M = set.A->M;
  Tensor<T> out({count, N});
  std::shared_ptr<const BatchedOp<T>> op = DenseBOp<T>::from(*set.A);
  bool per_image = !params.e_img.empty() || !params.e_pos.empty();
  if (per_image) {
    for (int64_t i = 0; i < count; ++i) {
      Tensor<T> yi({1, M});
      std::copy_n(set.y.ptr() + i * M, M, yi.ptr());
      EmbedActive act{params.e_img.count(i) > 0, params.e_pos.count(i) > 0};
      Tensor<T> xi = scnet_infer(ncfg, params, yi, op, 1, set.H, set.W, i, act);
      std::copy_n(xi.ptr(), N, out.ptr() + i * N);
    }
    return out;
  }
  constexpr int64_t kChunk = 256;
  for (int64_t start = 0; start < count; start += kChunk) {
    int64_t b = std::min(kChunk, count - start);
    Tensor<T> yb({b, M});
    std::copy_n(set.y.ptr() + start * M, b * M, yb.ptr());
    Tensor<T> xb = scnet_infer(ncfg, params, yb, op, b, set.H, set.W, std::nullopt, {});
    std::copy_n(xb.ptr(), b * N, out.ptr() + start * N);
  }
  return out;
}

template <typename T>
EnsembleResult<T> ensemble_stage4(const SCNetConfig& ncfg, SCNetParams<T>& params,
                                  const Tensor<T>& y, const SamplingMatrixT<T>& A, int64_t H,
                                  int64_t W, std::optional<int64_t> image_id, EmbedActive active,
                                  int64_t D, double r, Rng& rng,
                                  std::optional<TransformDomain> domain_override) {
  if (D < 1) throw std::invalid_argument("ensemble: D must be >= 1");
  if (r < 0.0 || r > 1.0) throw std::invalid_argument("ensemble: r outside [0, 1]");
  int64_t N = A.N;
  if (H * W != N) throw std::invalid_argument("ensemble: geometry mismatch");
  TransformDomain domain = domain_override.value_or(domain_for(H, W));
  double scale = A.kind == MatrixKind::bernoulli_pm1 ? 1.0 / static_cast<double>(N) : 1.0;
  // Welford accumulation: the spread comes out exactly zero when every draw
  // is identical (in particular at D = 1), which a sum-of-squares formula
  // cannot guarantee under rounding.
  TensorD mean_acc({N}), m2_acc({N});
  Tensor<T> yb({1, A.M});
  std::copy_n(y.ptr(), A.M, yb.ptr());
  for (int64_t d = 0; d < D; ++d) {
    Dihedral t = sample_uniform(rng, domain);
    SamplingMatrixT<T> composed = compose_operator(r, A, t, H, W, rng);
    auto data = std::make_shared<Tensor<T>>(std::move(composed.data));
    std::shared_ptr<const BatchedOp<T>> op =
        std::make_shared<DenseBOp<T>>(data, composed.M, composed.N, composed.gamma, scale);
    Tensor<T> xd = scnet_infer(ncfg, params, yb, op, 1, H, W, image_id, active);
    xd.shape = {H, W};
    Tensor<T> back = apply_transform(inverse(t), xd);
    for (int64_t i = 0; i < N; ++i) {
      double v = static_cast<double>(back.at(i));
      double delta = v - mean_acc.at(i);
      mean_acc.at(i) += delta / static_cast<double>(d + 1);
      m2_acc.at(i) += delta * (v - mean_acc.at(i));
    }
  }
  EnsembleResult<T> res;
  res.mean = Tensor<T>({N});
  res.std = Tensor<T>({N});
  double dn = static_cast<double>(D);
  for (int64_t i = 0; i < N; ++i) {
    res.mean.at(i) = static_cast<T>(mean_acc.at(i));
    res.std.at(i) = static_cast<T>(std::sqrt(std::max(0.0, m2_acc.at(i) / dn)));
  }
  return res;
}

void PipelineConfig::validate() const {
  if (stages.empty()) throw std::invalid_argument("pipeline: no stages configured");
  int prev = 0;
  for (const StagePlan& p : stages) {
    p.validate();
    if (p.stage <= prev) throw std::invalid_argument("pipeline: stages must be strictly ascending");
    prev = p.stage;
  }
  lcfg.validate();
  ncfg.validate();
}

template <typename T>
PipelineResult<T> run_pipeline(const PipelineConfig& cfg, SCNetParams<T>& params,
                               const MeasurementDataset<T>& train_set,
                               const MeasurementDataset<T>& test_set, std::ostream* log) {
  cfg.validate();
  const MeasurementDataset<T>& eval_set = test_set.count() > 0 ? test_set : train_set;
  uint64_t eval_seed = mix_seed(cfg.seed, 0xE7A1);
  PipelineResult<T> out;
  std::vector<SCNetParams<T>> per_image;  // stage-3 forks, one per test image
  namespace fs = std::filesystem;
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
  auto ckpt = [&](const std::string& name, const SCNetParams<T>& p) {
    if (!cfg.out_dir.empty()) save_checkpoint((fs::path(cfg.out_dir) / name).string(), p);
  };
  auto frozen_all = [&](const MeasurementDataset<T>& set) {
    if (per_image.empty() || &set != &eval_set)
      return frozen_objective(cfg.scheme, cfg.lcfg, cfg.ncfg, params, set, eval_seed);
    TrainMask none{false, false, false, false};
    double acc = 0.0;
    for (int64_t i = 0; i < set.count(); ++i) {
      SCNetParams<T>& pi = per_image[static_cast<size_t>(i)];
      TrainBatch<T> tb = set.gather({i});
      EmbedActive act{pi.e_img.count(i) > 0, pi.e_pos.count(i) > 0};
      Rng rng = make_rng(eval_seed, kFrozenStream, static_cast<uint64_t>(i));
      acc += loss_step(cfg.scheme, cfg.lcfg, cfg.ncfg, pi, none, i, act, tb, rng).loss;
    }
    return acc / static_cast<double>(set.count());
  };

  for (const StagePlan& plan : cfg.stages) {
    StageReport<T> rep;
    rep.stage = plan.stage;
    // Each stage is scored on the set its own objective optimizes: the
    // training set for stage 1, the test set afterwards.
    const MeasurementDataset<T>& obj_set =
        (plan.stage == 1 && train_set.count() > 0) ? train_set : eval_set;
    rep.loss_before = frozen_all(obj_set);
    switch (plan.stage) {
      case 1:
        run_stage1(cfg.scheme, cfg.lcfg, cfg.ncfg, params, train_set, plan, cfg.seed, log);
        ckpt("stage1.scsc", params);
        break;
      case 2:
        run_stage2(cfg.scheme, cfg.lcfg, cfg.ncfg, params, test_set, plan, cfg.seed, log);
        ckpt("stage2.scsc", params);
        break;
      case 3: {
        per_image.clear();
        for (int64_t i = 0; i < test_set.count(); ++i) {
          SCNetParams<T> pi = params;
          run_stage3(cfg.scheme, cfg.lcfg, cfg.ncfg, pi, test_set, i,
                     plan, mix_seed(cfg.seed, 3, static_cast<uint64_t>(i)), log);
          ckpt("stage3_image" + std::to_string(i) + ".scsc", pi);
          if (i == 0) ckpt("stage3.scsc", pi);
          per_image.push_back(std::move(pi));
        }
        break;
      }
      case 4: {
        int64_t count = test_set.count(), N = test_set.A->N, M = test_set.A->M;
        out.recon = Tensor<T>({count, N});
        out.uncertainty = Tensor<T>({count, N});
        for (int64_t i = 0; i < count; ++i) {
          SCNetParams<T>& pi = per_image.empty() ? params : per_image[static_cast<size_t>(i)];
          Tensor<T> yi({M});
          std::copy_n(test_set.y.ptr() + i * M, M, yi.ptr());
          EmbedActive act{pi.e_img.count(i) > 0, pi.e_pos.count(i) > 0};
          Rng rng = make_rng(cfg.seed, streams::ensemble, static_cast<uint64_t>(i));
          EnsembleResult<T> er =
              ensemble_stage4(cfg.ncfg, pi, yi, *test_set.A, test_set.H, test_set.W, i, act,
                              plan.ensemble_D, plan.ensemble_r, rng);
          std::copy_n(er.mean.ptr(), N, out.recon.ptr() + i * N);
          std::copy_n(er.std.ptr(), N, out.uncertainty.ptr() + i * N);
        }
        break;
      }
      default:
        throw std::invalid_argument("pipeline: stage must be 1..4");
    }
    rep.loss_after = frozen_all(obj_set);
    out.reports.push_back(rep);
  }

  if (out.recon.empty()) {
    int64_t count = eval_set.count(), N = eval_set.A->N;
    out.recon = Tensor<T>({count, N});
    if (per_image.empty()) {
      Tensor<T> r = infer_set(cfg.ncfg, params, eval_set);
      std::copy_n(r.ptr(), count * N, out.recon.ptr());
    } else {
      for (int64_t i = 0; i < count; ++i) {
        Tensor<T> yi({1, eval_set.A->M});
        std::copy_n(eval_set.y.ptr() + i * eval_set.A->M, eval_set.A->M, yi.ptr());
        SCNetParams<T>& pi = per_image[static_cast<size_t>(i)];
        EmbedActive act{pi.e_img.count(i) > 0, pi.e_pos.count(i) > 0};
        std::shared_ptr<const BatchedOp<T>> op = DenseBOp<T>::from(*eval_set.A);
        Tensor<T> xi = scnet_infer(cfg.ncfg, pi, yi, op, 1, eval_set.H, eval_set.W, i, act);
        std::copy_n(xi.ptr(), N, out.recon.ptr() + i * N);
      }
    }
  }
  return out;
}

template struct MeasurementDataset<float>;
template struct MeasurementDataset<double>;
template double frozen_objective(Scheme, const LossConfig&, const SCNetConfig&, SCNetParams<float>&,
                                 const MeasurementDataset<float>&, uint64_t);
template double frozen_objective(Scheme, const LossConfig&, const SCNetConfig&,
                                 SCNetParams<double>&, const MeasurementDataset<double>&, uint64_t);
template void run_stage1(Scheme, const LossConfig&, const SCNetConfig&, SCNetParams<float>&,
                         const MeasurementDataset<float>&, const StagePlan&, uint64_t,
                         std::ostream*, const std::string&);
template void run_stage1(Scheme, const LossConfig&, const SCNetConfig&, SCNetParams<double>&,
                         const MeasurementDataset<double>&, const StagePlan&, uint64_t,
                         std::ostream*, const std::string&);
template void run_stage2(Scheme, const LossConfig&, const SCNetConfig&, SCNetParams<float>&,
                         const MeasurementDataset<float>&, const StagePlan&, uint64_t,
                         std::ostream*, const std::string&);
template void run_stage2(Scheme, const LossConfig&, const SCNetConfig&, SCNetParams<double>&,
                         const MeasurementDataset<double>&, const StagePlan&, uint64_t,
                         std::ostream*, const std::string&);
template void run_stage3(Scheme, const LossConfig&, const SCNetConfig&, SCNetParams<float>&,
                         const MeasurementDataset<float>&, int64_t, const StagePlan&, uint64_t,
                         std::ostream*, const std::string&);
template void run_stage3(Scheme, const LossConfig&, const SCNetConfig&, SCNetParams<double>&,
                         const MeasurementDataset<double>&, int64_t, const StagePlan&, uint64_t,
                         std::ostream*, const std::string&);
template Tensor<float> infer_set(const SCNetConfig&, SCNetParams<float>&,
                                 const MeasurementDataset<float>&);
template Tensor<double> infer_set(const SCNetConfig&, SCNetParams<double>&,
                                  const MeasurementDataset<double>&);
template EnsembleResult<float> ensemble_stage4(const SCNetConfig&, SCNetParams<float>&,
                                               const Tensor<float>&, const SamplingMatrixT<float>&,
                                               int64_t, int64_t, std::optional<int64_t>,
                                               EmbedActive, int64_t, double, Rng&,
                                               std::optional<TransformDomain>);
template EnsembleResult<double> ensemble_stage4(const SCNetConfig&, SCNetParams<double>&,
                                                const Tensor<double>&,
                                                const SamplingMatrixT<double>&, int64_t, int64_t,
                                                std::optional<int64_t>, EmbedActive, int64_t,
                                                double, Rng&, std::optional<TransformDomain>);
template PipelineResult<float> run_pipeline(const PipelineConfig&, SCNetParams<float>&,
                                            const MeasurementDataset<float>&,
                                            const MeasurementDataset<float>&, std::ostream*);
template PipelineResult<double> run_pipeline(const PipelineConfig&, SCNetParams<double>&,
                                             const MeasurementDataset<double>&,
                                             const MeasurementDataset<double>&, std::ostream*);

}  // namespace scsr
