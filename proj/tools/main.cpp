#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scsr/config.hpp"
#include "scsr/datagen.hpp"
#include "scsr/image_io.hpp"
#include "scsr/io_binary.hpp"
#include "scsr/losses.hpp"
#include "scsr/metrics.hpp"
#include "scsr/plot.hpp"
#include "scsr/scnet.hpp"
#include "scsr/sensing.hpp"
#include "scsr/strategy.hpp"

namespace fs = std::filesystem;
using namespace scsr;

namespace {

// Tracks files written under one output directory and maintains an
// accumulating manifest of content hashes.
class OutDir {
 public:
  explicit OutDir(const std::string& dir) : dir_(dir) {
    fs::create_directories(dir_);
    std::ifstream in(dir_ / "manifest.txt");
    std::string hash, name;
    while (in >> hash >> name) entries_[name] = hash;
  }
  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
  void add(const std::string& rel) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(path(rel))));
    entries_[rel] = buf;
  }
  void finish() {
    std::ofstream out(dir_ / "manifest.txt");
    for (const auto& [name, hash] : entries_) out << hash << "  " << name << "\n";
  }

 private:
  fs::path dir_;
  std::map<std::string, std::string> entries_;
};

Tensor<float> to_float(const TensorD& t) {
  Tensor<float> out(t.shape);
  for (int64_t i = 0; i < static_cast<int64_t>(t.data.size()); ++i)
    out.at(i) = static_cast<float>(t.at(i));
  return out;
}

TensorD to_double(const Tensor<float>& t) {
  TensorD out(t.shape);
  for (int64_t i = 0; i < static_cast<int64_t>(t.data.size()); ++i)
    out.at(i) = static_cast<double>(t.at(i));
  return out;
}

SamplingMatrix make_matrix(const MatrixSpec& spec) {
  if (spec.kind == "gaussian") return gen_gaussian_orthonormal(spec.M, spec.N, spec.seed);
  return gen_bernoulli(spec.M, spec.N, spec.seed);
}

struct LoadedData {
  Tensor<float> train_x;  // {count, N}; may be empty for stage-2..4-only runs
  Tensor<float> test_x;
  int64_t H = 1, W = 0;
};

LoadedData load_signals(const RunConfig& cfg) {
  LoadedData d;
  const DatasetSpec& ds = cfg.dataset;
  if (ds.kind == "toy") {
    if (!ds.train_path.empty() || !ds.test_path.empty()) {
      if (!ds.train_path.empty()) d.train_x = to_float(read_scsx(ds.train_path).signals);
      if (!ds.test_path.empty()) d.test_x = to_float(read_scsx(ds.test_path).signals);
    } else {
      ToySpec spec;
      spec.dist = parse_toy_dist(ds.dist);
      spec.n_signals = ds.n_signals;
      spec.dim = ds.dim;
      spec.n_train = ds.n_train;
      spec.n_test = ds.n_test;
      spec.seed = cfg.seed;
      ToyDataset toy = gen_toy_dataset(spec);
      d.train_x = to_float(toy.train);
      d.test_x = to_float(toy.test);
    }
    d.H = 1;
    d.W = d.train_x.empty() ? d.test_x.shape[1] : d.train_x.shape[1];
    return d;
  }
  if (ds.kind == "idx" || ds.kind == "scsx") {
    if (ds.kind == "scsx") {
      if (ds.train_path.empty() && ds.test_path.empty())
        throw ConfigError("config: scsx dataset needs train_path or test_path");
      if (!ds.train_path.empty()) d.train_x = to_float(read_scsx(ds.train_path).signals);
      if (!ds.test_path.empty()) d.test_x = to_float(read_scsx(ds.test_path).signals);
      d.H = 1;
      d.W = d.train_x.empty() ? d.test_x.shape[1] : d.train_x.shape[1];
      return d;
    }
    if (ds.images.empty()) throw ConfigError("config: idx dataset needs 'images'");
    MnistSet train = load_mnist(ds.images, ds.labels);
    d.H = train.rows;
    d.W = train.cols;
    int64_t count = train.images.shape[0];
    int64_t keep = ds.limit > 0 ? std::min(ds.limit, count) : count;
    if (!ds.test_path.empty()) {
      MnistSet test = load_mnist(ds.test_path);
      if (test.rows != train.rows || test.cols != train.cols)
        throw ConfigError("config: train/test image sizes differ");
      int64_t tc = ds.n_test > 0 ? std::min(ds.n_test, test.images.shape[0])
                                 : test.images.shape[0];
      d.test_x = Tensor<float>({tc, d.H * d.W});
      std::copy_n(test.images.ptr(), tc * d.H * d.W, d.test_x.ptr());
      d.train_x = Tensor<float>({keep, d.H * d.W});
      std::copy_n(train.images.ptr(), keep * d.H * d.W, d.train_x.ptr());
    } else {
      // carve the test block off the tail of the single file
      int64_t tc = std::min(ds.n_test, keep);
      int64_t trc = keep - tc;
      if (trc < 1) throw ConfigError("config: idx split leaves no training images");
      d.train_x = Tensor<float>({trc, d.H * d.W});
      std::copy_n(train.images.ptr(), trc * d.H * d.W, d.train_x.ptr());
      d.test_x = Tensor<float>({tc, d.H * d.W});
      std::copy_n(train.images.ptr() + trc * d.H * d.W, tc * d.H * d.W, d.test_x.ptr());
    }
    return d;
  }
  throw ConfigError("config: unknown dataset kind '" + ds.kind + "'");
}

MeasurementDataset<float> measure_set(const Tensor<float>& x,
                                      std::shared_ptr<SamplingMatrix> A, int64_t H, int64_t W) {
  MeasurementDataset<float> set;
  set.A = A;
  set.H = H;
  set.W = W;
  set.x = x;
  if (!x.empty()) {
    int64_t count = x.shape[0];
    set.y = Tensor<float>({count, A->M});
    DenseBOp<float>::from(*A)->apply(x.ptr(), count, set.y.ptr());
  }
  return set;
}

double mean_metric(const Tensor<float>& truth, const Tensor<float>& recon, int64_t H, int64_t W,
                   const std::string& which) {
  int64_t count = truth.shape[0], N = H * W;
  double acc = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    Tensor<float> a({H, W}), b({H, W});
    std::copy_n(truth.ptr() + i * N, N, a.ptr());
    std::copy_n(recon.ptr() + i * N, N, b.ptr());
    double v = 0.0;
    if (which == "SNR")
      v = snr_db(a, b);
    else if (which == "PSNR")
      v = psnr_db(a, b);
    else
      v = ssim(a, b);
    acc += std::isfinite(v) ? v : 300.0;
  }
  return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg) {
  OutDir out(cfg.out_dir);
  const DatasetSpec& ds = cfg.dataset;
  if (ds.kind == "toy") {
    ToySpec spec;
    spec.dist = parse_toy_dist(ds.dist);
    spec.n_signals = ds.n_signals;
    spec.dim = ds.dim;
    spec.n_train = ds.n_train;
    spec.n_test = ds.n_test;
    spec.seed = cfg.seed;
    ToyDataset toy = gen_toy_dataset(spec);
    std::string base = std::string("toy_") + toy_dist_name(spec.dist);
    write_scsx(out.path(base + "_train.scsx"), spec.dist, spec.seed, toy.train);
    write_scsx(out.path(base + "_test.scsx"), spec.dist, spec.seed, toy.test);
    out.add(base + "_train.scsx");
    out.add(base + "_test.scsx");
    std::cout << "wrote " << ds.n_train << "+" << ds.n_test << " " << toy_dist_name(spec.dist)
              << " signals of dim " << ds.dim << " under " << cfg.out_dir << "\n";
  } else if (ds.kind == "idx") {
    gen_digit_corpus(out.path("digits_train_images.idx"), out.path("digits_train_labels.idx"),
                     ds.n_train, mix_seed(cfg.seed, 0xD161, 0));
    gen_digit_corpus(out.path("digits_test_images.idx"), out.path("digits_test_labels.idx"),
                     ds.n_test, mix_seed(cfg.seed, 0xD161, 1));
    out.add("digits_train_images.idx");
    out.add("digits_train_labels.idx");
    out.add("digits_test_images.idx");
    out.add("digits_test_labels.idx");
    std::cout << "wrote " << ds.n_train << "+" << ds.n_test << " synthetic 28x28 digits under "
              << cfg.out_dir << "\n";
  } else {
    throw ConfigError("gen-data: dataset kind '" + ds.kind + "' points at existing files");
  }
  out.finish();
}

void emit_recon_outputs(OutDir& out, const RunConfig& cfg, const Tensor<float>& recon,
                        const Tensor<float>& unc, int64_t H, int64_t W) {
  int64_t count = recon.shape[0];
  if (H == 1) {
    write_scsx(out.path("recon.scsx"), ToyDist::g, cfg.seed, to_double(recon));
    out.add("recon.scsx");
    if (!unc.empty()) {
      write_scsx(out.path("recon_std.scsx"), ToyDist::g, cfg.seed, to_double(unc));
      out.add("recon_std.scsx");
    }
    return;
  }
  int64_t dump = std::min<int64_t>(count, 8);
  for (int64_t i = 0; i < dump; ++i) {
    Tensor<float> img({H, W});
    std::copy_n(recon.ptr() + i * H * W, H * W, img.ptr());
    std::string name = "recon_" + std::to_string(i) + ".pgm";
    write_pgm(out.path(name), img);
    out.add(name);
    if (!unc.empty()) {
      Tensor<float> s({H, W});
      std::copy_n(unc.ptr() + i * H * W, H * W, s.ptr());
      float peak = 1e-12f;
      for (float v : s.data) peak = std::max(peak, v);
      for (float& v : s.data) v /= peak;
      name = "recon_std_" + std::to_string(i) + ".pgm";
      write_pgm(out.path(name), s);
      out.add(name);
    }
  }
}

void cmd_train(const RunConfig& cfg) {
  if (cfg.stages.empty()) throw ConfigError("train: no stages configured");
  OutDir out(cfg.out_dir);
  save_config(out.path("config.json"), cfg);
  out.add("config.json");

  LoadedData data = load_signals(cfg);
  if (cfg.matrix.N != data.H * data.W)
    throw ConfigError("train: matrix N does not match the signal dimension");
  auto A = std::make_shared<SamplingMatrix>(make_matrix(cfg.matrix));
  MeasurementDataset<float> train_set = measure_set(data.train_x, A, data.H, data.W);
  MeasurementDataset<float> test_set = measure_set(data.test_x, A, data.H, data.W);

  bool needs_train = false, needs_test = false;
  for (const StagePlan& p : cfg.stages) {
    needs_train |= p.stage == 1;
    needs_test |= p.stage >= 2;
  }
  if (needs_train && train_set.count() == 0) throw ConfigError("train: stage 1 needs a train set");
  if (needs_test && test_set.count() == 0) throw ConfigError("train: stages 2..4 need a test set");

  Rng init_rng = make_rng(cfg.seed, streams::param_init);
  SCNetParams<float> params = init_params<float>(cfg.net, init_rng);
  std::vector<SCNetParams<float>> per_image;
  Tensor<float> recon, unc;

  std::ofstream log(out.path("train_log.csv"));
  log << "stage,step,loss,snr\n";

  for (const StagePlan& plan : cfg.stages) {
    std::string ckpt = "stage" + std::to_string(plan.stage) + ".scsc";
    if (plan.stage <= 2) {
      if (fs::exists(out.path(ckpt))) {
        params = load_checkpoint<float>(out.path(ckpt));
        std::cout << "stage " << plan.stage << ": resumed from " << ckpt << "\n";
        continue;
      }
      if (plan.stage == 1)
        run_stage1(cfg.scheme, cfg.loss, cfg.net, params, train_set, plan, cfg.seed, &log);
      else
        run_stage2(cfg.scheme, cfg.loss, cfg.net, params, test_set, plan, cfg.seed, &log);
      save_checkpoint(out.path(ckpt), params);
      out.add(ckpt);
      std::cout << "stage " << plan.stage << ": done, wrote " << ckpt << "\n";
    } else if (plan.stage == 3) {
      per_image.clear();
      bool all_there = true;
      for (int64_t i = 0; i < test_set.count(); ++i)
        all_there &= fs::exists(out.path("stage3_image" + std::to_string(i) + ".scsc"));
      for (int64_t i = 0; i < test_set.count(); ++i) {
        std::string name = "stage3_image" + std::to_string(i) + ".scsc";
        if (all_there) {
          per_image.push_back(load_checkpoint<float>(out.path(name)));
          continue;
        }
        SCNetParams<float> pi = params;
        run_stage3(cfg.scheme, cfg.loss, cfg.net, pi, test_set, i, plan,
                   mix_seed(cfg.seed, 3, static_cast<uint64_t>(i)), &log);
        save_checkpoint(out.path(name), pi);
        out.add(name);
        per_image.push_back(std::move(pi));
      }
      std::cout << "stage 3: " << (all_there ? "resumed " : "adapted ") << test_set.count()
                << " image(s)\n";
    } else {
      int64_t count = test_set.count(), N = data.H * data.W;
      recon = Tensor<float>({count, N});
      unc = Tensor<float>({count, N});
      for (int64_t i = 0; i < count; ++i) {
        SCNetParams<float>& pi = per_image.empty() ? params : per_image[static_cast<size_t>(i)];
        Tensor<float> yi({A->M});
        std::copy_n(test_set.y.ptr() + i * A->M, A->M, yi.ptr());
        EmbedActive act{pi.e_img.count(i) > 0, pi.e_pos.count(i) > 0};
        Rng rng = make_rng(cfg.seed, streams::ensemble, static_cast<uint64_t>(i));
        EnsembleResult<float> er = ensemble_stage4(cfg.net, pi, yi, *A, data.H, data.W, i, act,
                                                   plan.ensemble_D, plan.ensemble_r, rng);
        std::copy_n(er.mean.ptr(), N, recon.ptr() + i * N);
        std::copy_n(er.std.ptr(), N, unc.ptr() + i * N);
      }
      std::cout << "stage 4: ensembled " << count << " image(s), D=" << plan.ensemble_D << "\n";
    }
  }
  out.add("train_log.csv");

  if (test_set.count() > 0) {
    if (recon.empty()) {
      if (per_image.empty()) {
        recon = infer_set(cfg.net, params, test_set);
      } else {
        int64_t N = data.H * data.W;
        recon = Tensor<float>({test_set.count(), N});
        for (int64_t i = 0; i < test_set.count(); ++i) {
          MeasurementDataset<float> one;
          one.A = A;
          one.H = data.H;
          one.W = data.W;
          one.y = Tensor<float>({1, A->M});
          std::copy_n(test_set.y.ptr() + i * A->M, A->M, one.y.ptr());
          Tensor<float> xi = infer_set(cfg.net, per_image[static_cast<size_t>(i)], one);
          std::copy_n(xi.ptr(), N, recon.ptr() + i * N);
        }
      }
    }
    emit_recon_outputs(out, cfg, recon, unc, data.H, data.W);
    if (!test_set.x.empty()) {
      std::ofstream mcsv(out.path("metrics.csv"));
      mcsv << metric_csv_header();
      auto emit = [&](const std::string& which) {
        MetricReport r;
        r.name = which;
        r.value = mean_metric(test_set.x, recon, data.H, data.W, which);
        r.peak = 1.0;
        r.n_items = test_set.count();
        mcsv << metric_csv_row(cfg.name, scheme_name(cfg.scheme), A->gamma, cfg.loss.sigma, r);
        std::cout << which << " " << r.value << (which == "SSIM" ? "" : " dB") << "\n";
      };
      if (data.H == 1) {
        emit("SNR");
      } else {
        emit("PSNR");
        emit("SSIM");
      }
      mcsv.close();
      out.add("metrics.csv");
    }
  }
  out.finish();
}

// Appends orthonormal rows beyond the trained matrix by projecting fresh
// Gaussian rows off the existing row space (two Gram-Schmidt sweeps).
SamplingMatrix extend_orthonormal(const SamplingMatrix& A0, int64_t m, uint64_t seed) {
  int64_t N = A0.N, M0 = A0.M;
  TensorD rows({m, N});
  for (int64_t r = 0; r < M0; ++r)
    for (int64_t c = 0; c < N; ++c) rows.at(r * N + c) = static_cast<double>(A0.data.at(r * N + c));
  Rng rng = make_rng(seed, streams::matrix_gen, 0xE7);
  for (int64_t r = M0; r < m; ++r)
    for (int64_t c = 0; c < N; ++c) rows.at(r * N + c) = rng.normal();
  for (int64_t r = M0; r < m; ++r) {
    double* v = rows.ptr() + r * N;
    for (int sweep = 0; sweep < 2; ++sweep)
      for (int64_t p = 0; p < r; ++p) {
        const double* u = rows.ptr() + p * N;
        double dot = 0.0;
        for (int64_t c = 0; c < N; ++c) dot += u[c] * v[c];
        for (int64_t c = 0; c < N; ++c) v[c] -= dot * u[c];
      }
    double norm = 0.0;
    for (int64_t c = 0; c < N; ++c) norm += v[c] * v[c];
    norm = std::sqrt(norm);
    if (norm < 1e-10) throw std::runtime_error("matrix extension degenerated");
    for (int64_t c = 0; c < N; ++c) v[c] /= norm;
  }
  SamplingMatrix out;
  out.data = to_float(rows);
  out.kind = MatrixKind::gaussian_orthonormal;
  out.M = m;
  out.N = N;
  out.gamma = static_cast<double>(m) / static_cast<double>(N);
  return out;
}

SamplingMatrix ratio_matrix(const MatrixSpec& spec, const SamplingMatrix& A0, double ratio,
                            const std::string& mode, size_t index) {
  int64_t m = std::clamp<int64_t>(std::llround(ratio * static_cast<double>(A0.N)), 1, A0.N);
  if (mode == "fresh") {
    MatrixSpec fresh = spec;
    fresh.M = m;
    fresh.seed = mix_seed(spec.seed, 0xFE5, static_cast<uint64_t>(index));
    return make_matrix(fresh);
  }
  if (m <= A0.M) {
    std::vector<int64_t> idx(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) idx[static_cast<size_t>(i)] = i;
    return row_subset(A0, idx);
  }
  if (A0.kind == MatrixKind::gaussian_orthonormal) return extend_orthonormal(A0, m, spec.seed);
  MatrixSpec ext = spec;
  ext.M = m;
  return make_matrix(ext);  // same seed: bernoulli rows are drawn row-major, prefix matches
}

struct EvalArgs {
  std::string config_path, ckpt, ratios_text, mode_override, method = "model";
  bool no_baseline = false;
};

void cmd_eval(const EvalArgs& args) {
  RunConfig cfg = load_config(args.config_path);
  std::vector<double> ratios = cfg.eval.ratios;
  if (!args.ratios_text.empty()) {
    ratios.clear();
    std::stringstream ss(args.ratios_text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        ratios.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("eval: bad ratio '" + tok + "'");
      }
    }
  }
  if (ratios.empty()) throw ConfigError("eval: empty ratio list");
  for (double r : ratios)
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("eval: ratios must lie in (0, 1]");
  std::string mode = args.mode_override.empty() ? cfg.eval.ratio_mode : args.mode_override;
  if (mode != "prefix" && mode != "fresh") throw ConfigError("eval: unknown ratio mode " + mode);

  LoadedData data = load_signals(cfg);
  if (data.test_x.empty()) throw ConfigError("eval: config yields no test set");
  if (cfg.matrix.N != data.H * data.W)
    throw ConfigError("eval: matrix N does not match the signal dimension");
  SCNetParams<float> params = load_checkpoint<float>(args.ckpt);
  SamplingMatrix A0 = make_matrix(cfg.matrix);

  OutDir out(cfg.out_dir);
  std::ofstream csv(out.path("eval.csv"));
  csv << metric_csv_header();
  std::cout << metric_csv_header();
  for (size_t ri = 0; ri < ratios.size(); ++ri) {
    auto Ar = std::make_shared<SamplingMatrix>(ratio_matrix(cfg.matrix, A0, ratios[ri], mode, ri));
    MeasurementDataset<float> set = measure_set(data.test_x, Ar, data.H, data.W);
    Tensor<float> recon = infer_set(cfg.net, params, set);
    Tensor<float> base({set.count(), Ar->N});
    for (int64_t i = 0; i < set.count(); ++i) {
      Tensor<float> yi({Ar->M});
      std::copy_n(set.y.ptr() + i * Ar->M, Ar->M, yi.ptr());
      Tensor<float> bi = pinv_init(*Ar, yi);
      std::copy_n(bi.ptr(), Ar->N, base.ptr() + i * Ar->N);
    }
    auto emit = [&](const std::string& method, const Tensor<float>& xhat,
                    const std::string& which) {
      MetricReport r;
      r.name = which;
      r.value = mean_metric(set.x, xhat, data.H, data.W, which);
      r.peak = 1.0;
      r.n_items = set.count();
      std::string row = metric_csv_row(cfg.name, method, Ar->gamma, 0.0, r);
      csv << row;
      std::cout << row;
    };
    std::vector<std::string> which =
        data.H == 1 ? std::vector<std::string>{"SNR"} : std::vector<std::string>{"PSNR", "SSIM"};
    for (const std::string& w : which) {
      emit(args.method, recon, w);
      if (!args.no_baseline) emit("pinv", base, w);
    }
  }
  csv.close();
  out.add("eval.csv");
  out.finish();
}

struct ReconArgs {
  std::string ckpt, input, out_dir = "out";
  std::string matrix_kind = "gaussian";
  uint64_t matrix_seed = 1, seed = 0;
  double ratio = 0.5, mask_r = 0.015;
  int64_t ensemble = 0;
};

void cmd_reconstruct(const ReconArgs& args) {
  SCNetParams<float> params = load_checkpoint<float>(args.ckpt);
  Tensor<float> x;
  int64_t H = 1, W = 0;
  if (args.input.size() > 4 && args.input.substr(args.input.size() - 4) == ".pgm") {
    Tensor<float> img = read_pgm(args.input);
    H = img.shape[0];
    W = img.shape[1];
    x = Tensor<float>({1, H * W});
    std::copy_n(img.ptr(), H * W, x.ptr());
  } else {
    x = to_float(read_scsx(args.input).signals);
    H = 1;
    W = x.shape[1];
  }
  if (!(args.ratio > 0.0 && args.ratio <= 1.0))
    throw ConfigError("reconstruct: ratio must lie in (0, 1]");
  MatrixSpec spec;
  spec.kind = args.matrix_kind;
  if (spec.kind != "gaussian" && spec.kind != "bernoulli")
    throw ConfigError("reconstruct: unknown matrix kind " + spec.kind);
  spec.N = H * W;
  spec.M = std::clamp<int64_t>(std::llround(args.ratio * static_cast<double>(spec.N)), 1, spec.N);
  spec.seed = args.matrix_seed;
  auto A = std::make_shared<SamplingMatrix>(make_matrix(spec));

  OutDir out(args.out_dir);
  MeasurementDataset<float> set = measure_set(x, A, H, W);
  int64_t count = set.count(), N = H * W;
  Tensor<float> recon({count, N}), unc;
  if (args.ensemble > 0) unc = Tensor<float>({count, N});
  for (int64_t i = 0; i < count; ++i) {
    Tensor<float> yi({A->M});
    std::copy_n(set.y.ptr() + i * A->M, A->M, yi.ptr());
    EmbedActive act{params.e_img.count(i) > 0, params.e_pos.count(i) > 0};
    if (args.ensemble > 0) {
      Rng rng = make_rng(args.seed, streams::ensemble, static_cast<uint64_t>(i));
      EnsembleResult<float> er = ensemble_stage4(params.cfg, params, yi, *A, H, W, i, act,
                                                 args.ensemble, args.mask_r, rng);
      std::copy_n(er.mean.ptr(), N, recon.ptr() + i * N);
      std::copy_n(er.std.ptr(), N, unc.ptr() + i * N);
    } else {
      Tensor<float> yb({1, A->M});
      std::copy_n(yi.ptr(), A->M, yb.ptr());
      std::shared_ptr<const BatchedOp<float>> op = DenseBOp<float>::from(*A);
      Tensor<float> xi = scnet_infer(params.cfg, params, yb, op, 1, H, W, i, act);
      std::copy_n(xi.ptr(), N, recon.ptr() + i * N);
    }
    Tensor<float> a({H, W}), b({H, W});
    std::copy_n(x.ptr() + i * N, N, a.ptr());
    std::copy_n(recon.ptr() + i * N, N, b.ptr());
    std::cout << "signal " << i << ": snr " << snr_db(a, b) << " dB\n";
  }
  RunConfig stub;
  stub.seed = args.seed;
  emit_recon_outputs(out, stub, recon, unc, H, W);
  out.finish();
}

struct TheoremArgs {
  int64_t M = 8, N = 16, M1 = 4, samples = 100000;
  double sigma = 0.5;
  uint64_t seed = 1;
  std::string out_dir = "out";
};

void cmd_verify_theorem(const TheoremArgs& args) {
  if (args.M1 < 1 || args.M1 >= args.M)
    throw ConfigError("verify-theorem: need 1 <= M1 < M");
  SamplingMatrixD A = gen_gaussian_orthonormal_d(args.M, args.N, args.seed);
  int64_t N = args.N;
  SignalSampler sampler = [N](Rng& rng) {
    TensorD x({N});
    for (int64_t i = 0; i < N; ++i) x.at(i) = rng.normal();
    return x;
  };
  Rng rng = make_rng(args.seed, streams::measurement_noise, 0x7e0);
  TheoremReport rep =
      verify_theorem(A, args.M1, theorem_adjoint_stub(), sampler, args.sigma, args.samples, rng);
  OutDir out(args.out_dir);
  std::ofstream csv(out.path("theorem.csv"));
  csv << theorem_csv_header() << theorem_csv_row(rep);
  csv.close();
  out.add("theorem.csv");
  out.finish();
  std::cout << theorem_csv_header() << theorem_csv_row(rep);
  std::cout << "relative error " << rep.rel_error * 100.0 << "%\n";
}

struct PlotArgs {
  std::string csv, xcol, ycol, series_col, out_dir = "out", name = "plot";
  std::string title, xlabel, ylabel;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

void cmd_plot(const PlotArgs& args) {
  std::ifstream in(args.csv);
  if (!in) throw ConfigError("plot: cannot open " + args.csv);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("plot: empty input in " + args.csv);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);
  auto col = [&](const std::string& name) -> size_t {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError("plot: no column '" + name + "' in " + args.csv);
  };
  size_t xi = col(args.xcol), yi = col(args.ycol);
  size_t si = args.series_col.empty() ? SIZE_MAX : col(args.series_col);

  std::vector<Series> series;
  std::map<std::string, size_t> index;
  int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size())
      throw FormatError("plot: parse error at line " + std::to_string(lineno) + ": field count");
    double xv = 0, yv = 0;
    try {
      size_t p1 = 0, p2 = 0;
      xv = std::stod(f[xi], &p1);
      yv = std::stod(f[yi], &p2);
      if (p1 != f[xi].size() || p2 != f[yi].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("plot: parse error at line " + std::to_string(lineno) +
                        ": non-numeric sample");
    }
    std::string key = si == SIZE_MAX ? args.ycol : f[si];
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, series.size());
      series.push_back(Series{key, {}, {}});
      it = index.find(key);
    }
    series[it->second].x.push_back(xv);
    series[it->second].y.push_back(yv);
  }
  if (series.empty()) throw FormatError("plot: no data rows in " + args.csv);
  PlotSpec spec;
  spec.title = args.title.empty() ? args.ycol + " vs " + args.xcol : args.title;
  spec.xlabel = args.xlabel.empty() ? args.xcol : args.xlabel;
  spec.ylabel = args.ylabel.empty() ? args.ycol : args.ylabel;
  OutDir out(args.out_dir);
  save_plot(out.path(args.name + ".ppm"), series, spec);
  out.add(args.name + ".ppm");
  out.finish();
  std::cout << "wrote " << out.path(args.name + ".ppm") << " (" << series.size()
            << " series)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised compressed sensing reconstruction toolkit"};
  app.require_subcommand(1);

  std::string config_path;

  CLI::App* gen = app.add_subcommand("gen-data", "generate datasets from a config");
  gen->add_option("--config", config_path, "config JSON path")->required();
  gen->callback([&] { cmd_gen_data(load_config(config_path)); });

  CLI::App* train = app.add_subcommand("train", "run the configured training stages");
  train->add_option("--config", config_path, "config JSON path")->required();
  train->callback([&] { cmd_train(load_config(config_path)); });

  EvalArgs eargs;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint across sampling ratios");
  ev->add_option("--config", eargs.config_path, "config JSON path")->required();
  ev->add_option("--ckpt", eargs.ckpt, "checkpoint path")->required();
  ev->add_option("--ratios", eargs.ratios_text, "comma-separated ratios in (0,1]");
  ev->add_option("--ratio-mode", eargs.mode_override, "prefix | fresh");
  ev->add_option("--method", eargs.method, "method label for the CSV");
  ev->add_flag("--no-baseline", eargs.no_baseline, "skip the adjoint-init baseline rows");
  ev->callback([&] { cmd_eval(eargs); });

  ReconArgs rargs;
  CLI::App* rc = app.add_subcommand("reconstruct", "reconstruct signals or an image");
  rc->add_option("--ckpt", rargs.ckpt, "checkpoint path")->required();
  rc->add_option("--input", rargs.input, "input .scsx signals or .pgm image")->required();
  rc->add_option("--ratio", rargs.ratio, "sampling ratio in (0,1]");
  rc->add_option("--matrix-kind", rargs.matrix_kind, "gaussian | bernoulli");
  rc->add_option("--matrix-seed", rargs.matrix_seed, "sampling matrix seed");
  rc->add_option("--ensemble", rargs.ensemble, "ensemble draws D (0 = plain forward)");
  rc->add_option("--mask-r", rargs.mask_r, "row masking probability");
  rc->add_option("--seed", rargs.seed, "ensemble seed");
  rc->add_option("--out", rargs.out_dir, "output directory");
  rc->callback([&] { cmd_reconstruct(rargs); });

  TheoremArgs targs;
  CLI::App* vt = app.add_subcommand("verify-theorem", "Monte-Carlo check of the split identity");
  vt->add_option("--M", targs.M, "measurement count");
  vt->add_option("--N", targs.N, "signal dimension");
  vt->add_option("--M1", targs.M1, "first split size");
  vt->add_option("--sigma", targs.sigma, "noise standard deviation");
  vt->add_option("--samples", targs.samples, "Monte-Carlo sample count");
  vt->add_option("--seed", targs.seed, "seed");
  vt->add_option("--out", targs.out_dir, "output directory");
  vt->callback([&] { cmd_verify_theorem(targs); });

  PlotArgs pargs;
  CLI::App* pl = app.add_subcommand("plot", "render a line chart from a CSV");
  pl->add_option("--csv", pargs.csv, "input CSV")->required();
  pl->add_option("--x", pargs.xcol, "x column name")->required();
  pl->add_option("--y", pargs.ycol, "y column name")->required();
  pl->add_option("--series", pargs.series_col, "group rows into curves by this column");
  pl->add_option("--out", pargs.out_dir, "output directory");
  pl->add_option("--name", pargs.name, "output file basename");
  pl->add_option("--title", pargs.title, "plot title");
  pl->add_option("--xlabel", pargs.xlabel, "x axis label");
  pl->add_option("--ylabel", pargs.ylabel, "y axis label");
  pl->callback([&] { cmd_plot(pargs); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
