#include "scsr/scnet.hpp"

#include <cmath>
#include <stdexcept>

#include "scsr/io_binary.hpp"

namespace scsr {

void SCNetConfig::validate() const {
  if (K < 1) throw std::invalid_argument("config: K must be >= 1");
  if (C < 2) throw std::invalid_argument("config: C must be >= 2");
  if (conv_dim != 1 && conv_dim != 2) throw std::invalid_argument("config: conv_dim must be 1 or 2");
  if (embed_h < 1 || embed_w < 1) throw std::invalid_argument("config: embedding grid must be positive");
}

template <typename T>
Tensor<T>& SCNetParams<T>::ensure_img(int64_t image_id) {
  auto it = e_img.find(image_id);
  if (it == e_img.end()) it = e_img.emplace(image_id, Tensor<T>({cfg.C})).first;
  return it->second;
}

template <typename T>
Tensor<T>& SCNetParams<T>::ensure_pos(int64_t image_id) {
  auto it = e_pos.find(image_id);
  if (it == e_pos.end())
    it = e_pos.emplace(image_id, Tensor<T>({cfg.embed_h * cfg.embed_w, cfg.C})).first;
  return it->second;
}

template <typename T>
template <typename U>
SCNetParams<U> SCNetParams<T>::cast() const {
  SCNetParams<U> out;
  out.cfg = cfg;
  out.fext_w = fext_w.template cast<U>();
  out.fext_b = fext_b.template cast<U>();
  out.blocks.resize(blocks.size());
  for (size_t k = 0; k < blocks.size(); ++k) {
    out.blocks[k].w1 = blocks[k].w1.template cast<U>();
    out.blocks[k].b1 = blocks[k].b1.template cast<U>();
    out.blocks[k].w2 = blocks[k].w2.template cast<U>();
    out.blocks[k].b2 = blocks[k].b2.template cast<U>();
  }
  out.frec_w = frec_w.template cast<U>();
  out.frec_b = frec_b.template cast<U>();
  out.tau = tau.template cast<U>();
  for (const auto& [id, v] : e_img) out.e_img.emplace(id, v.template cast<U>());
  for (const auto& [id, v] : e_pos) out.e_pos.emplace(id, v.template cast<U>());
  return out;
}

namespace {
template <typename T>
Tensor<T> he_uniform(int64_t fan_in, std::vector<int64_t> shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  double b = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : t.data) v = static_cast<T>(rng.uniform(-b, b));
  return t;
}
}  // namespace

template <typename T>
SCNetParams<T> init_params(const SCNetConfig& cfg, Rng& rng) {
  cfg.validate();
  int64_t k = cfg.kernel_taps();
  SCNetParams<T> p;
  p.cfg = cfg;
  p.fext_w = he_uniform<T>(k * 2, {k * 2, cfg.C}, rng);
  p.fext_b = Tensor<T>({cfg.C});
  p.blocks.resize(static_cast<size_t>(cfg.K));
  for (auto& blk : p.blocks) {
    blk.w1 = he_uniform<T>(k * cfg.C, {k * cfg.C, cfg.C}, rng);
    blk.b1 = Tensor<T>({cfg.C});
    blk.w2 = he_uniform<T>(k * cfg.C, {k * cfg.C, cfg.C}, rng);
    blk.b2 = Tensor<T>({cfg.C});
  }
  p.frec_w = he_uniform<T>(k * cfg.C, {k * cfg.C, 1}, rng);
  p.frec_b = Tensor<T>({1});
  if (cfg.rho_mode == RhoMode::sigmoid_tau) {
    p.tau = Tensor<T>({1});
    p.tau.at(0) = static_cast<T>(std::log(9.0));  // sigmoid(tau) starts at 0.9
  }
  return p;
}

template <typename T>
NetBind<T> bind_net(Tape<T>& tape, SCNetParams<T>& params, const TrainMask& trainable,
                    std::optional<int64_t> image_id, EmbedActive active) {
  params.cfg.validate();
  NetBind<T> b;
  auto bind_one = [&](Tensor<T>& t, bool rg) {
    auto id = tape.leaf(t, rg);
    if (rg) b.bound.emplace_back(&t, id);
    return id;
  };
  b.fext_w = bind_one(params.fext_w, trainable.backbone);
  b.fext_b = bind_one(params.fext_b, trainable.backbone);
  b.blocks.resize(params.blocks.size());
  for (size_t k = 0; k < params.blocks.size(); ++k) {
    b.blocks[k].w1 = bind_one(params.blocks[k].w1, trainable.backbone);
    b.blocks[k].b1 = bind_one(params.blocks[k].b1, trainable.backbone);
    b.blocks[k].w2 = bind_one(params.blocks[k].w2, trainable.backbone);
    b.blocks[k].b2 = bind_one(params.blocks[k].b2, trainable.backbone);
  }
  b.frec_w = bind_one(params.frec_w, trainable.backbone);
  b.frec_b = bind_one(params.frec_b, trainable.backbone);
  if (params.cfg.rho_mode == RhoMode::sigmoid_tau)
    b.tau = bind_one(params.tau, trainable.tau);
  if (active.img) {
    if (!image_id || !params.e_img.count(*image_id))
      throw std::out_of_range("bind_net: no image embedding registered for this image id");
    b.e_img = bind_one(params.e_img.at(*image_id), trainable.e_img);
  }
  if (active.pos) {
    if (!image_id || !params.e_pos.count(*image_id))
      throw std::out_of_range("bind_net: no positional embedding registered for this image id");
    b.e_pos = bind_one(params.e_pos.at(*image_id), trainable.e_pos);
  }
  return b;
}

namespace {
// Keys cubic kernel, a = -0.75 (the common bicubic resize kernel).
inline double cubic_kernel(double x) {
  constexpr double a = -0.75;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return a * (((x - 5.0) * x + 8.0) * x - 4.0);
  return 0.0;
}

// [out_n, in_n] row-stochastic interpolation weights, half-pixel centers.
template <typename T>
RowMat<T> cubic_axis(int64_t out_n, int64_t in_n) {
  RowMat<T> w = RowMat<T>::Zero(out_n, in_n);
  double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
  for (int64_t i = 0; i < out_n; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    int64_t j0 = static_cast<int64_t>(std::floor(src));
    for (int64_t t = -1; t <= 2; ++t) {
      int64_t j = j0 + t;
      double wt = cubic_kernel(src - static_cast<double>(j));
      if (wt == 0.0) continue;
      int64_t jc = j < 0 ? 0 : (j >= in_n ? in_n - 1 : j);
      w(i, jc) += static_cast<T>(wt);
    }
  }
  return w;
}
}  // namespace

template <typename T>
std::shared_ptr<const Tensor<T>> upsample_matrix(int64_t H, int64_t W, int64_t eh, int64_t ew) {
  RowMat<T> wy = cubic_axis<T>(H, eh);
  RowMat<T> wx = cubic_axis<T>(W, ew);
  auto out = std::make_shared<Tensor<T>>(std::vector<int64_t>{H * W, eh * ew});
  auto m = out->mat(H * W, eh * ew);
  for (int64_t i = 0; i < H; ++i)
    for (int64_t j = 0; j < W; ++j)
      for (int64_t p = 0; p < eh; ++p)
        for (int64_t q = 0; q < ew; ++q) m(i * W + j, p * ew + q) = wy(i, p) * wx(j, q);
  return out;
}

template <typename T>
ForwardResult<T> scnet_forward(Tape<T>& tape, const SCNetConfig& cfg, const NetBind<T>& bind,
                               typename Tape<T>::NodeId y,
                               std::shared_ptr<const BatchedOp<T>> op, int64_t B, int64_t H,
                               int64_t W, EmbedActive active) {
  using NodeId = typename Tape<T>::NodeId;
  cfg.validate();
  int64_t P = H * W;
  if (op->n() != P) throw std::invalid_argument("forward: operator dimension != H*W");
  if (active.img && bind.e_img == Tape<T>::kNone)
    throw std::invalid_argument("forward: image embedding requested but not bound");
  if (active.pos && bind.e_pos == Tape<T>::kNone)
    throw std::invalid_argument("forward: positional embedding requested but not bound");

  auto conv = [&](NodeId x, NodeId w, NodeId bb, int64_t cin, int64_t cout) {
    return cfg.conv_dim == 2 ? tape.conv2d(x, w, bb, B, H, W, cin, cout)
                             : tape.conv1d(x, w, bb, B, P, cin, cout);
  };

  NodeId x0 = tape.adjoint_init(y, op, B, P);
  Tensor<T> gmap({B, P});
  for (int64_t b = 0; b < B; ++b) {
    T g = static_cast<T>(op->gamma_of(b));
    T* row = gmap.ptr() + b * P;
    for (int64_t p = 0; p < P; ++p) row[p] = g;
  }
  NodeId gm = tape.leaf(std::move(gmap), false);
  NodeId xin = tape.concat_channels(x0, gm, B, P, 1, 1);
  NodeId X = conv(xin, bind.fext_w, bind.fext_b, 2, cfg.C);

  if (active.img) X = tape.add_channel_vec(X, bind.e_img, B, P, cfg.C);
  if (active.pos)
    X = tape.upsample_add(X, bind.e_pos, upsample_matrix<T>(H, W, cfg.embed_h, cfg.embed_w), B, P,
                          cfg.C, cfg.embed_h * cfg.embed_w);

  for (int64_t k = 0; k < cfg.K; ++k) {
    NodeId Z = tape.gd_step(X, y, op, B, P, cfg.C, bind.tau);
    const auto& blk = bind.blocks[static_cast<size_t>(k)];
    NodeId r = conv(Z, blk.w1, blk.b1, cfg.C, cfg.C);
    r = tape.relu(r);
    r = conv(r, blk.w2, blk.b2, cfg.C, cfg.C);
    X = tape.add(Z, r);
  }

  NodeId u = conv(X, bind.frec_w, bind.frec_b, cfg.C, 1);
  NodeId xhat = cfg.use_final_gd ? tape.gd_step(u, y, op, B, P, 1, bind.tau) : u;
  return {xhat, u};
}

template <typename T>
Tensor<T> scnet_infer(const SCNetConfig& cfg, SCNetParams<T>& params, const Tensor<T>& y,
                      std::shared_ptr<const BatchedOp<T>> op, int64_t B, int64_t H, int64_t W,
                      std::optional<int64_t> image_id, EmbedActive active) {
  Tape<T> tape;
  TrainMask frozen{false, false, false, false};
  NetBind<T> bind = bind_net(tape, params, frozen, image_id, active);
  auto yid = tape.leaf(y, false);
  auto res = scnet_forward(tape, cfg, bind, yid, op, B, H, W, active);
  Tensor<T> out = tape.val(res.xhat);
  out.shape = {B, H * W};
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void write_blob(BinWriter& w, const std::string& name, const Tensor<T>& t) {
  w.str(name);
  w.u64(static_cast<uint64_t>(t.numel()));
  w.values(t.data);
}

template <typename T>
Tensor<T> read_blob(BinReader& r, const std::string& name, int64_t expect_numel,
                    std::vector<int64_t> shape) {
  std::string got = r.str();
  if (got != name) throw FormatError("checkpoint: expected blob '" + name + "', found '" + got + "'");
  uint64_t n = r.u64();
  if (static_cast<int64_t>(n) != expect_numel)
    throw FormatError("checkpoint: blob '" + name + "' has wrong size");
  Tensor<T> t(std::move(shape));
  r.values(t.data, static_cast<size_t>(n));
  return t;
}
}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const SCNetParams<T>& params) {
  const SCNetConfig& c = params.cfg;
  BinWriter w(path);
  w.magic("SCSC");
  w.u32(kCkptVersion);
  w.u8(static_cast<uint8_t>(sizeof(T)));
  w.u32(static_cast<uint32_t>(c.K));
  w.u32(static_cast<uint32_t>(c.C));
  w.u8(static_cast<uint8_t>(c.rho_mode));
  w.u8(c.use_final_gd ? 1 : 0);
  w.u32(static_cast<uint32_t>(c.embed_h));
  w.u32(static_cast<uint32_t>(c.embed_w));
  w.u8(static_cast<uint8_t>(c.conv_dim));
  uint64_t nblobs = 4 + 4 * static_cast<uint64_t>(c.K) +
                    (c.rho_mode == RhoMode::sigmoid_tau ? 1 : 0);
  w.u64(nblobs);
  write_blob(w, "fext.w", params.fext_w);
  write_blob(w, "fext.b", params.fext_b);
  for (int64_t k = 0; k < c.K; ++k) {
    const auto& blk = params.blocks[static_cast<size_t>(k)];
    std::string p = "prox." + std::to_string(k) + ".";
    write_blob(w, p + "w1", blk.w1);
    write_blob(w, p + "b1", blk.b1);
    write_blob(w, p + "w2", blk.w2);
    write_blob(w, p + "b2", blk.b2);
  }
  write_blob(w, "frec.w", params.frec_w);
  write_blob(w, "frec.b", params.frec_b);
  if (c.rho_mode == RhoMode::sigmoid_tau) write_blob(w, "tau", params.tau);
  w.u64(static_cast<uint64_t>(params.e_img.size()));
  for (const auto& [id, t] : params.e_img) {
    w.i64(id);
    w.values(t.data);
  }
  w.u64(static_cast<uint64_t>(params.e_pos.size()));
  for (const auto& [id, t] : params.e_pos) {
    w.i64(id);
    w.values(t.data);
  }
  w.close();
}

template <typename T>
SCNetParams<T> load_checkpoint(const std::string& path) {
  BinReader r(path);
  r.expect_magic("SCSC");
  uint32_t ver = r.u32();
  if (ver != kCkptVersion) throw FormatError("checkpoint: unsupported version");
  uint8_t dtype = r.u8();
  if (dtype != sizeof(T)) throw FormatError("checkpoint: dtype width mismatch");
  SCNetConfig c;
  c.K = r.u32();
  c.C = r.u32();
  c.rho_mode = static_cast<RhoMode>(r.u8());
  c.use_final_gd = r.u8() != 0;
  c.embed_h = r.u32();
  c.embed_w = r.u32();
  c.conv_dim = r.u8();
  c.validate();
  uint64_t nblobs = r.u64();
  uint64_t expect = 4 + 4 * static_cast<uint64_t>(c.K) +
                    (c.rho_mode == RhoMode::sigmoid_tau ? 1 : 0);
  if (nblobs != expect) throw FormatError("checkpoint: unexpected blob count");
  int64_t k = c.kernel_taps();
  SCNetParams<T> p;
  p.cfg = c;
  p.fext_w = read_blob<T>(r, "fext.w", k * 2 * c.C, {k * 2, c.C});
  p.fext_b = read_blob<T>(r, "fext.b", c.C, {c.C});
  p.blocks.resize(static_cast<size_t>(c.K));
  for (int64_t i = 0; i < c.K; ++i) {
    auto& blk = p.blocks[static_cast<size_t>(i)];
    std::string pre = "prox." + std::to_string(i) + ".";
    blk.w1 = read_blob<T>(r, pre + "w1", k * c.C * c.C, {k * c.C, c.C});
    blk.b1 = read_blob<T>(r, pre + "b1", c.C, {c.C});
    blk.w2 = read_blob<T>(r, pre + "w2", k * c.C * c.C, {k * c.C, c.C});
    blk.b2 = read_blob<T>(r, pre + "b2", c.C, {c.C});
  }
  p.frec_w = read_blob<T>(r, "frec.w", k * c.C, {k * c.C, 1});
  p.frec_b = read_blob<T>(r, "frec.b", 1, {1});
  if (c.rho_mode == RhoMode::sigmoid_tau) p.tau = read_blob<T>(r, "tau", 1, {1});
  uint64_t nimg = r.u64();
  for (uint64_t i = 0; i < nimg; ++i) {
    int64_t id = r.i64();
    Tensor<T> t({c.C});
    r.values(t.data, static_cast<size_t>(c.C));
    p.e_img.emplace(id, std::move(t));
  }
  uint64_t npos = r.u64();
  for (uint64_t i = 0; i < npos; ++i) {
    int64_t id = r.i64();
    Tensor<T> t({c.embed_h * c.embed_w, c.C});
    r.values(t.data, static_cast<size_t>(c.embed_h * c.embed_w * c.C));
    p.e_pos.emplace(id, std::move(t));
  }
  return p;
}

template struct SCNetParams<float>;
template struct SCNetParams<double>;
template SCNetParams<double> SCNetParams<float>::cast<double>() const;
template SCNetParams<float> SCNetParams<double>::cast<float>() const;
template SCNetParams<float> SCNetParams<float>::cast<float>() const;
template SCNetParams<double> SCNetParams<double>::cast<double>() const;
template SCNetParams<float> init_params<float>(const SCNetConfig&, Rng&);
template SCNetParams<double> init_params<double>(const SCNetConfig&, Rng&);
template NetBind<float> bind_net(Tape<float>&, SCNetParams<float>&, const TrainMask&,
                                 std::optional<int64_t>, EmbedActive);
template NetBind<double> bind_net(Tape<double>&, SCNetParams<double>&, const TrainMask&,
                                  std::optional<int64_t>, EmbedActive);
template ForwardResult<float> scnet_forward(Tape<float>&, const SCNetConfig&, const NetBind<float>&,
                                            Tape<float>::NodeId,
                                            std::shared_ptr<const BatchedOp<float>>, int64_t,
                                            int64_t, int64_t, EmbedActive);
template ForwardResult<double> scnet_forward(Tape<double>&, const SCNetConfig&,
                                             const NetBind<double>&, Tape<double>::NodeId,
                                             std::shared_ptr<const BatchedOp<double>>, int64_t,
                                             int64_t, int64_t, EmbedActive);
template Tensor<float> scnet_infer(const SCNetConfig&, SCNetParams<float>&, const Tensor<float>&,
                                   std::shared_ptr<const BatchedOp<float>>, int64_t, int64_t,
                                   int64_t, std::optional<int64_t>, EmbedActive);
template Tensor<double> scnet_infer(const SCNetConfig&, SCNetParams<double>&, const Tensor<double>&,
                                    std::shared_ptr<const BatchedOp<double>>, int64_t, int64_t,
                                    int64_t, std::optional<int64_t>, EmbedActive);
template std::shared_ptr<const Tensor<float>> upsample_matrix(int64_t, int64_t, int64_t, int64_t);
template std::shared_ptr<const Tensor<double>> upsample_matrix(int64_t, int64_t, int64_t, int64_t);
template void save_checkpoint(const std::string&, const SCNetParams<float>&);
template void save_checkpoint(const std::string&, const SCNetParams<double>&);
template SCNetParams<float> load_checkpoint<float>(const std::string&);
template SCNetParams<double> load_checkpoint<double>(const std::string&);

}  // namespace scsr
