#include "geovec/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "geovec/parallel.hpp"
#include "geovec/rng.hpp"
#include "geovec/simd/kernels.hpp"

namespace geovec {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

const char* projection_name(Projection p) {
  switch (p) {
    case Projection::q: return "attn.q";
    case Projection::k: return "attn.k";
    case Projection::v: return "attn.v";
    case Projection::o: return "attn.o";
    case Projection::mlp_up: return "mlp.up";
    case Projection::mlp_down: return "mlp.down";
  }
  return "?";
}

void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (auto& x : m.data) x = rng.normal(0.0, stddev);
}

// Parameter-free layer norm of one row. Returns 1 / sqrt(var + eps).
double layer_norm(const double* x, double* y, std::size_t n) {
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(n);
  const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * rstd;
  return rstd;
}

// dx += rstd * (dy - mean(dy) - y * mean(dy * y))
void layer_norm_backward(const double* dy, const double* y, double rstd, double* dx,
                         std::size_t n) {
  double mean_dy = 0, mean_dyy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_dy += dy[i];
    mean_dyy += dy[i] * y[i];
  }
  mean_dy /= static_cast<double>(n);
  mean_dyy /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) dx[i] += rstd * (dy[i] - mean_dy - y[i] * mean_dyy);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// W + scale * B * A, with the rank sum accumulated in ascending order.
Matrix merged(const Matrix& w, const LoraFactor& f, double scale) {
  Matrix out = w;
  const std::size_t rank = f.a.rows;
  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t j = 0; j < w.cols; ++j) {
      double delta = 0;
      for (std::size_t r = 0; r < rank; ++r) delta += f.b(i, r) * f.a(r, j);
      out(i, j) = w(i, j) + scale * delta;
    }
  }
  return out;
}

// y = W x
void matvec(const Matrix& w, const double* x, double* y) {
  simd::active_kernels().matvec_f64(w.data.data(), w.rows, w.cols, x, y);
}

// dx += W^T dy
void matvec_t_acc(const Matrix& w, const double* dy, double* dx) {
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < w.rows; ++i) {
    if (dy[i] != 0.0) k.axpy_f64(dy[i], w.data.data() + i * w.cols, dx, w.cols);
  }
}

// dW += dy x^T
void outer_acc(Matrix& dw, const double* dy, const double* x) {
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < dw.rows; ++i) {
    if (dy[i] != 0.0) k.axpy_f64(dy[i], x, dw.data.data() + i * dw.cols, dw.cols);
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || vocab_size == 0 || d_patch == 0 ||
      max_len == 0 || lora_rank == 0) {
    throw ConfigError("encoder sizes must all be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (!(lora_alpha > 0)) throw ConfigError("lora_alpha must be positive");
}

std::string adapted_name(std::size_t layer, Projection p) {
  return "layers." + std::to_string(layer) + "." + projection_name(p);
}

Matrix& LayerWeights::at(Projection p) {
  return const_cast<Matrix&>(static_cast<const LayerWeights&>(*this).at(p));
}

const Matrix& LayerWeights::at(Projection p) const {
  switch (p) {
    case Projection::q: return wq;
    case Projection::k: return wk;
    case Projection::v: return wv;
    case Projection::o: return wo;
    case Projection::mlp_up: return w1;
    case Projection::mlp_down: return w2;
  }
  throw Error("bad projection");
}

Matrix& BaseWeights::adapted(std::size_t slot) {
  return layers.at(slot / kProjectionsPerLayer).at(static_cast<Projection>(slot % kProjectionsPerLayer));
}

const Matrix& BaseWeights::adapted(std::size_t slot) const {
  return layers.at(slot / kProjectionsPerLayer).at(static_cast<Projection>(slot % kProjectionsPerLayer));
}

std::size_t LoraAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& f : factors) n += f.a.data.size() + f.b.data.size();
  return n;
}

LoraAdapter zeros_like(const LoraAdapter& a) {
  LoraAdapter z = a;
  for (auto& f : z.factors) {
    std::fill(f.a.data.begin(), f.a.data.end(), 0.0);
    std::fill(f.b.data.begin(), f.b.data.end(), 0.0);
  }
  return z;
}

namespace {

BaseWeights allocate_base(const EncoderConfig& cfg) {
  BaseWeights w;
  w.config = cfg;
  const std::size_t d = cfg.d_model;
  w.token_embedding = Matrix(cfg.vocab_size, d);
  w.patch_projection = Matrix(d, cfg.d_patch);
  w.positional = Matrix(cfg.max_len, d);
  w.layers.resize(cfg.n_layers);
  for (auto& l : w.layers) {
    l.wq = Matrix(d, d);
    l.wk = Matrix(d, d);
    l.wv = Matrix(d, d);
    l.wo = Matrix(d, d);
    l.w1 = Matrix(cfg.d_ff(), d);
    l.w2 = Matrix(d, cfg.d_ff());
  }
  return w;
}

}  // namespace

LoraAdapter zero_adapter(const EncoderConfig& cfg) {
  cfg.validate();
  const BaseWeights shapes = [&] {
    EncoderConfig small = cfg;
    small.vocab_size = 1;
    small.max_len = 1;
    return allocate_base(small);
  }();
  LoraAdapter a;
  a.rank = cfg.lora_rank;
  a.alpha = cfg.lora_alpha;
  for (std::size_t slot = 0; slot < shapes.adapted_count(); ++slot) {
    const Matrix& w = shapes.adapted(slot);
    a.factors.push_back({adapted_name(slot / kProjectionsPerLayer,
                                      static_cast<Projection>(slot % kProjectionsPerLayer)),
                         Matrix(cfg.lora_rank, w.cols), Matrix(w.rows, cfg.lora_rank)});
  }
  return a;
}

EncoderState init_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderState st{allocate_base(cfg), zero_adapter(cfg)};

  Rng base_rng(derive_seed(cfg.seed, "encoder.base"));
  fill_normal(st.base.token_embedding, base_rng, kInitStd);
  fill_normal(st.base.patch_projection, base_rng, kInitStd);
  fill_normal(st.base.positional, base_rng, kInitStd);
  for (auto& l : st.base.layers) {
    for (std::size_t p = 0; p < kProjectionsPerLayer; ++p) {
      fill_normal(l.at(static_cast<Projection>(p)), base_rng, kInitStd);
    }
  }

  Rng lora_rng(derive_seed(cfg.seed, "encoder.lora"));
  for (auto& f : st.adapter.factors) {
    fill_normal(f.a, lora_rng, 1.0 / std::sqrt(static_cast<double>(f.a.cols)));
  }
  return st;
}

void check_adapter_shapes(const BaseWeights& base, const LoraAdapter& adapter) {
  if (adapter.factors.size() != base.adapted_count()) {
    throw ValidationError("adapter has " + std::to_string(adapter.factors.size()) +
                          " matrices, base expects " + std::to_string(base.adapted_count()));
  }
  for (std::size_t slot = 0; slot < adapter.factors.size(); ++slot) {
    const auto& f = adapter.factors[slot];
    const Matrix& w = base.adapted(slot);
    if (f.a.rows != adapter.rank || f.b.cols != adapter.rank || f.a.cols != w.cols ||
        f.b.rows != w.rows) {
      throw ValidationError("adapter matrix '" + f.name + "' does not match base shape " +
                            std::to_string(w.rows) + "x" + std::to_string(w.cols));
    }
  }
}

BaseWeights merge_adapter(const BaseWeights& base, const LoraAdapter& adapter) {
  check_adapter_shapes(base, adapter);
  BaseWeights out = base;
  for (std::size_t slot = 0; slot < base.adapted_count(); ++slot) {
    out.adapted(slot) = merged(base.adapted(slot), adapter.factors[slot], adapter.scale());
  }
  return out;
}

WeightGrads WeightGrads::zeros(const BaseWeights& base) {
  WeightGrads g;
  for (std::size_t slot = 0; slot < base.adapted_count(); ++slot) {
    const Matrix& w = base.adapted(slot);
    g.slots.emplace_back(w.rows, w.cols);
  }
  return g;
}

void WeightGrads::add(const WeightGrads& other) {
  if (slots.size() != other.slots.size()) throw ValidationError("gradient layout mismatch");
  for (std::size_t s = 0; s < slots.size(); ++s) {
    auto& dst = slots[s].data;
    const auto& src = other.slots[s].data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

Encoder::Encoder(const BaseWeights& base) : base_(&base), layers_(base.layers) {
  base.config.validate();
}

Encoder::Encoder(const BaseWeights& base, const LoraAdapter& adapter)
    : base_(&base), adapter_(&adapter) {
  base.config.validate();
  check_adapter_shapes(base, adapter);
  layers_ = base.layers;
  for (std::size_t slot = 0; slot < base.adapted_count(); ++slot) {
    const auto layer = slot / kProjectionsPerLayer;
    const auto proj = static_cast<Projection>(slot % kProjectionsPerLayer);
    layers_[layer].at(proj) = merged(base.adapted(slot), adapter.factors[slot], adapter.scale());
  }
}

EmbeddingVector Encoder::encode(const TokenStream& s) const {
  ForwardTrace trace;
  return encode(s, trace);
}

EmbeddingVector Encoder::encode(const TokenStream& s, ForwardTrace& tr) const {
  const EncoderConfig& cfg = base_->config;
  const std::size_t T = s.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head();
  const std::size_t heads = cfg.n_heads;
  const std::size_t dff = cfg.d_ff();
  if (T == 0) throw ValidationError("cannot encode an empty token stream");
  if (T > cfg.max_len) {
    throw ValidationError("stream length " + std::to_string(T) + " exceeds max_len " +
                          std::to_string(cfg.max_len));
  }
  const auto& k = simd::active_kernels();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  // Embedding lookup.
  Matrix x(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    const Token& tok = s.tokens[t];
    double* row = x.row(t).data();
    if (tok.kind == Token::Kind::vocab) {
      if (tok.id >= cfg.vocab_size) {
        throw ValidationError("vocab id " + std::to_string(tok.id) + " >= vocab size");
      }
      std::copy_n(base_->token_embedding.row(tok.id).data(), d, row);
    } else {
      const auto patch = s.patch(tok);
      if (patch.size() != cfg.d_patch) {
        throw ValidationError("patch dimension " + std::to_string(patch.size()) +
                              " != d_patch " + std::to_string(cfg.d_patch));
      }
      matvec(base_->patch_projection, patch.data(), row);
    }
    const double* pos = base_->positional.row(t).data();
    for (std::size_t i = 0; i < d; ++i) row[i] += pos[i];
  }

  tr.length = T;
  tr.layers.assign(layers_.size(), LayerTrace{});
  std::vector<double> scores(T);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerWeights& w = layers_[l];
    LayerTrace& lt = tr.layers[l];
    const std::size_t r0 = (l + 1 == layers_.size()) ? T - 1 : 0;
    lt.first_row = r0;
    lt.x_in = std::move(x);
    lt.ln1 = Matrix(T, d);
    lt.rstd1.assign(T, 0.0);
    lt.q = Matrix(T, d);
    lt.k = Matrix(T, d);
    lt.v = Matrix(T, d);
    for (std::size_t t = 0; t < T; ++t) {
      lt.rstd1[t] = layer_norm(lt.x_in.row(t).data(), lt.ln1.row(t).data(), d);
      matvec(w.wk, lt.ln1.row(t).data(), lt.k.row(t).data());
      matvec(w.wv, lt.ln1.row(t).data(), lt.v.row(t).data());
      if (t >= r0) matvec(w.wq, lt.ln1.row(t).data(), lt.q.row(t).data());
    }

    lt.probs.assign(heads * T * T, 0.0);
    lt.attn = Matrix(T, d);
    for (std::size_t t = r0; t < T; ++t) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* qh = lt.q.row(t).data() + h * dh;
        double mx = -INFINITY;
        for (std::size_t u = 0; u <= t; ++u) {
          scores[u] = k.dot_f64(qh, lt.k.row(u).data() + h * dh, dh) * inv_sqrt_dh;
          mx = std::max(mx, scores[u]);
        }
        double denom = 0;
        for (std::size_t u = 0; u <= t; ++u) {
          scores[u] = std::exp(scores[u] - mx);
          denom += scores[u];
        }
        double* p = lt.probs.data() + (h * T + t) * T;
        double* out = lt.attn.row(t).data() + h * dh;
        for (std::size_t u = 0; u <= t; ++u) {
          p[u] = scores[u] / denom;
          k.axpy_f64(p[u], lt.v.row(u).data() + h * dh, out, dh);
        }
      }
    }

    lt.x_mid = Matrix(T, d);
    lt.ln2 = Matrix(T, d);
    lt.rstd2.assign(T, 0.0);
    lt.pre_act = Matrix(T, dff);
    lt.act = Matrix(T, dff);
    Matrix x_out(T, d);
    std::vector<double> tmp(d);
    for (std::size_t t = r0; t < T; ++t) {
      matvec(w.wo, lt.attn.row(t).data(), tmp.data());
      double* mid = lt.x_mid.row(t).data();
      const double* xin = lt.x_in.row(t).data();
      for (std::size_t i = 0; i < d; ++i) mid[i] = xin[i] + tmp[i];
      lt.rstd2[t] = layer_norm(mid, lt.ln2.row(t).data(), d);
      double* pre = lt.pre_act.row(t).data();
      double* act = lt.act.row(t).data();
      matvec(w.w1, lt.ln2.row(t).data(), pre);
      for (std::size_t j = 0; j < dff; ++j) act[j] = gelu(pre[j]);
      matvec(w.w2, act, tmp.data());
      double* xo = x_out.row(t).data();
      for (std::size_t i = 0; i < d; ++i) xo[i] = mid[i] + tmp[i];
    }
    x = std::move(x_out);
  }

  tr.final_ln.assign(d, 0.0);
  tr.final_rstd = layer_norm(x.row(T - 1).data(), tr.final_ln.data(), d);
  double sq = 0;
  for (double v : tr.final_ln) sq += v * v;
  tr.final_norm = std::sqrt(sq);
  if (!(tr.final_norm > 0) || !std::isfinite(tr.final_norm)) {
    throw Error("degenerate final hidden state");
  }
  EmbeddingVector e;
  e.values.resize(d);
  for (std::size_t i = 0; i < d; ++i) e.values[i] = tr.final_ln[i] / tr.final_norm;
  e.unit_norm = true;
  tr.embedding = e.values;
  return e;
}

void Encoder::backward(const ForwardTrace& tr, const std::vector<double>& grad_embedding,
                       WeightGrads& grads) const {
  const EncoderConfig& cfg = base_->config;
  const std::size_t T = tr.length;
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head();
  const std::size_t heads = cfg.n_heads;
  const std::size_t dff = cfg.d_ff();
  if (grad_embedding.size() != d) throw ValidationError("embedding gradient has wrong size");
  if (grads.slots.size() != base_->adapted_count()) {
    throw ValidationError("weight gradient buffer has wrong layout");
  }
  const auto& k = simd::active_kernels();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  // Through e = f / ||f||, then the final layer norm.
  std::vector<double> df(d);
  const double e_dot = k.dot_f64(tr.embedding.data(), grad_embedding.data(), d);
  for (std::size_t i = 0; i < d; ++i) {
    df[i] = (grad_embedding[i] - tr.embedding[i] * e_dot) / tr.final_norm;
  }
  Matrix dx(T, d);
  layer_norm_backward(df.data(), tr.final_ln.data(), tr.final_rstd, dx.row(T - 1).data(), d);

  std::vector<double> dact(dff), dpre(dff), dln(d), dattn_row(d), dp(T), ds(T);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const LayerWeights& w = layers_[l];
    const LayerTrace& lt = tr.layers[l];
    const std::size_t r0 = lt.first_row;
    Matrix& g_q = grads.slots[l * kProjectionsPerLayer + 0];
    Matrix& g_k = grads.slots[l * kProjectionsPerLayer + 1];
    Matrix& g_v = grads.slots[l * kProjectionsPerLayer + 2];
    Matrix& g_o = grads.slots[l * kProjectionsPerLayer + 3];
    Matrix& g_1 = grads.slots[l * kProjectionsPerLayer + 4];
    Matrix& g_2 = grads.slots[l * kProjectionsPerLayer + 5];

    // MLP block: x_out = x_mid + W2 gelu(W1 ln2(x_mid)).
    Matrix dmid = dx;
    for (std::size_t t = r0; t < T; ++t) {
      const double* dout = dx.row(t).data();
      std::fill(dact.begin(), dact.end(), 0.0);
      matvec_t_acc(w.w2, dout, dact.data());
      outer_acc(g_2, dout, lt.act.row(t).data());
      const double* pre = lt.pre_act.row(t).data();
      for (std::size_t j = 0; j < dff; ++j) dpre[j] = dact[j] * gelu_grad(pre[j]);
      outer_acc(g_1, dpre.data(), lt.ln2.row(t).data());
      std::fill(dln.begin(), dln.end(), 0.0);
      matvec_t_acc(w.w1, dpre.data(), dln.data());
      layer_norm_backward(dln.data(), lt.ln2.row(t).data(), lt.rstd2[t], dmid.row(t).data(), d);
    }

    // Attention block: x_mid = x_in + Wo attn.
    Matrix dattn(T, d);
    for (std::size_t t = r0; t < T; ++t) {
      matvec_t_acc(w.wo, dmid.row(t).data(), dattn.row(t).data());
      outer_acc(g_o, dmid.row(t).data(), lt.attn.row(t).data());
    }
    Matrix dq(T, d), dk(T, d), dv(T, d);
    for (std::size_t t = r0; t < T; ++t) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* p = lt.probs.data() + (h * T + t) * T;
        const double* dout = dattn.row(t).data() + h * dh;
        double weighted = 0;
        for (std::size_t u = 0; u <= t; ++u) {
          dp[u] = k.dot_f64(dout, lt.v.row(u).data() + h * dh, dh);
          k.axpy_f64(p[u], dout, dv.row(u).data() + h * dh, dh);
          weighted += p[u] * dp[u];
        }
        const double* qh = lt.q.row(t).data() + h * dh;
        double* dqh = dq.row(t).data() + h * dh;
        for (std::size_t u = 0; u <= t; ++u) {
          ds[u] = p[u] * (dp[u] - weighted) * inv_sqrt_dh;
          k.axpy_f64(ds[u], lt.k.row(u).data() + h * dh, dqh, dh);
          k.axpy_f64(ds[u], qh, dk.row(u).data() + h * dh, dh);
        }
      }
    }

    Matrix dx_in = dmid;
    for (std::size_t t = 0; t < T; ++t) {
      const double* a = lt.ln1.row(t).data();
      std::fill(dln.begin(), dln.end(), 0.0);
      if (t >= r0) {
        outer_acc(g_q, dq.row(t).data(), a);
        matvec_t_acc(w.wq, dq.row(t).data(), dln.data());
      }
      outer_acc(g_k, dk.row(t).data(), a);
      outer_acc(g_v, dv.row(t).data(), a);
      matvec_t_acc(w.wk, dk.row(t).data(), dln.data());
      matvec_t_acc(w.wv, dv.row(t).data(), dln.data());
      layer_norm_backward(dln.data(), a, lt.rstd1[t], dx_in.row(t).data(), d);
    }
    dx = std::move(dx_in);
  }
}

LoraGrads Encoder::adapter_grads(const WeightGrads& grads) const {
  if (adapter_ == nullptr) throw Error("encoder has no adapter to differentiate");
  const auto& kern = simd::active_kernels();
  LoraGrads out = zeros_like(*adapter_);
  const double scale = adapter_->scale();
  for (std::size_t slot = 0; slot < out.factors.size(); ++slot) {
    const LoraFactor& f = adapter_->factors[slot];
    LoraFactor& g = out.factors[slot];
    const Matrix& dw = grads.slots[slot];
    const std::size_t rank = f.a.rows;
    // dB = scale * dW A^T
    for (std::size_t i = 0; i < dw.rows; ++i) {
      for (std::size_t r = 0; r < rank; ++r) {
        g.b(i, r) = scale * kern.dot_f64(dw.row(i).data(), f.a.row(r).data(), dw.cols);
      }
    }
    // dA = scale * B^T dW
    for (std::size_t i = 0; i < dw.rows; ++i) {
      for (std::size_t r = 0; r < rank; ++r) {
        const double coef = scale * f.b(i, r);
        if (coef != 0.0) kern.axpy_f64(coef, dw.row(i).data(), g.a.row(r).data(), dw.cols);
      }
    }
  }
  return out;
}

EmbeddingVector encode(const BaseWeights& base, const LoraAdapter& adapter, const TokenStream& s) {
  return Encoder(base, adapter).encode(s);
}

std::vector<EmbeddingVector> encode_batch(const Encoder& enc,
                                          const std::vector<TokenStream>& streams,
                                          std::size_t threads) {
  std::vector<EmbeddingVector> out(streams.size());
  parallel_for(streams.size(), threads, [&](std::size_t i) {
    try {
      out[i] = enc.encode(streams[i]);
    } catch (const ValidationError& e) {
      throw ValidationError("stream " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

std::vector<EmbeddingVector> encode_batch(const BaseWeights& base, const LoraAdapter& adapter,
                                          const std::vector<TokenStream>& streams,
                                          std::size_t threads) {
  return encode_batch(Encoder(base, adapter), streams, threads);
}

}  // namespace geovec
