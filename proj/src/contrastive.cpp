#include "geovec/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "geovec/parallel.hpp"
#include "geovec/simd/kernels.hpp"

namespace geovec {

void LossConfig::validate() const {
  if (!(temperature > 0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive");
  }
}

void TrainConfig::validate() const {
  if (total_steps == 0) throw ConfigError("total_steps must be >= 1");
  if (warmup_steps >= total_steps) throw ConfigError("warmup_steps must be < total_steps");
  if (!(peak_lr >= 0)) throw ConfigError("peak_lr must be >= 0");
  if (global_batch == 0) throw ConfigError("global_batch must be >= 1");
  if (sub_batch == 0) throw ConfigError("sub_batch must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (!(eps > 0)) throw ConfigError("adam eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
}

TrainConfig TrainConfig::parse(std::string_view text, TrainConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(ParseError::Kind::malformed,
                       "train config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "total_steps" || key == "steps") cfg.total_steps = std::stoull(value);
      else if (key == "warmup_steps") cfg.warmup_steps = std::stoull(value);
      else if (key == "peak_lr" || key == "lr") cfg.peak_lr = std::stod(value);
      else if (key == "global_batch" || key == "batch") cfg.global_batch = std::stoull(value);
      else if (key == "sub_batch") cfg.sub_batch = std::stoull(value);
      else if (key == "beta1") cfg.beta1 = std::stod(value);
      else if (key == "beta2") cfg.beta2 = std::stod(value);
      else if (key == "eps") cfg.eps = std::stod(value);
      else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "threads") cfg.threads = std::stoull(value);
      else {
        throw ParseError(ParseError::Kind::malformed,
                         "train config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ParseError(ParseError::Kind::malformed, "train config line " + std::to_string(line_no) +
                                                        ": bad value for '" + key + "'");
    }
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path, TrainConfig base) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open train config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), base);
}

TrainConfig TrainConfig::parse(std::string_view text) { return parse(text, TrainConfig{}); }
TrainConfig TrainConfig::load(const std::string& path) { return load(path, TrainConfig{}); }

BatchEmbeddings BatchEmbeddings::from(const std::vector<EmbeddingVector>& q,
                                      const std::vector<EmbeddingVector>& t) {
  if (q.size() != t.size()) throw ValidationError("query and target counts differ");
  if (q.empty()) throw ValidationError("empty batch");
  const std::size_t d = q.front().values.size();
  BatchEmbeddings b{Matrix(q.size(), d), Matrix(t.size(), d)};
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i].values.size() != d || t[i].values.size() != d) {
      throw ValidationError("embedding dimension mismatch at row " + std::to_string(i));
    }
    std::copy(q[i].values.begin(), q[i].values.end(), b.queries.row(i).begin());
    std::copy(t[i].values.begin(), t[i].values.end(), b.targets.row(i).begin());
  }
  return b;
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ValidationError("cosine_sim: dimension mismatch");
  const auto& k = simd::active_kernels();
  const double nu = std::sqrt(k.dot_f64(u.data(), u.data(), u.size()));
  const double nv = std::sqrt(k.dot_f64(v.data(), v.data(), v.size()));
  if (nu == 0 || nv == 0) throw ValidationError("cosine_sim: zero vector");
  const double c = k.dot_f64(u.data(), v.data(), u.size()) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

namespace {

struct Normalized {
  Matrix unit;
  std::vector<double> norm;
};

Normalized normalize_rows(const Matrix& m) {
  const auto& k = simd::active_kernels();
  Normalized out{m, std::vector<double>(m.rows)};
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double n = std::sqrt(k.dot_f64(m.row(i).data(), m.row(i).data(), m.cols));
    if (!(n > 0) || !std::isfinite(n)) {
      throw ValidationError("row " + std::to_string(i) + " has zero or non-finite norm");
    }
    out.norm[i] = n;
    for (auto& x : out.unit.row(i)) x /= n;
  }
  return out;
}

void check_batch(const BatchEmbeddings& b) {
  if (b.queries.rows == 0) throw ValidationError("empty batch");
  if (!b.queries.same_shape(b.targets)) throw ValidationError("query/target shape mismatch");
}

// Row-wise softmax of S / tau, plus the per-row loss terms.
struct Softmax {
  Matrix sim;
  Matrix prob;
  double loss = 0;
};

Softmax softmax_rows(const Matrix& uq, const Matrix& ut, double tau) {
  const auto& k = simd::active_kernels();
  const std::size_t n = uq.rows;
  Softmax s{Matrix(n, n), Matrix(n, n), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = k.dot_f64(uq.row(i).data(), ut.row(j).data(), uq.cols);
      if (!std::isfinite(c)) {
        throw ValidationError("non-finite similarity at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      }
      s.sim(i, j) = c;
      mx = std::max(mx, c / tau);
    }
    double denom = 0;
    for (std::size_t j = 0; j < n; ++j) {
      s.prob(i, j) = std::exp(s.sim(i, j) / tau - mx);
      denom += s.prob(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) s.prob(i, j) /= denom;
    s.loss += (mx + std::log(denom)) - s.sim(i, i) / tau;
  }
  return s;
}

}  // namespace

InfoNceResult info_nce(const BatchEmbeddings& batch, const LossConfig& cfg) {
  cfg.validate();
  check_batch(batch);
  const auto q = normalize_rows(batch.queries);
  const auto t = normalize_rows(batch.targets);
  auto s = softmax_rows(q.unit, t.unit, cfg.temperature);
  return {s.loss, std::move(s.sim)};
}

InfoNceGrad info_nce_grad(const BatchEmbeddings& batch, const LossConfig& cfg) {
  cfg.validate();
  check_batch(batch);
  const auto& k = simd::active_kernels();
  const std::size_t n = batch.queries.rows;
  const std::size_t d = batch.queries.cols;
  const auto q = normalize_rows(batch.queries);
  const auto t = normalize_rows(batch.targets);
  const auto s = softmax_rows(q.unit, t.unit, cfg.temperature);

  // dL/dS_ij = (P_ij - [i == j]) / tau
  Matrix g = s.prob;
  for (std::size_t i = 0; i < n; ++i) g(i, i) -= 1.0;
  for (auto& x : g.data) x /= cfg.temperature;

  // Gradients with respect to the unit rows.
  Matrix du(n, d), dw(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      k.axpy_f64(g(i, j), t.unit.row(j).data(), du.row(i).data(), d);
      k.axpy_f64(g(i, j), q.unit.row(i).data(), dw.row(j).data(), d);
    }
  }

  // Through u = x / ||x||: dx = (du - u (u . du)) / ||x||.
  auto project = [&](const Normalized& nm, Matrix& grad) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* u = nm.unit.row(i).data();
      double* gi = grad.row(i).data();
      const double proj = k.dot_f64(u, gi, d);
      for (std::size_t c = 0; c < d; ++c) gi[c] = (gi[c] - u[c] * proj) / nm.norm[i];
    }
  };
  project(q, du);
  project(t, dw);
  return {std::move(du), std::move(dw)};
}

StepResult gradcache_step(const BaseWeights& base, const LoraAdapter& adapter,
                          const std::vector<ContrastivePair>& pairs, std::size_t sub_batch,
                          const LossConfig& cfg, std::size_t threads) {
  if (pairs.empty()) throw ValidationError("gradcache_step: no pairs");
  if (sub_batch == 0) throw ValidationError("gradcache_step: sub_batch must be >= 1");
  const std::size_t n = pairs.size();
  sub_batch = std::min(sub_batch, n);
  const Encoder enc(base, adapter);

  // Pass 1: embeddings only.
  std::vector<EmbeddingVector> eq(n), et(n);
  parallel_for(2 * n, threads, [&](std::size_t u) {
    const auto& p = pairs[u / 2];
    if (u % 2 == 0) eq[u / 2] = enc.encode(p.query);
    else et[u / 2] = enc.encode(p.target);
  });

  // Pass 2: loss gradient over the full batch.
  const auto batch = BatchEmbeddings::from(eq, et);
  const double loss = info_nce(batch, cfg).loss;
  const auto dgrad = info_nce_grad(batch, cfg);

  // Pass 3: re-encode each sub-batch with traces and inject the cached
  // embedding gradients. Units are (pair, side) in pair order.
  WeightGrads total = WeightGrads::zeros(base);
  const std::size_t chunk = std::max<std::size_t>(8, 2 * threads);
  for (std::size_t start = 0; start < n; start += sub_batch) {
    const std::size_t end = std::min(n, start + sub_batch);
    for (std::size_t u0 = 2 * start; u0 < 2 * end; u0 += chunk) {
      const std::size_t u1 = std::min(2 * end, u0 + chunk);
      std::vector<WeightGrads> partial(u1 - u0);
      parallel_for(u1 - u0, threads, [&](std::size_t off) {
        const std::size_t u = u0 + off;
        const std::size_t i = u / 2;
        const bool is_query = u % 2 == 0;
        ForwardTrace trace;
        enc.encode(is_query ? pairs[i].query : pairs[i].target, trace);
        const auto row = is_query ? dgrad.d_queries.row(i) : dgrad.d_targets.row(i);
        partial[off] = WeightGrads::zeros(base);
        enc.backward(trace, std::vector<double>(row.begin(), row.end()), partial[off]);
      });
      for (const auto& p : partial) total.add(p);
    }
  }
  return {loss, enc.adapter_grads(total)};
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw ValidationError("lr_at: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(cfg.total_steps) + "]");
  }
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamState AdamState::zeros_like(const LoraAdapter& params) {
  return {geovec::zeros_like(params), geovec::zeros_like(params), 0};
}

void adamw_update(LoraAdapter& params, const LoraGrads& grads, AdamState& state, double lr,
                  const TrainConfig& cfg) {
  auto same_layout = [](const LoraAdapter& x, const LoraAdapter& y) {
    if (x.factors.size() != y.factors.size()) return false;
    for (std::size_t i = 0; i < x.factors.size(); ++i) {
      if (!x.factors[i].a.same_shape(y.factors[i].a) || !x.factors[i].b.same_shape(y.factors[i].b)) {
        return false;
      }
    }
    return true;
  };
  if (!same_layout(params, grads) || !same_layout(params, state.m) || !same_layout(params, state.v)) {
    throw ValidationError("adamw_update: parameter/gradient shape mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto step = [&](Matrix& p, const Matrix& g, Matrix& m, Matrix& v) {
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
      const double m_hat = m.data[i] / c1;
      const double v_hat = v.data[i] / c2;
      p.data[i] -= lr * cfg.weight_decay * p.data[i];
      p.data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  };
  for (std::size_t f = 0; f < params.factors.size(); ++f) {
    step(params.factors[f].a, grads.factors[f].a, state.m.factors[f].a, state.v.factors[f].a);
    step(params.factors[f].b, grads.factors[f].b, state.m.factors[f].b, state.v.factors[f].b);
  }
}

}  // namespace geovec
