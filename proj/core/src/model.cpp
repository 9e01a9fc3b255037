// SPDX-License-Identifier: Apache-2.0
#include "quantlaw/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "quantlaw/digest.hpp"
#include "quantlaw/errors.hpp"
#include "quantlaw/rng.hpp"

namespace quantlaw {

namespace {

constexpr double kNormEps = 1e-5;

// y[t,:] = x[t,:] * w / rms(x[t,:]); mean-of-squares accumulated in double
void rmsnorm(const float* x, const float* w, float* y, int64_t rows,
             int64_t dim) {
  for (int64_t t = 0; t < rows; ++t) {
    const float* xi = x + t * dim;
    float* yi = y + t * dim;
    double ms = 0.0;
    for (int64_t i = 0; i < dim; ++i)
      ms += static_cast<double>(xi[i]) * static_cast<double>(xi[i]);
    const float inv =
        static_cast<float>(1.0 / std::sqrt(ms / static_cast<double>(dim) +
                                           kNormEps));
    for (int64_t i = 0; i < dim; ++i) yi[i] = xi[i] * inv * w[i];
  }
}

// Dot products run four independent accumulator chains (element i feeds
// chain i mod 4) reduced in the fixed order ((s0+s2)+(s1+s3)) + tail.
// The SSE2 path maps the chains onto vector lanes; the portable path runs
// the identical operation sequence in scalar code, so both produce the
// same bits and every result is reproducible run-to-run.
#if defined(__SSE2__)

// ((lane0 + lane2) + (lane1 + lane3))
float hsum(__m128 acc) {
  const __m128 hi = _mm_movehl_ps(acc, acc);
  const __m128 pair = _mm_add_ps(acc, hi);
  const __m128 odd = _mm_shuffle_ps(pair, pair, 0x1);
  return _mm_cvtss_f32(_mm_add_ss(pair, odd));
}

float dot(const float* a, const float* b, int64_t n) {
  __m128 acc = _mm_setzero_ps();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm_add_ps(acc, _mm_mul_ps(_mm_loadu_ps(a + i), _mm_loadu_ps(b + i)));
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum(acc) + tail;
}

// Four output rows at once sharing the input loads; each output value is
// produced by exactly the same operation sequence as dot().
void dot4(const float* x, const float* w, int64_t in_dim, float* y) {
  const float* b0 = w;
  const float* b1 = w + in_dim;
  const float* b2 = w + 2 * in_dim;
  const float* b3 = w + 3 * in_dim;
  __m128 a0 = _mm_setzero_ps(), a1 = _mm_setzero_ps();
  __m128 a2 = _mm_setzero_ps(), a3 = _mm_setzero_ps();
  int64_t i = 0;
  for (; i + 4 <= in_dim; i += 4) {
    const __m128 xv = _mm_loadu_ps(x + i);
    a0 = _mm_add_ps(a0, _mm_mul_ps(xv, _mm_loadu_ps(b0 + i)));
    a1 = _mm_add_ps(a1, _mm_mul_ps(xv, _mm_loadu_ps(b1 + i)));
    a2 = _mm_add_ps(a2, _mm_mul_ps(xv, _mm_loadu_ps(b2 + i)));
    a3 = _mm_add_ps(a3, _mm_mul_ps(xv, _mm_loadu_ps(b3 + i)));
  }
  float t0 = 0.0f, t1 = 0.0f, t2 = 0.0f, t3 = 0.0f;
  for (; i < in_dim; ++i) {
    t0 += x[i] * b0[i];
    t1 += x[i] * b1[i];
    t2 += x[i] * b2[i];
    t3 += x[i] * b3[i];
  }
  y[0] = hsum(a0) + t0;
  y[1] = hsum(a1) + t1;
  y[2] = hsum(a2) + t2;
  y[3] = hsum(a3) + t3;
}

#else  // portable fallback, same accumulation pattern

float dot(const float* a, const float* b, int64_t n) {
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s2) + (s1 + s3)) + tail;
}

void dot4(const float* x, const float* w, int64_t in_dim, float* y) {
  y[0] = dot(x, w, in_dim);
  y[1] = dot(x, w + in_dim, in_dim);
  y[2] = dot(x, w + 2 * in_dim, in_dim);
  y[3] = dot(x, w + 3 * in_dim, in_dim);
}

#endif

// out[t,o] = sum_i in[t,i] * w[o,i]; w row-major [out_dim, in_dim]
void matmul(const float* in, const float* w, float* out, int64_t rows,
            int64_t in_dim, int64_t out_dim) {
  for (int64_t t = 0; t < rows; ++t) {
    const float* x = in + t * in_dim;
    float* y = out + t * out_dim;
    int64_t o = 0;
    for (; o + 4 <= out_dim; o += 4) dot4(x, w + o * in_dim, in_dim, y + o);
    for (; o < out_dim; ++o) y[o] = dot(x, w + o * in_dim, in_dim);
  }
}

struct LayerView {
  const float* attn_norm;
  const float* ffn_norm;
  std::array<const float*, 7> w;   // indexed by MatmulName
  std::array<bool, 7> act_quant{};
};

struct ModelView {
  const ModelConfig* cfg;
  const float* embed;
  const float* final_norm;
  const float* head;
  std::vector<LayerView> layers;
  BlockFormat act_format;
};

// Rotate-half rotary embedding applied in place to [rows, n, head_dim];
// cos/sin tables are [rows, head_dim/2].
void apply_rope(float* x, int64_t rows, int64_t n, int64_t head_dim,
                const float* cos_t, const float* sin_t) {
  const int64_t half = head_dim / 2;
  for (int64_t t = 0; t < rows; ++t) {
    const float* c = cos_t + t * half;
    const float* s = sin_t + t * half;
    for (int64_t h = 0; h < n; ++h) {
      float* v = x + (t * n + h) * head_dim;
      for (int64_t i = 0; i < half; ++i) {
        const float a = v[i], b = v[i + half];
        v[i] = a * c[i] - b * s[i];
        v[i + half] = b * c[i] + a * s[i];
      }
    }
  }
}

// Returns the matmul input, fake-quantized row-wise when the site is active.
const float* matmul_input(const float* in, int64_t rows, int64_t cols,
                          bool active, const BlockFormat& fmt,
                          std::vector<float>& scratch) {
  if (!active) return in;
  scratch.assign(in, in + rows * cols);
  fake_quant_rows_inplace(std::span<float>(scratch.data(), scratch.size()),
                          rows, cols, fmt);
  return scratch.data();
}

double forward_loss_view(const ModelView& mv, std::span<const uint32_t> tokens) {
  const ModelConfig& cfg = *mv.cfg;
  const int64_t T = static_cast<int64_t>(tokens.size());
  const int64_t dim = cfg.model_dim, hd = cfg.head_dim();
  const int64_t nh = cfg.n_heads, nkv = cfg.n_kv_heads, kvdim = cfg.kv_dim();
  const int64_t ffn = cfg.ffn_dim, half = hd / 2;
  const int64_t heads_per_kv = nh / nkv;

  std::vector<float> x(T * dim), normed(T * dim), proj(T * dim);
  std::vector<float> qb(T * dim), kb(T * kvdim), vb(T * kvdim), attn(T * dim);
  std::vector<float> ga(T * ffn), ub(T * ffn);
  std::vector<float> scratch;
  std::vector<float> scores(T);

  for (int64_t t = 0; t < T; ++t)
    std::copy_n(mv.embed + static_cast<int64_t>(tokens[t]) * dim, dim,
                x.data() + t * dim);

  // rotary tables: angle(t, i) = t * theta^(-2i/head_dim)
  std::vector<float> cos_t(T * half), sin_t(T * half);
  for (int64_t i = 0; i < half; ++i) {
    const double inv_freq =
        std::pow(cfg.rope_theta, -2.0 * static_cast<double>(i) /
                                     static_cast<double>(hd));
    for (int64_t t = 0; t < T; ++t) {
      const double angle = static_cast<double>(t) * inv_freq;
      cos_t[t * half + i] = static_cast<float>(std::cos(angle));
      sin_t[t * half + i] = static_cast<float>(std::sin(angle));
    }
  }

  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));
  constexpr auto idx = [](MatmulName m) { return static_cast<size_t>(m); };

  for (const LayerView& lw : mv.layers) {
    rmsnorm(x.data(), lw.attn_norm, normed.data(), T, dim);

    const float* qin = matmul_input(normed.data(), T, dim,
                                    lw.act_quant[idx(MatmulName::q)],
                                    mv.act_format, scratch);
    matmul(qin, lw.w[idx(MatmulName::q)], qb.data(), T, dim, nh * hd);
    const float* kin = matmul_input(normed.data(), T, dim,
                                    lw.act_quant[idx(MatmulName::k)],
                                    mv.act_format, scratch);
    matmul(kin, lw.w[idx(MatmulName::k)], kb.data(), T, dim, kvdim);
    const float* vin = matmul_input(normed.data(), T, dim,
                                    lw.act_quant[idx(MatmulName::v)],
                                    mv.act_format, scratch);
    matmul(vin, lw.w[idx(MatmulName::v)], vb.data(), T, dim, kvdim);

    apply_rope(qb.data(), T, nh, hd, cos_t.data(), sin_t.data());
    apply_rope(kb.data(), T, nkv, hd, cos_t.data(), sin_t.data());

    // causal grouped-query attention, one (head, position) row at a time
    for (int64_t h = 0; h < nh; ++h) {
      const int64_t kvh = h / heads_per_kv;
      for (int64_t t = 0; t < T; ++t) {
        const float* qv = qb.data() + t * nh * hd + h * hd;
        float max_s = -std::numeric_limits<float>::infinity();
        for (int64_t s = 0; s <= t; ++s) {
          scores[s] = dot(qv, kb.data() + s * kvdim + kvh * hd, hd) *
                      inv_sqrt_hd;
          max_s = std::max(max_s, scores[s]);
        }
        float denom = 0.0f;
        for (int64_t s = 0; s <= t; ++s) {
          scores[s] = std::exp(scores[s] - max_s);
          denom += scores[s];
        }
        const float inv_denom = 1.0f / denom;
        float* out = attn.data() + t * nh * hd + h * hd;
        std::fill_n(out, hd, 0.0f);
        for (int64_t s = 0; s <= t; ++s) {
          const float wgt = scores[s] * inv_denom;
          const float* val = vb.data() + s * kvdim + kvh * hd;
          for (int64_t i = 0; i < hd; ++i) out[i] += wgt * val[i];
        }
      }
    }

    const float* oin = matmul_input(attn.data(), T, nh * hd,
                                    lw.act_quant[idx(MatmulName::o)],
                                    mv.act_format, scratch);
    matmul(oin, lw.w[idx(MatmulName::o)], proj.data(), T, nh * hd, dim);
    for (int64_t i = 0; i < T * dim; ++i) x[i] += proj[i];

    rmsnorm(x.data(), lw.ffn_norm, normed.data(), T, dim);
    const float* gin = matmul_input(normed.data(), T, dim,
                                    lw.act_quant[idx(MatmulName::gate)],
                                    mv.act_format, scratch);
    matmul(gin, lw.w[idx(MatmulName::gate)], ga.data(), T, dim, ffn);
    const float* uin = matmul_input(normed.data(), T, dim,
                                    lw.act_quant[idx(MatmulName::up)],
                                    mv.act_format, scratch);
    matmul(uin, lw.w[idx(MatmulName::up)], ub.data(), T, dim, ffn);
    for (int64_t i = 0; i < T * ffn; ++i) {
      const float g = ga[i];
      ga[i] = g / (1.0f + std::exp(-g)) * ub[i];  // SiLU gate
    }
    const float* din = matmul_input(ga.data(), T, ffn,
                                    lw.act_quant[idx(MatmulName::down)],
                                    mv.act_format, scratch);
    matmul(din, lw.w[idx(MatmulName::down)], proj.data(), T, ffn, dim);
    for (int64_t i = 0; i < T * dim; ++i) x[i] += proj[i];
  }

  rmsnorm(x.data(), mv.final_norm, normed.data(), T, dim);

  // next-token cross-entropy, log-sum-exp accumulated in double
  std::vector<float> logits(cfg.vocab_size);
  double total = 0.0;
  for (int64_t t = 0; t + 1 < T; ++t) {
    matmul(normed.data() + t * dim, mv.head, logits.data(), 1, dim,
           cfg.vocab_size);
    float max_l = logits[0];
    for (float l : logits) max_l = std::max(max_l, l);
    double denom = 0.0;
    for (float l : logits)
      denom += std::exp(static_cast<double>(l) - static_cast<double>(max_l));
    total += static_cast<double>(max_l) + std::log(denom) -
             static_cast<double>(logits[tokens[t + 1]]);
  }
  return total / static_cast<double>(T - 1);
}

void validate_tokens(const ModelConfig& cfg, std::span<const uint32_t> tokens,
                     bool single_window) {
  if (tokens.size() < 2) throw InvalidInput("need at least 2 tokens");
  if (single_window &&
      tokens.size() > static_cast<size_t>(cfg.max_seq_len))
    throw InvalidInput("sequence length " + std::to_string(tokens.size()) +
                       " exceeds max_seq_len " +
                       std::to_string(cfg.max_seq_len));
  for (uint32_t t : tokens)
    if (t >= static_cast<uint32_t>(cfg.vocab_size))
      throw InvalidInput("token " + std::to_string(t) +
                         " out of range for vocab " +
                         std::to_string(cfg.vocab_size));
}

// active[layer][matmul] from a plan's site set; a layer-granularity site
// switches all seven matmuls of its layer.
std::vector<std::array<bool, 7>> active_matrix(const ModelConfig& cfg,
                                               const QuantPlan& plan) {
  std::vector<std::array<bool, 7>> active(cfg.n_layers);
  for (const SiteId& s : plan.low_precision_sites) {
    if (s.layer_index < 0 || s.layer_index >= cfg.n_layers)
      throw InvalidInput("plan site layer " + std::to_string(s.layer_index) +
                         " out of range");
    if (s.granularity == Granularity::layer)
      active[s.layer_index].fill(true);
    else
      active[s.layer_index][static_cast<size_t>(s.matmul_name)] = true;
  }
  return active;
}

const float* ckpt_tensor(const Checkpoint& ckpt, const std::string& name) {
  return ckpt.tensor(name).data();
}

std::string layer_prefix(int64_t l) {
  return "layers." + std::to_string(l) + ".";
}

// View over the checkpoint with plan-active weights replaced; `owned`
// receives the fake-quantized copies and must outlive the view.
ModelView build_view(const Checkpoint& ckpt, const QuantPlan* plan,
                     std::vector<std::array<std::vector<float>, 7>>& owned) {
  const ModelConfig& cfg = ckpt.config;
  ModelView mv;
  mv.cfg = &cfg;
  mv.embed = ckpt_tensor(ckpt, "embed.weight");
  mv.final_norm = ckpt_tensor(ckpt, "final_norm.weight");
  mv.head = ckpt_tensor(ckpt, "head.weight");
  mv.layers.resize(cfg.n_layers);

  std::vector<std::array<bool, 7>> active;
  if (plan) {
    plan->method.validate();
    mv.act_format = plan->method;
    active = active_matrix(cfg, *plan);
    owned.resize(cfg.n_layers);
  }

  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    LayerView& lw = mv.layers[l];
    const std::string p = layer_prefix(l);
    lw.attn_norm = ckpt_tensor(ckpt, p + "attn_norm.weight");
    lw.ffn_norm = ckpt_tensor(ckpt, p + "ffn_norm.weight");
    for (size_t m = 0; m < 7; ++m) {
      const std::string name = p + std::string(kMatmulNames[m]) + ".weight";
      const std::vector<float>& src = ckpt.tensor(name);
      if (plan && active[l][m]) {
        const TensorInfo* info = nullptr;
        for (const TensorInfo& ti : ckpt.infos)
          if (ti.name == name) info = &ti;
        std::vector<float>& copy = owned[l][m];
        copy = src;
        fake_quant_rows_inplace(std::span<float>(copy.data(), copy.size()),
                                info->shape[0], info->shape[1], plan->method);
        lw.w[m] = copy.data();
        lw.act_quant[m] = plan->weight_and_activation;
      } else {
        lw.w[m] = src.data();
      }
    }
  }
  return mv;
}

double corpus_loss_view(const ModelView& mv, std::span<const uint32_t> tokens) {
  const int64_t T = static_cast<int64_t>(tokens.size());
  const int64_t win = mv.cfg->max_seq_len;
  double ce_sum = 0.0;
  int64_t positions = 0;
  for (int64_t start = 0; start < T; start += win) {
    const int64_t len = std::min(win, T - start);
    if (len < 2) break;  // a 1-token tail predicts nothing
    const double mean_ce =
        forward_loss_view(mv, tokens.subspan(start, len));
    ce_sum += mean_ce * static_cast<double>(len - 1);
    positions += len - 1;
  }
  return ce_sum / static_cast<double>(positions);
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 2) throw InvalidConfig("vocab_size must be >= 2");
  if (model_dim < 1 || ffn_dim < 1 || n_layers < 1 || n_heads < 1 ||
      n_kv_heads < 1 || max_seq_len < 2)
    throw InvalidConfig("all model dimensions must be positive");
  if (model_dim % n_heads != 0)
    throw InvalidConfig("model_dim must be divisible by n_heads");
  if (n_heads % n_kv_heads != 0)
    throw InvalidConfig("n_heads must be divisible by n_kv_heads");
  if (head_dim() % 2 != 0)
    throw InvalidConfig("head dimension must be even for rotary embedding");
  if (!(rope_theta > 0.0)) throw InvalidConfig("rope_theta must be positive");
}

ModelConfig ModelConfig::clm_micro() { return ModelConfig{}; }

int64_t TensorInfo::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::vector<TensorInfo> tensor_inventory(const ModelConfig& c) {
  c.validate();
  const int64_t dim = c.model_dim, hd = c.head_dim();
  std::vector<TensorInfo> v;
  v.push_back({"embed.weight", {c.vocab_size, dim}});
  for (int64_t l = 0; l < c.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    v.push_back({p + "attn_norm.weight", {dim}});
    v.push_back({p + "q.weight", {c.n_heads * hd, dim}});
    v.push_back({p + "k.weight", {c.kv_dim(), dim}});
    v.push_back({p + "v.weight", {c.kv_dim(), dim}});
    v.push_back({p + "o.weight", {dim, c.n_heads * hd}});
    v.push_back({p + "ffn_norm.weight", {dim}});
    v.push_back({p + "gate.weight", {c.ffn_dim, dim}});
    v.push_back({p + "up.weight", {c.ffn_dim, dim}});
    v.push_back({p + "down.weight", {dim, c.ffn_dim}});
  }
  v.push_back({"final_norm.weight", {dim}});
  v.push_back({"head.weight", {c.vocab_size, dim}});
  return v;
}

const std::vector<float>& Checkpoint::tensor(std::string_view name) const {
  for (size_t i = 0; i < infos.size(); ++i)
    if (infos[i].name == name) return tensors[i];
  throw InvalidInput("no tensor named '" + std::string(name) + "'");
}

uint64_t Checkpoint::payload_digest() const {
  Fnv1a64 h;
  for (const std::vector<float>& t : tensors)
    h.update(t.data(), t.size() * sizeof(float));
  return h.value();
}

Checkpoint init_random(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.infos = tensor_inventory(config);
  ckpt.tensors.resize(ckpt.infos.size());
  for (size_t i = 0; i < ckpt.infos.size(); ++i) {
    const TensorInfo& ti = ckpt.infos[i];
    std::vector<float>& data = ckpt.tensors[i];
    data.resize(ti.numel());
    if (ti.shape.size() == 1) {
      std::fill(data.begin(), data.end(), 1.0f);  // norm scales start at one
      continue;
    }
    const double scale =
        1.0 / std::sqrt(static_cast<double>(ti.shape.back()));
    GaussianGen gen(derive_seed(seed, static_cast<uint64_t>(i)));
    for (float& x : data) x = static_cast<float>(gen.next() * scale);
  }
  return ckpt;
}

std::string_view granularity_name(Granularity g) {
  return g == Granularity::layer ? "layer" : "matmul";
}

Granularity parse_granularity(std::string_view name) {
  if (name == "layer") return Granularity::layer;
  if (name == "matmul") return Granularity::matmul;
  throw InvalidInput("granularity must be 'layer' or 'matmul', got '" +
                     std::string(name) + "'");
}

std::string SiteId::to_string() const {
  std::string s = "layer" + std::to_string(layer_index);
  if (granularity == Granularity::matmul)
    s += "." + std::string(kMatmulNames[static_cast<size_t>(matmul_name)]);
  return s;
}

double QuantPlan::achieved_ratio() const {
  int64_t low = 0, total = 0;
  for (const auto& [site, count] : site_param_counts) {
    total += count;
    if (low_precision_sites.contains(site)) low += count;
  }
  if (total <= 0) throw InvalidInput("plan has no sites to count");
  return static_cast<double>(low) / static_cast<double>(total);
}

uint64_t QuantPlan::digest() const {
  Fnv1a64 h;
  h.update_string(method.to_string());
  const uint8_t wa = weight_and_activation ? 1 : 0;
  h.update(&wa, 1);
  for (const SiteId& s : low_precision_sites) {
    h.update_u64(static_cast<uint64_t>(s.layer_index));
    const uint8_t m = static_cast<uint8_t>(s.matmul_name);
    const uint8_t g = static_cast<uint8_t>(s.granularity);
    h.update(&m, 1);
    h.update(&g, 1);
  }
  return h.value();
}

std::vector<std::pair<SiteId, int64_t>> enumerate_sites(
    const ModelConfig& config, Granularity granularity) {
  config.validate();
  const int64_t dim = config.model_dim, hd = config.head_dim();
  const std::array<int64_t, 7> matmul_params = {
      config.n_heads * hd * dim,  // q
      config.kv_dim() * dim,      // k
      config.kv_dim() * dim,      // v
      dim * config.n_heads * hd,  // o
      config.ffn_dim * dim,       // gate
      config.ffn_dim * dim,       // up
      dim * config.ffn_dim,       // down
  };
  std::vector<std::pair<SiteId, int64_t>> sites;
  for (int32_t l = 0; l < config.n_layers; ++l) {
    if (granularity == Granularity::layer) {
      int64_t total = 0;
      for (int64_t p : matmul_params) total += p;
      sites.push_back({SiteId{l, MatmulName::q, Granularity::layer}, total});
    } else {
      for (size_t m = 0; m < 7; ++m)
        sites.push_back({SiteId{l, static_cast<MatmulName>(m),
                                Granularity::matmul},
                         matmul_params[m]});
    }
  }
  return sites;
}

int64_t non_embedding_params(const ModelConfig& config) {
  int64_t n = 0;
  for (const TensorInfo& ti : tensor_inventory(config))
    if (ti.name != "embed.weight" && ti.name != "head.weight") n += ti.numel();
  return n;
}

double forward_loss(const Checkpoint& ckpt, std::span<const uint32_t> tokens,
                    const QuantPlan* plan) {
  validate_tokens(ckpt.config, tokens, /*single_window=*/true);
  std::vector<std::array<std::vector<float>, 7>> owned;
  const ModelView mv = build_view(ckpt, plan, owned);
  return forward_loss_view(mv, tokens);
}

double corpus_loss(const Checkpoint& ckpt, std::span<const uint32_t> tokens,
                   const QuantPlan* plan) {
  validate_tokens(ckpt.config, tokens, /*single_window=*/false);
  std::vector<std::array<std::vector<float>, 7>> owned;
  const ModelView mv = build_view(ckpt, plan, owned);
  return corpus_loss_view(mv, tokens);
}

PlanEvaluator::PlanEvaluator(const Checkpoint& ckpt,
                             std::span<const uint32_t> tokens,
                             BlockFormat method, bool weight_and_activation)
    : ckpt_(&ckpt),
      tokens_(tokens.begin(), tokens.end()),
      method_(method),
      weight_and_activation_(weight_and_activation) {
  method_.validate();
  validate_tokens(ckpt.config, tokens_, /*single_window=*/false);
  baseline_loss_ = corpus_loss(ckpt, tokens_, nullptr);
  quantized_.resize(ckpt.config.n_layers);
  for (int64_t l = 0; l < ckpt.config.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (size_t m = 0; m < 7; ++m) {
      const std::string name = p + std::string(kMatmulNames[m]) + ".weight";
      const TensorInfo* info = nullptr;
      for (const TensorInfo& ti : ckpt.infos)
        if (ti.name == name) info = &ti;
      std::vector<float>& copy = quantized_[l][m];
      copy = ckpt.tensor(name);
      fake_quant_rows_inplace(std::span<float>(copy.data(), copy.size()),
                              info->shape[0], info->shape[1], method_);
    }
  }
}

double PlanEvaluator::loss(const QuantPlan& plan) const {
  if (plan.method != method_)
    throw InvalidInput("plan format " + plan.method.to_string() +
                       " does not match evaluator format " +
                       method_.to_string());
  if (plan.weight_and_activation != weight_and_activation_)
    throw InvalidInput(
        "plan weight/activation flag does not match evaluator");
  const ModelConfig& cfg = ckpt_->config;
  ModelView mv;
  mv.cfg = &cfg;
  mv.embed = ckpt_tensor(*ckpt_, "embed.weight");
  mv.final_norm = ckpt_tensor(*ckpt_, "final_norm.weight");
  mv.head = ckpt_tensor(*ckpt_, "head.weight");
  mv.act_format = method_;
  mv.layers.resize(cfg.n_layers);
  const std::vector<std::array<bool, 7>> active = active_matrix(cfg, plan);
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    LayerView& lw = mv.layers[l];
    const std::string p = layer_prefix(l);
    lw.attn_norm = ckpt_tensor(*ckpt_, p + "attn_norm.weight");
    lw.ffn_norm = ckpt_tensor(*ckpt_, p + "ffn_norm.weight");
    for (size_t m = 0; m < 7; ++m) {
      if (active[l][m]) {
        lw.w[m] = quantized_[l][m].data();
        lw.act_quant[m] = weight_and_activation_;
      } else {
        lw.w[m] = ckpt_
                      ->tensor(p + std::string(kMatmulNames[m]) + ".weight")
                      .data();
      }
    }
  }
  return corpus_loss_view(mv, tokens_);
}

std::vector<uint32_t> gen_random_tokens(int64_t vocab_size, int64_t count,
                                        uint64_t seed) {
  if (vocab_size < 2) throw InvalidInput("vocab_size must be >= 2");
  if (count < 0) throw InvalidInput("token count must be >= 0");
  std::mt19937_64 eng(seed);
  std::vector<uint32_t> tokens(count);
  for (uint32_t& t : tokens)
    t = static_cast<uint32_t>(eng() % static_cast<uint64_t>(vocab_size));
  return tokens;
}

void save_tokens(std::span<const uint32_t> tokens, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(tokens.data()),
            static_cast<std::streamsize>(tokens.size() * sizeof(uint32_t)));
  if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<uint32_t> load_tokens(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open '" + path + "'");
  const std::streamsize bytes = in.tellg();
  if (bytes % 4 != 0)
    throw InvalidFormat("token file '" + path +
                        "' is not a whole number of 32-bit values");
  in.seekg(0);
  std::vector<uint32_t> tokens(static_cast<size_t>(bytes / 4));
  in.read(reinterpret_cast<char*>(tokens.data()), bytes);
  if (!in) throw IoError("short read from '" + path + "'");
  return tokens;
}

uint64_t token_digest(std::span<const uint32_t> tokens) {
  Fnv1a64 h;
  h.update(tokens.data(), tokens.size() * sizeof(uint32_t));
  return h.value();
}

}  // namespace quantlaw
