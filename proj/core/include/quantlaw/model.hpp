// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quantlaw/formats.hpp"

namespace quantlaw {

// Architecture shape of the forward-only micro causal LM. The network is a
// pre-norm transformer with grouped-query attention, rotary position
// embeddings, RMSNorm, and a SiLU-gated feed-forward block.
struct ModelConfig {
  int64_t vocab_size = 256;
  int64_t model_dim = 64;
  int64_t ffn_dim = 192;
  int64_t n_layers = 4;
  int64_t n_heads = 4;
  int64_t n_kv_heads = 2;
  int64_t max_seq_len = 128;
  double rope_theta = 10000.0;

  // model_dim % n_heads == 0, n_heads % n_kv_heads == 0, dims >= 1,
  // vocab_size >= 2.
  void validate() const;
  int64_t head_dim() const { return model_dim / n_heads; }
  int64_t kv_dim() const { return n_kv_heads * head_dim(); }

  // The default desk-scale shape ("clm-micro"): forward passes run in
  // milliseconds while keeping every architectural feature live.
  static ModelConfig clm_micro();

  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<int64_t> shape;
  int64_t numel() const;
};

// Deterministic tensor ordering: embedding, then per layer
// attn_norm, q, k, v, o, ffn_norm, gate, up, down, then final_norm and head.
// Linear weights are row-major [out, in]; the reduction dimension is `in`.
std::vector<TensorInfo> tensor_inventory(const ModelConfig& config);

struct Checkpoint {
  ModelConfig config;
  std::vector<TensorInfo> infos;
  std::vector<std::vector<float>> tensors;  // parallel to infos

  const std::vector<float>& tensor(std::string_view name) const;
  // FNV-1a over the concatenated little-endian float payload; identifies the
  // weights independently of file paths.
  uint64_t payload_digest() const;
};

// Scaled-Gaussian initialization: matrix entries ~ N(0, 1/fan_in) with
// fan_in = trailing dimension, drawn by a per-tensor Box-Muller generator
// (bit-identical across runs); norm scale vectors start at one.
Checkpoint init_random(const ModelConfig& config, uint64_t seed);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Accepts the built-in name "clm-micro" or a path to a JSON file carrying
// the ModelConfig fields.
ModelConfig parse_model_config(const std::string& name_or_path);

// The seven weight matmuls of one transformer layer, in tensor order.
enum class MatmulName : uint8_t { q = 0, k, v, o, gate, up, down };
inline constexpr std::array<std::string_view, 7> kMatmulNames = {
    "q", "k", "v", "o", "gate", "up", "down"};

enum class Granularity : uint8_t { layer, matmul };
std::string_view granularity_name(Granularity g);
Granularity parse_granularity(std::string_view name);

// One assignable precision site: a whole layer, or one matmul within it.
struct SiteId {
  int32_t layer_index = 0;
  MatmulName matmul_name = MatmulName::q;  // ignored under layer granularity
  Granularity granularity = Granularity::matmul;

  std::string to_string() const;
  auto operator<=>(const SiteId&) const = default;
};

// A mixed-precision assignment: sites in `low_precision_sites` run through
// the fake-quantizer, everything else stays in full precision. Embeddings
// and the output head are never sites. `site_param_counts` covers the whole
// site universe so the achieved ratio is self-contained.
struct QuantPlan {
  BlockFormat method;
  bool weight_and_activation = true;
  std::set<SiteId> low_precision_sites;
  std::map<SiteId, int64_t> site_param_counts;

  double achieved_ratio() const;
  // Order-independent content hash of (method, flag, sorted low sites).
  uint64_t digest() const;
};

// Layer granularity: n_layers sites, each counting its seven matmul weights.
// Matmul granularity: 7 * n_layers sites. Embedding/head excluded from both
// the site list and the ratio denominator.
std::vector<std::pair<SiteId, int64_t>> enumerate_sites(
    const ModelConfig& config, Granularity granularity);

// Total assignable (non-embedding, non-head) parameter count.
int64_t non_embedding_params(const ModelConfig& config);

// Causal next-token cross-entropy in nats/token, averaged over the
// sequence's predicted positions. tokens.size() in [2, max_seq_len]. With a
// plan, low-precision sites fake-quantize their weights (rows along the
// reduction dim) and, if weight_and_activation, their matmul inputs.
double forward_loss(const Checkpoint& ckpt, std::span<const uint32_t> tokens,
                    const QuantPlan* plan = nullptr);

// Pooled loss over non-overlapping max_seq_len windows of a longer stream
// (trailing window kept if it still has >= 2 tokens), weighted by the number
// of predicted positions per window.
double corpus_loss(const Checkpoint& ckpt, std::span<const uint32_t> tokens,
                   const QuantPlan* plan = nullptr);

// Evaluates many plans that share one (checkpoint, corpus, format) by
// pre-quantizing every site's weights once. Immutable after construction;
// loss() is safe to call from concurrent workers.
class PlanEvaluator {
 public:
  PlanEvaluator(const Checkpoint& ckpt, std::span<const uint32_t> tokens,
                BlockFormat method, bool weight_and_activation);

  double baseline() const { return baseline_loss_; }
  // plan.method must equal the constructor's format.
  double loss(const QuantPlan& plan) const;

 private:
  const Checkpoint* ckpt_;
  std::vector<uint32_t> tokens_;
  BlockFormat method_;
  bool weight_and_activation_;
  double baseline_loss_;
  // quantized_[layer][matmul] = fake-quantized copy of that weight matrix
  std::vector<std::array<std::vector<float>, 7>> quantized_;
};

// Token-stream helpers; files are raw little-endian u32 sequences.
std::vector<uint32_t> gen_random_tokens(int64_t vocab_size, int64_t count,
                                        uint64_t seed);
void save_tokens(std::span<const uint32_t> tokens, const std::string& path);
std::vector<uint32_t> load_tokens(const std::string& path);
uint64_t token_digest(std::span<const uint32_t> tokens);

}  // namespace quantlaw
