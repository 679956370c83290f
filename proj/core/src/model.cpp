#include "flare/policy/model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "flare/error.hpp"
#include "flare/policy/vocab.hpp"
#include "json.hpp"

namespace flare::policy {

namespace {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

// y[1 x n] = x[1 x k] . w[k x n], same Eigen expression the tensor op uses.
void matvec(const float* x, const Tensor& w, float* y) {
  CMap A(x, 1, w.dim(0));
  CMap B(w.data(), w.dim(0), w.dim(1));
  MMap C(y, 1, w.dim(1));
  C.noalias() = A * B;
}

// Mirrors the layer_norm op: row stats in float64, normalized in float32.
void ln_row(const float* x, const Tensor& g, const Tensor& b, float* y, int d) {
  double mean = 0.0;
  for (int j = 0; j < d; j++) mean += x[j];
  mean /= d;
  double var = 0.0;
  for (int j = 0; j < d; j++) {
    double c = x[j] - mean;
    var += c * c;
  }
  var /= d;
  float is = static_cast<float>(1.0 / std::sqrt(var + 1e-5));
  for (int j = 0; j < d; j++)
    y[j] = static_cast<float>(x[j] - mean) * is * g.at(j) + b.at(j);
}

float gelu_scalar(float v) {
  constexpr float kInvSqrt2 = 0.7071067811865476f;
  return 0.5f * v * (1.f + std::erf(v * kInvSqrt2));
}

}  // namespace

PolicyConfig PolicyConfig::preset(const std::string& name) {
  PolicyConfig c;
  c.preset_name = name;
  if (name == "paper") {
    c.d = 512;
    c.enc_layers = 3;
    c.enc_heads = 8;
    c.dec_layers = 8;
    c.dec_heads = 8;
    c.mlp_ratio = 4;
  } else if (name == "desk") {
    // defaults
  } else if (name == "mini") {
    c.d = 48;
    c.enc_layers = 2;
    c.enc_heads = 4;
    c.dec_layers = 1;
    c.dec_heads = 4;
    c.mlp_ratio = 2;
  } else {
    throw ConfigError("unknown model preset '" + name + "'");
  }
  c.validate();
  return c;
}

void PolicyConfig::validate() const {
  if (d < 1 || enc_layers < 1 || dec_layers < 1 || mlp_ratio < 1)
    throw ConfigError("model dims must be positive");
  if (enc_heads < 1 || d % enc_heads != 0)
    throw ConfigError("width " + std::to_string(d) + " not divisible by encoder heads " +
                      std::to_string(enc_heads));
  if (dec_heads < 1 || d % dec_heads != 0)
    throw ConfigError("width " + std::to_string(d) + " not divisible by decoder heads " +
                      std::to_string(dec_heads));
  if (context < 1) throw ConfigError("context must be at least 1");
  if (n_actions != env::kNumActions)
    throw ConfigError("action head size must match the action table");
}

PolicyNet::PolicyNet(const PolicyConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  register_params(seed);
  bind_views();
  sin_table_.resize(static_cast<size_t>(cfg_.context) * cfg_.d);
  for (int t = 0; t < cfg_.context; t++) {
    for (int i = 0; i * 2 < cfg_.d; i++) {
      double f = t * std::pow(10000.0, -2.0 * i / cfg_.d);
      sin_table_[static_cast<size_t>(t) * cfg_.d + 2 * i] = static_cast<float>(std::sin(f));
      if (2 * i + 1 < cfg_.d)
        sin_table_[static_cast<size_t>(t) * cfg_.d + 2 * i + 1] =
            static_cast<float>(std::cos(f));
    }
  }
}

void PolicyNet::register_params(uint64_t seed) {
  Rng rng(seed, 31);
  const int d = cfg_.d, dm = cfg_.d * cfg_.mlp_ratio;
  auto wt = [&](const std::string& name, grad::Shape s, float sd) {
    params_.add(name, Tensor::randn(std::move(s), rng, sd, true));
  };
  auto fill = [&](const std::string& name, grad::Shape s, float v) {
    Tensor t = Tensor::full(std::move(s), v);
    t.set_requires_grad(true);
    params_.add(name, t);
  };
  auto block = [&](const std::string& p) {
    fill(p + ".ln1.g", {d}, 1.f);
    fill(p + ".ln1.b", {d}, 0.f);
    wt(p + ".attn.wq", {d, d}, 0.02f);
    wt(p + ".attn.wk", {d, d}, 0.02f);
    wt(p + ".attn.wv", {d, d}, 0.02f);
    wt(p + ".attn.wo", {d, d}, 0.02f);
    fill(p + ".ln2.g", {d}, 1.f);
    fill(p + ".ln2.b", {d}, 0.f);
    wt(p + ".mlp.w1", {d, dm}, 0.02f);
    fill(p + ".mlp.b1", {dm}, 0.f);
    wt(p + ".mlp.w2", {dm, d}, 0.02f);
    fill(p + ".mlp.b2", {d}, 0.f);
  };

  wt("embed.tok", {kTokVocab, d}, 0.02f);
  wt("embed.pos", {kEncTokens, d}, 0.02f);
  wt("embed.act", {kActionVocab, d}, 0.02f);
  for (int i = 0; i < cfg_.enc_layers; i++) block("enc." + std::to_string(i));
  fill("enc.ln_f.g", {d}, 1.f);
  fill("enc.ln_f.b", {d}, 0.f);
  for (int i = 0; i < cfg_.dec_layers; i++) block("dec." + std::to_string(i));
  fill("dec.ln_f.g", {d}, 1.f);
  fill("dec.ln_f.b", {d}, 0.f);
  wt("head.actor.w", {d, cfg_.n_actions}, 0.01f);
  fill("head.actor.b", {cfg_.n_actions}, 0.f);
  wt("head.critic.w", {d, 1}, 0.01f);
  fill("head.critic.b", {1}, 0.f);
}

void PolicyNet::bind_views() {
  auto get = [&](const std::string& name) -> Tensor {
    Tensor* t = params_.find(name);
    if (!t) throw ContractError("model parameter missing: " + name);
    return *t;
  };
  tok_ = get("embed.tok");
  pos_ = get("embed.pos");
  act_ = get("embed.act");
  auto bind_blocks = [&](const std::string& p, int n, std::vector<Block>& out) {
    out.clear();
    for (int i = 0; i < n; i++) {
      std::string b = p + "." + std::to_string(i);
      out.push_back(Block{get(b + ".ln1.g"), get(b + ".ln1.b"), get(b + ".attn.wq"),
                          get(b + ".attn.wk"), get(b + ".attn.wv"), get(b + ".attn.wo"),
                          get(b + ".ln2.g"), get(b + ".ln2.b"), get(b + ".mlp.w1"),
                          get(b + ".mlp.b1"), get(b + ".mlp.w2"), get(b + ".mlp.b2")});
    }
  };
  bind_blocks("enc", cfg_.enc_layers, enc_);
  bind_blocks("dec", cfg_.dec_layers, dec_);
  enc_lnf_g_ = get("enc.ln_f.g");
  enc_lnf_b_ = get("enc.ln_f.b");
  dec_lnf_g_ = get("dec.ln_f.g");
  dec_lnf_b_ = get("dec.ln_f.b");
  actor_w_ = get("head.actor.w");
  actor_b_ = get("head.actor.b");
  critic_w_ = get("head.critic.w");
  critic_b_ = get("head.critic.b");
}

std::vector<Tensor> PolicyNet::actor_parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params_.items)
    if (name != "head.critic.w" && name != "head.critic.b") out.push_back(t);
  return out;
}

std::vector<Tensor> PolicyNet::critic_parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params_.items)
    if (name != "head.actor.w" && name != "head.actor.b") out.push_back(t);
  return out;
}

PolicyNet PolicyNet::clone() const {
  PolicyNet other(cfg_, 0);
  for (size_t i = 0; i < params_.items.size(); i++) {
    const auto& [name, src] = params_.items[i];
    auto& [oname, dst] = other.params_.items[i];
    if (oname != name) throw ContractError("clone: registry order mismatch at " + name);
    std::memcpy(dst.data(), src.data(), sizeof(float) * static_cast<size_t>(src.size()));
  }
  return other;
}

Tensor PolicyNet::run_stack(Tensor x, const std::vector<Block>& blocks, int heads,
                            bool causal, const std::vector<int>& seg,
                            const std::vector<uint8_t>* key_valid,
                            const DecodePrefix* prefix, Tape* tape,
                            std::vector<grad::AttnPrefix>* capture) const {
  using namespace grad;
  for (size_t l = 0; l < blocks.size(); l++) {
    const Block& blk = blocks[l];
    Tensor xl = layer_norm(tape, x, blk.ln1g, blk.ln1b);
    Tensor q = matmul(tape, xl, blk.wq);
    Tensor k = matmul(tape, xl, blk.wk);
    Tensor v = matmul(tape, xl, blk.wv);
    if (capture) {
      AttnPrefix& cap = (*capture)[l];
      cap.offsets = seg;
      cap.k.assign(k.data(), k.data() + k.size());
      cap.v.assign(v.data(), v.data() + v.size());
    }
    AttnArgs args;
    args.heads = heads;
    args.causal = causal;
    args.seg_offsets = seg;
    args.key_valid = key_valid;
    if (prefix) args.prefix = &prefix->per_layer[l];
    Tensor a = attention(tape, q, k, v, args);
    x = add(tape, x, matmul(tape, a, blk.wo));
    Tensor x2 = layer_norm(tape, x, blk.ln2g, blk.ln2b);
    Tensor h = gelu(tape, add_bias(tape, matmul(tape, x2, blk.w1), blk.b1));
    x = add(tape, x, add_bias(tape, matmul(tape, h, blk.w2), blk.b2));
  }
  return x;
}

Tensor PolicyNet::encode_batch(const std::vector<env::Observation>& obs, Tape* tape) const {
  const int B = static_cast<int>(obs.size());
  if (B < 1) throw ContractError("encode_batch: empty observation batch");
  std::vector<int> ids, pos_ids, seg(static_cast<size_t>(B) + 1), state_rows(B);
  std::vector<uint8_t> key_valid;
  ids.reserve(static_cast<size_t>(B) * kEncTokens);
  pos_ids.reserve(ids.capacity());
  key_valid.reserve(ids.capacity());
  for (int b = 0; b < B; b++) {
    auto toks = encode_observation(obs[static_cast<size_t>(b)]);
    auto mask = observation_key_mask(obs[static_cast<size_t>(b)]);
    ids.insert(ids.end(), toks.begin(), toks.end());
    key_valid.insert(key_valid.end(), mask.begin(), mask.end());
    for (int j = 0; j < kEncTokens; j++) pos_ids.push_back(j);
    seg[static_cast<size_t>(b) + 1] = (b + 1) * kEncTokens;
    state_rows[static_cast<size_t>(b)] = b * kEncTokens + kStatePos;
  }
  using namespace grad;
  Tensor x = add(tape, embedding(tape, tok_, ids), embedding(tape, pos_, pos_ids));
  x = run_stack(x, enc_, cfg_.enc_heads, false, seg, &key_valid, nullptr, tape, nullptr);
  x = layer_norm(tape, x, enc_lnf_g_, enc_lnf_b_);
  return gather_rows(tape, x, state_rows);
}

std::vector<float> PolicyNet::sin_rows(const std::vector<int>& seg,
                                       const std::vector<int>& seg_t0, int T) const {
  std::vector<float> rows(static_cast<size_t>(T) * cfg_.d);
  const int S = static_cast<int>(seg.size()) - 1;
  for (int s = 0; s < S; s++) {
    const int t0 = seg_t0[static_cast<size_t>(s)];
    for (int r = seg[static_cast<size_t>(s)]; r < seg[static_cast<size_t>(s) + 1]; r++) {
      const int t = t0 + (r - seg[static_cast<size_t>(s)]);
      if (t < 0 || t >= cfg_.context)
        throw ContractError("decode: timestep " + std::to_string(t) +
                            " outside context of " + std::to_string(cfg_.context));
      std::memcpy(&rows[static_cast<size_t>(r) * cfg_.d],
                  &sin_table_[static_cast<size_t>(t) * cfg_.d],
                  sizeof(float) * static_cast<size_t>(cfg_.d));
    }
  }
  return rows;
}

Tensor PolicyNet::decode_sequence(const Tensor& states, const std::vector<int>& prev_actions,
                                  const std::vector<int>& seg_offsets,
                                  const std::vector<int>& seg_t0, Tape* tape,
                                  const DecodePrefix* prefix) const {
  if (states.rank() != 2 || states.dim(1) != cfg_.d)
    throw ContractError("decode: states must be [T x d]");
  const int T = states.dim(0);
  if (static_cast<int>(prev_actions.size()) != T)
    throw ContractError("decode: one previous action per row required");
  for (int a : prev_actions)
    if (a < 0 || a >= kActionVocab)
      throw ContractError("decode: previous action " + std::to_string(a) + " out of range");
  if (seg_offsets.size() < 2 || seg_offsets.front() != 0 || seg_offsets.back() != T)
    throw ContractError("decode: segment offsets must cover all rows");
  if (seg_t0.size() != seg_offsets.size() - 1)
    throw ContractError("decode: one start timestep per segment required");
  if (prefix && static_cast<int>(prefix->per_layer.size()) != cfg_.dec_layers)
    throw ContractError("decode: prefix must hold one K/V block per decoder layer");

  using namespace grad;
  Tensor x = add(tape, states, embedding(tape, act_, prev_actions));
  x = add_constv(tape, x, sin_rows(seg_offsets, seg_t0, T), 1.f);
  x = run_stack(x, dec_, cfg_.dec_heads, true, seg_offsets, nullptr,
                prefix && !prefix->empty() ? prefix : nullptr, tape, nullptr);
  return layer_norm(tape, x, dec_lnf_g_, dec_lnf_b_);
}

Tensor PolicyNet::actor_logits(const Tensor& beliefs, Tape* tape) const {
  return grad::add_bias(tape, grad::matmul(tape, beliefs, actor_w_), actor_b_);
}

Tensor PolicyNet::critic_values(const Tensor& beliefs, Tape* tape) const {
  return grad::add_bias(tape, grad::matmul(tape, beliefs, critic_w_), critic_b_);
}

DecodePrefix PolicyNet::build_prefix(const Tensor& states, const std::vector<int>& prev_actions,
                                     const std::vector<int>& seg_offsets,
                                     const std::vector<int>& seg_t0) const {
  DecodePrefix out;
  out.per_layer.resize(static_cast<size_t>(cfg_.dec_layers));
  if (states.rank() != 2 || states.dim(1) != cfg_.d)
    throw ContractError("build_prefix: states must be [T x d]");
  const int T = states.dim(0);
  if (static_cast<int>(prev_actions.size()) != T)
    throw ContractError("build_prefix: one previous action per row required");
  if (seg_offsets.size() < 2 || seg_offsets.front() != 0 || seg_offsets.back() != T)
    throw ContractError("build_prefix: segment offsets must cover all rows");
  if (seg_t0.size() != seg_offsets.size() - 1)
    throw ContractError("build_prefix: one start timestep per segment required");

  using namespace grad;
  Tensor x = add(nullptr, states, embedding(nullptr, act_, prev_actions));
  x = add_constv(nullptr, x, sin_rows(seg_offsets, seg_t0, T), 1.f);
  run_stack(x, dec_, cfg_.dec_heads, true, seg_offsets, nullptr, nullptr, nullptr,
            &out.per_layer);
  return out;
}

std::vector<float> PolicyNet::encode_one(const env::Observation& obs) const {
  Tensor s = encode_batch({obs}, nullptr);
  return std::vector<float>(s.data(), s.data() + cfg_.d);
}

std::vector<float> PolicyNet::decoder_step(const std::vector<float>& state, int prev_action,
                                           int t, KVCache& cache) const {
  const int d = cfg_.d, H = cfg_.dec_heads, dh = d / H;
  if (static_cast<int>(state.size()) != d)
    throw ContractError("decoder_step: state width mismatch");
  if (prev_action < 0 || prev_action >= kActionVocab)
    throw ContractError("decoder_step: previous action out of range");
  if (cache.k.empty()) {
    cache.k.resize(static_cast<size_t>(cfg_.dec_layers));
    cache.v.resize(static_cast<size_t>(cfg_.dec_layers));
  }
  if (static_cast<int>(cache.k.size()) != cfg_.dec_layers)
    throw ContractError("decoder_step: cache layer count mismatch");
  if (t != cache.len)
    throw CacheDesyncError("decoder step at t=" + std::to_string(t) +
                           " against cache of length " + std::to_string(cache.len));
  if (t >= cfg_.context)
    throw ContractError("decoder_step: episode exceeds context of " +
                        std::to_string(cfg_.context));

  const float inv_sqrt = 1.f / std::sqrt(static_cast<float>(dh));
  const int M = t + 1;
  std::vector<float> x(state);
  {
    const float* ar = act_.data() + static_cast<int64_t>(prev_action) * d;
    const float* sr = &sin_table_[static_cast<size_t>(t) * d];
    for (int j = 0; j < d; j++) x[static_cast<size_t>(j)] += ar[j];
    for (int j = 0; j < d; j++) x[static_cast<size_t>(j)] += sr[j];
  }
  std::vector<float> xl(static_cast<size_t>(d)), q(static_cast<size_t>(d)),
      kn(static_cast<size_t>(d)), vn(static_cast<size_t>(d)), attn(static_cast<size_t>(d)),
      proj(static_cast<size_t>(d));
  std::vector<float> qh(static_cast<size_t>(dh)), kh, vh, sc(static_cast<size_t>(M));
  std::vector<float> hmid(static_cast<size_t>(cfg_.d) * cfg_.mlp_ratio);

  for (int l = 0; l < cfg_.dec_layers; l++) {
    const Block& blk = dec_[static_cast<size_t>(l)];
    ln_row(x.data(), blk.ln1g, blk.ln1b, xl.data(), d);
    matvec(xl.data(), blk.wq, q.data());
    matvec(xl.data(), blk.wk, kn.data());
    matvec(xl.data(), blk.wv, vn.data());
    auto& ck = cache.k[static_cast<size_t>(l)];
    auto& cv = cache.v[static_cast<size_t>(l)];
    ck.insert(ck.end(), kn.begin(), kn.end());
    cv.insert(cv.end(), vn.begin(), vn.end());

    kh.resize(static_cast<size_t>(M) * dh);
    vh.resize(static_cast<size_t>(M) * dh);
    for (int h = 0; h < H; h++) {
      const int c0 = h * dh;
      std::memcpy(qh.data(), q.data() + c0, sizeof(float) * static_cast<size_t>(dh));
      for (int j = 0; j < M; j++) {
        std::memcpy(&kh[static_cast<size_t>(j) * dh], &ck[static_cast<size_t>(j) * d + c0],
                    sizeof(float) * static_cast<size_t>(dh));
        std::memcpy(&vh[static_cast<size_t>(j) * dh], &cv[static_cast<size_t>(j) * d + c0],
                    sizeof(float) * static_cast<size_t>(dh));
      }
      {
        CMap Q(qh.data(), 1, dh), K(kh.data(), M, dh);
        MMap Sc(sc.data(), 1, M);
        Sc.noalias() = Q * K.transpose() * inv_sqrt;
      }
      float m = -std::numeric_limits<float>::infinity();
      for (int j = 0; j < M; j++) m = std::max(m, sc[static_cast<size_t>(j)]);
      double z = 0.0;
      for (int j = 0; j < M; j++) {
        double e = std::exp(static_cast<double>(sc[static_cast<size_t>(j)] - m));
        sc[static_cast<size_t>(j)] = static_cast<float>(e);
        z += e;
      }
      const float invz = static_cast<float>(1.0 / z);
      for (int j = 0; j < M; j++) sc[static_cast<size_t>(j)] *= invz;
      {
        CMap P(sc.data(), 1, M), V(vh.data(), M, dh);
        MMap O(attn.data() + c0, 1, dh);
        O.noalias() = P * V;
      }
    }
    matvec(attn.data(), blk.wo, proj.data());
    for (int j = 0; j < d; j++) x[static_cast<size_t>(j)] += proj[static_cast<size_t>(j)];

    ln_row(x.data(), blk.ln2g, blk.ln2b, xl.data(), d);
    matvec(xl.data(), blk.w1, hmid.data());
    const int dm = d * cfg_.mlp_ratio;
    for (int j = 0; j < dm; j++)
      hmid[static_cast<size_t>(j)] = gelu_scalar(hmid[static_cast<size_t>(j)] + blk.b1.at(j));
    matvec(hmid.data(), blk.w2, proj.data());
    for (int j = 0; j < d; j++)
      x[static_cast<size_t>(j)] += proj[static_cast<size_t>(j)] + blk.b2.at(j);
  }
  std::vector<float> belief(static_cast<size_t>(d));
  ln_row(x.data(), dec_lnf_g_, dec_lnf_b_, belief.data(), d);
  cache.len += 1;
  return belief;
}

float PolicyNet::value_of(const std::vector<float>& belief) const {
  if (static_cast<int>(belief.size()) != cfg_.d)
    throw ContractError("value_of: belief width mismatch");
  float v = 0.f;
  matvec(belief.data(), critic_w_, &v);
  return v + critic_b_.at(0);
}

ActResult PolicyNet::act(const std::vector<float>& belief,
                         const std::array<uint8_t, env::kNumActions>& valid, bool argmax,
                         Rng* rng) const {
  if (static_cast<int>(belief.size()) != cfg_.d)
    throw ContractError("act: belief width mismatch");
  if (!argmax && !rng) throw ContractError("act: sampling requires an rng");
  const int n = cfg_.n_actions;
  int n_valid = 0;
  for (int a = 0; a < n; a++) n_valid += valid[static_cast<size_t>(a)] ? 1 : 0;
  if (n_valid == 0) throw ContractError("act: no valid action to choose from");

  std::vector<float> logits(static_cast<size_t>(n));
  matvec(belief.data(), actor_w_, logits.data());
  for (int a = 0; a < n; a++) {
    logits[static_cast<size_t>(a)] += actor_b_.at(a);
    if (!valid[static_cast<size_t>(a)]) logits[static_cast<size_t>(a)] = -1e9f;
  }
  double m = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < n; a++) m = std::max(m, static_cast<double>(logits[static_cast<size_t>(a)]));
  std::vector<double> p(static_cast<size_t>(n));
  double z = 0.0;
  for (int a = 0; a < n; a++) {
    p[static_cast<size_t>(a)] = std::exp(static_cast<double>(logits[static_cast<size_t>(a)]) - m);
    z += p[static_cast<size_t>(a)];
  }
  double z2 = 0.0;
  for (int a = 0; a < n; a++) {
    p[static_cast<size_t>(a)] = valid[static_cast<size_t>(a)] ? p[static_cast<size_t>(a)] / z : 0.0;
    z2 += p[static_cast<size_t>(a)];
  }
  for (int a = 0; a < n; a++) p[static_cast<size_t>(a)] /= z2;

  ActResult res;
  if (argmax) {
    int best = -1;
    double bp = -1.0;
    for (int a = 0; a < n; a++)
      if (valid[static_cast<size_t>(a)] && p[static_cast<size_t>(a)] > bp) {
        bp = p[static_cast<size_t>(a)];
        best = a;
      }
    res.action = best;
  } else {
    double r = rng->uniform(), cum = 0.0;
    int pick = -1;
    for (int a = 0; a < n; a++) {
      if (!valid[static_cast<size_t>(a)]) continue;
      cum += p[static_cast<size_t>(a)];
      pick = a;
      if (r < cum) break;
    }
    res.action = pick;
  }
  res.log_prob = static_cast<float>(std::log(p[static_cast<size_t>(res.action)]));
  for (int a = 0; a < n; a++)
    res.probs[static_cast<size_t>(a)] = static_cast<float>(p[static_cast<size_t>(a)]);
  return res;
}

void PolicyNet::reinit_critic_head(uint64_t seed) {
  Rng rng(seed, 77);
  float* w = critic_w_.data();
  for (int64_t i = 0; i < critic_w_.size(); i++) w[i] = rng.uniformf(-1e-2f, 1e-2f);
  float* b = critic_b_.data();
  for (int64_t i = 0; i < critic_b_.size(); i++) b[i] = 0.f;
}

void save_policy(const PolicyNet& net, const std::string& path, const Provenance& prov) {
  grad::save_checkpoint(path, net.params().items);
  const PolicyConfig& c = net.config();
  nlohmann::json j;
  j["config"] = {{"preset", c.preset_name}, {"d", c.d},
                 {"enc_layers", c.enc_layers}, {"enc_heads", c.enc_heads},
                 {"dec_layers", c.dec_layers}, {"dec_heads", c.dec_heads},
                 {"mlp_ratio", c.mlp_ratio},   {"context", c.context},
                 {"n_actions", c.n_actions}};
  j["vocab_fingerprint"] = vocab_fingerprint_hex();
  j["provenance"] = {{"phase", prov.phase}, {"steps", prov.steps}, {"seed", prov.seed}};
  std::ofstream f(path + ".json");
  if (!f) throw CheckpointError("cannot write sidecar for " + path);
  f << j.dump(2) << "\n";
  if (!f.good()) throw CheckpointError("sidecar write failed for " + path);
}

PolicyNet load_policy(const std::string& path, Provenance* prov_out) {
  std::ifstream f(path + ".json");
  if (!f) throw CheckpointError("missing sidecar " + path + ".json");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad sidecar " + path + ".json: " + e.what());
  }
  PolicyConfig c;
  try {
    const auto& jc = j.at("config");
    c.preset_name = jc.at("preset").get<std::string>();
    c.d = jc.at("d").get<int>();
    c.enc_layers = jc.at("enc_layers").get<int>();
    c.enc_heads = jc.at("enc_heads").get<int>();
    c.dec_layers = jc.at("dec_layers").get<int>();
    c.dec_heads = jc.at("dec_heads").get<int>();
    c.mlp_ratio = jc.at("mlp_ratio").get<int>();
    c.context = jc.at("context").get<int>();
    c.n_actions = jc.at("n_actions").get<int>();
    if (j.at("vocab_fingerprint").get<std::string>() != vocab_fingerprint_hex())
      throw CheckpointError("checkpoint " + path + " was written against a different vocabulary");
    if (prov_out) {
      const auto& jp = j.at("provenance");
      prov_out->phase = jp.at("phase").get<std::string>();
      prov_out->steps = jp.at("steps").get<int64_t>();
      prov_out->seed = jp.at("seed").get<uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad sidecar " + path + ".json: " + e.what());
  }

  PolicyNet net(c, 0);
  auto loaded = grad::load_checkpoint(path);
  if (loaded.size() != net.params().items.size())
    throw CheckpointError("checkpoint " + path + " holds " + std::to_string(loaded.size()) +
                          " tensors, model expects " +
                          std::to_string(net.params().items.size()));
  for (auto& [name, t] : loaded) {
    Tensor* dst = net.params().find(name);
    if (!dst) throw CheckpointError("checkpoint tensor '" + name + "' not in model");
    if (dst->shape() != t.shape())
      throw CheckpointError("checkpoint tensor '" + name + "' shape " +
                            grad::shape_str(t.shape()) + " does not match model " +
                            grad::shape_str(dst->shape()));
    std::memcpy(dst->data(), t.data(), sizeof(float) * static_cast<size_t>(t.size()));
  }
  return net;
}

std::pair<PolicyNet, PolicyNet> init_finetune(const std::string& ckpt_path, uint64_t seed) {
  PolicyNet actor = load_policy(ckpt_path);
  PolicyNet critic = actor.clone();
  critic.reinit_critic_head(seed);
  return {std::move(actor), std::move(critic)};
}

}  // namespace flare::policy
