#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mpt/geometry.hpp"
#include "mpt/masking.hpp"
#include "mpt/optim.hpp"
#include "mpt/rng.hpp"
#include "mpt/tensor.hpp"

namespace mpt {

struct ModelConfig {
  int dim = 64;
  int n_heads = 4;
  int n_enc_layers = 3;
  int n_dec_layers = 1;
  int ffn_ratio = 4;
  double dropout_p = 0.1;
  double droppath_p = 0.1;
  int patch_count = 16;
  int patch_size = 32;
  int pos_hidden = 0;  // 0 resolves to round(dim / 3), floor 8
  int head_hidden = 64;
  double ln_eps = 1e-5;

  int pos_hidden_resolved() const {
    if (pos_hidden > 0) return pos_hidden;
    return std::max(8, int(std::lround(dim / 3.0)));
  }

  void validate() const {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("ModelConfig: dim must be even and >= 2");
    if (n_heads < 1 || dim % n_heads != 0) throw std::invalid_argument("ModelConfig: dim must divide by n_heads");
    if (n_enc_layers < 1 || n_dec_layers < 1) throw std::invalid_argument("ModelConfig: need at least one layer");
    if (ffn_ratio < 1) throw std::invalid_argument("ModelConfig: ffn_ratio must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0 || droppath_p < 0.0 || droppath_p >= 1.0)
      throw std::invalid_argument("ModelConfig: dropout/droppath must be in [0,1)");
    if (patch_count < 2) throw std::invalid_argument("ModelConfig: patch_count must be >= 2");
    if (patch_size < 1) throw std::invalid_argument("ModelConfig: patch_size must be >= 1");
    if (head_hidden < 1) throw std::invalid_argument("ModelConfig: head_hidden must be >= 1");
    if (ln_eps <= 0.0) throw std::invalid_argument("ModelConfig: ln_eps must be positive");
  }
};

struct LossConfig {
  double alpha = 0.25;
  double gamma = 2.0;
};

// Patch decomposition: farthest-point centers plus center-relative kNN
// groups. Group point order follows knn (ascending distance).
struct PatchSet {
  PointCloud centers;
  std::vector<PointCloud> groups;
};

inline PatchSet patchify(const PointCloud& cloud, int patch_count, int patch_size) {
  if (int(cloud.size()) < patch_size)
    throw std::invalid_argument("patchify: cloud smaller than patch_size");
  PatchSet ps;
  const auto center_idx = fps(cloud, patch_count, 0);
  ps.centers.reserve(center_idx.size());
  ps.groups.reserve(center_idx.size());
  for (int ci : center_idx) {
    const Point3 c = cloud[size_t(ci)];
    ps.centers.push_back(c);
    const auto nbr = knn(cloud, c, patch_size);
    PointCloud g;
    g.reserve(nbr.size());
    for (int ni : nbr) g.push_back(cloud[size_t(ni)] - c);
    ps.groups.push_back(std::move(g));
  }
  return ps;
}

struct PretrainStats {
  int n_real = 0, n_fake = 0;
  int correct_real = 0, correct_fake = 0;
  double gamma = 0.0;

  double acc_real() const { return n_real ? double(correct_real) / n_real : 0.0; }
  double acc_fake() const { return n_fake ? double(correct_fake) / n_fake : 0.0; }
  // Balanced accuracy; collapses to acc_real when no fake survived rejection.
  double acc_mean() const { return n_fake ? 0.5 * (acc_real() + acc_fake()) : acc_real(); }
};

namespace modeldetail {

template <typename S>
struct Linear {
  Tensor<S> weight;  // [in, out]
  Tensor<S> bias;    // [out]
  Tensor<S> operator()(const Tensor<S>& x) const { return add_rowvec(matmul(x, weight), bias); }
};

template <typename S>
struct LayerNorm {
  Tensor<S> gain, bias;
  double eps = 1e-5;
  Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm_rows(x, gain, bias, eps); }
};

// Multi-head scaled dot-product attention. No dropout anywhere inside:
// regularization lives in the FFN dropout and the residual droppath.
template <typename S>
struct Attention {
  Linear<S> q, k, v, out;
  int n_heads = 1;

  Tensor<S> forward(const Tensor<S>& xq, const Tensor<S>& xk, const Tensor<S>& xv) const {
    const int d = xq.dim(1);
    const int dh = d / n_heads;
    const S inv_sqrt = S(1.0 / std::sqrt(double(dh)));
    auto Q = q(xq), K = k(xk), V = v(xv);
    std::vector<Tensor<S>> heads;
    heads.reserve(size_t(n_heads));
    for (int h = 0; h < n_heads; ++h) {
      auto Qh = slice_cols(Q, h * dh, dh);
      auto Kh = slice_cols(K, h * dh, dh);
      auto Vh = slice_cols(V, h * dh, dh);
      auto A = softmax_rows(scale(matmul_nt(Qh, Kh), inv_sqrt));
      heads.push_back(matmul(A, Vh));
    }
    return out(concat_cols(heads));
  }
};

template <typename S>
struct Ffn {
  Linear<S> fc1, fc2;
  double dropout_p = 0.0;

  Tensor<S> forward(const Tensor<S>& x, bool training, Rng& rng) const {
    auto h = dropout(relu(fc1(x)), dropout_p, training, rng);
    return dropout(fc2(h), dropout_p, training, rng);
  }
};

// Pre-norm transformer block, usable for self- or cross-attention. In the
// cross form the memory is consumed as-is (it already passed the encoder's
// final norm); only the query stream is normalized here.
template <typename S>
struct Block {
  LayerNorm<S> ln1, ln2;
  Attention<S> attn;
  Ffn<S> ffn;
  double droppath_p = 0.0;

  Tensor<S> forward_self(const Tensor<S>& x, bool training, Rng& rng) const {
    auto h = ln1(x);
    auto x1 = add(x, droppath(attn.forward(h, h, h), droppath_p, training, rng));
    return add(x1, droppath(ffn.forward(ln2(x1), training, rng), droppath_p, training, rng));
  }

  Tensor<S> forward_cross(const Tensor<S>& xq, const Tensor<S>& keys, const Tensor<S>& values, bool training,
                          Rng& rng) const {
    auto x1 = add(xq, droppath(attn.forward(ln1(xq), keys, values), droppath_p, training, rng));
    return add(x1, droppath(ffn.forward(ln2(x1), training, rng), droppath_p, training, rng));
  }
};

}  // namespace modeldetail

template <typename S>
struct EncodeResult {
  Tensor<S> latent;       // [V+1, dim] after the final encoder norm; row 0 is CLS
  Tensor<S> pos_visible;  // [V, dim] positional embeddings of the visible centers
  int n_visible = 0;
};

template <typename S>
struct PretrainResult {
  Tensor<S> loss;
  PretrainStats stats;
};

// Masked-patch discrimination model: a patch tokenizer, a transformer
// encoder over the visible patches plus a CLS token, and a cross-attention
// decoder that scores arbitrary 3d query points against the latent.
//
// Parameter initialization draws weights as N(0, 1/fan_in) from Rng(init_seed)
// in declaration order; biases start at zero and norm gains at one, so the
// full state is reproducible from (config, init_seed). The fan-in scaling
// keeps signal magnitude roughly width-independent, which matters at small
// dims: a fixed small stddev starves narrow models of gradient signal.
template <typename S>
class MptModel {
 public:
  MptModel(ModelConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    const int d = cfg_.dim;
    const int pe_hidden = std::max(2, d / 2);
    patch_fc1_ = make_linear("patch_embed.fc1", 3, pe_hidden, rng);
    patch_fc2_ = make_linear("patch_embed.fc2", pe_hidden, d, rng);
    patch_proj_ = make_linear("patch_embed.proj", d, d, rng);
    pos_fc1_ = make_linear("pos_embed.fc1", 3, cfg_.pos_hidden_resolved(), rng);
    pos_fc2_ = make_linear("pos_embed.fc2", cfg_.pos_hidden_resolved(), d, rng);
    cls_token_ = make_matrix_param("cls_token", 1, d, rng, 1.0 / std::sqrt(double(d)));
    enc_.reserve(size_t(cfg_.n_enc_layers));
    for (int i = 0; i < cfg_.n_enc_layers; ++i) enc_.push_back(make_block("enc." + std::to_string(i), rng));
    enc_norm_ = make_norm("enc_norm");
    dec_.reserve(size_t(cfg_.n_dec_layers));
    for (int i = 0; i < cfg_.n_dec_layers; ++i) dec_.push_back(make_block("dec." + std::to_string(i), rng));
    dec_norm_ = make_norm("dec_norm");
    head_fc1_ = make_linear("point_head.fc1", d, cfg_.head_hidden, rng);
    head_fc2_ = make_linear("point_head.fc2", cfg_.head_hidden, 1, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::pair<std::string, Tensor<S>>>& params() const { return params_; }

  Tensor<S> find_param(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return t;
    throw std::invalid_argument("MptModel: no parameter named '" + name + "'");
  }

  // One token per group: shared per-point MLP, channel-wise max pool over the
  // group's points, then an output projection.
  Tensor<S> embed_groups(const std::vector<PointCloud>& groups) const {
    if (groups.empty()) throw std::invalid_argument("embed_groups: no groups");
    std::vector<Tensor<S>> tokens;
    tokens.reserve(groups.size());
    for (const auto& g : groups) {
      if (g.empty()) throw std::invalid_argument("embed_groups: empty group");
      auto pts = tensor_from_cloud<S>(g);
      tokens.push_back(max_over_rows(patch_fc2_(gelu(patch_fc1_(pts)))));
    }
    return patch_proj_(concat_rows(tokens));
  }

  // Positional embedding MLP, shared by encoder tokens, decoder keys, and
  // decoder query tokens.
  Tensor<S> pos_embed_points(const PointCloud& pts) const {
    if (pts.empty()) throw std::invalid_argument("pos_embed_points: no points");
    return pos_fc2_(gelu(pos_fc1_(tensor_from_cloud<S>(pts))));
  }

  // tokens/pos are [V, dim] for the visible patches. Positional embeddings
  // enter once at the input; the CLS token is prepended without one.
  EncodeResult<S> encode(const Tensor<S>& tokens, const Tensor<S>& pos, bool training, Rng& rng) const {
    auto x = concat_rows<S>({cls_token_, add(tokens, pos)});
    for (const auto& blk : enc_) x = blk.forward_self(x, training, rng);
    EncodeResult<S> out;
    out.latent = enc_norm_(x);
    out.pos_visible = pos;
    out.n_visible = tokens.dim(0);
    return out;
  }

  // Cross-attention decode of arbitrary query points against the latent.
  // Keys carry the visible centers' positional embeddings (zero for CLS);
  // values are the latent alone. Every op on the query stream is row-local,
  // so a query's output is unaffected by which other queries share the call.
  Tensor<S> decode_tokens(const EncodeResult<S>& enc, const PointCloud& queries, bool training, Rng& rng) const {
    if (queries.empty()) throw std::invalid_argument("decode_tokens: no query points");
    auto key_pos = concat_rows<S>({Tensor<S>::zeros({1, cfg_.dim}), enc.pos_visible});
    auto keys = add(enc.latent, key_pos);
    auto xq = pos_embed_points(queries);
    for (const auto& blk : dec_) xq = blk.forward_cross(xq, keys, enc.latent, training, rng);
    return dec_norm_(xq);
  }

  // [m,1] occupancy logits for m query points.
  Tensor<S> decode_logits(const EncodeResult<S>& enc, const PointCloud& queries, bool training, Rng& rng) const {
    return head_fc2_(gelu(head_fc1_(decode_tokens(enc, queries, training, rng))));
  }

  // Full pretraining step graph for one cloud: partition patches, encode the
  // visible ones, draw real/fake queries, decode, and score with focal loss.
  // Consumes rng in a fixed order: mask draw, encoder dropout, query draw,
  // decoder dropout.
  PretrainResult<S> pretrain_forward(const PointCloud& cloud, const MaskConfig& mask_cfg, const LossConfig& loss_cfg,
                                     Rng& rng, bool training) const {
    PatchSet ps = patchify(cloud, cfg_.patch_count, cfg_.patch_size);
    const int n_groups = int(ps.centers.size());
    MaskPartition part = mask_cfg.mode == MaskMode::random ? random_mask(n_groups, mask_cfg.ratio, rng)
                                                           : block_mask(ps.centers, mask_cfg.ratio, rng);
    if (part.masked.empty()) throw std::invalid_argument("pretrain_forward: mask leaves nothing to discriminate");

    std::vector<PointCloud> vis_groups;
    PointCloud vis_centers;
    for (int i : part.unmasked) {
      vis_groups.push_back(ps.groups[size_t(i)]);
      vis_centers.push_back(ps.centers[size_t(i)]);
    }
    auto enc = encode(embed_groups(vis_groups), pos_embed_points(vis_centers), training, rng);

    const int gamma_count = mask_cfg.gamma_fps_count > 0 ? mask_cfg.gamma_fps_count : cfg_.patch_count;
    const double gamma = compute_gamma(cloud, gamma_count);
    PointCloud masked_abs;
    for (int i : part.masked)
      for (const Point3& p : ps.groups[size_t(i)]) masked_abs.push_back(p + ps.centers[size_t(i)]);
    QuerySet qs = sample_queries(cloud, masked_abs, mask_cfg.n_queries, gamma, rng);

    PointCloud queries = qs.real_points;
    queries.insert(queries.end(), qs.fake_points.begin(), qs.fake_points.end());
    std::vector<int> labels(qs.real_points.size(), 1);
    labels.insert(labels.end(), qs.fake_points.size(), 0);

    auto logits = decode_logits(enc, queries, training, rng);

    PretrainResult<S> res;
    res.loss = focal_loss_mean(logits, labels, loss_cfg.alpha, loss_cfg.gamma);
    res.stats.gamma = gamma;
    const auto& zv = logits.value();
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i]) {
        ++res.stats.n_real;
        if (zv[i] > S(0)) ++res.stats.correct_real;
      } else {
        ++res.stats.n_fake;
        if (zv[i] < S(0)) ++res.stats.correct_fake;
      }
    }
    return res;
  }

  // [1, 2*dim] cloud descriptor: CLS output next to a max pool over the
  // patch token outputs, from an unmasked encode.
  Tensor<S> classification_feature(const PointCloud& cloud, bool training, Rng& rng) const {
    PatchSet ps = patchify(cloud, cfg_.patch_count, cfg_.patch_size);
    auto enc = encode(embed_groups(ps.groups), pos_embed_points(ps.centers), training, rng);
    auto cls = slice_rows(enc.latent, 0, 1);
    auto pooled = max_over_rows(slice_rows(enc.latent, 1, enc.n_visible));
    return concat_cols<S>({cls, pooled});
  }

 private:
  Tensor<S> make_matrix_param(const std::string& name, int rows, int cols, Rng& rng, double stddev) {
    std::vector<S> w(size_t(rows) * size_t(cols));
    for (S& v : w) v = S(rng.normal() * stddev);
    auto t = Tensor<S>::param({rows, cols}, std::move(w));
    params_.emplace_back(name, t);
    return t;
  }

  Tensor<S> make_vec_param(const std::string& name, int n, S fill) {
    auto t = Tensor<S>::param({n}, std::vector<S>(size_t(n), fill));
    params_.emplace_back(name, t);
    return t;
  }

  modeldetail::Linear<S> make_linear(const std::string& prefix, int in, int out, Rng& rng) {
    modeldetail::Linear<S> l;
    l.weight = make_matrix_param(prefix + ".weight", in, out, rng, 1.0 / std::sqrt(double(in)));
    l.bias = make_vec_param(prefix + ".bias", out, S(0));
    return l;
  }

  modeldetail::LayerNorm<S> make_norm(const std::string& prefix) {
    modeldetail::LayerNorm<S> ln;
    ln.gain = make_vec_param(prefix + ".gain", cfg_.dim, S(1));
    ln.bias = make_vec_param(prefix + ".bias", cfg_.dim, S(0));
    ln.eps = cfg_.ln_eps;
    return ln;
  }

  modeldetail::Block<S> make_block(const std::string& prefix, Rng& rng) {
    modeldetail::Block<S> b;
    b.ln1 = make_norm(prefix + ".ln1");
    b.attn.q = make_linear(prefix + ".attn.q", cfg_.dim, cfg_.dim, rng);
    b.attn.k = make_linear(prefix + ".attn.k", cfg_.dim, cfg_.dim, rng);
    b.attn.v = make_linear(prefix + ".attn.v", cfg_.dim, cfg_.dim, rng);
    b.attn.out = make_linear(prefix + ".attn.out", cfg_.dim, cfg_.dim, rng);
    b.attn.n_heads = cfg_.n_heads;
    b.ln2 = make_norm(prefix + ".ln2");
    b.ffn.fc1 = make_linear(prefix + ".ffn.fc1", cfg_.dim, cfg_.dim * cfg_.ffn_ratio, rng);
    b.ffn.fc2 = make_linear(prefix + ".ffn.fc2", cfg_.dim * cfg_.ffn_ratio, cfg_.dim, rng);
    b.ffn.dropout_p = cfg_.dropout_p;
    b.droppath_p = cfg_.droppath_p;
    return b;
  }

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
  modeldetail::Linear<S> patch_fc1_, patch_fc2_, patch_proj_;
  modeldetail::Linear<S> pos_fc1_, pos_fc2_;
  Tensor<S> cls_token_;
  std::vector<modeldetail::Block<S>> enc_;
  modeldetail::LayerNorm<S> enc_norm_;
  std::vector<modeldetail::Block<S>> dec_;
  modeldetail::LayerNorm<S> dec_norm_;
  modeldetail::Linear<S> head_fc1_, head_fc2_;
};

// Weight decay applies to matrix weights only, keyed off the ".weight"
// naming convention; biases, norm gains, and the CLS token stay undecayed.
template <typename S>
void register_params(AdamW<S>& opt, const std::vector<std::pair<std::string, Tensor<S>>>& params) {
  for (const auto& [name, t] : params) opt.add_param(name, t, name.find("weight") != std::string::npos);
}

// FNV-1a over parameter names and value bytes; order-sensitive. Used by
// tests to assert a frozen backbone stayed frozen.
template <typename S>
uint64_t params_fingerprint(const std::vector<std::pair<std::string, Tensor<S>>>& params) {
  uint64_t h = 1469598103934665603ull;
  auto eat = [&h](const unsigned char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params) {
    eat(reinterpret_cast<const unsigned char*>(name.data()), name.size());
    for (S v : t.value()) {
      const double d = double(v);
      eat(reinterpret_cast<const unsigned char*>(&d), sizeof(d));
    }
  }
  return h;
}

// Projects decoded tokens at masked centers back to full patches; a
// regression baseline over the same latent, kept apart from the main model.
template <typename S>
struct ReconstructionHead {
  Tensor<S> weight;  // [dim, 3 * patch_size]
  Tensor<S> bias;
  int patch_size = 0;

  ReconstructionHead(const ModelConfig& cfg, uint64_t seed) : patch_size(cfg.patch_size) {
    Rng rng(seed);
    std::vector<S> w(size_t(cfg.dim) * size_t(3 * cfg.patch_size));
    for (S& v : w) v = S(rng.normal() / std::sqrt(double(cfg.dim)));
    weight = Tensor<S>::param({cfg.dim, 3 * cfg.patch_size}, std::move(w));
    bias = Tensor<S>::param({3 * cfg.patch_size}, std::vector<S>(size_t(3 * cfg.patch_size), S(0)));
  }

  std::vector<std::pair<std::string, Tensor<S>>> params() const {
    return {{"recon.weight", weight}, {"recon.bias", bias}};
  }
};

// Mean Chamfer distance between predicted and true center-relative patches
// at the masked centers. Consumes rng like pretrain_forward minus the query
// draw.
template <typename S>
Tensor<S> reconstruction_baseline_loss(const MptModel<S>& model, const ReconstructionHead<S>& head,
                                       const PointCloud& cloud, const MaskConfig& mask_cfg, Rng& rng, bool training) {
  const ModelConfig& cfg = model.config();
  PatchSet ps = patchify(cloud, cfg.patch_count, cfg.patch_size);
  MaskPartition part = mask_cfg.mode == MaskMode::random ? random_mask(int(ps.centers.size()), mask_cfg.ratio, rng)
                                                         : block_mask(ps.centers, mask_cfg.ratio, rng);
  if (part.masked.empty()) throw std::invalid_argument("reconstruction_baseline_loss: nothing masked");

  std::vector<PointCloud> vis_groups;
  PointCloud vis_centers, masked_centers;
  for (int i : part.unmasked) {
    vis_groups.push_back(ps.groups[size_t(i)]);
    vis_centers.push_back(ps.centers[size_t(i)]);
  }
  for (int i : part.masked) masked_centers.push_back(ps.centers[size_t(i)]);

  auto enc = model.encode(model.embed_groups(vis_groups), model.pos_embed_points(vis_centers), training, rng);
  auto tokens = model.decode_tokens(enc, masked_centers, training, rng);
  auto flat = add_rowvec(matmul(tokens, head.weight), head.bias);

  Tensor<S> total;
  for (size_t g = 0; g < part.masked.size(); ++g) {
    auto pred = reshape(slice_rows(flat, int(g), 1), {head.patch_size, 3});
    auto cd = chamfer_loss(pred, ps.groups[size_t(part.masked[g])]);
    total = g == 0 ? cd : add(total, cd);
  }
  return scale(total, S(1.0 / double(part.masked.size())));
}

// MLP classifier over cloud descriptors. Both evaluation protocols train
// this same head; the linear probe differs only in freezing the encoder.
template <typename S>
class ClassifierHead {
 public:
  ClassifierHead(int model_dim, int n_classes, double dropout_p, uint64_t seed) : dropout_p_(dropout_p) {
    if (n_classes < 2) throw std::invalid_argument("ClassifierHead: need at least 2 classes");
    Rng rng(seed);
    const int in = 2 * model_dim;
    const int h1 = std::max(16, int(std::lround(model_dim * 4.0 / 3.0)));
    const int h2 = std::max(16, int(std::lround(model_dim * 2.0 / 3.0)));
    fc1_ = make_linear("cls_head.fc1", in, h1, rng);
    fc2_ = make_linear("cls_head.fc2", h1, h2, rng);
    fc3_ = make_linear("cls_head.fc3", h2, n_classes, rng);
  }

  Tensor<S> forward(const Tensor<S>& features, bool training, Rng& rng) const {
    auto h = dropout(gelu(fc1_(features)), dropout_p_, training, rng);
    h = dropout(gelu(fc2_(h)), dropout_p_, training, rng);
    return fc3_(h);
  }

  const std::vector<std::pair<std::string, Tensor<S>>>& params() const { return params_; }

 private:
  modeldetail::Linear<S> make_linear(const std::string& prefix, int in, int out, Rng& rng) {
    modeldetail::Linear<S> l;
    std::vector<S> w(size_t(in) * size_t(out));
    for (S& v : w) v = S(rng.normal() / std::sqrt(double(in)));
    l.weight = Tensor<S>::param({in, out}, std::move(w));
    l.bias = Tensor<S>::param({out}, std::vector<S>(size_t(out), S(0)));
    params_.emplace_back(prefix + ".weight", l.weight);
    params_.emplace_back(prefix + ".bias", l.bias);
    return l;
  }

  double dropout_p_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
  modeldetail::Linear<S> fc1_, fc2_, fc3_;
};

}  // namespace mpt
