#pragma once

// Clip model: per-frame convolutional feature pyramid with lateral
// connections, sinusoidal spatial + learned temporal encodings, and a
// video instance decoder that cross-attends instance queries against
// flattened spatio-temporal token volumes under per-layer attention masks.
// The final decoder layer can be re-run with its attention restricted to a
// frame subset to produce overlap embeddings for inter-clip matching.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "novis/rng.hpp"
#include "novis/tensor.hpp"

namespace novis {

struct ModelConfig {
  int scales = 3;    // F: pyramid scales, coarse to fine; the last is the mask scale
  int layers = 6;    // L: decoder layers
  int queries = 20;  // N
  int hidden = 64;   // C
  int classes = 3;   // K foreground classes; index K is background
  int t_max = 8;     // temporal table capacity
  int heads = 8;
  int ffn_mult = 4;
  bool attend_mask_scale = false;  // also cross-attend the mask-feature scale
  std::uint64_t seed = 1;

  int attention_scales() const { return attend_mask_scale ? scales : scales - 1; }
  // 1-based layer -> pyramid scale index (0 = coarsest).
  int scale_for_layer(int layer) const { return (layer - 1) % attention_scales(); }
};

template <typename S>
struct FeaturePyramidT {
  std::vector<TensorT<S>> scales;  // coarse to fine, each [T x C x H_f x W_f]
  int clip_len() const { return scales.front().dim(0); }
  int height(int f) const { return scales[static_cast<std::size_t>(f)].dim(2); }
  int width(int f) const { return scales[static_cast<std::size_t>(f)].dim(3); }
};

// Binarized attention mask over flattened spatio-temporal tokens.
struct TokenMask {
  int t = 0, h = 0, w = 0;             // token grid
  std::vector<std::uint8_t> keep;      // [N x t*h*w], 1 = attend
  long long tokens() const { return static_cast<long long>(t) * h * w; }
};

template <typename S>
struct AuxPredictionT {
  TensorT<S> class_logits;  // [N x (K+1)]
  TensorT<S> mask_logits;   // [N x T x H_F x W_F]
};

template <typename S>
struct DecodeResultT {
  TensorT<S> output_embeddings;  // [N x C], final decoder state after norm
  TensorT<S> class_logits;       // final prediction
  TensorT<S> mask_logits;        // final prediction
  std::vector<TokenMask> per_layer_masks;     // mask consumed by layer l+1, l = 0..L-1
  std::vector<AuxPredictionT<S>> aux;         // predictions after layers 1..L
  // Cached inputs of the last decoder layer for overlap re-computation.
  TensorT<S> last_layer_input;   // [N x C]
  TensorT<S> last_layer_tokens;  // [M x C]
  TensorT<S> last_layer_pos;     // [M x C]
  TokenMask last_layer_mask;     // effective mask the last layer attended with
  int clip_len = 0;
};

template <typename S>
struct OverlapResultT {
  TensorT<S> embeddings;              // [N x C]
  std::vector<std::uint8_t> fallback;  // 1 = query had no mask inside tau
};

// Sinusoidal 2-D position encoding, [h*w x channels]; first half encodes y,
// second half x, sin/cos interleaved with temperature 10000.
template <typename S>
TensorT<S> sine_position_encoding_2d(int h, int w, int channels) {
  check_contract(channels % 4 == 0, "sine encoding needs channels divisible by 4");
  TensorT<S> out(Shape{h * w, channels});
  const int half = channels / 2;
  const double two_pi = 6.283185307179586;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      S* row = out.data() + (static_cast<long long>(y) * w + x) * channels;
      const double py = (y + 0.5) / h * two_pi;
      const double px = (x + 0.5) / w * two_pi;
      for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, 2.0 * (k / 2) / half);
        const double ay = py / freq, axv = px / freq;
        row[k] = static_cast<S>(k % 2 == 0 ? std::sin(ay) : std::cos(ay));
        row[half + k] = static_cast<S>(k % 2 == 0 ? std::sin(axv) : std::cos(axv));
      }
    }
  return out;
}

template <typename S>
class VideoModelT {
 public:
  struct Conv {
    TensorT<S> w, b;
  };
  struct Linear {
    TensorT<S> w, b;
  };
  struct Norm {
    TensorT<S> g, b;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct DecoderLayer {
    Norm ca_norm;
    Attention ca;
    Norm sa_norm;
    Attention sa;
    Norm ffn_norm;
    Linear ffn1, ffn2;
  };

  explicit VideoModelT(ModelConfig cfg) : cfg_(cfg) {
    check_contract(cfg_.scales >= 2, "model: need at least two scales");
    check_contract(cfg_.hidden % cfg_.heads == 0, "model: hidden must divide by heads");
    check_contract(cfg_.layers % cfg_.attention_scales() == 0,
                   "model: layers must divide evenly over the attention scales");
    Rng rng(cfg_.seed);
    init_params(rng);
  }

  const ModelConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, TensorT<S>>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, TensorT<S>>>& parameters() const { return params_; }

  TensorT<S>& param(const std::string& name) {
    for (auto& [n, t] : params_)
      if (n == name) return t;
    throw contract_error("unknown parameter " + name);
  }

  void set_training(bool on) {
    for (auto& [n, t] : params_) t.set_requires_grad(on);
  }

  // ---- feature pyramid -----------------------------------------------

  // frames: [T x 3 x H x W], H and W divisible by 16. Produces cfg.scales
  // feature volumes at 1/16, 1/8, 1/4 resolution (coarse to fine), all with
  // C channels. Strictly per-frame: no temporal mixing.
  FeaturePyramidT<S> extract_pyramid(const TensorT<S>& frames) const {
    check_contract(frames.rank() == 4 && frames.dim(1) == 3,
                   "extract_pyramid: frames must be [T x 3 x H x W]");
    check_contract(frames.dim(2) % 16 == 0 && frames.dim(3) % 16 == 0,
                   "extract_pyramid: resolution must be divisible by 16");
    auto act = [&](const TensorT<S>& x, const Conv& c, int stride) {
      return relu(bias_channels(conv2d(x, c.w, stride), c.b));
    };
    auto b1 = act(act(frames, stem1_, 2), stem2_, 2);  // 1/4
    auto b2 = act(b1, down3_, 2);                      // 1/8
    auto b3 = act(b2, down4_, 2);                      // 1/16

    auto lat = [&](const TensorT<S>& x, const Conv& c) {
      return bias_channels(conv2d(x, c.w, 1), c.b);
    };
    auto p3 = lat(b3, lateral_[0]);
    auto p2 = add(lat(b2, lateral_[1]), bilinear_resize(p3, b2.dim(2), b2.dim(3)));
    auto p1 = add(lat(b1, lateral_[2]), bilinear_resize(p2, b1.dim(2), b1.dim(3)));

    FeaturePyramidT<S> pyr;
    pyr.scales.push_back(lat(p3, out_[0]));
    pyr.scales.push_back(lat(p2, out_[1]));
    pyr.scales.push_back(lat(p1, out_[2]));
    return pyr;
  }

  // ---- positional encodings -------------------------------------------

  // Per scale: [T*H_f*W_f x C] token encodings; sinusoidal over (y, x) plus
  // the learned temporal row of the token's frame.
  std::vector<TensorT<S>> encode_positions(const FeaturePyramidT<S>& pyr) const {
    const int t = pyr.clip_len();
    check_contract(t <= cfg_.t_max, "encode_positions: clip length exceeds t_max");
    std::vector<int> frame_rows(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) frame_rows[static_cast<std::size_t>(i)] = i;
    auto temporal_rows = gather_rows(temporal_table_, frame_rows);  // [T x C]
    std::vector<TensorT<S>> out;
    out.reserve(pyr.scales.size());
    for (std::size_t f = 0; f < pyr.scales.size(); ++f) {
      auto spatial = sine_position_encoding_2d<S>(pyr.height(static_cast<int>(f)),
                                                  pyr.width(static_cast<int>(f)), cfg_.hidden);
      out.push_back(cross_add_rows(temporal_rows, spatial));
    }
    return out;
  }

  // ---- decoding ---------------------------------------------------------

  DecodeResultT<S> decode_clip(const FeaturePyramidT<S>& pyr) const {
    const int t = pyr.clip_len();
    const int n = cfg_.queries, c = cfg_.hidden;
    const int mask_scale = cfg_.scales - 1;
    auto pos = encode_positions(pyr);

    // Flatten each attention scale into [T*H*W x C] token tables.
    std::vector<TensorT<S>> tokens(pyr.scales.size());
    for (std::size_t f = 0; f < pyr.scales.size(); ++f) {
      const auto& feat = pyr.scales[f];
      tokens[f] = reshape(permute(feat, {0, 2, 3, 1}),
                          {feat.dim(0) * feat.dim(2) * feat.dim(3), c});
    }

    // [C x T*H_F*W_F] view of the mask features for the prediction head.
    const auto& mf = pyr.scales[static_cast<std::size_t>(mask_scale)];
    auto mask_feat = reshape(permute(mf, {1, 0, 2, 3}),
                             {c, mf.dim(0) * mf.dim(2) * mf.dim(3)});
    const int mh = mf.dim(2), mw = mf.dim(3);

    DecodeResultT<S> result;
    result.clip_len = t;

    auto predict = [&](const TensorT<S>& x) {
      auto normed = layer_norm(x, decoder_norm_.g, decoder_norm_.b);
      AuxPredictionT<S> p;
      p.class_logits = linear(normed, cls_.w, cls_.b);
      auto e1 = relu(linear(normed, mask_mlp_[0].w, mask_mlp_[0].b));
      auto e2 = relu(linear(e1, mask_mlp_[1].w, mask_mlp_[1].b));
      auto embed = linear(e2, mask_mlp_[2].w, mask_mlp_[2].b);
      p.mask_logits = reshape(matmul(embed, mask_feat), {n, t, mh, mw});
      return std::make_pair(p, normed);
    };

    auto x = query_content_;
    auto init_pred = predict(x).first;
    for (int l = 1; l <= cfg_.layers; ++l) {
      const int f = cfg_.scale_for_layer(l);
      const auto& prev_logits = l == 1 ? init_pred.mask_logits
                                       : result.aux[static_cast<std::size_t>(l - 2)].mask_logits;
      TokenMask mask = binarize_to_scale(prev_logits, pyr.height(f), pyr.width(f));
      result.per_layer_masks.push_back(mask);
      if (l == cfg_.layers) {
        result.last_layer_input = x;
        result.last_layer_tokens = tokens[static_cast<std::size_t>(f)];
        result.last_layer_pos = pos[static_cast<std::size_t>(f)];
        result.last_layer_mask = mask;
      }
      x = run_layer(layers_[static_cast<std::size_t>(l - 1)], x,
                    tokens[static_cast<std::size_t>(f)], pos[static_cast<std::size_t>(f)], mask);
      auto [pred, normed] = predict(x);
      result.aux.push_back(pred);
      if (l == cfg_.layers) result.output_embeddings = normed;
    }
    result.class_logits = result.aux.back().class_logits;
    result.mask_logits = result.aux.back().mask_logits;
    return result;
  }

  // Convenience: pyramid + decode in one call.
  DecodeResultT<S> forward(const TensorT<S>& frames) const {
    return decode_clip(extract_pyramid(frames));
  }

  // ---- overlap embeddings -------------------------------------------------
  //
  // Re-runs the last decoder layer from its cached inputs with attention
  // restricted to local frames [tau_begin, tau_end). Queries with no active
  // attention position inside tau keep their original output embedding and
  // get the fallback flag.
  OverlapResultT<S> overlap_embeddings(const DecodeResultT<S>& d, int tau_begin,
                                       int tau_end) const {
    check_contract(tau_begin >= 0 && tau_end <= d.clip_len && tau_begin < tau_end,
                   "overlap_embeddings: tau must be a non-empty frame interval");
    const int n = cfg_.queries;
    const TokenMask& full = d.last_layer_mask;
    const long long plane = static_cast<long long>(full.h) * full.w;

    TokenMask restricted = full;
    OverlapResultT<S> out;
    out.fallback.assign(static_cast<std::size_t>(n), 0);
    for (int q = 0; q < n; ++q) {
      bool any = false;
      for (int ft = 0; ft < full.t; ++ft) {
        const bool inside = ft >= tau_begin && ft < tau_end;
        for (long long p = 0; p < plane; ++p) {
          const std::size_t idx =
              static_cast<std::size_t>(q * full.tokens() + ft * plane + p);
          if (!inside)
            restricted.keep[idx] = 0;
          else if (restricted.keep[idx])
            any = true;
        }
      }
      if (!any) out.fallback[static_cast<std::size_t>(q)] = 1;
    }

    auto x = run_layer(layers_.back(), d.last_layer_input, d.last_layer_tokens,
                       d.last_layer_pos, restricted);
    auto recomputed = layer_norm(x, decoder_norm_.g, decoder_norm_.b);

    TensorT<S> emb({n, cfg_.hidden});
    for (int q = 0; q < n; ++q) {
      const S* src = out.fallback[static_cast<std::size_t>(q)]
                         ? d.output_embeddings.data() + static_cast<long long>(q) * cfg_.hidden
                         : recomputed.data() + static_cast<long long>(q) * cfg_.hidden;
      std::copy(src, src + cfg_.hidden, emb.data() + static_cast<long long>(q) * cfg_.hidden);
    }
    out.embeddings = emb;
    return out;
  }

  // Exposed for the layer-recomputation oracle in tests.
  TensorT<S> run_layer(const DecoderLayer& lp, const TensorT<S>& x, const TensorT<S>& tokens,
                       const TensorT<S>& pos, const TokenMask& mask) const {
    TensorT<S> mask_tensor({cfg_.queries, static_cast<int>(mask.tokens())});
    for (long long i = 0; i < mask_tensor.size(); ++i)
      mask_tensor.data()[i] = static_cast<S>(mask.keep[static_cast<std::size_t>(i)]);

    // masked cross-attention
    auto x1 = layer_norm(x, lp.ca_norm.g, lp.ca_norm.b);
    auto ca = attention(lp.ca, add(x1, query_pos_), add(tokens, pos), tokens, &mask_tensor);
    auto h = add(x, ca);
    // query self-attention
    auto h1 = layer_norm(h, lp.sa_norm.g, lp.sa_norm.b);
    auto qk = add(h1, query_pos_);
    auto sa = attention(lp.sa, qk, qk, h1, nullptr);
    auto h2 = add(h, sa);
    // feed-forward
    auto h3 = layer_norm(h2, lp.ffn_norm.g, lp.ffn_norm.b);
    auto ff = linear(relu(linear(h3, lp.ffn1.w, lp.ffn1.b)), lp.ffn2.w, lp.ffn2.b);
    return add(h2, ff);
  }

  const std::vector<DecoderLayer>& decoder_layers() const { return layers_; }
  const Norm& decoder_norm() const { return decoder_norm_; }
  const TensorT<S>& query_content() const { return query_content_; }
  const TensorT<S>& query_pos() const { return query_pos_; }
  TensorT<S>& temporal_table() { return temporal_table_; }

 private:
  TensorT<S> attention(const Attention& ap, const TensorT<S>& q_in, const TensorT<S>& k_in,
                       const TensorT<S>& v_in, const TensorT<S>* mask) const {
    const int n = q_in.dim(0), m = k_in.dim(0);
    const int heads = cfg_.heads, dh = cfg_.hidden / cfg_.heads;
    auto split = [&](const TensorT<S>& x, const Linear& w, int rows) {
      return permute(reshape(linear(x, w.w, w.b), {rows, heads, dh}), {1, 0, 2});
    };
    auto qh = split(q_in, ap.q, n);
    auto kh = split(k_in, ap.k, m);
    auto vh = split(v_in, ap.v, m);
    auto logits = scale(bmm_nt(qh, kh), static_cast<S>(1.0 / std::sqrt(double(dh))));
    TensorT<S> probs;
    if (mask) {
      probs = masked_softmax(logits, *mask);
    } else {
      TensorT<S> ones({n, m}, std::vector<S>(static_cast<std::size_t>(n) * m, S(1)));
      probs = masked_softmax(logits, ones);
    }
    auto ctx = reshape(permute(bmm(probs, vh), {1, 0, 2}), {n, cfg_.hidden});
    return linear(ctx, ap.o.w, ap.o.b);
  }

  // Threshold sigmoid probabilities at 0.5 after bilinear rescaling to the
  // attention grid. The mask is a constant for the gradient.
  TokenMask binarize_to_scale(const TensorT<S>& mask_logits, int h, int w) const {
    auto probs = sigmoid(mask_logits.detached());
    auto resized = bilinear_resize(probs, h, w);  // [N x T x h x w]
    TokenMask m;
    m.t = resized.dim(1);
    m.h = h;
    m.w = w;
    m.keep.resize(static_cast<std::size_t>(resized.size()));
    for (long long i = 0; i < resized.size(); ++i)
      m.keep[static_cast<std::size_t>(i)] = resized.data()[i] > S(0.5) ? 1 : 0;
    return m;
  }

  void init_params(Rng& rng) {
    auto reg = [&](const std::string& name, TensorT<S>& t) { params_.emplace_back(name, t); };
    auto he_conv = [&](const std::string& name, int cout, int cin, int k) {
      Conv c{TensorT<S>({cout, cin, k, k}), TensorT<S>({cout})};
      const double std = std::sqrt(2.0 / (cin * k * k));
      for (long long i = 0; i < c.w.size(); ++i) c.w.data()[i] = static_cast<S>(rng.normal(0, std));
      reg(name + ".w", c.w);
      reg(name + ".b", c.b);
      return c;
    };
    auto xavier_linear = [&](const std::string& name, int cout, int cin, bool zero = false) {
      Linear l{TensorT<S>({cout, cin}), TensorT<S>({cout})};
      if (!zero) {
        const double bound = std::sqrt(6.0 / (cin + cout));
        for (long long i = 0; i < l.w.size(); ++i)
          l.w.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
      }
      reg(name + ".w", l.w);
      reg(name + ".b", l.b);
      return l;
    };
    auto norm = [&](const std::string& name) {
      Norm nm{TensorT<S>({cfg_.hidden}, S(1)), TensorT<S>({cfg_.hidden})};
      reg(name + ".g", nm.g);
      reg(name + ".b", nm.b);
      return nm;
    };
    auto attn = [&](const std::string& name) {
      Attention a;
      a.q = xavier_linear(name + ".q", cfg_.hidden, cfg_.hidden);
      a.k = xavier_linear(name + ".k", cfg_.hidden, cfg_.hidden);
      a.v = xavier_linear(name + ".v", cfg_.hidden, cfg_.hidden);
      a.o = xavier_linear(name + ".o", cfg_.hidden, cfg_.hidden);
      return a;
    };

    const int c = cfg_.hidden;
    const int w1 = std::max(8, c / 4), w2 = std::max(8, c / 2), w3 = std::max(8, 3 * c / 4);
    stem1_ = he_conv("backbone.stem1", w1, 3, 3);
    stem2_ = he_conv("backbone.stem2", w2, w1, 3);
    down3_ = he_conv("backbone.down3", w3, w2, 3);
    down4_ = he_conv("backbone.down4", c, w3, 3);
    lateral_.push_back(he_conv("backbone.lateral0", c, c, 1));
    lateral_.push_back(he_conv("backbone.lateral1", c, w3, 1));
    lateral_.push_back(he_conv("backbone.lateral2", c, w2, 1));
    for (int i = 0; i < 3; ++i)
      out_.push_back(he_conv("backbone.out" + std::to_string(i), c, c, 3));

    query_content_ = TensorT<S>({cfg_.queries, c});
    query_pos_ = TensorT<S>({cfg_.queries, c});
    for (long long i = 0; i < query_content_.size(); ++i)
      query_content_.data()[i] = static_cast<S>(rng.normal(0, 1.0));
    for (long long i = 0; i < query_pos_.size(); ++i)
      query_pos_.data()[i] = static_cast<S>(rng.normal(0, 1.0));
    reg("query.content", query_content_);
    reg("query.pos", query_pos_);

    temporal_table_ = TensorT<S>({cfg_.t_max, c});
    for (long long i = 0; i < temporal_table_.size(); ++i)
      temporal_table_.data()[i] = static_cast<S>(rng.normal(0, 0.02));
    reg("temporal.table", temporal_table_);

    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string base = "decoder.layer" + std::to_string(l);
      DecoderLayer lp;
      lp.ca_norm = norm(base + ".ca_norm");
      lp.ca = attn(base + ".ca");
      lp.sa_norm = norm(base + ".sa_norm");
      lp.sa = attn(base + ".sa");
      lp.ffn_norm = norm(base + ".ffn_norm");
      lp.ffn1 = xavier_linear(base + ".ffn1", c * cfg_.ffn_mult, c);
      lp.ffn2 = xavier_linear(base + ".ffn2", c, c * cfg_.ffn_mult);
      layers_.push_back(lp);
    }

    decoder_norm_ = norm("head.norm");
    cls_ = xavier_linear("head.cls", cfg_.classes + 1, c, /*zero=*/true);
    mask_mlp_.push_back(xavier_linear("head.mask0", c, c));
    mask_mlp_.push_back(xavier_linear("head.mask1", c, c));
    mask_mlp_.push_back(xavier_linear("head.mask2", c, c, /*zero=*/true));
  }

  ModelConfig cfg_;
  Conv stem1_, stem2_, down3_, down4_;
  std::vector<Conv> lateral_, out_;
  TensorT<S> query_content_, query_pos_, temporal_table_;
  std::vector<DecoderLayer> layers_;
  Norm decoder_norm_;
  Linear cls_;
  std::vector<Linear> mask_mlp_;
  std::vector<std::pair<std::string, TensorT<S>>> params_;
};

using VideoModel = VideoModelT<float>;

}  // namespace novis
