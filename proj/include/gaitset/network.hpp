#ifndef GAITSET_NETWORK_HPP_
#define GAITSET_NETWORK_HPP_

#include <map>
#include <string>
#include <vector>

#include "gaitset/ops.hpp"
#include "gaitset/params.hpp"
#include "gaitset/setpool.hpp"
#include "gaitset/tensor.hpp"

namespace gaitset {

// Architecture knobs. Defaults follow the CASIA-B scale configuration
// (32/32/64/64/128/128 channels, 5 pyramid scales); channel counts double for
// the large-population preset.
struct NetworkConfig {
  int64_t c1 = 32, c2 = 32, c3 = 64, c4 = 64, c5 = 128, c6 = 128;
  int64_t scales = 5;      // pyramid scale count S
  int64_t embed_dim = 256; // d, per-strip embedding width
  SpStrategy sp_strategy = SpStrategy::kMax;
  double leaky_slope = 0.1;
  bool mgp_enabled = true;
  bool hpm_independent = true;
  int64_t input_h = 64, input_w = 44;
  bool gei_input = false;  // collapse the set to its mean image (n=1 set)

  int64_t strip_count() const { return pyramid_strip_count(scales); }
  int64_t embedding_rows() const { return (mgp_enabled ? 2 : 1) * strip_count(); }
  // two 2x2 downsamplings
  int64_t final_h() const { return input_h / 4; }
  int64_t final_w() const { return input_w / 4; }

  void validate() const {
    for (int64_t c : {c1, c2, c3, c4, c5, c6})
      if (c <= 0) throw ConfigError("network config: channel counts must be positive");
    if (scales < 1) throw ConfigError("network config: scales must be >= 1");
    if (embed_dim <= 0) throw ConfigError("network config: embed_dim must be positive");
    if (input_h <= 0 || input_w <= 0 || input_h % 4 != 0 || input_w % 4 != 0)
      throw ConfigError("network config: input size must be positive and divisible by 4, got " +
                        std::to_string(input_h) + "x" + std::to_string(input_w));
    const int64_t finest = int64_t(1) << (scales - 1);
    if (final_h() % finest != 0)
      throw ConfigError("network config: final feature height " + std::to_string(final_h()) +
                        " not divisible by 2^(S-1)=" + std::to_string(finest));
    if (!(leaky_slope > -1.0) || !(leaky_slope < 10.0))
      throw ConfigError("network config: implausible leaky slope");
  }
};

// key-value (de)serialization shared by the config sidecar file and the
// checkpoint metadata block
std::map<std::string, std::string> config_to_meta(const NetworkConfig& config);
NetworkConfig config_from_meta(const std::map<std::string, std::string>& meta);
void save_kv_file(const std::string& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> load_kv_file(const std::string& path);

// The full model: per-frame backbone (C1-C6), set pooling taps, the parallel
// global pipeline with unshared weights, and the pyramid mapping head.
template <typename T>
class BasicGaitSet {
 public:
  BasicGaitSet(NetworkConfig config, BasicParameterStore<T> params)
      : config_(config), params_(std::move(params)) {
    config_.validate();
  }

  // Fresh model with all weights drawn from (seed, parameter name).
  static BasicGaitSet init(const NetworkConfig& config, uint64_t seed) {
    config.validate();
    BasicParameterStore<T> ps;
    auto conv = [&](const std::string& name, int64_t co, int64_t ci, int64_t k) {
      ps.create(name, Shape{co, ci, k, k}, ci * k * k, seed);
    };
    conv("backbone.c1.w", config.c1, 1, 5);
    conv("backbone.c2.w", config.c2, config.c1, 3);
    conv("backbone.c3.w", config.c3, config.c2, 3);
    conv("backbone.c4.w", config.c4, config.c3, 3);
    conv("backbone.c5.w", config.c5, config.c4, 3);
    conv("backbone.c6.w", config.c6, config.c5, 3);
    register_set_pool_params(ps, config.sp_strategy, "setpool.stage3", config.c6, seed);
    if (config.mgp_enabled) {
      register_set_pool_params(ps, config.sp_strategy, "setpool.stage1", config.c2, seed);
      register_set_pool_params(ps, config.sp_strategy, "setpool.stage2", config.c4, seed);
      conv("mgp.b1.w", config.c3, config.c2, 3);
      conv("mgp.b2.w", config.c4, config.c3, 3);
      conv("mgp.b3.w", config.c5, config.c4, 3);
      conv("mgp.b4.w", config.c6, config.c5, 3);
    }
    auto head = [&](const std::string& name) {
      if (config.hpm_independent)
        ps.create(name, Shape{config.strip_count(), config.c6, config.embed_dim}, config.c6, seed);
      else
        ps.create(name, Shape{config.c6, config.embed_dim}, config.c6, seed);
    };
    head("hpm.main.w");
    if (config.mgp_enabled) head("hpm.mgp.w");
    return BasicGaitSet(config, std::move(ps));
  }

  const NetworkConfig& config() const { return config_; }
  BasicParameterStore<T>& params() { return params_; }
  const BasicParameterStore<T>& params() const { return params_; }

  struct StageFeatures {
    BasicTensor<T> s1;  // after C2 + pool   [n, c2, h/2, w/2]
    BasicTensor<T> s2;  // after C4 + pool   [n, c4, h/4, w/4]
    BasicTensor<T> s3;  // after C6          [n, c6, h/4, w/4]
  };

  // Shared-weight frame-level pipeline; every frame processed independently.
  StageFeatures backbone_forward(const BasicTensor<T>& frames) const {
    if (frames.rank() != 4 || frames.dim(1) != 1)
      throw ShapeError("backbone: expected silhouettes [n,1,h,w], got " +
                       shape_str(frames.shape()));
    if (frames.dim(2) != config_.input_h || frames.dim(3) != config_.input_w)
      throw ShapeError("backbone: spatial size " + std::to_string(frames.dim(2)) + "x" +
                       std::to_string(frames.dim(3)) + " does not match configured " +
                       std::to_string(config_.input_h) + "x" + std::to_string(config_.input_w));
    const T slope = static_cast<T>(config_.leaky_slope);
    auto act = [&](BasicTensor<T> x) { return leaky_relu(x, slope); };
    StageFeatures out;
    auto x = act(conv2d(frames, params_.get("backbone.c1.w")));
    x = act(conv2d(x, params_.get("backbone.c2.w")));
    out.s1 = spatial_max_pool(x);
    x = act(conv2d(out.s1, params_.get("backbone.c3.w")));
    x = act(conv2d(x, params_.get("backbone.c4.w")));
    out.s2 = spatial_max_pool(x);
    x = act(conv2d(out.s2, params_.get("backbone.c5.w")));
    out.s3 = act(conv2d(x, params_.get("backbone.c6.w")));
    return out;
  }

  // Pools one sample's stage features (its frames occupy rows [f0, f0+n) of
  // the batched stage tensors) and returns set-level maps, each [1,c,h,w].
  struct SetFeatures {
    BasicTensor<T> g1, g2, g3;
  };

  SetFeatures pool_stages(const StageFeatures& stages, int64_t f0, int64_t n) const {
    auto pool_one = [&](const BasicTensor<T>& feats, const char* site) {
      auto sample = slice(feats, 0, f0, n);
      auto z = set_pool(sample, config_.sp_strategy, &params_, std::string("setpool.") + site);
      Shape s = z.shape();  // [c,h,w]
      return reshape(z, Shape{1, s[0], s[1], s[2]});
    };
    SetFeatures out;
    out.g3 = pool_one(stages.s3, "stage3");
    if (config_.mgp_enabled) {
      out.g1 = pool_one(stages.s1, "stage1");
      out.g2 = pool_one(stages.s2, "stage2");
    }
    return out;
  }

  // The parallel pipeline: consumes the stage-1 set feature, mirrors the main
  // pipeline's block structure with its own weights, and adds the deeper set
  // features after the matching block. Inputs are batched [B,c,h,w].
  BasicTensor<T> mgp_forward(const BasicTensor<T>& g1, const BasicTensor<T>& g2,
                             const BasicTensor<T>& g3) const {
    if (!config_.mgp_enabled) throw ConfigError("mgp_forward: pipeline disabled in config");
    const T slope = static_cast<T>(config_.leaky_slope);
    auto act = [&](BasicTensor<T> x) { return leaky_relu(x, slope); };
    auto x = act(conv2d(g1, params_.get("mgp.b1.w")));
    x = act(conv2d(x, params_.get("mgp.b2.w")));
    x = spatial_max_pool(x);
    x = add(x, g2);
    x = act(conv2d(x, params_.get("mgp.b3.w")));
    x = act(conv2d(x, params_.get("mgp.b4.w")));
    return add(x, g3);
  }

  // Pyramid head over a batch of set-level maps: [B,c,h,w] -> [B, 2^S-1, d].
  BasicTensor<T> hpm_forward(const BasicTensor<T>& set_features, const std::string& head) const {
    auto strips = strip_pool(set_features, config_.scales);  // [B,T,c]
    const auto& w = params_.get(head + ".w");
    if (config_.hpm_independent) {
      if (w.rank() != 3 || w.dim(0) != config_.strip_count())
        throw ShapeError("hpm_forward: expected " + std::to_string(config_.strip_count()) +
                         " independent strip maps in " + head + ", got " + shape_str(w.shape()));
      return strip_affine(strips, w);
    }
    if (w.rank() != 2)
      throw ShapeError("hpm_forward: expected one shared strip map in " + head + ", got " +
                       shape_str(w.shape()));
    return affine(strips, w);
  }

  // [B, rows, d] embeddings for B samples presented as one frame block with
  // per-sample offsets; sets may have different cardinalities.
  BasicTensor<T> embed_frame_block(const BasicTensor<T>& frames,
                                   const std::vector<int64_t>& cardinalities) const {
    int64_t total = 0;
    for (int64_t n : cardinalities) {
      if (n <= 0) throw ShapeError("embed: set cardinality must be positive");
      total += n;
    }
    if (total != frames.dim(0))
      throw ShapeError("embed: cardinalities sum to " + std::to_string(total) + " but " +
                       std::to_string(frames.dim(0)) + " frames given");
    auto input = frames;
    std::vector<int64_t> cards = cardinalities;
    if (config_.gei_input) {
      // GEI ablation arm: each set collapses to its mean image, fed as an
      // n=1 set; everything downstream is unchanged
      std::vector<BasicTensor<T>> means;
      means.reserve(cards.size());
      int64_t f0 = 0;
      for (int64_t n : cards) {
        means.push_back(reduce_mean0(slice(frames, 0, f0, n)));
        f0 += n;
      }
      input = concat(means, 0);  // [B,1,h,w] (each mean is [1,h,w])
      Shape s = input.shape();
      input = reshape(input, Shape{static_cast<int64_t>(cards.size()), 1, s[1], s[2]});
      std::fill(cards.begin(), cards.end(), 1);
    }
    auto stages = backbone_forward(input);
    std::vector<BasicTensor<T>> g1s, g2s, g3s;
    int64_t f0 = 0;
    for (int64_t n : cards) {
      auto sf = pool_stages(stages, f0, n);
      g3s.push_back(sf.g3);
      if (config_.mgp_enabled) {
        g1s.push_back(sf.g1);
        g2s.push_back(sf.g2);
      }
      f0 += n;
    }
    auto g3 = g3s.size() == 1 ? g3s[0] : concat(g3s, 0);
    auto main_rows = hpm_forward(g3, "hpm.main");  // [B,T,d]
    if (!config_.mgp_enabled) return main_rows;
    auto g1 = g1s.size() == 1 ? g1s[0] : concat(g1s, 0);
    auto g2 = g2s.size() == 1 ? g2s[0] : concat(g2s, 0);
    auto mgp_rows = hpm_forward(mgp_forward(g1, g2, g3), "hpm.mgp");
    std::vector<BasicTensor<T>> rows{main_rows, mgp_rows};
    return concat(rows, 1);  // [B, 2T, d]
  }

  // Single-sample convenience: [n,1,h,w] -> [rows, d].
  BasicTensor<T> embed_set(const BasicTensor<T>& frames) const {
    auto out = embed_frame_block(frames, {frames.dim(0)});
    return reshape(out, Shape{config_.embedding_rows(), config_.embed_dim});
  }

 private:
  NetworkConfig config_;
  BasicParameterStore<T> params_;
};

using GaitSetModel = BasicGaitSet<float>;

}  // namespace gaitset

#endif  // GAITSET_NETWORK_HPP_
