#ifndef GAITSET_SETPOOL_HPP_
#define GAITSET_SETPOOL_HPP_

#include <string>
#include <vector>

#include "gaitset/ops.hpp"
#include "gaitset/params.hpp"
#include "gaitset/tensor.hpp"

namespace gaitset {

// Aggregation strategies for collapsing the set axis. JointConv and
// Attention carry trainable 1x1 combiner weights; the rest are parameter-free.
enum class SpStrategy { kMax, kMean, kMedian, kJointSum, kJointConv, kAttention };

inline const char* sp_strategy_name(SpStrategy s) {
  switch (s) {
    case SpStrategy::kMax: return "max";
    case SpStrategy::kMean: return "mean";
    case SpStrategy::kMedian: return "median";
    case SpStrategy::kJointSum: return "jointsum";
    case SpStrategy::kJointConv: return "jointconv";
    case SpStrategy::kAttention: return "attention";
  }
  return "?";
}

inline SpStrategy parse_sp_strategy(const std::string& name) {
  for (SpStrategy s : {SpStrategy::kMax, SpStrategy::kMean, SpStrategy::kMedian,
                       SpStrategy::kJointSum, SpStrategy::kJointConv, SpStrategy::kAttention})
    if (name == sp_strategy_name(s)) return s;
  throw ConfigError("unknown set-pooling strategy: " + name +
                    " (expected max|mean|median|jointsum|jointconv|attention)");
}

inline bool sp_strategy_has_params(SpStrategy s) {
  return s == SpStrategy::kJointConv || s == SpStrategy::kAttention;
}

// Registers the trainable weights one pooling site needs, namespaced under
// `prefix`. Each site (main pipeline stage) owns its own combiner.
template <typename T>
void register_set_pool_params(BasicParameterStore<T>& store, SpStrategy strategy,
                              const std::string& prefix, int64_t channels, uint64_t seed) {
  if (strategy == SpStrategy::kJointConv)
    store.create(prefix + ".joint.w", Shape{channels, 3 * channels, 1, 1}, 3 * channels, seed);
  else if (strategy == SpStrategy::kAttention)
    store.create(prefix + ".attn.w", Shape{channels, 4 * channels, 1, 1}, 4 * channels, seed);
}

namespace detail {

template <typename T>
void check_frame_set(const BasicTensor<T>& frames, const char* who) {
  if (frames.rank() != 4)
    throw ShapeError(std::string(who) + ": expected frames [n,c,h,w], got " +
                     shape_str(frames.shape()));
}

}  // namespace detail

// Eq. 3 join: elementwise max + mean + median over the set axis.
template <typename T>
BasicTensor<T> joint_sum_pool(const BasicTensor<T>& frames) {
  detail::check_frame_set(frames, "joint_sum_pool");
  return add(add(reduce_max0(frames), reduce_mean0(frames)), reduce_median0(frames));
}

// Eq. 4 join: the three statistics concatenated on channels, then combined by
// a learned 1x1 convolution mapping 3c -> c.
template <typename T>
BasicTensor<T> joint_conv_pool(const BasicTensor<T>& frames, const BasicTensor<T>& combiner) {
  detail::check_frame_set(frames, "joint_conv_pool");
  const int64_t c = frames.dim(1);
  if (combiner.rank() != 4 || combiner.dim(0) != c || combiner.dim(1) != 3 * c ||
      combiner.dim(2) != 1 || combiner.dim(3) != 1)
    throw ShapeError("joint_conv_pool: combiner must be [c,3c,1,1] for c=" + std::to_string(c) +
                     ", got " + shape_str(combiner.shape()));
  std::vector<BasicTensor<T>> stats{reduce_max0(frames), reduce_mean0(frames),
                                    reduce_median0(frames)};
  auto cat = concat(stats, 0);  // [3c,h,w]
  auto mixed = conv2d(reshape(cat, Shape{1, 3 * c, frames.dim(2), frames.dim(3)}), combiner);
  return reshape(mixed, Shape{c, frames.dim(2), frames.dim(3)});
}

// Attention refinement: global statistics are broadcast back to every frame,
// concatenated with it on channels, and a 1x1 convolution (4c -> c) produces
// an elementwise attention map. Refined frame = frame * map + frame
// (residual), and the set collapses by elementwise max over refined frames.
// No squashing is applied to the map.
template <typename T>
BasicTensor<T> attention_pool(const BasicTensor<T>& frames, const BasicTensor<T>& weight) {
  detail::check_frame_set(frames, "attention_pool");
  const int64_t n = frames.dim(0), c = frames.dim(1);
  if (weight.rank() != 4 || weight.dim(0) != c || weight.dim(1) != 4 * c || weight.dim(2) != 1 ||
      weight.dim(3) != 1)
    throw ShapeError("attention_pool: weight must be [c,4c,1,1] for c=" + std::to_string(c) +
                     ", got " + shape_str(weight.shape()));
  std::vector<BasicTensor<T>> cat_parts{broadcast0(reduce_max0(frames), n),
                                        broadcast0(reduce_mean0(frames), n),
                                        broadcast0(reduce_median0(frames), n), frames};
  auto att = conv2d(concat(cat_parts, 1), weight);  // [n,c,h,w]
  auto refined = add(mul(frames, att), frames);
  return reduce_max0(refined);
}

// Dispatch over all six strategies. `params`/`prefix` supply the combiner
// weights for the trainable ones and are ignored otherwise.
template <typename T>
BasicTensor<T> set_pool(const BasicTensor<T>& frames, SpStrategy strategy,
                        const BasicParameterStore<T>* params = nullptr,
                        const std::string& prefix = "") {
  detail::check_frame_set(frames, "set_pool");
  switch (strategy) {
    case SpStrategy::kMax: return reduce_max0(frames);
    case SpStrategy::kMean: return reduce_mean0(frames);
    case SpStrategy::kMedian: return reduce_median0(frames);
    case SpStrategy::kJointSum: return joint_sum_pool(frames);
    case SpStrategy::kJointConv:
      if (!params) throw ConfigError("set_pool: jointconv needs a parameter store");
      return joint_conv_pool(frames, params->get(prefix + ".joint.w"));
    case SpStrategy::kAttention:
      if (!params) throw ConfigError("set_pool: attention needs a parameter store");
      return attention_pool(frames, params->get(prefix + ".attn.w"));
  }
  throw ConfigError("set_pool: unreachable strategy value");
}

}  // namespace gaitset

#endif  // GAITSET_SETPOOL_HPP_
