#ifndef GAITSET_METRIC_HPP_
#define GAITSET_METRIC_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gaitset/network.hpp"
#include "gaitset/ops.hpp"
#include "gaitset/rng.hpp"
#include "gaitset/tensor.hpp"

namespace gaitset {

// p identities x k samples, m frames per sample.
struct BatchSpec {
  int64_t p = 8;
  int64_t k = 16;
  int64_t m = 30;

  void validate() const {
    if (p < 2 || k < 2)
      throw ConfigError("batch spec: need p >= 2 and k >= 2 for valid triplets, got p=" +
                        std::to_string(p) + " k=" + std::to_string(k));
    if (m < 1) throw ConfigError("batch spec: set cardinality must be positive");
  }
};

struct TripletLossReport {
  double total = 0.0;
  double nonzero_fraction = 0.0;      // active hinge terms / all valid triplets
  std::vector<double> per_strip;      // one mean-over-active-hinges per strip
  int64_t valid_triplets = 0;
};

namespace detail {

// canonical sum of a multiset: sort, then bottom-up adjacent pairing, so the
// value is independent of the order terms were produced in
inline double canonical_sum(std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  std::sort(vals.begin(), vals.end());
  size_t m = vals.size();
  while (m > 1) {
    size_t half = m / 2;
    for (size_t i = 0; i < half; ++i) vals[i] = vals[2 * i] + vals[2 * i + 1];
    if (m & 1) {
      vals[half] = vals[m - 1];
      m = half + 1;
    } else {
      m = half;
    }
  }
  return vals[0];
}

}  // namespace detail

// Batch-All triplet objective over strip embeddings [batch, strips, d].
// Per strip: Euclidean distances on that strip's d-vectors, hinge
// max(0, margin + d(a,p) - d(a,n)) over all valid (a,p,n), strip loss = mean
// over the hinge terms that are > 0 (zero if none are); total = mean over
// strips. Differentiable; fills `report` when given.
template <typename T>
BasicTensor<T> batch_all_triplet(const BasicTensor<T>& embeddings, const std::vector<int>& labels,
                                 double margin, TripletLossReport* report = nullptr) {
  if (embeddings.rank() != 3)
    throw ShapeError("batch_all_triplet: expected [batch, strips, d], got " +
                     shape_str(embeddings.shape()));
  const int64_t B = embeddings.dim(0), S = embeddings.dim(1), d = embeddings.dim(2);
  if (static_cast<int64_t>(labels.size()) != B)
    throw ShapeError("batch_all_triplet: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(B));
  // a valid triplet needs a repeated label and a different one
  std::map<int, int64_t> counts;
  for (int l : labels) ++counts[l];
  bool has_pair = false;
  for (auto& [l, c] : counts) has_pair = has_pair || c >= 2;
  if (!has_pair || counts.size() < 2)
    throw ConfigError("batch_all_triplet: degenerate batch, no valid (anchor,positive,negative)");

  const auto e = embeddings.data();
  // pairwise distances per strip, computed pair-locally in double so the
  // value for a pair does not depend on its position in the batch
  auto dist = std::make_shared<std::vector<double>>(static_cast<size_t>(S * B * B), 0.0);
  for (int64_t t = 0; t < S; ++t)
    for (int64_t a = 0; a < B; ++a)
      for (int64_t b = a + 1; b < B; ++b) {
        double acc = 0;
        const T* ea = e.data() + (a * S + t) * d;
        const T* eb = e.data() + (b * S + t) * d;
        for (int64_t j = 0; j < d; ++j) {
          const double diff = double(ea[j]) - double(eb[j]);
          acc += diff * diff;
        }
        const double dv = std::sqrt(acc);
        (*dist)[static_cast<size_t>((t * B + a) * B + b)] = dv;
        (*dist)[static_cast<size_t>((t * B + b) * B + a)] = dv;
      }

  TripletLossReport rep;
  rep.per_strip.assign(static_cast<size_t>(S), 0.0);
  auto counts_per_strip = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(S), 0);
  int64_t active_total = 0;
  std::vector<double> strip_totals;
  std::vector<double> active;
  for (int64_t t = 0; t < S; ++t) {
    active.clear();
    const double* D = dist->data() + t * B * B;
    for (int64_t a = 0; a < B; ++a)
      for (int64_t p = 0; p < B; ++p) {
        if (p == a || labels[static_cast<size_t>(p)] != labels[static_cast<size_t>(a)]) continue;
        for (int64_t n = 0; n < B; ++n) {
          if (labels[static_cast<size_t>(n)] == labels[static_cast<size_t>(a)]) continue;
          const double hinge = margin + D[a * B + p] - D[a * B + n];
          if (hinge > 0) active.push_back(hinge);
        }
      }
    (*counts_per_strip)[static_cast<size_t>(t)] = static_cast<int64_t>(active.size());
    active_total += static_cast<int64_t>(active.size());
    const double strip_loss =
        active.empty() ? 0.0 : detail::canonical_sum(active) / double(active.size());
    rep.per_strip[static_cast<size_t>(t)] = strip_loss;
    strip_totals.push_back(strip_loss);
  }
  rep.valid_triplets = 0;
  {
    // all valid triplets, independent of strips
    int64_t v = 0;
    for (int64_t a = 0; a < B; ++a) {
      const int64_t same = counts[labels[static_cast<size_t>(a)]];
      v += (same - 1) * (B - same);
    }
    rep.valid_triplets = v;
  }
  rep.total = detail::canonical_sum(strip_totals) / double(S);
  rep.nonzero_fraction =
      rep.valid_triplets > 0 ? double(active_total) / double(rep.valid_triplets * S) : 0.0;
  if (report) *report = rep;

  Storage<T> out(Shape{1});
  out.data[0] = static_cast<T>(rep.total);
  const double marg = margin;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return BasicTensor<T>::make_op(
      std::move(out), {embeddings},
      [B, S, d, marg, dist, counts_per_strip, labels_copy](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const auto& val = self.parents[0]->value;
        const double upstream = double(self.grad.data[0]) / double(S);
        const std::vector<int>& lab = *labels_copy;
        // pair-coefficient accumulation: grad_x += sum_y C[x][y] * (e_x - e_y)
        std::vector<double> C(static_cast<size_t>(B * B));
        for (int64_t t = 0; t < S; ++t) {
          const int64_t cnt = (*counts_per_strip)[static_cast<size_t>(t)];
          if (cnt == 0) continue;
          const double scale_t = upstream / double(cnt);
          std::fill(C.begin(), C.end(), 0.0);
          const double* D = dist->data() + t * B * B;
          for (int64_t a = 0; a < B; ++a)
            for (int64_t p = 0; p < B; ++p) {
              if (p == a || lab[static_cast<size_t>(p)] != lab[static_cast<size_t>(a)]) continue;
              for (int64_t n = 0; n < B; ++n) {
                if (lab[static_cast<size_t>(n)] == lab[static_cast<size_t>(a)]) continue;
                const double hinge = marg + D[a * B + p] - D[a * B + n];
                if (hinge <= 0) continue;
                if (D[a * B + p] > 0) {
                  const double c = scale_t / D[a * B + p];
                  C[static_cast<size_t>(a * B + p)] += c;
                  C[static_cast<size_t>(p * B + a)] += c;
                }
                if (D[a * B + n] > 0) {
                  const double c = scale_t / D[a * B + n];
                  C[static_cast<size_t>(a * B + n)] -= c;
                  C[static_cast<size_t>(n * B + a)] -= c;
                }
              }
            }
          for (int64_t x = 0; x < B; ++x) {
            T* gx = g.data.data() + (x * S + t) * d;
            const T* ex = val.data.data() + (x * S + t) * d;
            for (int64_t y = 0; y < B; ++y) {
              const double c = C[static_cast<size_t>(x * B + y)];
              if (c == 0.0) continue;
              const T* ey = val.data.data() + (y * S + t) * d;
              for (int64_t j = 0; j < d; ++j)
                gx[j] += static_cast<T>(c * (double(ex[j]) - double(ey[j])));
            }
          }
        }
      },
      "batch_all_triplet");
}

// ---------------------------------------------------------------------------
// batch sampling
// ---------------------------------------------------------------------------

// What the sampler needs to know about a dataset, decoupled from storage.
struct SamplingView {
  int64_t identity_count = 0;
  std::function<int64_t(int64_t)> sequence_count;             // identity -> #sequences
  std::function<int64_t(int64_t, int64_t)> frame_count;       // identity, sequence -> #frames
};

struct BatchItem {
  int64_t identity = 0;            // index into the sampling view
  int64_t sequence = 0;            // index within the identity
  std::vector<int64_t> frames;     // m frame indices within the sequence
};

// p distinct identities; k sequences each (without replacement when enough
// exist, with replacement otherwise); m frames per sequence (same rule).
inline std::vector<BatchItem> sample_batch(const SamplingView& view, const BatchSpec& spec,
                                           uint64_t seed) {
  spec.validate();
  if (view.identity_count < spec.p)
    throw DataError("sample_batch: dataset has " + std::to_string(view.identity_count) +
                    " identities, batch needs " + std::to_string(spec.p));
  Rng rng(seed);
  std::vector<BatchItem> out;
  out.reserve(static_cast<size_t>(spec.p * spec.k));
  const auto ids = rng.sample_distinct(view.identity_count, spec.p);
  for (int64_t id : ids) {
    const int64_t n_seq = view.sequence_count(id);
    if (n_seq < 1) throw DataError("sample_batch: identity without sequences");
    std::vector<int64_t> seqs;
    if (n_seq >= spec.k) {
      seqs = rng.sample_distinct(n_seq, spec.k);
    } else {
      for (int64_t i = 0; i < spec.k; ++i) seqs.push_back(rng.uniform_int(0, n_seq - 1));
    }
    for (int64_t sq : seqs) {
      BatchItem item;
      item.identity = id;
      item.sequence = sq;
      const int64_t n_frames = view.frame_count(id, sq);
      if (n_frames < 1) throw DataError("sample_batch: sequence without frames");
      if (n_frames >= spec.m) {
        item.frames = rng.sample_distinct(n_frames, spec.m);
      } else {
        for (int64_t i = 0; i < spec.m; ++i)
          item.frames.push_back(rng.uniform_int(0, n_frames - 1));
      }
      out.push_back(std::move(item));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

// Adaptive moment estimation; moments kept in double, keyed by parameter name.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

template <typename T>
void adam_step(BasicParameterStore<T>& params, AdamState& state) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (auto& [name, p] : params.items()) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    const size_t n = p.mutable_data().size();
    if (m.size() != n) m.assign(n, 0.0);
    if (v.size() != n) v.assign(n, 0.0);
    const T* gp = nullptr;
    if (p.has_grad()) gp = p.grad().data();
    auto& data = p.mutable_data();
    for (size_t i = 0; i < n; ++i) {
      const double g = gp ? double(gp[i]) : 0.0;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double update = state.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.eps);
      data[i] = static_cast<T>(double(data[i]) - update);
    }
  }
}

// ---------------------------------------------------------------------------
// one optimizer step
// ---------------------------------------------------------------------------

// Forward + loss + backward + update over a prepared frame block. When no
// hinge term is active the update is skipped entirely, so parameters change
// iff some triplet violates the margin.
template <typename T>
TripletLossReport train_step(BasicGaitSet<T>& model, const BasicTensor<T>& frames,
                             const std::vector<int64_t>& cardinalities,
                             const std::vector<int>& labels, AdamState& opt, double margin) {
  model.params().zero_grads();
  auto embeddings = model.embed_frame_block(frames, cardinalities);
  TripletLossReport report;
  auto loss = batch_all_triplet(embeddings, labels, margin, &report);
  if (report.nonzero_fraction > 0.0) {
    loss.backward();
    adam_step(model.params(), opt);
  }
  return report;
}

}  // namespace gaitset

#endif  // GAITSET_METRIC_HPP_
