#ifndef GAITSET_SYNTH_HPP_
#define GAITSET_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace gaitset {

// Procedural silhouette dataset: per-identity body-shape parameters drive a
// walking-figure caricature rendered at 64x44 per frame.
struct SynthSpec {
  int64_t identities = 20;
  std::vector<int> views = {0, 26, 51, 77, 103, 129, 154, 180};
  int64_t nm_sequences = 6;
  int64_t bg_sequences = 2;
  int64_t cl_sequences = 2;
  int64_t frames = 40;
  uint64_t seed = 1;
  double noise = 0.01;  // per-pixel flip probability

  void validate() const;
  int64_t sequences_per_identity_view() const {
    return nm_sequences + bg_sequences + cl_sequences;
  }
};

// Writes the dataset under `root` in the standard
// `<id>/<condition>-<seq>/<view>/<frame>.png` layout. Deterministic in spec.
void synth_generate(const SynthSpec& spec, const std::string& root);

}  // namespace gaitset

#endif  // GAITSET_SYNTH_HPP_
