#ifndef GAITSET_DATAIO_HPP_
#define GAITSET_DATAIO_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gaitset/metric.hpp"
#include "gaitset/tensor.hpp"

namespace gaitset {

// frame geometry every loader input must match
inline constexpr int64_t kFrameHeight = 64;
inline constexpr int64_t kFrameWidth = 44;

struct SequenceKey {
  std::string identity;   // directory name, e.g. "001"
  std::string condition;  // lower-case tag, e.g. "nm"
  int seq = 0;            // sequence number within the condition
  int view = 0;           // degrees

  friend bool operator<(const SequenceKey& a, const SequenceKey& b) {
    if (a.identity != b.identity) return a.identity < b.identity;
    if (a.condition != b.condition) return a.condition < b.condition;
    if (a.seq != b.seq) return a.seq < b.seq;
    return a.view < b.view;
  }
  friend bool operator==(const SequenceKey& a, const SequenceKey& b) {
    return a.identity == b.identity && a.condition == b.condition && a.seq == b.seq &&
           a.view == b.view;
  }
};

std::string sequence_key_str(const SequenceKey& key);

struct SequenceRecord {
  SequenceKey key;
  std::vector<std::string> files;  // paths relative to the dataset root, sorted
};

// Index over a `<id>/<condition>-<seq>/<view>/<frame>.png` tree. Scanning
// walks the tree once; frames load lazily per sequence and stay cached.
class Dataset {
 public:
  // builds the index by walking the directory tree
  static Dataset scan(const std::string& root);
  // restores a previously written index without re-scanning
  static Dataset from_index_file(const std::string& root, const std::string& index_path);

  void write_index_file(const std::string& index_path) const;

  int64_t size() const { return static_cast<int64_t>(records_.size()); }
  const SequenceRecord& record(int64_t i) const;
  const std::string& root() const { return root_; }

  const std::vector<std::string>& identities() const { return identities_; }
  // indices of all sequences belonging to one identity, in index order
  std::vector<int64_t> sequences_of(const std::string& identity) const;

  int64_t frame_count(int64_t i) const;
  // frames of one sequence as [n, 1, 64, 44], values in {0, 1}
  const Storage<float>& frames(int64_t i) const;
  void drop_cache() const;

  int64_t skipped_empty() const { return skipped_empty_; }

 private:
  std::string root_;
  std::vector<SequenceRecord> records_;
  std::vector<std::string> identities_;
  int64_t skipped_empty_ = 0;
  mutable std::vector<std::shared_ptr<Storage<float>>> cache_;

  void finalize();
};

// Identity split plus gallery/probe rules. ST/MT/LT follow the
// first-k-identities convention with NM#1-4 as gallery; probe subsets are
// NM#5-6, BG#1-2 and CL#1-2.
struct ProtocolSpec {
  std::string name = "custom";
  int64_t train_count = 0;
  bool oumvlp_rules = false;  // gallery = seq 1, probe = seq 0

  // presets: st (24), mt (62), lt (74), oumvlp (5153)
  static ProtocolSpec preset(const std::string& name);
  static ProtocolSpec custom(int64_t train_count);

  void validate() const;
  std::vector<std::string> train_identities(const Dataset& ds) const;
  std::vector<std::string> test_identities(const Dataset& ds) const;

  bool is_gallery(const SequenceKey& key) const;
  // "NM" / "BG" / "CL" for probe sequences, "" otherwise
  std::string probe_subset(const SequenceKey& key) const;
  // alternate gallery used by the multicondition sweep: NM#02, BG#02, CL#02
  bool is_alt_gallery(const SequenceKey& key) const;
};

// sampler bridge: identities restricted to `ids`, sequences in index order
SamplingView make_sampling_view(const Dataset& ds, const std::vector<std::string>& ids);

// Assembles the frame block for one batch: frames [sum(m), 1, 64, 44] in item
// order plus per-item cardinalities and identity labels.
struct FrameBatch {
  Tensor frames;
  std::vector<int64_t> cardinalities;
  std::vector<int> labels;
};
FrameBatch gather_frames(const Dataset& ds, const std::vector<std::string>& ids,
                         const std::vector<BatchItem>& items);

// ---------------------------------------------------------------------------
// probe composition
// ---------------------------------------------------------------------------

enum class ProbeMode { kSingle, kMultiview, kMulticondition };

ProbeMode parse_probe_mode(const std::string& name);
std::string probe_mode_name(ProbeMode mode);

// One evaluation sample drawn from one or more source sequences.
struct ProbeSample {
  std::string identity;
  std::vector<int64_t> sources;                 // dataset indices
  std::vector<std::vector<int64_t>> picks;      // frame indices per source
  bool replacement_used = false;
};

// Draws `budget` frames uniformly without replacement from every source
// (falling back to replacement when a source is shorter) and merges them.
ProbeSample compose_probe(const Dataset& ds, const std::vector<int64_t>& sources, ProbeMode mode,
                          int64_t budget, uint64_t seed);

// frames of a composed probe as one [n, 1, 64, 44] block
Storage<float> probe_frames(const Dataset& ds, const ProbeSample& sample);

}  // namespace gaitset

#endif  // GAITSET_DATAIO_HPP_
