#include "gaitset/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gaitset/png_io.hpp"

namespace fs = std::filesystem;

namespace gaitset {

namespace {

constexpr char kIndexHeader[] = "gaitset-index v1";

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  const auto end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

// "<condition>-<seq>" -> ("nm", 1); rejects anything else
bool parse_condition_dir(const std::string& name, std::string& cond, int& seq) {
  const auto dash = name.rfind('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 >= name.size()) return false;
  cond = name.substr(0, dash);
  return parse_int(name.substr(dash + 1), seq);
}

std::vector<std::string> sorted_dir_names(const fs::path& dir, bool directories) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file())
      names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

std::string sequence_key_str(const SequenceKey& key) {
  std::ostringstream os;
  os << key.identity << '/' << key.condition << '-';
  os.width(2);
  os.fill('0');
  os << key.seq;
  os << '/';
  os.width(3);
  os << key.view;
  return os.str();
}

Dataset Dataset::scan(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root);
  Dataset ds;
  ds.root_ = root;
  for (const auto& id : sorted_dir_names(root, true)) {
    const fs::path id_dir = fs::path(root) / id;
    for (const auto& cond_dir : sorted_dir_names(id_dir, true)) {
      std::string cond;
      int seq = 0;
      if (!parse_condition_dir(cond_dir, cond, seq)) continue;
      for (const auto& view_dir : sorted_dir_names(id_dir / cond_dir, true)) {
        int view = 0;
        if (!parse_int(view_dir, view)) continue;
        SequenceRecord rec;
        rec.key = SequenceKey{id, cond, seq, view};
        for (const auto& file : sorted_dir_names(id_dir / cond_dir / view_dir, false)) {
          if (file.size() > 4 && file.substr(file.size() - 4) == ".png")
            rec.files.push_back((fs::path(id) / cond_dir / view_dir / file).generic_string());
        }
        if (rec.files.empty()) {
          ++ds.skipped_empty_;
          continue;
        }
        ds.records_.push_back(std::move(rec));
      }
    }
  }
  ds.finalize();
  return ds;
}

void Dataset::finalize() {
  if (records_.empty()) throw DataError("dataset at " + root_ + " contains no sequences");
  std::sort(records_.begin(), records_.end(),
            [](const SequenceRecord& a, const SequenceRecord& b) { return a.key < b.key; });
  std::set<std::string> ids;
  for (const auto& r : records_) ids.insert(r.key.identity);
  identities_.assign(ids.begin(), ids.end());
  cache_.assign(records_.size(), nullptr);
}

const SequenceRecord& Dataset::record(int64_t i) const {
  if (i < 0 || i >= size()) throw DataError("sequence index out of range");
  return records_[static_cast<size_t>(i)];
}

std::vector<int64_t> Dataset::sequences_of(const std::string& identity) const {
  std::vector<int64_t> out;
  for (int64_t i = 0; i < size(); ++i)
    if (records_[static_cast<size_t>(i)].key.identity == identity) out.push_back(i);
  return out;
}

int64_t Dataset::frame_count(int64_t i) const {
  return static_cast<int64_t>(record(i).files.size());
}

const Storage<float>& Dataset::frames(int64_t i) const {
  const auto& rec = record(i);
  auto& slot = cache_[static_cast<size_t>(i)];
  if (slot) return *slot;
  const int64_t n = static_cast<int64_t>(rec.files.size());
  auto loaded = std::make_shared<Storage<float>>(Shape{n, 1, kFrameHeight, kFrameWidth});
  for (int64_t f = 0; f < n; ++f) {
    const std::string path = (fs::path(root_) / rec.files[static_cast<size_t>(f)]).string();
    const GrayImage img = read_png_gray(path);
    if (img.height != kFrameHeight || img.width != kFrameWidth)
      throw DataError("frame " + path + " is " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + ", expected 64x44");
    float* dst = loaded->data.data() + f * kFrameHeight * kFrameWidth;
    for (size_t p = 0; p < img.pixels.size(); ++p)
      dst[p] = img.pixels[p] >= 128 ? 1.0f : 0.0f;  // threshold at 0.5 of full scale
  }
  slot = std::move(loaded);
  return *slot;
}

void Dataset::drop_cache() const {
  std::fill(cache_.begin(), cache_.end(), nullptr);
}

void Dataset::write_index_file(const std::string& index_path) const {
  std::ofstream os(index_path);
  if (!os) throw DataError("cannot write index file: " + index_path);
  os << kIndexHeader << '\n';
  os << "skipped_empty\t" << skipped_empty_ << '\n';
  for (const auto& rec : records_) {
    os << rec.key.identity << '\t' << rec.key.condition << '\t' << rec.key.seq << '\t'
       << rec.key.view;
    for (const auto& f : rec.files) os << '\t' << f;
    os << '\n';
  }
  if (!os) throw DataError("failed while writing index file: " + index_path);
}

Dataset Dataset::from_index_file(const std::string& root, const std::string& index_path) {
  std::ifstream is(index_path);
  if (!is) throw DataError("cannot open index file: " + index_path);
  std::string line;
  if (!std::getline(is, line) || line != kIndexHeader)
    throw DataError("not a dataset index file: " + index_path);
  Dataset ds;
  ds.root_ = root;
  if (!std::getline(is, line)) throw DataError("truncated index file: " + index_path);
  {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag >> ds.skipped_empty_) || tag != "skipped_empty")
      throw DataError("malformed index header line: " + line);
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t pos = 0;
    while (pos <= line.size()) {
      const size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (fields.size() < 5) throw DataError("malformed index line: " + line);
    SequenceRecord rec;
    rec.key.identity = fields[0];
    rec.key.condition = fields[1];
    if (!parse_int(fields[2], rec.key.seq) || !parse_int(fields[3], rec.key.view))
      throw DataError("malformed index line: " + line);
    rec.files.assign(fields.begin() + 4, fields.end());
    ds.records_.push_back(std::move(rec));
  }
  ds.finalize();
  return ds;
}

// ---------------------------------------------------------------------------
// protocols
// ---------------------------------------------------------------------------

ProtocolSpec ProtocolSpec::preset(const std::string& name) {
  ProtocolSpec spec;
  spec.name = name;
  if (name == "st") {
    spec.train_count = 24;
  } else if (name == "mt") {
    spec.train_count = 62;
  } else if (name == "lt") {
    spec.train_count = 74;
  } else if (name == "oumvlp") {
    spec.train_count = 5153;
    spec.oumvlp_rules = true;
  } else {
    throw ConfigError("unknown protocol preset: " + name +
                      " (expected st, mt, lt or oumvlp)");
  }
  return spec;
}

ProtocolSpec ProtocolSpec::custom(int64_t train_count) {
  ProtocolSpec spec;
  spec.name = "custom";
  spec.train_count = train_count;
  spec.validate();
  return spec;
}

void ProtocolSpec::validate() const {
  if (train_count < 1) throw ConfigError("protocol: training identity count must be positive");
}

std::vector<std::string> ProtocolSpec::train_identities(const Dataset& ds) const {
  validate();
  const auto& ids = ds.identities();
  if (static_cast<int64_t>(ids.size()) <= train_count)
    throw DataError("protocol " + name + " needs more than " + std::to_string(train_count) +
                    " identities, dataset has " + std::to_string(ids.size()));
  return {ids.begin(), ids.begin() + train_count};
}

std::vector<std::string> ProtocolSpec::test_identities(const Dataset& ds) const {
  validate();
  const auto& ids = ds.identities();
  if (static_cast<int64_t>(ids.size()) <= train_count)
    throw DataError("protocol " + name + " needs more than " + std::to_string(train_count) +
                    " identities, dataset has " + std::to_string(ids.size()));
  return {ids.begin() + train_count, ids.end()};
}

bool ProtocolSpec::is_gallery(const SequenceKey& key) const {
  if (oumvlp_rules) return key.seq == 1;
  return key.condition == "nm" && key.seq >= 1 && key.seq <= 4;
}

std::string ProtocolSpec::probe_subset(const SequenceKey& key) const {
  if (oumvlp_rules) return key.seq == 0 ? "NM" : "";
  if (key.condition == "nm" && key.seq >= 5 && key.seq <= 6) return "NM";
  if (key.condition == "bg" && key.seq >= 1 && key.seq <= 2) return "BG";
  if (key.condition == "cl" && key.seq >= 1 && key.seq <= 2) return "CL";
  return "";
}

bool ProtocolSpec::is_alt_gallery(const SequenceKey& key) const {
  return key.seq == 2 &&
         (key.condition == "nm" || key.condition == "bg" || key.condition == "cl");
}

// ---------------------------------------------------------------------------
// sampler bridge
// ---------------------------------------------------------------------------

SamplingView make_sampling_view(const Dataset& ds, const std::vector<std::string>& ids) {
  auto seq_table = std::make_shared<std::vector<std::vector<int64_t>>>();
  for (const auto& id : ids) seq_table->push_back(ds.sequences_of(id));
  SamplingView view;
  view.identity_count = static_cast<int64_t>(ids.size());
  view.sequence_count = [seq_table](int64_t id) {
    return static_cast<int64_t>((*seq_table)[static_cast<size_t>(id)].size());
  };
  view.frame_count = [seq_table, &ds](int64_t id, int64_t seq) {
    return ds.frame_count((*seq_table)[static_cast<size_t>(id)][static_cast<size_t>(seq)]);
  };
  return view;
}

FrameBatch gather_frames(const Dataset& ds, const std::vector<std::string>& ids,
                         const std::vector<BatchItem>& items) {
  const int64_t frame_elems = kFrameHeight * kFrameWidth;
  int64_t total = 0;
  for (const auto& item : items) total += static_cast<int64_t>(item.frames.size());
  Storage<float> block(Shape{total, 1, kFrameHeight, kFrameWidth});
  FrameBatch out{Tensor::scalar(0), {}, {}};
  int64_t row = 0;
  for (const auto& item : items) {
    const auto& id = ids.at(static_cast<size_t>(item.identity));
    const auto seqs = ds.sequences_of(id);
    const auto& frames = ds.frames(seqs.at(static_cast<size_t>(item.sequence)));
    for (int64_t f : item.frames) {
      if (f < 0 || f >= frames.shape[0]) throw DataError("frame index out of range in batch");
      std::copy_n(frames.data.begin() + f * frame_elems, frame_elems,
                  block.data.begin() + row * frame_elems);
      ++row;
    }
    out.cardinalities.push_back(static_cast<int64_t>(item.frames.size()));
    out.labels.push_back(static_cast<int>(item.identity));
  }
  out.frames = Tensor::leaf(std::move(block));
  return out;
}

// ---------------------------------------------------------------------------
// probe composition
// ---------------------------------------------------------------------------

ProbeMode parse_probe_mode(const std::string& name) {
  if (name == "single") return ProbeMode::kSingle;
  if (name == "multiview") return ProbeMode::kMultiview;
  if (name == "multicondition") return ProbeMode::kMulticondition;
  throw ConfigError("unknown probe mode: " + name);
}

std::string probe_mode_name(ProbeMode mode) {
  switch (mode) {
    case ProbeMode::kSingle: return "single";
    case ProbeMode::kMultiview: return "multiview";
    case ProbeMode::kMulticondition: return "multicondition";
  }
  throw ConfigError("invalid probe mode value");
}

ProbeSample compose_probe(const Dataset& ds, const std::vector<int64_t>& sources, ProbeMode mode,
                          int64_t budget, uint64_t seed) {
  if (budget < 1) throw ConfigError("compose_probe: frame budget must be positive");
  if (sources.empty()) throw DataError("compose_probe: no source sequences");
  if (mode == ProbeMode::kSingle && sources.size() != 1)
    throw DataError("compose_probe: single mode takes exactly one source");
  if (mode != ProbeMode::kSingle && sources.size() < 2)
    throw DataError("compose_probe: " + probe_mode_name(mode) +
                    " mode needs at least two sources");
  const auto& first = ds.record(sources.front()).key;
  for (size_t i = 1; i < sources.size(); ++i) {
    const auto& key = ds.record(sources[i]).key;
    if (key.identity != first.identity)
      throw DataError("compose_probe: sources must share one identity");
    if (mode == ProbeMode::kMultiview &&
        (key.condition != first.condition || key.view == first.view))
      throw DataError("compose_probe: multiview needs same condition, distinct views");
    if (mode == ProbeMode::kMulticondition &&
        (key.view != first.view || key.condition == first.condition))
      throw DataError("compose_probe: multicondition needs same view, distinct conditions");
  }
  ProbeSample sample;
  sample.identity = first.identity;
  sample.sources = sources;
  Rng rng(seed);
  for (int64_t src : sources) {
    const int64_t n = ds.frame_count(src);
    std::vector<int64_t> picks;
    if (n >= budget) {
      picks = rng.sample_distinct(n, budget);
    } else {
      sample.replacement_used = true;
      for (int64_t i = 0; i < budget; ++i) picks.push_back(rng.uniform_int(0, n - 1));
    }
    sample.picks.push_back(std::move(picks));
  }
  return sample;
}

Storage<float> probe_frames(const Dataset& ds, const ProbeSample& sample) {
  const int64_t frame_elems = kFrameHeight * kFrameWidth;
  int64_t total = 0;
  for (const auto& p : sample.picks) total += static_cast<int64_t>(p.size());
  if (total == 0) throw DataError("probe sample has no frames");
  Storage<float> out(Shape{total, 1, kFrameHeight, kFrameWidth});
  int64_t row = 0;
  for (size_t s = 0; s < sample.sources.size(); ++s) {
    const auto& frames = ds.frames(sample.sources[s]);
    for (int64_t f : sample.picks[s]) {
      std::copy_n(frames.data.begin() + f * frame_elems, frame_elems,
                  out.data.begin() + row * frame_elems);
      ++row;
    }
  }
  return out;
}

}  // namespace gaitset
