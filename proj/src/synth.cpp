#include "gaitset/synth.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "gaitset/errors.hpp"
#include "gaitset/png_io.hpp"
#include "gaitset/rng.hpp"

namespace fs = std::filesystem;

namespace gaitset {

namespace {

constexpr int64_t kH = 64;
constexpr int64_t kW = 44;
constexpr double kCx = 22.0;     // figure axis
constexpr double kGroundY = 60.0;
constexpr double kCyRef = 32.0;  // shear pivot

// body-shape parameters; one draw per identity
struct Body {
  double stature;        // global size factor
  double torso_hw;       // torso half-width
  double torso_hh;       // torso half-height
  double head_r;
  double leg_len;
  double leg_thick;
  double arm_len;
  double arm_thick;
  double period;         // stride period in frames
  double leg_amp;        // radians
  double arm_amp;        // radians
  double bob;            // vertical oscillation, pixels
  double bag_r;          // BG condition
  double coat;           // CL torso inflation factor
};

double draw(Rng& rng, double lo, double hi) { return rng.uniform_real(lo, hi); }

Body draw_body(uint64_t seed, int64_t identity) {
  Rng rng(derive_seed(seed, "identity", static_cast<uint64_t>(identity)));
  Body b;
  b.stature = draw(rng, 0.80, 1.00);
  b.torso_hw = draw(rng, 5.0, 8.0);
  b.torso_hh = draw(rng, 9.0, 13.0);
  b.head_r = draw(rng, 3.0, 5.0);
  b.leg_len = draw(rng, 15.0, 19.0);
  b.leg_thick = draw(rng, 1.6, 2.8);
  b.arm_len = draw(rng, 9.0, 13.0);
  b.arm_thick = draw(rng, 1.2, 2.0);
  b.period = draw(rng, 16.0, 28.0);
  b.leg_amp = draw(rng, 0.35, 0.75);
  b.arm_amp = draw(rng, 0.25, 0.60);
  b.bob = draw(rng, 0.5, 2.0);
  b.bag_r = draw(rng, 3.5, 5.0);
  b.coat = draw(rng, 1.25, 1.45);
  return b;
}

double sq(double v) { return v * v; }

// distance from point to segment, squared
double segment_dist2(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return sq(px - (ax + t * vx)) + sq(py - (ay + t * vy));
}

struct Pose {
  double hip_y, torso_cy, head_cy, shoulder_y;
  double leg_l, leg_r;   // leg angles from vertical
  double arm_l, arm_r;   // arm angles from vertical
};

Pose make_pose(const Body& b, double phase) {
  const double s = b.stature;
  Pose p;
  p.hip_y = kGroundY - s * b.leg_len - b.bob * std::fabs(std::sin(phase));
  p.torso_cy = p.hip_y - s * b.torso_hh;
  p.shoulder_y = p.hip_y - 2.0 * s * b.torso_hh + 2.0;
  p.head_cy = p.hip_y - 2.0 * s * b.torso_hh - s * b.head_r + 1.0;
  p.leg_l = b.leg_amp * std::sin(phase);
  p.leg_r = -p.leg_l;
  p.arm_l = -b.arm_amp * std::sin(phase);
  p.arm_r = -p.arm_l;
  return p;
}

// figure-space membership test (before the view transform)
bool inside_figure(const Body& b, const Pose& p, bool bag, bool coat, double x, double y) {
  const double s = b.stature;
  const double torso_a = s * b.torso_hw * (coat ? b.coat : 1.0);
  const double torso_b = s * b.torso_hh * (coat ? 1.0 + (b.coat - 1.0) * 0.4 : 1.0);
  if (sq((x - kCx) / torso_a) + sq((y - p.torso_cy) / torso_b) <= 1.0) return true;
  if (sq(x - kCx) + sq(y - p.head_cy) <= sq(s * b.head_r)) return true;
  const double leg = s * b.leg_len, lt2 = sq(s * b.leg_thick);
  if (segment_dist2(x, y, kCx - 1.5, p.hip_y, kCx - 1.5 + leg * std::sin(p.leg_l),
                    p.hip_y + leg * std::cos(p.leg_l)) <= lt2)
    return true;
  if (segment_dist2(x, y, kCx + 1.5, p.hip_y, kCx + 1.5 + leg * std::sin(p.leg_r),
                    p.hip_y + leg * std::cos(p.leg_r)) <= lt2)
    return true;
  const double arm = s * b.arm_len, at2 = sq(s * b.arm_thick);
  const double sh = s * b.torso_hw * 0.8;
  if (segment_dist2(x, y, kCx - sh, p.shoulder_y, kCx - sh + arm * std::sin(p.arm_l),
                    p.shoulder_y + arm * std::cos(p.arm_l)) <= at2)
    return true;
  if (segment_dist2(x, y, kCx + sh, p.shoulder_y, kCx + sh + arm * std::sin(p.arm_r),
                    p.shoulder_y + arm * std::cos(p.arm_r)) <= at2)
    return true;
  if (bag) {
    const double bx = kCx + s * b.torso_hw + 2.0;
    const double by = p.torso_cy + 0.3 * s * b.torso_hh;
    if (sq(x - bx) + sq(y - by) <= sq(s * b.bag_r)) return true;
  }
  return false;
}

GrayImage render_frame(const Body& b, double phase, int view_deg, bool bag, bool coat,
                       double noise, Rng& noise_rng) {
  const double rad = double(view_deg) * std::numbers::pi / 180.0;
  const double xscale = 0.55 + 0.45 * std::sin(rad);
  const double shear = 0.25 * std::cos(rad);
  const Pose pose = make_pose(b, phase);
  GrayImage img;
  img.height = kH;
  img.width = kW;
  img.pixels.assign(static_cast<size_t>(kH * kW), 0);
  for (int64_t y = 0; y < kH; ++y)
    for (int64_t x = 0; x < kW; ++x) {
      // inverse view transform: evaluate the figure at the source point
      const double xf = kCx + (double(x) - kCx - shear * (double(y) - kCyRef)) / xscale;
      if (inside_figure(b, pose, bag, coat, xf, double(y)))
        img.pixels[static_cast<size_t>(y * kW + x)] = 255;
    }
  if (noise > 0)
    for (auto& px : img.pixels)
      if (noise_rng.uniform_real() < noise) px = px ? 0 : 255;
  return img;
}

std::string pad(int64_t v, int width) {
  std::ostringstream os;
  os.width(width);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

void SynthSpec::validate() const {
  if (identities < 1) throw ConfigError("synth: need at least one identity");
  if (views.empty()) throw ConfigError("synth: need at least one view");
  for (int v : views)
    if (v < 0 || v > 180)
      throw ConfigError("synth: view " + std::to_string(v) + " outside [0, 180]");
  if (nm_sequences < 1) throw ConfigError("synth: need at least one nm sequence");
  if (bg_sequences < 0 || cl_sequences < 0) throw ConfigError("synth: negative sequence count");
  if (frames < 1) throw ConfigError("synth: need at least one frame per sequence");
  if (noise < 0 || noise > 0.5) throw ConfigError("synth: noise level outside [0, 0.5]");
}

void synth_generate(const SynthSpec& spec, const std::string& root) {
  spec.validate();
  fs::create_directories(root);
  struct CondBlock {
    const char* tag;
    int64_t count;
  };
  const CondBlock blocks[] = {
      {"nm", spec.nm_sequences}, {"bg", spec.bg_sequences}, {"cl", spec.cl_sequences}};
  for (int64_t id = 0; id < spec.identities; ++id) {
    const Body body = draw_body(spec.seed, id);
    const std::string id_name = pad(id + 1, 3);
    for (const auto& block : blocks) {
      for (int64_t seq = 1; seq <= block.count; ++seq) {
        // one walk per (identity, condition, seq); every view films the same walk
        Rng walk_rng(derive_seed(spec.seed, std::string("walk/") + id_name + "/" + block.tag +
                                                "/" + std::to_string(seq)));
        const double phase0 = walk_rng.uniform_real(0.0, 2.0 * std::numbers::pi);
        for (int view : spec.views) {
          const fs::path dir = fs::path(root) / id_name /
                               (std::string(block.tag) + "-" + pad(seq, 2)) / pad(view, 3);
          fs::create_directories(dir);
          Rng noise_rng(derive_seed(spec.seed, std::string("noise/") + id_name + "/" +
                                                   block.tag + "/" + std::to_string(seq) + "/" +
                                                   std::to_string(view)));
          for (int64_t f = 0; f < spec.frames; ++f) {
            const double phase = phase0 + 2.0 * std::numbers::pi * double(f) / body.period;
            const GrayImage img =
                render_frame(body, phase, view, std::string(block.tag) == "bg",
                             std::string(block.tag) == "cl", spec.noise, noise_rng);
            write_png_gray((dir / (pad(f, 4) + ".png")).string(), img);
          }
        }
      }
    }
  }
}

}  // namespace gaitset
