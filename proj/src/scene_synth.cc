// Copyright 2026 The reidrefine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "reidrefine/scene_synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "reidrefine/ppm.h"
#include "text_util.h"

namespace reidrefine {
namespace {

namespace fs = std::filesystem;

Color hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Color rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (double& k : rgb) k += m;
  return rgb;
}

Color random_color(Rng& rng, double s_lo, double s_hi, double v_lo, double v_hi) {
  return hsv(rng.uniform(), rng.uniform(s_lo, s_hi), rng.uniform(v_lo, v_hi));
}

// Unannotated passer-by: same glyph, unconstrained part colors.
IdentitySpec random_appearance(Rng& rng) {
  IdentitySpec spec;
  spec.id = -1;
  for (Color& c : spec.parts) c = random_color(rng, 0.5, 1.0, 0.5, 0.9);
  return spec;
}

// Glyph layout as fractions of box height (hat, head, torso end, shoes) and
// width (arms).
constexpr double kHat = 0.25;
constexpr double kHead = 0.1;
constexpr double kTorsoEnd = 0.62;
constexpr double kShoe = 0.3;
constexpr double kArm = 0.3;

bool in_range(double t, double lo, double hi) { return t >= lo && t <= hi; }

// Person glyph filling the integer box (x0, y0, x1, y1) inclusive: hat and
// head on top, torso flanked by arms at the left and right edges, legs ending
// in shoes on the bottom edge. Pixels not covered by a body part keep the
// background.
void draw_person(Grid2D& img, int x0, int y0, int x1, int y1, const IdentitySpec& spec,
                 const Color& skin, const Color& shirt, double brightness) {
  const double w = x1 - x0;
  const double h = y1 - y0;
  const Color pants{0.5 * shirt[0], 0.5 * shirt[1], 0.5 * shirt[2]};
  for (int y = std::max(y0, 0); y <= std::min(y1, img.rows() - 1); ++y) {
    const double v = (y - y0) / h;
    for (int x = std::max(x0, 0); x <= std::min(x1, img.cols() - 1); ++x) {
      const double u = (x - x0) / w;
      const Color* c = nullptr;
      if (v < kHat) {
        c = &spec.parts[2];
      } else if (v < kHat + kHead) {
        c = &skin;
      } else if (v < kTorsoEnd) {
        c = u < kArm ? &spec.parts[0] : u > 1 - kArm ? &spec.parts[1] : &shirt;
      } else {
        c = v < 1 - kShoe ? &pants : &spec.parts[3];
      }
      if (!c) continue;
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = std::min(1.0, (*c)[k] * brightness);
    }
  }
}

Color random_skin(Rng& rng) {
  return hsv(rng.uniform(0.04, 0.1), rng.uniform(0.25, 0.5), rng.uniform(0.55, 0.95));
}

Color random_shirt(Rng& rng) { return random_color(rng, 0.0, 0.25, 0.35, 0.85); }

void draw_background(Grid2D& img, Rng& rng) {
  const Color base = random_color(rng, 0.3, 0.7, 0.3, 0.8);
  const Color tint = random_color(rng, 0.3, 0.7, 0.3, 0.8);
  const bool vertical = rng.bernoulli(0.5);
  for (int y = 0; y < img.rows(); ++y) {
    for (int x = 0; x < img.cols(); ++x) {
      const double t = vertical ? double(y) / img.rows() : double(x) / img.cols();
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = (1 - t) * base[k] + t * tint[k];
    }
  }
  const int clutter = rng.uniform_int(20, 40);
  for (int i = 0; i < clutter; ++i) {
    const int w = rng.uniform_int(4, 40);
    const int h = rng.uniform_int(4, 40);
    const int x0 = rng.uniform_int(-w / 2, img.cols() - 1);
    const int y0 = rng.uniform_int(-h / 2, img.rows() - 1);
    const Color c = random_color(rng, 0.5, 0.9, 0.5, 0.9);
    const double alpha = rng.uniform(0.3, 0.8);
    for (int y = std::max(0, y0); y < std::min(img.rows(), y0 + h); ++y) {
      for (int x = std::max(0, x0); x < std::min(img.cols(), x0 + w); ++x) {
        for (int k = 0; k < 3; ++k) {
          img.at(y, x, k) = (1 - alpha) * img.at(y, x, k) + alpha * c[k];
        }
      }
    }
  }
}

void gaussian_blur(Grid2D& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;
  const int rows = img.rows(), cols = img.cols(), ch = img.channels();
  Grid2D tmp(rows, cols, ch);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * img.at(y, std::clamp(x + i, 0, cols - 1), k);
        }
        tmp.at(y, x, k) = acc;
      }
    }
  }
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * tmp.at(std::clamp(y + i, 0, rows - 1), x, k);
        }
        img.at(y, x, k) = acc;
      }
    }
  }
}

bool boxes_intersect(const BBox& a, const BBox& b, double pad) {
  return a.m1 - pad < b.m2 && b.m1 - pad < a.m2 && a.n1 - pad < b.n2 &&
         b.n1 - pad < a.n2;
}

struct Placed {
  BBox box;
  double brightness;
};

// Identity per instance such that every identity appears at least twice and
// no scene holds the same identity twice.
std::vector<std::vector<int>> assign_identities(std::vector<int> counts,
                                                int num_ids, Rng& rng) {
  std::vector<int> deck;
  auto refill = [&] {
    std::vector<int> perm(num_ids);
    for (int i = 0; i < num_ids; ++i) perm[i] = i;
    rng.shuffle(perm);
    deck.insert(deck.end(), perm.begin(), perm.end());
  };
  std::vector<std::vector<int>> ids(counts.size());
  std::vector<int> seen(num_ids, 0);
  for (std::size_t s = 0; s < counts.size(); ++s) {
    for (int k = 0; k < counts[s]; ++k) {
      while (true) {
        auto it = std::find_if(deck.begin(), deck.end(), [&](int id) {
          return std::find(ids[s].begin(), ids[s].end(), id) == ids[s].end();
        });
        if (it != deck.end()) {
          ids[s].push_back(*it);
          ++seen[*it];
          deck.erase(it);
          break;
        }
        refill();
      }
    }
  }
  // Repair: move surplus appearances onto identities seen fewer than twice.
  for (int id = 0; id < num_ids; ++id) {
    while (seen[id] < 2) {
      bool fixed = false;
      for (std::size_t s = 0; s < ids.size() && !fixed; ++s) {
        if (std::find(ids[s].begin(), ids[s].end(), id) != ids[s].end()) continue;
        for (int& other : ids[s]) {
          if (seen[other] > 2) {
            --seen[other];
            other = id;
            ++seen[id];
            fixed = true;
            break;
          }
        }
      }
      if (!fixed) throw std::invalid_argument("synth: cannot give every identity two instances");
    }
  }
  return ids;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw std::invalid_argument("unknown split: " + s);
}

std::size_t SceneSet::num_annotations() const {
  std::size_t n = 0;
  for (const auto& a : annotations) n += a.size();
  return n;
}

std::vector<IdentitySpec> make_identities(int num_ids) {
  if (num_ids < 1) throw std::invalid_argument("make_identities: need >= 1 identity");
  int radix = 1;
  while (radix * radix * radix * radix < num_ids) ++radix;
  int total = 1;
  for (int p = 0; p < kIdentityParts; ++p) total *= radix;
  using Code = std::array<int, kIdentityParts>;
  std::vector<Code> codes(total);
  for (int c = 0; c < total; ++c) {
    int rest = c;
    for (int p = 0; p < kIdentityParts; ++p) {
      codes[c][p] = rest % radix;
      rest /= radix;
    }
  }
  auto digit_sum = [](const Code& d) {
    int sum = 0;
    for (int v : d) sum += v;
    return sum;
  };
  // Codes are generated in index order, so stable sorts keep index as the
  // final tie-break.
  std::stable_sort(codes.begin(), codes.end(), [&](const Code& a, const Code& b) {
    if (digit_sum(a) != digit_sum(b)) return digit_sum(a) < digit_sum(b);
    return a[0] > b[0];
  });
  codes.resize(num_ids);
  auto index = [&](const Code& d) {
    int c = 0;
    for (int p = kIdentityParts - 1; p >= 0; --p) c = c * radix + d[p];
    return c;
  };
  std::sort(codes.begin(), codes.end(),
            [&](const Code& a, const Code& b) { return index(a) < index(b); });

  std::vector<IdentitySpec> specs(num_ids);
  for (int id = 0; id < num_ids; ++id) {
    IdentitySpec& spec = specs[id];
    spec.id = id;
    spec.radix = radix;
    spec.digits = codes[id];
    for (int p = 0; p < kIdentityParts; ++p) {
      const double hue = (p + kIdentityParts * spec.digits[p]) /
                         static_cast<double>(kIdentityParts * radix);
      spec.parts[p] = hsv(hue, 0.85, 0.8);
    }
  }
  return specs;
}

double coverage(const BBox& box, const BBox& other) {
  const double iw = std::min(box.m2, other.m2) - std::max(box.m1, other.m1);
  const double ih = std::min(box.n2, other.n2) - std::max(box.n1, other.n1);
  if (iw <= 0 || ih <= 0 || box.area() <= 0) return 0.0;
  return iw * ih / box.area();
}

SynthResult synth(const SynthConfig& cfg, Rng& rng) {
  if (cfg.num_ids < 2) throw std::invalid_argument("synth: need >= 2 identities");
  if (cfg.num_scenes < 1) throw std::invalid_argument("synth: need >= 1 scene");
  if (!in_range(cfg.distractor_rate, 0, 1) || !in_range(cfg.overlap_rate, 0, 1)) {
    throw std::invalid_argument("synth: rates must lie in [0,1]");
  }
  if (cfg.min_person_width < 4 || cfg.max_person_width < cfg.min_person_width) {
    throw std::invalid_argument("synth: bad person width range");
  }
  if (cfg.max_instances < 1) throw std::invalid_argument("synth: max_instances < 1");

  const int cap = std::min(cfg.max_instances, cfg.num_ids);
  std::vector<int> counts(cfg.num_scenes);
  for (int& c : counts) c = rng.uniform_int(1, cap);
  int total = 0;
  for (int c : counts) total += c;
  while (total < 2 * cfg.num_ids) {
    auto it = std::min_element(counts.begin(), counts.end());
    if (*it >= cap) throw std::invalid_argument("synth: too few scenes for two instances per identity");
    ++*it;
    ++total;
  }
  const auto scene_ids = assign_identities(counts, cfg.num_ids, rng);
  const auto identities = make_identities(cfg.num_ids);
  const std::uint64_t scene_seed = rng.next_u64();

  SynthResult out;
  out.set.num_ids = cfg.num_ids;
  out.set.scenes.resize(cfg.num_scenes);
  out.set.annotations.resize(cfg.num_scenes);
  out.distractors.resize(cfg.num_scenes);

  for (int s = 0; s < cfg.num_scenes; ++s) {
    Rng srng(mix_seed(scene_seed, static_cast<std::uint64_t>(s)));
    Grid2D img(cfg.scene_rows, cfg.scene_cols, 3);
    draw_background(img, srng);

    std::vector<Placed> persons;
    for (std::size_t k = 0; k < scene_ids[s].size(); ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
        const int w = srng.uniform_int(cfg.min_person_width, cfg.max_person_width);
        const int h = static_cast<int>(std::lround(2.0 * w * srng.uniform(0.9, 1.1)));
        if (w >= cfg.scene_cols || h >= cfg.scene_rows) break;
        const int x0 = srng.uniform_int(0, cfg.scene_cols - 1 - w);
        const int y0 = srng.uniform_int(0, cfg.scene_rows - 1 - h);
        const BBox box{double(x0), double(y0), double(x0 + w), double(y0 + h)};
        const bool clash = std::any_of(persons.begin(), persons.end(), [&](const Placed& p) {
          return boxes_intersect(box, p.box, 2.0);
        });
        if (clash) continue;
        persons.push_back({box, srng.uniform(0.9, 1.1)});
        placed = true;
      }
      if (!placed) throw std::invalid_argument("synth: canvas too small for requested instances");
    }

    auto hits_person = [&](const BBox& b, std::size_t except) {
      for (std::size_t j = 0; j < persons.size(); ++j) {
        if (j != except && boxes_intersect(b, persons[j].box, 0.0)) return true;
      }
      return false;
    };

    std::vector<BBox> behind;  // overlapping distractors, drawn right behind persons
    for (std::size_t k = 0; k < persons.size(); ++k) {
      if (!srng.bernoulli(cfg.overlap_rate)) continue;
      const BBox& pb = persons[k].box;
      for (int attempt = 0; attempt < 200; ++attempt) {
        const double w = std::round(pb.width() * srng.uniform(0.8, 1.2));
        const double h = std::round(pb.height() * srng.uniform(0.85, 1.15));
        const double side = srng.bernoulli(0.5) ? 1.0 : -1.0;
        const double cx = std::round(pb.center_x() + side * pb.width() * srng.uniform(0.35, 0.75));
        const double cy = std::round(pb.center_y() + pb.height() * srng.uniform(-0.15, 0.15));
        const BBox d{cx - std::floor(w / 2), cy - std::floor(h / 2),
                     cx - std::floor(w / 2) + w, cy - std::floor(h / 2) + h};
        if (d.m1 < 0 || d.n1 < 0 || d.m2 > cfg.scene_cols - 1 || d.n2 > cfg.scene_rows - 1) continue;
        if (coverage(pb, d) < 0.2 || hits_person(d, k)) continue;
        behind.push_back(d);
        break;
      }
    }
    std::vector<BBox> free_standing;
    for (int slot = 0; slot < 2; ++slot) {
      if (!srng.bernoulli(cfg.distractor_rate)) continue;
      for (int attempt = 0; attempt < 200; ++attempt) {
        const int w = srng.uniform_int(cfg.min_person_width, cfg.max_person_width);
        const int h = static_cast<int>(std::lround(2.0 * w * srng.uniform(0.9, 1.1)));
        if (w >= cfg.scene_cols || h >= cfg.scene_rows) break;
        const int x0 = srng.uniform_int(0, cfg.scene_cols - 1 - w);
        const int y0 = srng.uniform_int(0, cfg.scene_rows - 1 - h);
        const BBox d{double(x0), double(y0), double(x0 + w), double(y0 + h)};
        if (hits_person(d, persons.size())) continue;
        free_standing.push_back(d);
        break;
      }
    }

    auto draw_distractor = [&](const BBox& d) {
      const IdentitySpec look = random_appearance(srng);
      const Color skin = random_skin(srng);
      const Color shirt = random_shirt(srng);
      const double brightness = srng.uniform(0.9, 1.1);
      draw_person(img, int(d.m1), int(d.n1), int(d.m2), int(d.n2), look, skin, shirt,
                  brightness);
    };
    for (const BBox& d : free_standing) draw_distractor(d);
    for (const BBox& d : behind) draw_distractor(d);
    for (std::size_t k = 0; k < persons.size(); ++k) {
      const BBox& b = persons[k].box;
      const Color skin = random_skin(srng);
      const Color shirt = random_shirt(srng);
      draw_person(img, int(b.m1), int(b.n1), int(b.m2), int(b.n2),
                  identities[scene_ids[s][k]], skin, shirt, persons[k].brightness);
    }
    gaussian_blur(img, cfg.blur_sigma);
    if (cfg.noise_sigma > 0) {
      for (double& v : img.data()) v += cfg.noise_sigma * srng.normal();
    }
    quantize_to_8bit(img);

    out.set.scenes[s] = std::move(img);
    for (std::size_t k = 0; k < persons.size(); ++k) {
      out.set.annotations[s].push_back({persons[k].box, scene_ids[s][k], Split::kTrain});
    }
    out.distractors[s] = free_standing;
    out.distractors[s].insert(out.distractors[s].end(), behind.begin(), behind.end());
  }

  // First train_fraction of the scenes train; in the rest, an instance is a
  // query when its identity also appears in another held-out scene.
  const int n_train = std::clamp(
      static_cast<int>(std::lround(cfg.train_fraction * cfg.num_scenes)), 0, cfg.num_scenes);
  std::vector<int> test_scene_count(cfg.num_ids, 0);
  for (int s = n_train; s < cfg.num_scenes; ++s) {
    for (const Annotation& a : out.set.annotations[s]) ++test_scene_count[a.identity];
  }
  for (int s = n_train; s < cfg.num_scenes; ++s) {
    for (Annotation& a : out.set.annotations[s]) {
      a.split = test_scene_count[a.identity] >= 2 ? Split::kQuery : Split::kGallery;
    }
  }
  return out;
}

void write_scene_set(const std::string& dir, const SceneSet& set) {
  fs::create_directories(dir);
  for (std::size_t s = 0; s < set.scenes.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu.ppm", s);
    write_ppm((fs::path(dir) / name).string(), set.scenes[s]);
  }
  std::ofstream csv(fs::path(dir) / "annotations.csv");
  if (!csv) throw std::runtime_error("cannot create annotations.csv in " + dir);
  csv << "scene,x1,y1,x2,y2,id,split\n";
  using internal::format_real;
  for (std::size_t s = 0; s < set.annotations.size(); ++s) {
    for (const Annotation& a : set.annotations[s]) {
      csv << s << ',' << format_real(a.box.m1) << ',' << format_real(a.box.n1) << ','
          << format_real(a.box.m2) << ',' << format_real(a.box.n2) << ',' << a.identity
          << ',' << split_name(a.split) << '\n';
    }
  }
  if (!csv) throw std::runtime_error("failed writing annotations.csv");
}

SceneSet read_scene_set(const std::string& dir) {
  SceneSet set;
  for (std::size_t s = 0;; ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu.ppm", s);
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) break;
    set.scenes.push_back(read_ppm(p.string()));
  }
  if (set.scenes.empty()) throw std::runtime_error("no scene_0000.ppm in " + dir);
  set.annotations.resize(set.scenes.size());
  std::ifstream csv(fs::path(dir) / "annotations.csv");
  if (!csv) throw std::runtime_error("cannot open annotations.csv in " + dir);
  std::string line;
  std::getline(csv, line);
  if (line != "scene,x1,y1,x2,y2,id,split") {
    throw std::runtime_error("annotations.csv: unexpected header");
  }
  int max_id = -1;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto f = internal::split_csv_line(line);
    if (f.size() != 7) throw std::runtime_error("annotations.csv: bad row: " + line);
    const int s = internal::parse_int(f[0]);
    if (s < 0 || static_cast<std::size_t>(s) >= set.scenes.size()) {
      throw std::runtime_error("annotations.csv: scene index out of range");
    }
    Annotation a;
    a.box = {internal::parse_real(f[1]), internal::parse_real(f[2]),
             internal::parse_real(f[3]), internal::parse_real(f[4])};
    a.identity = internal::parse_int(f[5]);
    a.split = parse_split(f[6]);
    if (a.identity < 0) throw std::runtime_error("annotations.csv: negative id");
    max_id = std::max(max_id, a.identity);
    set.annotations[s].push_back(a);
  }
  set.num_ids = max_id + 1;
  return set;
}

std::vector<LabeledCrop> ground_truth_crops(const SceneSet& set, Split split, int rows,
                                            int cols) {
  std::vector<LabeledCrop> crops;
  for (std::size_t s = 0; s < set.scenes.size(); ++s) {
    for (const Annotation& a : set.annotations[s]) {
      if (a.split != split) continue;
      crops.push_back({roi_crop(set.scenes[s], a.box, rows, cols).crop, a.identity});
    }
  }
  return crops;
}

}  // namespace reidrefine
