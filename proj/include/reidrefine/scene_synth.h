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

#ifndef REIDREFINE_SCENE_SYNTH_H_
#define REIDREFINE_SCENE_SYNTH_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reidrefine/embed_net.h"
#include "reidrefine/grid.h"
#include "reidrefine/rng.h"
#include "reidrefine/roi_transform.h"

namespace reidrefine {

enum class Split { kTrain, kQuery, kGallery };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct Annotation {
  BBox box;
  int identity = 0;
  Split split = Split::kTrain;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Scenes plus per-scene ground truth. Query- and gallery-tagged annotations
// both live in gallery scenes; query-tagged ones are additionally used as
// retrieval queries.
struct SceneSet {
  int num_ids = 0;
  std::vector<Grid2D> scenes;
  std::vector<std::vector<Annotation>> annotations;

  std::size_t num_annotations() const;
  friend bool operator==(const SceneSet&, const SceneSet&) = default;
};

using Color = std::array<double, 3>;

// Identity-bearing body parts, one per box edge: left arm, right arm, hat,
// shoes.
inline constexpr int kIdentityParts = 4;

// Identities are factorial: identity id owns one base-`radix` digit per part
// and each (part, digit) pair has its own color. Identities share most
// parts, so telling them apart needs every edge of the body in view.
struct IdentitySpec {
  int id = 0;
  int radix = 2;
  std::array<int, kIdentityParts> digits{};
  std::array<Color, kIdentityParts> parts{};  // left arm, right arm, hat, shoes
};

// radix = smallest r with r^4 >= num_ids. Code c has digit p equal to the
// p-th least significant base-radix digit of c. The first num_ids codes in
// order of increasing digit sum, then decreasing left-arm digit, then c are
// kept and assigned to identities in increasing c. Part p with digit d has hue (p + 4d) / (4r).
std::vector<IdentitySpec> make_identities(int num_ids);

struct SynthConfig {
  int num_scenes = 64;
  int num_ids = 8;
  double distractor_rate = 0.5;  // chance for each of two free-standing distractors
  double overlap_rate = 0.3;     // chance an instance gets an overlapping distractor
  int scene_rows = 256;
  int scene_cols = 256;
  int max_instances = 4;
  int min_person_width = 24;
  int max_person_width = 40;
  double train_fraction = 0.5;
  double blur_sigma = 4.0;
  double noise_sigma = 0.01;
};

struct SynthResult {
  SceneSet set;
  // Unannotated distractor glyph boxes per scene (not part of the file
  // format).
  std::vector<std::vector<BBox>> distractors;
};

// Throws std::invalid_argument for num_ids < 2, rates outside [0,1], too
// few instances to give every identity two appearances, or a canvas too
// small for the requested instances.
SynthResult synth(const SynthConfig& config, Rng& rng);

// Fraction of `box`'s area covered by `other`.
double coverage(const BBox& box, const BBox& other);

// Writes scene_%04d.ppm (P6) and annotations.csv
// (scene,x1,y1,x2,y2,id,split) into `dir`, creating it if needed.
void write_scene_set(const std::string& dir, const SceneSet& set);
SceneSet read_scene_set(const std::string& dir);

// Ground-truth crops with identity labels from annotations with the given
// split.
std::vector<LabeledCrop> ground_truth_crops(const SceneSet& set, Split split,
                                            int rows = kDefaultCropRows,
                                            int cols = kDefaultCropCols);

}  // namespace reidrefine

#endif  // REIDREFINE_SCENE_SYNTH_H_
