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

#ifndef REIDREFINE_PROXY_TRIPLET_H_
#define REIDREFINE_PROXY_TRIPLET_H_

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reidrefine {

inline constexpr int kDefaultProxyVolume = 2;
inline constexpr double kDefaultMargin = 0.5;

double squared_distance(std::span<const double> a, std::span<const double> b);

// num_ids x volume slots of dim-dimensional embeddings. Slots start zeroed
// and unfilled; each row is overwritten first-in-first-out.
class ProxyTable {
 public:
  ProxyTable() = default;
  // Throws std::invalid_argument unless num_ids >= 2, volume >= 1, dim >= 1.
  ProxyTable(int num_ids, int volume, int dim);

  int num_ids() const { return num_ids_; }
  int volume() const { return volume_; }
  int dim() const { return dim_; }

  std::span<const double> slot(int row, int k) const;
  bool filled(int row, int k) const { return filled_[flat(row, k)] != 0; }
  int cursor(int row) const { return cursors_.at(row); }
  bool row_has_filled(int row) const;
  int filled_count() const;

  struct Entry {
    std::span<const double> embedding;
    int identity = 0;
  };
  // Writes each embedding at its identity's cursor in order and advances
  // the cursor modulo volume. Embeddings must be finite and unit-norm.
  void update(std::span<const Entry> batch);

  friend bool operator==(const ProxyTable&, const ProxyTable&) = default;

 private:
  friend ProxyTable load_proxy_table(std::istream& in);
  std::size_t flat(int row, int k) const {
    return static_cast<std::size_t>(row) * volume_ + k;
  }

  int num_ids_ = 0;
  int volume_ = 0;
  int dim_ = 0;
  std::vector<double> entries_;
  std::vector<int> cursors_;
  std::vector<unsigned char> filled_;
};

// Which proxies count as negatives for an anchor of identity i.
enum class NegativeSet {
  kAllOtherRows,        // every filled slot outside row i
  kBatchIdentityRows,   // filled slots of rows named by other batch anchors
};

struct TripletAnchor {
  std::vector<double> embedding;
  int identity = 0;
};

enum class AnchorStatus { kActive, kInactive, kSkippedNoPositive };

struct MinedTriplet {
  AnchorStatus status = AnchorStatus::kSkippedNoPositive;
  int pos_row = -1, pos_slot = -1;
  int neg_row = -1, neg_slot = -1;
  double d_pos = 0.0, d_neg = 0.0;
  double loss = 0.0;
};

struct TripletLoss {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;  // dL/d embedding, per anchor
  std::vector<MinedTriplet> mined;
  int skipped = 0;
};

class NoNegativeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sum over anchors of [margin + max_p D(f, p) - min_n D(f, n)]_+ with D the
// squared Euclidean distance, hardest positive taken from the anchor's own
// row and hardest negative from `negatives`. Ties go to the lowest
// (row, slot). Anchors whose row is empty are skipped. Throws
// NoNegativeError when a non-skipped anchor has no filled negative slot.
TripletLoss mine_and_loss(const ProxyTable& table,
                          std::span<const TripletAnchor> batch, double margin,
                          NegativeSet negatives = NegativeSet::kAllOtherRows);

// Convenience wrapper around ProxyTable::update.
void table_update(ProxyTable& table, std::span<const TripletAnchor> batch);

// Softmax cross-entropy for the true class `identity`.
struct ClassLoss {
  double loss = 0.0;
  std::vector<double> d_logits;  // softmax - one_hot
};
ClassLoss classification_loss(std::span<const double> logits, int identity);

// "PTB1" | int32 num_ids, volume, dim | int32 cursors[num_ids] |
// filled bitmap, ceil(num_ids * volume / 8) bytes, slot r * volume + k at
// bit (index % 8) of byte index / 8 | float64 entries, row-major.
void save_proxy_table(std::ostream& out, const ProxyTable& table);
void save_proxy_table(const std::string& path, const ProxyTable& table);
ProxyTable load_proxy_table(std::istream& in);
ProxyTable load_proxy_table(const std::string& path);

}  // namespace reidrefine

#endif  // REIDREFINE_PROXY_TRIPLET_H_
