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

#include "reidrefine/proxy_triplet.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.h"

namespace reidrefine {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("squared_distance: length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

ProxyTable::ProxyTable(int num_ids, int volume, int dim)
    : num_ids_(num_ids), volume_(volume), dim_(dim) {
  if (num_ids < 2) throw std::invalid_argument("ProxyTable: need >= 2 identities");
  if (volume < 1 || dim < 1) throw std::invalid_argument("ProxyTable: bad volume/dim");
  entries_.assign(static_cast<std::size_t>(num_ids) * volume * dim, 0.0);
  cursors_.assign(num_ids, 0);
  filled_.assign(static_cast<std::size_t>(num_ids) * volume, 0);
}

std::span<const double> ProxyTable::slot(int row, int k) const {
  if (row < 0 || row >= num_ids_ || k < 0 || k >= volume_) {
    throw std::out_of_range("ProxyTable::slot");
  }
  return std::span<const double>(entries_).subspan(flat(row, k) * dim_, dim_);
}

bool ProxyTable::row_has_filled(int row) const {
  for (int k = 0; k < volume_; ++k) {
    if (filled(row, k)) return true;
  }
  return false;
}

int ProxyTable::filled_count() const {
  return static_cast<int>(std::count(filled_.begin(), filled_.end(), 1));
}

void ProxyTable::update(std::span<const Entry> batch) {
  for (const Entry& e : batch) {
    if (e.identity < 0 || e.identity >= num_ids_) {
      throw std::invalid_argument("ProxyTable::update: identity out of range");
    }
    if (e.embedding.size() != static_cast<std::size_t>(dim_)) {
      throw std::invalid_argument("ProxyTable::update: embedding dimension");
    }
    double sq = 0.0;
    for (double v : e.embedding) {
      if (!std::isfinite(v)) throw std::invalid_argument("ProxyTable::update: non-finite");
      sq += v * v;
    }
    if (std::abs(sq - 1.0) > 1e-6) {
      throw std::invalid_argument("ProxyTable::update: embedding not unit-norm");
    }
  }
  for (const Entry& e : batch) {
    int& cur = cursors_[e.identity];
    const std::size_t s = flat(e.identity, cur);
    std::copy(e.embedding.begin(), e.embedding.end(),
              entries_.begin() + static_cast<std::ptrdiff_t>(s * dim_));
    filled_[s] = 1;
    cur = (cur + 1) % volume_;
  }
}

void table_update(ProxyTable& table, std::span<const TripletAnchor> batch) {
  std::vector<ProxyTable::Entry> entries;
  entries.reserve(batch.size());
  for (const TripletAnchor& a : batch) entries.push_back({a.embedding, a.identity});
  table.update(entries);
}

TripletLoss mine_and_loss(const ProxyTable& table,
                          std::span<const TripletAnchor> batch, double margin,
                          NegativeSet negatives) {
  const int n_ids = table.num_ids();
  const int vol = table.volume();
  for (const TripletAnchor& a : batch) {
    if (a.identity < 0 || a.identity >= n_ids) {
      throw std::invalid_argument("mine_and_loss: identity out of range");
    }
    if (a.embedding.size() != static_cast<std::size_t>(table.dim())) {
      throw std::invalid_argument("mine_and_loss: embedding dimension");
    }
  }

  TripletLoss out;
  out.grads.assign(batch.size(), std::vector<double>(table.dim(), 0.0));
  out.mined.resize(batch.size());

  std::vector<char> negative_row(n_ids);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TripletAnchor& a = batch[i];
    MinedTriplet& m = out.mined[i];
    const int own = a.identity;

    double best_pos = -1.0;
    for (int k = 0; k < vol; ++k) {
      if (!table.filled(own, k)) continue;
      const double d = squared_distance(a.embedding, table.slot(own, k));
      if (d > best_pos) {
        best_pos = d;
        m.pos_row = own;
        m.pos_slot = k;
      }
    }
    if (m.pos_slot < 0) {
      m.status = AnchorStatus::kSkippedNoPositive;
      ++out.skipped;
      continue;
    }

    if (negatives == NegativeSet::kAllOtherRows) {
      std::fill(negative_row.begin(), negative_row.end(), 1);
    } else {
      std::fill(negative_row.begin(), negative_row.end(), 0);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j != i) negative_row[batch[j].identity] = 1;
      }
    }
    negative_row[own] = 0;

    double best_neg = std::numeric_limits<double>::infinity();
    for (int r = 0; r < n_ids; ++r) {
      if (!negative_row[r]) continue;
      for (int k = 0; k < vol; ++k) {
        if (!table.filled(r, k)) continue;
        const double d = squared_distance(a.embedding, table.slot(r, k));
        if (d < best_neg) {
          best_neg = d;
          m.neg_row = r;
          m.neg_slot = k;
        }
      }
    }
    if (m.neg_slot < 0) {
      throw NoNegativeError("mine_and_loss: no filled negative proxy for anchor of identity " +
                            std::to_string(own));
    }

    m.d_pos = best_pos;
    m.d_neg = best_neg;
    const double hinge = margin + best_pos - best_neg;
    if (hinge > 0.0) {
      m.status = AnchorStatus::kActive;
      m.loss = hinge;
      out.loss += hinge;
      // d/df [D(f,p) - D(f,n)] = 2(f - p) - 2(f - n) = 2(n - p)
      const auto p = table.slot(m.pos_row, m.pos_slot);
      const auto n = table.slot(m.neg_row, m.neg_slot);
      for (int j = 0; j < table.dim(); ++j) out.grads[i][j] = 2.0 * (n[j] - p[j]);
    } else {
      m.status = AnchorStatus::kInactive;
    }
  }
  return out;
}

ClassLoss classification_loss(std::span<const double> logits, int identity) {
  if (identity < 0 || static_cast<std::size_t>(identity) >= logits.size()) {
    throw std::invalid_argument("classification_loss: identity out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  ClassLoss out;
  out.loss = std::log(z) - (logits[identity] - mx);
  out.d_logits.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.d_logits[k] = std::exp(logits[k] - mx) / z;
  }
  out.d_logits[identity] -= 1.0;
  return out;
}

void save_proxy_table(std::ostream& out, const ProxyTable& table) {
  using internal::write_le;
  out.write("PTB1", 4);
  write_le<std::int32_t>(out, table.num_ids());
  write_le<std::int32_t>(out, table.volume());
  write_le<std::int32_t>(out, table.dim());
  for (int r = 0; r < table.num_ids(); ++r) write_le<std::int32_t>(out, table.cursor(r));
  const std::size_t slots = static_cast<std::size_t>(table.num_ids()) * table.volume();
  std::vector<char> bitmap((slots + 7) / 8, 0);
  for (std::size_t s = 0; s < slots; ++s) {
    if (table.filled(static_cast<int>(s / table.volume()),
                     static_cast<int>(s % table.volume()))) {
      bitmap[s / 8] = static_cast<char>(bitmap[s / 8] | (1 << (s % 8)));
    }
  }
  out.write(bitmap.data(), static_cast<std::streamsize>(bitmap.size()));
  for (int r = 0; r < table.num_ids(); ++r) {
    for (int k = 0; k < table.volume(); ++k) {
      for (double v : table.slot(r, k)) write_le<double>(out, v);
    }
  }
  if (!out) throw std::runtime_error("save_proxy_table: write failed");
}

void save_proxy_table(const std::string& path, const ProxyTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot create " + path);
  save_proxy_table(out, table);
}

ProxyTable load_proxy_table(std::istream& in) {
  using internal::read_le;
  internal::expect_magic(in, "PTB1");
  const int n = read_le<std::int32_t>(in);
  const int k = read_le<std::int32_t>(in);
  const int d = read_le<std::int32_t>(in);
  if (n < 2 || k < 1 || d < 1 || n > (1 << 20) || k > (1 << 16) || d > (1 << 16)) {
    throw std::runtime_error("load_proxy_table: bad header");
  }
  ProxyTable t(n, k, d);
  for (int r = 0; r < n; ++r) {
    const int c = read_le<std::int32_t>(in);
    if (c < 0 || c >= k) throw std::runtime_error("load_proxy_table: bad cursor");
    t.cursors_[r] = c;
  }
  const std::size_t slots = static_cast<std::size_t>(n) * k;
  std::vector<unsigned char> bitmap((slots + 7) / 8);
  in.read(reinterpret_cast<char*>(bitmap.data()), static_cast<std::streamsize>(bitmap.size()));
  if (!in) throw std::runtime_error("load_proxy_table: truncated bitmap");
  for (std::size_t s = 0; s < slots; ++s) t.filled_[s] = (bitmap[s / 8] >> (s % 8)) & 1;
  for (double& v : t.entries_) v = read_le<double>(in);
  return t;
}

ProxyTable load_proxy_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_proxy_table(in);
}

}  // namespace reidrefine
