// SPDX-License-Identifier: Apache-2.0
#include "mbev/detection.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace mbev {

std::array<double, kBoxDims> encode_box(const Object3D& obj, const BoxNorm& n) {
  return {obj.center.x / n.radius,
          obj.center.y / n.radius,
          obj.center.z / n.z_max,
          obj.length / n.size_max,
          obj.width / n.size_max,
          obj.height / n.size_max,
          std::sin(obj.yaw),
          std::cos(obj.yaw),
          obj.vx / n.v_max,
          obj.vy / n.v_max};
}

std::vector<GtTarget> encode_targets(const Scene& scene, const BoxNorm& norm) {
  std::vector<GtTarget> out;
  for (const auto& obj : scene.objects)
    out.push_back({obj.class_id, encode_box(obj, norm)});
  return out;
}

std::vector<double> DetectionSet::probs(int q) const {
  const int k = num_classes + 1;
  std::vector<double> p(k);
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) mx = std::max(mx, double(logits[size_t(q) * k + j]));
  double sum = 0;
  for (int j = 0; j < k; ++j) {
    p[j] = std::exp(double(logits[size_t(q) * k + j]) - mx);
    sum += p[j];
  }
  for (auto& x : p) x /= sum;
  return p;
}

std::vector<WorldDetection> decode_detections(const DetectionSet& det,
                                              const BoxNorm& norm) {
  std::vector<WorldDetection> out;
  for (int q = 0; q < det.queries(); ++q) {
    const auto p = det.probs(q);
    int best = 0;
    for (int j = 1; j < det.num_classes; ++j)
      if (p[j] > p[best]) best = j;
    const float* b = det.boxes.data() + size_t(q) * kBoxDims;
    WorldDetection d;
    d.class_id = best;
    d.score = p[best];
    d.center = {b[0] * norm.radius, b[1] * norm.radius, b[2] * norm.z_max};
    d.length = b[3] * norm.size_max;
    d.width = b[4] * norm.size_max;
    d.height = b[5] * norm.size_max;
    d.yaw = std::atan2(double(b[6]), double(b[7]));
    d.vx = b[8] * norm.v_max;
    d.vy = b[9] * norm.v_max;
    out.push_back(d);
  }
  return out;
}

void export_predictions(const std::string& path,
                        const std::vector<std::vector<WorldDetection>>& per_scene) {
  nlohmann::json records = nlohmann::json::array();
  for (size_t s = 0; s < per_scene.size(); ++s)
    for (size_t q = 0; q < per_scene[s].size(); ++q) {
      const auto& d = per_scene[s][q];
      records.push_back({{"scene", s},
                         {"query", q},
                         {"score", d.score},
                         {"class", d.class_id},
                         {"box",
                          {d.center.x, d.center.y, d.center.z, d.length, d.width,
                           d.height, d.yaw, d.vx, d.vy}}});
    }
  std::ofstream out(path);
  MBEV_CHECK(out.good(), Err::TruncatedFile, "cannot write " + path);
  out << records.dump(1) << "\n";
}

std::vector<std::vector<WorldDetection>> load_predictions(const std::string& path) {
  std::ifstream in(path);
  MBEV_CHECK(in.good(), Err::TruncatedFile, "cannot read " + path);
  nlohmann::json records;
  in >> records;
  std::vector<std::vector<WorldDetection>> out;
  for (const auto& r : records) {
    const size_t s = r.at("scene").get<size_t>();
    if (out.size() <= s) out.resize(s + 1);
    WorldDetection d;
    d.score = r.at("score").get<double>();
    d.class_id = r.at("class").get<int>();
    const auto& b = r.at("box");
    d.center = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>()};
    d.length = b[3].get<double>();
    d.width = b[4].get<double>();
    d.height = b[5].get<double>();
    d.yaw = b[6].get<double>();
    d.vx = b[7].get<double>();
    d.vy = b[8].get<double>();
    out[s].push_back(d);
  }
  return out;
}

// Shortest-augmenting-path assignment with potentials; rows are ground-truth
// boxes, columns are queries. Exact for the small instances used here.
Assignment hungarian_match(const std::vector<double>& cost, int num_queries,
                           int num_gts) {
  Assignment result;
  if (num_gts == 0) return result;
  MBEV_CHECK(num_gts <= num_queries, Err::BadConfig,
             "more ground-truth boxes than queries");
  MBEV_CHECK(int(cost.size()) == num_queries * num_gts, Err::ShapeMismatch,
             "cost matrix size");
  const double inf = std::numeric_limits<double>::infinity();
  const int n = num_gts, m = num_queries;
  std::vector<double> u(n + 1, 0), v(m + 1, 0);
  std::vector<int> match(m + 1, 0);  // query -> gt (1-based)
  std::vector<int> way(m + 1, 0);
  auto c = [&](int gt, int q) { return cost[size_t(q - 1) * num_gts + (gt - 1)]; };

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = c(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  for (int j = 1; j <= m; ++j)
    if (match[j]) {
      result.pairs.push_back({j - 1, match[j] - 1});
      result.cost += c(match[j], j);
    }
  return result;
}

std::vector<double> matching_cost(const DetectionSet& det,
                                  const std::vector<GtTarget>& gts,
                                  double lambda_cls, double lambda_box) {
  MBEV_CHECK(lambda_cls >= 0 && lambda_box >= 0, Err::BadConfig,
             "matching weights must be non-negative");
  const int q_count = det.queries();
  std::vector<double> cost(size_t(q_count) * gts.size(), 0.0);
  for (int q = 0; q < q_count; ++q) {
    const auto p = det.probs(q);
    const float* pb = det.boxes.data() + size_t(q) * kBoxDims;
    for (size_t t = 0; t < gts.size(); ++t) {
      double l1 = 0;
      for (int d = 0; d < 8; ++d) l1 += std::abs(double(pb[d]) - gts[t].box[d]);
      l1 /= 8.0;
      cost[size_t(q) * gts.size() + t] =
          lambda_cls * (-p[gts[t].class_id]) + lambda_box * l1;
    }
  }
  return cost;
}

}  // namespace mbev
