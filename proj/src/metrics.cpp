#include "voxgan/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace voxgan {

double iou(const VoxelGrid& pred, const VoxelGrid& truth, float threshold) {
  if (pred.extent() != truth.extent())
    throw DataError("iou: extent mismatch (" + std::to_string(pred.extent()) + " vs " +
                    std::to_string(truth.extent()) + ")");
  std::int64_t inter = 0, uni = 0;
  const auto& p = pred.values();
  const auto& t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] >= threshold, b = t[i] > 0.5f;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double average_precision(std::span<const ScoredLabel> pairs) {
  if (pairs.empty()) throw DataError("average_precision: empty evaluation set");
  const auto positives = std::count_if(pairs.begin(), pairs.end(), [](const ScoredLabel& s) { return s.positive; });
  if (positives == 0) throw DataError("average_precision: no positive labels");
  std::vector<ScoredLabel> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  double ap = 0;
  std::int64_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::int64_t group_tp = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) group_tp += sorted[j++].positive;
    tp += group_tp;
    seen += static_cast<std::int64_t>(j - i);
    ap += static_cast<double>(group_tp) / static_cast<double>(positives) * static_cast<double>(tp) /
          static_cast<double>(seen);
    i = j;
  }
  return ap;
}

const char* pooling_name(Pooling p) { return p == Pooling::Dataset ? "dataset" : "object"; }

Pooling parse_pooling(const std::string& s) {
  if (s == "dataset") return Pooling::Dataset;
  if (s == "object") return Pooling::Object;
  throw DataError("unknown pooling '" + s + "' (expected dataset or object)");
}

namespace {

void append_pairs(const VoxelGrid& pred, const VoxelGrid& truth, std::vector<ScoredLabel>& out) {
  if (pred.extent() != truth.extent()) throw DataError("average_precision: extent mismatch");
  for (std::size_t i = 0; i < pred.values().size(); ++i)
    out.push_back({pred.values()[i], truth.values()[i] > 0.5f});
}

}  // namespace

double average_precision(std::span<const VoxelGrid> pred, std::span<const VoxelGrid> truth, Pooling pooling) {
  if (pred.size() != truth.size()) throw DataError("average_precision: prediction and truth counts differ");
  if (pred.empty()) throw DataError("average_precision: empty evaluation set");
  if (pooling == Pooling::Dataset) {
    std::vector<ScoredLabel> pairs;
    for (std::size_t i = 0; i < pred.size(); ++i) append_pairs(pred[i], truth[i], pairs);
    return average_precision(pairs);
  }
  std::vector<double> per;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<ScoredLabel> pairs;
    append_pairs(pred[i], truth[i], pairs);
    per.push_back(average_precision(pairs));
  }
  return class_mean(per);
}

double class_mean(std::span<const double> values) {
  if (values.empty()) throw DataError("class_mean: no values");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double EvalReport::mean_iou() const {
  return ious.empty() ? 0.0 : std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& [k, v] : per_class_ap) classes[k] = v;
  j["per_class_ap"] = classes;
  j["mean_ap"] = mean_ap;
  j["mean_iou"] = mean_iou();
  j["threshold"] = threshold;
  j["sample_count"] = sample_count;
  j["pooling"] = pooling_name(pooling);
  j["ious"] = ious;
  return j.dump(2) + "\n";
}

std::string EvalReport::ious_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "sample,iou\n";
  for (std::size_t i = 0; i < ious.size(); ++i) os << i << ',' << ious[i] << '\n';
  return os.str();
}

EvalReport evaluate_completion(const CompletionModel& model, std::span<const EvalSample> samples, Pooling pooling,
                               float threshold) {
  if (samples.empty()) throw DataError("evaluate_completion: empty test set");
  EvalReport r;
  r.threshold = threshold;
  r.pooling = pooling;
  r.sample_count = samples.size();
  std::map<std::string, std::pair<std::vector<VoxelGrid>, std::vector<VoxelGrid>>> by_class;
  for (const auto& s : samples) {
    VoxelGrid pred = model(s.condition);
    r.ious.push_back(iou(pred, s.target, threshold));
    auto& [p, t] = by_class[s.target.class_tag.empty() ? "all" : s.target.class_tag];
    p.push_back(std::move(pred));
    t.push_back(s.target);
  }
  std::vector<double> aps;
  for (auto& [cls, pt] : by_class) {
    const double ap = average_precision(pt.first, pt.second, pooling);
    r.per_class_ap[cls] = ap;
    aps.push_back(ap);
  }
  r.mean_ap = class_mean(aps);
  return r;
}

CompletionModel nearest_neighbor_model(std::vector<EvalSample> training) {
  if (training.empty()) throw DataError("nearest_neighbor_model: empty training set");
  return [train = std::move(training)](const VoxelGrid& query) {
    std::size_t best = 0;
    double best_iou = -1;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double v = iou(query, train[i].condition);
      if (v > best_iou) {
        best_iou = v;
        best = i;
      }
    }
    return train[best].target;
  };
}

}  // namespace voxgan
