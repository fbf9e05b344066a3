#pragma once

#include "voxgan/voxel.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace voxgan {

/// |pred >= threshold  AND  truth| / |pred >= threshold  OR  truth|; 1 when both are empty.
double iou(const VoxelGrid& pred, const VoxelGrid& truth, float threshold = 0.5f);

struct ScoredLabel {
  double score;
  bool positive;
};

/// Area under the precision-recall curve: the sum over distinct score
/// thresholds, high to low, of (recall gain) * (precision at that threshold).
/// Without ties this is the mean precision at the rank of each positive.
double average_precision(std::span<const ScoredLabel> pairs);

enum class Pooling {
  Dataset,  // all voxels of all samples form one ranking
  Object,   // AP per sample, then averaged
};

const char* pooling_name(Pooling p);
Pooling parse_pooling(const std::string& s);

double average_precision(std::span<const VoxelGrid> pred, std::span<const VoxelGrid> truth,
                         Pooling pooling = Pooling::Dataset);

/// Unweighted mean of the values.
double class_mean(std::span<const double> values);

struct EvalReport {
  std::map<std::string, double> per_class_ap;
  double mean_ap = 0;
  std::vector<double> ious;
  double threshold = 0.5;
  std::size_t sample_count = 0;
  Pooling pooling = Pooling::Dataset;

  double mean_iou() const;
  /// Fixed key order: per_class_ap, mean_ap, mean_iou, threshold, sample_count, pooling, ious.
  std::string to_json() const;
  /// "sample,iou" rows.
  std::string ious_csv() const;
};

struct EvalSample {
  VoxelGrid condition;
  VoxelGrid target;
};

/// Maps a condition grid to a predicted soft occupancy grid.
using CompletionModel = std::function<VoxelGrid(const VoxelGrid& condition)>;

/// Runs the model on every sample and reports IoU and AP, grouping AP by the
/// targets' class tags (untagged samples fall under "all").
EvalReport evaluate_completion(const CompletionModel& model, std::span<const EvalSample> samples,
                               Pooling pooling = Pooling::Dataset, float threshold = 0.5f);

/// Brute-force reference: answer with the target of the training sample whose
/// condition has the highest IoU with the query (first wins on ties).
CompletionModel nearest_neighbor_model(std::vector<EvalSample> training);

}  // namespace voxgan
