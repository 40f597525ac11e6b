#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdqa/datasynth.hpp"
#include "pdqa/model.hpp"
#include "pdqa/training.hpp"

namespace pdqa {

// Spearman rank correlation: Pearson over fractional (midrank) ranks.
// Kendall is tau-b, tie-corrected, computed with merge-sort inversion
// counting. All three reject constant inputs.
double srcc(const std::vector<double>& x, const std::vector<double>& y);
double plcc(const std::vector<double>& x, const std::vector<double>& y);
double krcc(const std::vector<double>& x, const std::vector<double>& y);

struct MetricTriple {
  double srcc = 0.0;
  double plcc = 0.0;
  double krcc = 0.0;
};

struct RepeatMetrics {
  MetricTriple test;
  MetricTriple train;
};

struct MetricsReport {
  std::vector<RepeatMetrics> repeats;
  MetricTriple average;  // arithmetic mean of the test triples
};

// Serialized as {"repeats": [...], "average": {"srcc":..,"plcc":..,"krcc":..}}
// with train-split metrics carried per repeat as train_* fields.
std::string report_to_json(const MetricsReport& report);

// Grid-patch predictions for every sample, correlated against MOS.
MetricTriple evaluate(const Model& model,
                      const std::vector<LabeledImage>& samples,
                      std::size_t n_patches);

struct ProtocolConfig {
  std::size_t repeats = 10;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::uint64_t bank_seed = 0;
  std::size_t eval_patches = 4;
};

std::vector<LabeledImage> load_labeled_images(
    const std::vector<ManifestRecord>& records, const std::string& image_root);

// The repeated random-split protocol: per repeat, re-split by content,
// re-initialize the prompt bank, train (unless the mode has nothing to
// train), and evaluate both splits. Deterministic given its seeds.
MetricsReport run_protocol(const ModelConfig& config,
                           const BackboneParams& backbone,
                           const HandcraftedPrompts& prompts, PromptMode mode,
                           const std::vector<ManifestRecord>& records,
                           const std::string& image_root,
                           const TrainConfig& train_config,
                           const ProtocolConfig& protocol);

}  // namespace pdqa
