#include "pdqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "pdqa/scoring.hpp"

namespace pdqa {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

void check_pair(const std::vector<double>& x, const std::vector<double>& y,
                const char* op) {
  require(x.size() == y.size(), std::string(op) + ": length mismatch");
  require(x.size() >= 2, std::string(op) + ": need at least 2 observations");
}

bool is_constant(const std::vector<double>& v) {
  for (double a : v)
    if (a != v.front()) return false;
  return true;
}

// Fractional (midrank) ranks, 1-based.
std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y,
               const char* op) {
  require(!is_constant(x) && !is_constant(y),
          std::string(op) + ": constant input, correlation undefined");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

// Pairs i<j with values[i] > values[j], counted by a stable merge sort.
std::uint64_t count_inversions(std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<double> buffer(n);
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
      const std::size_t mid = lo + width;
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t a = lo, b = mid, out = lo;
      while (a < mid && b < hi) {
        if (values[b] < values[a]) {
          inversions += mid - a;
          buffer[out++] = values[b++];
        } else {
          buffer[out++] = values[a++];
        }
      }
      while (a < mid) buffer[out++] = values[a++];
      while (b < hi) buffer[out++] = values[b++];
      std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(lo),
                buffer.begin() + static_cast<std::ptrdiff_t>(hi),
                values.begin() + static_cast<std::ptrdiff_t>(lo));
    }
  }
  return inversions;
}

// Sum of t*(t-1)/2 over runs of equal values in a sorted vector.
std::uint64_t tie_pairs(std::vector<double> sorted) {
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t pairs = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const std::uint64_t t = j - i + 1;
    pairs += t * (t - 1) / 2;
    i = j + 1;
  }
  return pairs;
}

}  // namespace

double srcc(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y, "srcc");
  require(!is_constant(x) && !is_constant(y),
          "srcc: constant input, correlation undefined");
  return pearson(midranks(x), midranks(y), "srcc");
}

double plcc(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y, "plcc");
  return pearson(x, y, "plcc");
}

double krcc(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y, "krcc");
  require(!is_constant(x) && !is_constant(y),
          "krcc: constant input, correlation undefined");
  const std::size_t n = x.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  // Tie corrections: pairs tied in x, in y, and in both.
  std::uint64_t xtie = 0, ntie = 0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
      const std::uint64_t t = j - i + 1;
      xtie += t * (t - 1) / 2;
      std::size_t a = i;
      while (a <= j) {
        std::size_t b = a;
        while (b + 1 <= j && y[order[b + 1]] == y[order[a]]) ++b;
        const std::uint64_t u = b - a + 1;
        ntie += u * (u - 1) / 2;
        a = b + 1;
      }
      i = j + 1;
    }
  }
  const std::uint64_t ytie = tie_pairs(y);

  std::vector<double> y_in_x_order(n);
  for (std::size_t i = 0; i < n; ++i) y_in_x_order[i] = y[order[i]];
  const std::uint64_t discordant = count_inversions(y_in_x_order);

  const std::uint64_t n0 =
      static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const double con_minus_dis =
      static_cast<double>(n0) - static_cast<double>(xtie) -
      static_cast<double>(ytie) + static_cast<double>(ntie) -
      2.0 * static_cast<double>(discordant);
  return con_minus_dis /
         std::sqrt(static_cast<double>(n0 - xtie) *
                   static_cast<double>(n0 - ytie));
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["repeats"] = nlohmann::json::array();
  for (const RepeatMetrics& r : report.repeats)
    j["repeats"].push_back({
        {"srcc", r.test.srcc}, {"plcc", r.test.plcc}, {"krcc", r.test.krcc},
        {"train_srcc", r.train.srcc}, {"train_plcc", r.train.plcc},
        {"train_krcc", r.train.krcc},
    });
  j["average"] = {{"srcc", report.average.srcc},
                  {"plcc", report.average.plcc},
                  {"krcc", report.average.krcc}};
  return j.dump();
}

MetricTriple evaluate(const Model& model,
                      const std::vector<LabeledImage>& samples,
                      std::size_t n_patches) {
  require(!samples.empty(), "evaluate: empty split");
  std::vector<double> predicted;
  std::vector<double> target;
  predicted.reserve(samples.size());
  target.reserve(samples.size());
  for (const LabeledImage& s : samples) {
    predicted.push_back(predict_image_quality(s.image, model.config,
                                              model.backbone, model.bank_ptr(),
                                              model.prompts, n_patches,
                                              PatchMode::kGrid)
                            .q_hat);
    target.push_back(s.mos);
  }
  return MetricTriple{srcc(predicted, target), plcc(predicted, target),
                      krcc(predicted, target)};
}

std::vector<LabeledImage> load_labeled_images(
    const std::vector<ManifestRecord>& records,
    const std::string& image_root) {
  std::vector<LabeledImage> samples;
  samples.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    LabeledImage s;
    s.image = read_ppm(
        (std::filesystem::path(image_root) / records[i].image_path).string());
    s.mos = records[i].mos;
    s.content_id = records[i].content_id;
    s.record_index = i;
    samples.push_back(std::move(s));
  }
  return samples;
}

MetricsReport run_protocol(const ModelConfig& cfg,
                           const BackboneParams& backbone,
                           const HandcraftedPrompts& prompts, PromptMode mode,
                           const std::vector<ManifestRecord>& records,
                           const std::string& image_root,
                           const TrainConfig& train_cfg,
                           const ProtocolConfig& protocol) {
  require(protocol.repeats >= 1, "run_protocol: repeats must be >= 1");
  const std::vector<LabeledImage> all = load_labeled_images(records, image_root);

  MetricsReport report;
  for (std::size_t repeat = 0; repeat < protocol.repeats; ++repeat) {
    const auto split = split_by_content(records, protocol.train_fraction,
                                        repeat, protocol.split_seed);
    std::vector<LabeledImage> train_set, test_set;
    for (std::size_t i = 0; i < split.size(); ++i)
      (split[i].split == "train" ? train_set : test_set).push_back(all[i]);

    Model model;
    model.config = cfg;
    model.mode = mode;
    model.prompts = prompts;
    model.backbone = backbone;
    model.bank = init_prompt_bank(cfg, mix_seed(protocol.bank_seed, repeat),
                                  mode);
    if (mode != PromptMode::kNone) {
      TrainConfig repeat_cfg = train_cfg;
      repeat_cfg.seed = mix_seed(train_cfg.seed, 0xf17, repeat);
      fit(cfg, backbone, model.bank, prompts, train_set, repeat_cfg);
    }

    RepeatMetrics rm;
    rm.test = evaluate(model, test_set, protocol.eval_patches);
    rm.train = evaluate(model, train_set, protocol.eval_patches);
    report.repeats.push_back(rm);
  }

  for (const RepeatMetrics& r : report.repeats) {
    report.average.srcc += r.test.srcc;
    report.average.plcc += r.test.plcc;
    report.average.krcc += r.test.krcc;
  }
  const auto n = static_cast<double>(report.repeats.size());
  report.average.srcc /= n;
  report.average.plcc /= n;
  report.average.krcc /= n;
  return report;
}

}  // namespace pdqa
