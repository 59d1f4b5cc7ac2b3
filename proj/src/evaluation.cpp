#include "asma/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace asma {

TransferCell attack_success_rate(const Detector& model, const std::vector<FaceImage>& originals,
                                 const std::vector<FaceImage>& adversarials,
                                 const std::vector<int>& labels, AsrMode mode) {
  if (originals.size() != adversarials.size() || originals.size() != labels.size())
    throw EvaluationError("originals, adversarials and labels must be aligned");
  TransferCell cell;
  cell.target_model = model.identifier();
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (mode == AsrMode::Eligible && predicted_class(model, originals[i]) != labels[i]) continue;
    ++cell.n;
    if (predicted_class(model, adversarials[i]) != labels[i]) ++cell.flipped;
  }
  if (cell.n == 0) throw EvaluationError("no eligible samples for '" + model.identifier() + "'");
  cell.asr = static_cast<double>(cell.flipped) / static_cast<double>(cell.n);
  return cell;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  int count = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(workers)));
  for (int t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t sample_seed(std::uint64_t base, std::size_t index) {
  std::uint64_t z = base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<AttackResult> generate_adversarials(AttackKind kind, const Detector& model,
                                                const std::vector<SyntheticSample>& samples,
                                                const AttackConfig& cfg, int workers) {
  std::vector<AttackResult> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    AttackConfig local = cfg;
    local.true_label = samples[i].label;
    local.seed = sample_seed(cfg.seed, i);
    out[i] = run_attack(kind, model, samples[i].image, &samples[i].labels, local);
  });
  return out;
}

std::vector<TransferCell> transfer_matrix(const std::vector<const Detector*>& sources,
                                          const std::vector<const Detector*>& targets,
                                          const std::vector<AttackKind>& attacks,
                                          const std::vector<SyntheticSample>& samples,
                                          const AttackConfig& cfg, int workers, AsrMode mode,
                                          std::vector<std::vector<AttackResult>>* results) {
  if (sources.empty() || targets.empty() || attacks.empty())
    throw EvaluationError("transfer matrix needs sources, targets and attacks");
  int size = sources.front()->input_size();
  for (const auto* m : sources)
    if (m->input_size() != size) throw EvaluationError("models disagree on input size");
  for (const auto* m : targets)
    if (m->input_size() != size) throw EvaluationError("models disagree on input size");

  std::vector<FaceImage> originals;
  std::vector<int> labels;
  for (const auto& s : samples) {
    originals.push_back(s.image);
    labels.push_back(s.label);
  }

  std::vector<TransferCell> cells;
  for (const auto* src : sources) {
    for (AttackKind kind : attacks) {
      auto generated = generate_adversarials(kind, *src, samples, cfg, workers);
      std::vector<FaceImage> adversarials;
      for (auto& r : generated) adversarials.push_back(r.adversarial);
      for (const auto* tgt : targets) {
        TransferCell cell = attack_success_rate(*tgt, originals, adversarials, labels, mode);
        cell.source_model = src->identifier();
        cell.attack = std::string(to_string(kind));
        cells.push_back(std::move(cell));
      }
      if (results) results->push_back(std::move(generated));
    }
  }
  return cells;
}

QualityReport mean_quality(const std::vector<FaceImage>& originals,
                           const std::vector<FaceImage>& adversarials, PixelScale scale) {
  if (originals.size() != adversarials.size()) throw EvaluationError("image lists differ in length");
  QualityReport mean;
  mean.scale = scale;
  if (originals.empty()) return mean;
  mean.psnr = mean.ssim = 0.0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    auto q = quality_report(originals[i], adversarials[i], scale);
    mean.mse += q.mse;
    mean.mae += q.mae;
    mean.psnr += q.psnr;
    mean.ssim += q.ssim;
  }
  double n = static_cast<double>(originals.size());
  mean.mse /= n;
  mean.mae /= n;
  mean.psnr /= n;
  mean.ssim /= n;
  return mean;
}

std::vector<SweepRow> perturbation_sweep(const Detector& model, const std::vector<SyntheticSample>& samples,
                                         const std::vector<double>& eps_list, const AttackConfig& cfg,
                                         PixelScale scale, int workers, AttackKind kind) {
  if (!std::is_sorted(eps_list.begin(), eps_list.end()))
    throw EvaluationError("epsilon list must be ascending");

  std::vector<SweepRow> rows;
  for (double eps : eps_list) {
    AttackConfig local = cfg;
    local.budget.epsilon = eps;
    auto results = generate_adversarials(kind, model, samples, local, workers);
    std::vector<FaceImage> originals, adversarials;
    std::vector<int> labels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      originals.push_back(samples[i].image);
      adversarials.push_back(results[i].adversarial);
      labels.push_back(samples[i].label);
    }
    TransferCell cell = attack_success_rate(model, originals, adversarials, labels);
    SweepRow row;
    row.epsilon = eps;
    row.asr = cell.asr;
    row.n = cell.n;
    row.quality = mean_quality(originals, adversarials, scale);
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

void write_transfer_csv(std::ostream& out, const std::vector<TransferCell>& cells) {
  out << kTransferCsvHeader << '\n';
  for (const auto& c : cells)
    out << c.source_model << ',' << c.target_model << ',' << c.attack << ',' << fmt("%.6f", c.asr)
        << ',' << c.flipped << ',' << c.n << '\n';
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepCsvHeader << '\n';
  for (const auto& r : rows)
    out << fmt("%.4f", r.epsilon) << ',' << fmt("%.6f", r.asr) << ',' << r.n << ','
        << fmt("%.8f", r.quality.mse) << ',' << fmt("%.8f", r.quality.mae) << ','
        << fmt("%.6f", r.quality.psnr) << ',' << fmt("%.6f", r.quality.ssim) << ','
        << to_string(r.quality.scale) << '\n';
}

void write_quality_csv(std::ostream& out, const std::vector<QualityRow>& rows, ValueRateMode mode) {
  out << kQualityCsvHeader << '\n';
  for (const auto& r : rows)
    out << r.attack << ',' << r.n << ',' << fmt("%.8f", r.quality.mse) << ','
        << fmt("%.8f", r.quality.mae) << ',' << fmt("%.6f", r.quality.psnr) << ','
        << fmt("%.6f", r.quality.ssim) << ','
        << (r.quality.value_rate ? fmt("%.6f", *r.quality.value_rate) : std::string()) << ','
        << to_string(mode) << ',' << to_string(r.quality.scale) << '\n';
}

std::string format_transfer_table(const std::vector<TransferCell>& cells) {
  std::vector<std::string> targets;
  for (const auto& c : cells)
    if (std::find(targets.begin(), targets.end(), c.target_model) == targets.end())
      targets.push_back(c.target_model);

  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s| %-12s", "Model", "Method");
  out << buf;
  for (const auto& t : targets) {
    std::snprintf(buf, sizeof(buf), "| %14s ", (t + " ASR(%)").c_str());
    out << buf;
  }
  out << '\n' << std::string(31 + 17 * targets.size(), '-') << '\n';

  std::string last_source;
  for (std::size_t i = 0; i < cells.size(); i += targets.size()) {
    const auto& first = cells[i];
    std::snprintf(buf, sizeof(buf), "%-16s| %-12s",
                  first.source_model == last_source ? "" : first.source_model.c_str(),
                  first.attack.c_str());
    out << buf;
    last_source = first.source_model;
    for (std::size_t j = 0; j < targets.size() && i + j < cells.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "| %14.2f ", 100.0 * cells[i + j].asr);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-12s| %8s | %10s | %10s | %9s | %7s\n", "Perturbation", "ASR(%)",
                "MSE", "MAE", "PSNR", "SSIM");
  out << buf << std::string(70, '-') << '\n';
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-12.2f| %8.2f | %10.4f | %10.4f | %9.4f | %7.4f\n", r.epsilon,
                  100.0 * r.asr, r.quality.mse, r.quality.mae, r.quality.psnr, r.quality.ssim);
    out << buf;
  }
  out << "pixel scale: " << (rows.empty() ? "unit" : to_string(rows.front().quality.scale))
      << "; PSNR of identical images capped at " << kPsnrCap << " dB\n";
  return out.str();
}

std::string format_quality_table(const std::vector<QualityRow>& rows, ValueRateMode mode) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s| %10s | %10s | %9s | %7s | %10s\n", "Method", "MSE", "MAE",
                "PSNR", "SSIM", "Value Rate");
  out << buf << std::string(76, '-') << '\n';
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-16s| %10.4f | %10.4f | %9.4f | %7.4f | %10s\n", r.attack.c_str(),
                  r.quality.mse, r.quality.mae, r.quality.psnr, r.quality.ssim,
                  r.quality.value_rate ? fmt("%.4f", *r.quality.value_rate).c_str() : "-");
    out << buf;
  }
  out << "value rate mode: " << to_string(mode) << "; pixel scale: "
      << (rows.empty() ? "unit" : to_string(rows.front().quality.scale)) << '\n';
  return out.str();
}

}  // namespace asma
