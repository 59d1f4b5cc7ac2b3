#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "asma/attacks.hpp"
#include "asma/metrics.hpp"
#include "asma/synthetic.hpp"

namespace asma {

/// Which samples count toward the ASR denominator.
enum class AsrMode {
  Eligible,  ///< only samples the model classified correctly before the attack
  RawFlip    ///< every sample; counts adversarials misclassified by the model
};

struct TransferCell {
  std::string source_model;
  std::string target_model;
  std::string attack;
  double asr = 0.0;
  int flipped = 0;
  int n = 0;
};

TransferCell attack_success_rate(const Detector& model, const std::vector<FaceImage>& originals,
                                 const std::vector<FaceImage>& adversarials,
                                 const std::vector<int>& labels, AsrMode mode = AsrMode::Eligible);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write
/// results into slot i so output order never depends on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Attacks every sample with cfg.true_label set to its ground-truth label and
/// a per-sample seed derived from cfg.seed.
std::vector<AttackResult> generate_adversarials(AttackKind kind, const Detector& model,
                                                const std::vector<SyntheticSample>& samples,
                                                const AttackConfig& cfg, int workers = 1);

std::uint64_t sample_seed(std::uint64_t base, std::size_t index);

/// One cell per (source, attack, target), ordered source-major, then attack, then target.
/// When `results` is given it receives the adversarials of every (source, attack) pair in the same order.
std::vector<TransferCell> transfer_matrix(const std::vector<const Detector*>& sources,
                                          const std::vector<const Detector*>& targets,
                                          const std::vector<AttackKind>& attacks,
                                          const std::vector<SyntheticSample>& samples,
                                          const AttackConfig& cfg, int workers = 1,
                                          AsrMode mode = AsrMode::Eligible,
                                          std::vector<std::vector<AttackResult>>* results = nullptr);

struct SweepRow {
  double epsilon = 0.0;
  double asr = 0.0;
  int n = 0;
  /// Means over the evaluated samples.
  QualityReport quality;
};

/// One ASMA run per epsilon (ascending), step size and iterations fixed.
std::vector<SweepRow> perturbation_sweep(const Detector& model, const std::vector<SyntheticSample>& samples,
                                         const std::vector<double>& eps_list, const AttackConfig& cfg,
                                         PixelScale scale = PixelScale::Unit, int workers = 1,
                                         AttackKind kind = AttackKind::Asma);

/// Per-attack mean quality over a sample set.
struct QualityRow {
  std::string attack;
  QualityReport quality;
  int n = 0;
};

QualityReport mean_quality(const std::vector<FaceImage>& originals,
                           const std::vector<FaceImage>& adversarials, PixelScale scale);

inline constexpr const char* kTransferCsvHeader = "source_model,target_model,attack,asr,flipped,n";
inline constexpr const char* kSweepCsvHeader = "epsilon,asr,n,mse,mae,psnr,ssim,pixel_scale";
inline constexpr const char* kQualityCsvHeader = "attack,n,mse,mae,psnr,ssim,value_rate,value_rate_mode,pixel_scale";

void write_transfer_csv(std::ostream& out, const std::vector<TransferCell>& cells);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_quality_csv(std::ostream& out, const std::vector<QualityRow>& rows, ValueRateMode mode);

/// Fixed-width text tables.
std::string format_transfer_table(const std::vector<TransferCell>& cells);
std::string format_sweep_table(const std::vector<SweepRow>& rows);
std::string format_quality_table(const std::vector<QualityRow>& rows, ValueRateMode mode);

}  // namespace asma
