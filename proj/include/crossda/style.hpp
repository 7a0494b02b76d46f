#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossda/nn/ops.hpp"
#include "crossda/nn/params.hpp"
#include "crossda/raster.hpp"
#include "json.hpp"

namespace crossda::style {

inline constexpr std::size_t kBands = 6;
/// Floor on the source std in stats mode.
inline constexpr double kStyleEps = 1e-5;

/// Per-band mean and population std over the valid pixels of a tile set, in
/// [-1, 1] space.
struct DomainStyle {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t bands() const noexcept { return mean.size(); }
  nlohmann::json to_json() const;
  static DomainStyle from_json(const nlohmann::json& j);
};

/// Tiles may be U16 (rescaled on the fly) or F32 in [-1, 1].
DomainStyle extract_domain_style(std::span<const Raster> tiles);

/// Per band: sigma_t * (x - mu_s) / max(sigma_s, eps) + mu_t, clamped to
/// [-1, 1]. Input and output are F32; the valid mask is kept.
Raster stylize_stats_mode(const Raster& tile, const DomainStyle& source, const DomainStyle& target);

// --- networks --------------------------------------------------------------

/// Generator: three stride-2 conv layers (6-32-64-128, LeakyReLU), AdaIN at
/// the bottleneck driven by a style vector, three upsample+conv layers
/// (128-64-32-6, ReLU between), a 1x1 input skip and a final Tanh.
nn::ParameterSet make_generator(std::uint64_t seed);

/// Discriminator: four stride-2 conv layers (6-32-64-128-1, LeakyReLU) and a
/// Sigmoid patch head.
nn::ParameterSet make_discriminator(std::uint64_t seed);

/// [N, 12] tensor of (mean, std) per band, repeated for every sample.
template <typename T>
nn::BasicTensor<T> style_tensor(const DomainStyle& style, std::size_t n);

struct GeneratorTrace {
  nn::Var bottleneck;  // AdaIN output
  nn::Var style_mu;
  nn::Var style_sigma;
};

/// `p` holds the generator parameters bound to `tape`, in set order.
template <typename T>
nn::Var generator_forward(nn::BasicTape<T>& tape, std::span<const nn::Var> p, nn::Var x, nn::Var style,
                          GeneratorTrace* trace = nullptr);

template <typename T>
nn::Var discriminator_forward(nn::BasicTape<T>& tape, std::span<const nn::Var> p, nn::Var x);

/// Runs the generator on one F32 tile; the mask is carried over.
Raster generator_apply(const nn::ParameterSet& generator, const Raster& tile, const DomainStyle& style);

// --- training --------------------------------------------------------------

struct StyleTrainConfig {
  std::int64_t steps = 2000;
  std::size_t batch = 4;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 17;
  /// Checkpoints every this many steps when an output directory is given;
  /// 0 writes only the final ones.
  std::int64_t checkpoint_interval = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static StyleTrainConfig from_json(const nlohmann::json& j);
};

struct StyleLogRow {
  std::int64_t step = 0;
  double eq1_st = 0, loss_d_st = 0, loss_g_st = 0, acc_st = 0;
  double eq1_ts = 0, loss_d_ts = 0, loss_g_ts = 0, acc_ts = 0;
};

struct StyleModels {
  nn::ParameterSet g_st;  // source -> target
  nn::ParameterSet d_t;
  nn::ParameterSet g_ts;  // target -> source
  nn::ParameterSet d_s;
  std::vector<StyleLogRow> log;

  /// Mean discriminator accuracy of both pairs over the last `window` steps.
  double tail_accuracy(std::size_t window = 100) const;
};

inline constexpr const char* kStyleCheckpoints[4] = {"g_st.ckpt", "d_t.ckpt", "g_ts.ckpt", "d_s.ckpt"};

/// Alternating D then G updates for both directions each step. With
/// `out_dir` set, writes the four checkpoints and style_log.csv there. A
/// non-finite loss writes *.diag.ckpt files and throws Error(non_finite).
StyleModels train_style(std::span<const Raster> source, std::span<const Raster> target,
                        const DomainStyle& source_style, const DomainStyle& target_style,
                        const StyleTrainConfig& config, const std::optional<std::filesystem::path>& out_dir = {});

void write_style_log(const std::filesystem::path& path, std::span<const StyleLogRow> log);

enum class StyleMode { stats, gan };

const char* style_mode_name(StyleMode m) noexcept;
StyleMode parse_style_mode(std::string_view s);

struct StylizeInputs {
  StyleMode mode = StyleMode::stats;
  DomainStyle source_style;
  DomainStyle target_style;
  /// Required in gan mode: the source-to-target generator checkpoint.
  std::optional<std::filesystem::path> generator_checkpoint;
};

/// One U16 output tile per input tile, masks preserved.
std::vector<Raster> stylize_dataset(std::span<const Raster> tiles, const StylizeInputs& inputs);

}  // namespace crossda::style
