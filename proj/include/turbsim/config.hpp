#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "turbsim/geometric.hpp"
#include "turbsim/p2s.hpp"
#include "turbsim/zernike_sim.hpp"

namespace turbsim {

/// Seed used when none is given. Fixed so default runs are reproducible.
inline constexpr std::uint64_t kDefaultSeed = 20240611;
/// Seed of the PSF-basis training draw, independent of per-image seeds.
inline constexpr std::uint64_t kDefaultBasisSeed = 7;

enum class Method { geometric, zernike, p2s };

Method parse_method(std::string_view name);  // throws ConfigError
std::string method_name(Method m);

enum class SplitRole { train_aug, test_aug };

struct ZernikeSettings {
  OpticalParams optics = OpticalParams::table2();
  double correlation_length = 32.0;
  int num_modes = 36;
  int tile_size = 32;
  int pupil_grid = 64;
  int psf_support = 33;
};

struct P2sSettings {
  OpticalParams optics = OpticalParams::table3();
  double correlation_length = 32.0;
  int num_modes = 36;
  int samples = 2000;
  int components = 32;
  int grid_spacing = 16;
  int pupil_grid = 64;
  int psf_support = 33;
  std::uint64_t basis_seed = kDefaultBasisSeed;
  std::optional<std::filesystem::path> basis_file;  // load instead of building
};

/// One simulation setup plus run plumbing. Only the block that matches
/// `method` is meaningful.
struct RunConfig {
  Method method = Method::geometric;
  GeometricParams geometric;
  ZernikeSettings zernike;
  P2sSettings p2s;
  std::vector<double> gamma_levels{25, 50, 100, 150};  // geometric augmentation grid
  SplitRole role = SplitRole::train_aug;
  std::uint64_t seed = kDefaultSeed;
  int workers = 0;  // 0: all hardware threads

  void validate() const;
};

/// "table1" (geometric), "table2" (Zernike), "table3" (P2S).
RunConfig preset(std::string_view name);
/// The preset that belongs to a method.
RunConfig default_config(Method m);

/// Applies a JSON document on top of `base`. Unknown keys, blocks for a method
/// other than the selected one, or wrongly typed values throw ConfigError.
RunConfig apply_config_json(const RunConfig& base, const nlohmann::json& doc);
RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base);
nlohmann::json config_to_json(const RunConfig& config);

/// Flat description of a setting, as recorded in provenance and printed by the CLI.
nlohmann::json method_params_json(const RunConfig& config);

OpticalParams optics_from_json(const nlohmann::json& j, OpticalParams base);
nlohmann::json optics_to_json(const OpticalParams& p);

struct SimOutput {
  Image image;
  DistortionField field;
};

/// A ready-to-run simulator. For P2S the basis is loaded or built once (and
/// shared between copies).
class Simulator {
public:
  explicit Simulator(const RunConfig& config);

  const RunConfig& config() const { return config_; }
  const PsfBasis* basis() const { return basis_.get(); }

  /// Runs the configured method. For geometric, `gamma` overrides the config
  /// gain (used by the augmentation grid).
  SimOutput run(const Image& image, Seed seed, std::optional<double> gamma = std::nullopt) const;

private:
  RunConfig config_;
  std::shared_ptr<const PsfBasis> basis_;
};

PsfBasisConfig basis_config(const P2sSettings& s);

/// Binding surface: method name plus a JSON block for that method (same keys
/// as the config file block), applied on top of the method's preset.
Image simulate_by_name(const Image& image, std::string_view method, const nlohmann::json& params, Seed seed);

}  // namespace turbsim
