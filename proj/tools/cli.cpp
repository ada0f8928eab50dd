#include "cli.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "turbsim/coco_eval.hpp"
#include "turbsim/config.hpp"
#include "turbsim/dataset.hpp"
#include "turbsim/image_io.hpp"
#include "turbsim/kernels.hpp"
#include "turbsim/noll_covariance.hpp"
#include "turbsim/random.hpp"

namespace turbsim::cli {

using nlohmann::json;

namespace {

// Options shared by every command that needs a RunConfig.
struct ConfigFlags {
  std::optional<std::string> method, preset, config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;

  void attach(CLI::App& app) {
    app.add_option("--method", method, "geometric, zernike or p2s");
    app.add_option("--preset", preset, "table1, table2 or table3");
    app.add_option("--config", config, "JSON config; flags override it");
    app.add_option("--seed", seed, "master seed (default " + std::to_string(kDefaultSeed) + ")");
    app.add_option("--workers", workers, "worker threads, 0 = all");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (preset) {
      c = turbsim::preset(*preset);
      if (method && parse_method(*method) != c.method)
        throw ConfigError("--method " + *method + " conflicts with --preset " + *preset);
    } else if (method) {
      c = default_config(parse_method(*method));
    } else {
      c = turbsim::preset("table1");
    }
    if (config) {
      c = load_config_file(*config, c);
      if (method && parse_method(*method) != c.method)
        throw ConfigError("--method " + *method + " conflicts with the method in " + *config);
    }
    if (seed) c.seed = *seed;
    if (workers) c.workers = *workers;
    c.validate();
    return c;
  }
};

BitDepth parse_depth(int bits) {
  if (bits == 8) return BitDepth::k8;
  if (bits == 16) return BitDepth::k16;
  throw ConfigError("--depth must be 8 or 16");
}

void emit_json(const json& j, const std::optional<std::string>& path, std::ostream& out) {
  if (!path) {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(*path);
  if (!f) throw IoError("cannot write " + *path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing " + *path);
}

const OpticalParams* optics_of(const RunConfig& c) {
  switch (c.method) {
    case Method::zernike: return &c.zernike.optics;
    case Method::p2s: return &c.p2s.optics;
    default: return nullptr;
  }
}

void describe(const RunConfig& c, std::ostream& err) {
  err << "method: " << method_name(c.method) << "  seed: " << c.seed << '\n';
  err << "params: " << method_params_json(c).dump() << '\n';
  if (const OpticalParams* o = optics_of(c)) {
    const double r0 = fried_parameter(*o);
    err << "r0: " << r0 << " m  D/r0: " << o->aperture_diameter / r0 << "  pixel pitch: " << pixel_pitch(*o) << " m\n";
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ---- simulate -------------------------------------------------------------

struct SimulateCmd {
  ConfigFlags flags;
  std::optional<double> gamma;
  std::string input, output;
  std::optional<std::string> field_out;
  int depth = 8;

  void attach(CLI::App& app) {
    flags.attach(app);
    app.add_option("--gamma", gamma, "geometric distortion gain");
    app.add_option("input", input, "input image (PNG or PGM)")->required();
    app.add_option("--out,-o", output, "output image")->required();
    app.add_option("--field-out", field_out, "write the distortion field as JSON");
    app.add_option("--depth", depth, "output bit depth, 8 or 16");
  }

  int run(std::ostream& out, std::ostream& err) const {
    (void)out;
    RunConfig c = flags.resolve();
    if (gamma) {
      if (c.method != Method::geometric) throw ConfigError("--gamma only applies to the geometric method");
      c.geometric.gamma = *gamma;
      c.validate();
    }
    const BitDepth bits = parse_depth(depth);
    if (c.workers > 0) omp_set_num_threads(c.workers);
    describe(c, err);
    const Image img = read_image(input);
    const auto t0 = std::chrono::steady_clock::now();
    const Simulator sim(c);
    const double setup = elapsed_ms(t0);
    const auto t1 = std::chrono::steady_clock::now();
    const SimOutput res = sim.run(img, Seed{c.seed});
    const double run_ms = elapsed_ms(t1);
    write_image(output, res.image, bits);
    if (field_out) {
      json f{{"width", res.field.width()}, {"height", res.field.height()}, {"du", res.field.du.pixels()},
             {"dv", res.field.dv.pixels()}};
      emit_json(f, field_out, out);
    }
    err << std::fixed << std::setprecision(1) << "simulated " << img.width() << "x" << img.height() << " in "
        << run_ms << " ms (setup " << setup << " ms) -> " << output << '\n';
    return ok;
  }
};

// ---- p2s-basis build ------------------------------------------------------

struct BasisBuildCmd {
  ConfigFlags flags;
  std::string output;
  int held_out = 200;

  void attach(CLI::App& app) {
    flags.attach(app);
    app.add_option("--out,-o", output, "basis file")->required();
    app.add_option("--held-out", held_out, "held-out PSFs for the reconstruction check");
  }

  int run(std::ostream&, std::ostream& err) const {
    ConfigFlags f = flags;
    if (!f.preset && !f.method && !f.config) f.preset = "table3";
    RunConfig c = f.resolve();
    if (c.method != Method::p2s) throw ConfigError("p2s-basis build needs the p2s method");
    c.p2s.basis_file.reset();
    if (c.workers > 0) omp_set_num_threads(c.workers);
    describe(c, err);
    const auto t0 = std::chrono::steady_clock::now();
    const PsfBasisConfig bc = basis_config(c.p2s);
    const PsfBasis b = build_psf_basis(c.p2s.optics, bc, Seed{c.p2s.basis_seed});
    write_psf_basis(output, b);
    double explained = 0;
    for (double v : b.explained_variance) explained += v;
    err << std::setprecision(4) << "basis: N=" << b.samples << " K=" << b.components() << " J=" << b.num_modes
        << " explained variance " << explained << " training residual " << b.training_residual << '\n';
    if (held_out > 0) {
      const PsfSamples s = sample_psfs(c.p2s.optics, bc, held_out, derive_seed(Seed{c.p2s.basis_seed}, 0x686f));
      double err_sum = 0;
      for (const Kernel& k : s.psfs) {
        const Kernel r = reconstruct_psf(b, project_psf(b, k));
        double num = 0, den = 0;
        for (std::size_t i = 0; i < k.weights.size(); ++i)
          num += std::pow(r.weights[i] - k.weights[i], 2), den += k.weights[i] * k.weights[i];
        err_sum += std::sqrt(num / den);
      }
      err << "held-out reconstruction error: " << err_sum / held_out << " (relative L2, " << held_out << " PSFs)\n";
    }
    err << std::fixed << std::setprecision(1) << "built in " << elapsed_ms(t0) << " ms -> " << output << '\n';
    return ok;
  }
};

// ---- augment --------------------------------------------------------------

struct AugmentCmd {
  ConfigFlags flags;
  std::vector<double> gammas;
  std::optional<std::string> role;
  std::string coco, images, output;
  std::vector<std::string> categories;
  bool warp_boxes = false;
  int depth = 8;

  void attach(CLI::App& app) {
    flags.attach(app);
    app.add_option("--gamma", gammas, "geometric gamma levels (comma separated)")->delimiter(',');
    app.add_option("--role", role, "train-aug (gamma grid) or test-aug (gamma 100)");
    app.add_option("--coco", coco, "source COCO annotation file")->required();
    app.add_option("--images", images, "directory the file_name entries are relative to");
    app.add_option("--out,-o", output, "output directory")->required();
    app.add_option("--categories", categories, "keep only these category names")->delimiter(',');
    app.add_flag("--warp-boxes", warp_boxes, "extension: move boxes with the distortion field");
    app.add_option("--depth", depth, "output bit depth, 8 or 16");
  }

  int run(std::ostream&, std::ostream& err) const {
    RunConfig c = flags.resolve();
    if (role) c = apply_config_json(c, json{{"augment", {{"role", *role}}}});
    if (!gammas.empty()) {
      if (c.method != Method::geometric) throw ConfigError("--gamma only applies to the geometric method");
      c.gamma_levels = gammas;
      c.validate();
    }
    DatasetManifest m;
    try {
      m = load_coco(coco);
    } catch (const DatasetError& e) {
      throw ConfigError(e.what());
    }
    if (!categories.empty()) {
      try {
        m = filter_categories(m, categories);
      } catch (const ParameterError& e) {
        throw ConfigError(e.what());
      }
    }
    AugmentationJob job;
    job.config = c;
    job.master_seed = c.seed;
    job.image_dir = images.empty() ? std::filesystem::path(coco).parent_path() : std::filesystem::path(images);
    job.output_dir = output;
    job.output_depth = parse_depth(depth);
    job.warp_boxes = warp_boxes;
    describe(c, err);
    const auto t0 = std::chrono::steady_clock::now();
    const AugmentResult r = augment_dataset(m, job);
    for (const auto& [label, n] : r.per_setting) err << "  " << label << ": " << n << " images\n";
    err << std::fixed << std::setprecision(1) << "wrote " << r.manifest.images.size() << " images, "
        << r.manifest.annotations.size() << " annotations in " << elapsed_ms(t0) / 1000.0 << " s -> "
        << r.manifest_path.string() << '\n';
    if (!r.failures.empty()) {
      err << r.failures.size() << " image(s) failed:\n";
      for (const auto& f : r.failures) err << "  id " << f.image_id << " " << f.file_name << ": " << f.message << '\n';
      return runtime_failure;
    }
    return ok;
  }
};

// ---- split / filter -------------------------------------------------------

struct SplitCmd {
  std::string coco, output;
  double fraction = 0.9;
  std::uint64_t seed = kDefaultSeed;
  std::vector<std::string> categories;

  void attach(CLI::App& app) {
    app.add_option("--coco", coco, "source COCO annotation file")->required();
    app.add_option("--out,-o", output, "output directory for train.json and val.json")->required();
    app.add_option("--fraction", fraction, "training fraction");
    app.add_option("--seed", seed, "shuffle seed");
    app.add_option("--categories", categories, "keep only these category names")->delimiter(',');
  }

  int run(std::ostream&, std::ostream& err) const {
    DatasetManifest m;
    try {
      m = load_coco(coco);
      if (!categories.empty()) m = filter_categories(m, categories);
    } catch (const DatasetError& e) {
      throw ConfigError(e.what());
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    std::pair<DatasetManifest, DatasetManifest> parts;
    try {
      parts = split(m, fraction, Seed{seed});
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    save_coco(parts.first, std::filesystem::path(output) / "train.json");
    save_coco(parts.second, std::filesystem::path(output) / "val.json");
    err << "train: " << parts.first.images.size() << " images, " << parts.first.annotations.size()
        << " annotations\nval: " << parts.second.images.size() << " images, " << parts.second.annotations.size()
        << " annotations\n";
    return ok;
  }
};

// ---- fried ----------------------------------------------------------------

struct FriedCmd {
  ConfigFlags flags;
  std::optional<double> wavelength, cn2, length, r0, aperture;
  std::optional<std::string> out_path;

  void attach(CLI::App& app) {
    flags.attach(app);
    app.add_option("--wavelength", wavelength, "m");
    app.add_option("--cn2", cn2, "m^(-2/3)");
    app.add_option("--length", length, "propagation length, m");
    app.add_option("--r0", r0, "Fried parameter override, m");
    app.add_option("--aperture", aperture, "aperture diameter, m");
    app.add_option("--out,-o", out_path, "JSON output file (default stdout)");
  }

  int run(std::ostream& out, std::ostream& err) const {
    ConfigFlags f = flags;
    if (!f.preset && !f.method && !f.config) f.preset = "table2";
    const RunConfig c = f.resolve();
    const OpticalParams* base = optics_of(c);
    if (!base) throw ConfigError("fried needs optical parameters (zernike or p2s settings)");
    OpticalParams p = *base;
    if (wavelength) p.wavelength = *wavelength;
    if (cn2) p.cn2 = *cn2, p.fried_parameter.reset();
    if (length) p.propagation_length = *length;
    if (r0) p.fried_parameter = *r0;
    if (aperture) p.aperture_diameter = *aperture;
    double value = 0;
    try {
      value = fried_parameter(p);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    err << "r0 = " << value << " m, D/r0 = " << p.aperture_diameter / value << '\n';
    emit_json({{"r0", value},
               {"d_over_r0", p.aperture_diameter / value},
               {"source", p.fried_parameter ? "override" : "cn2"},
               {"optics", optics_to_json(p)}},
              out_path, out);
    return ok;
  }
};

// ---- eval -----------------------------------------------------------------

struct EvalCmd {
  std::string detections, truth;
  std::optional<std::string> out_path;
  std::string label = "all";
  std::vector<std::string> categories;

  void attach(CLI::App& app) {
    app.add_option("--detections", detections, "COCO results JSON")->required();
    app.add_option("--truth", truth, "COCO ground-truth JSON")->required();
    app.add_option("--out,-o", out_path, "JSON report file (default stdout)");
    app.add_option("--label", label, "row label of the printed table");
    app.add_option("--categories", categories, "evaluate only these category names")->delimiter(',');
  }

  int run(std::ostream& out, std::ostream& err) const {
    EvalReport r;
    try {
      DatasetManifest gt = load_coco(truth);
      std::vector<Detection> dets = load_detections(detections);
      if (!categories.empty()) {
        const DatasetManifest filtered = filter_categories(gt, categories);
        std::map<std::int64_t, std::int64_t> remap;
        for (const auto& c : gt.categories)
          for (const auto& fc : filtered.categories)
            if (c.name == fc.name) remap[c.id] = fc.id;
        std::vector<Detection> kept;
        for (Detection d : dets)
          if (auto it = remap.find(d.category_id); it != remap.end()) d.category_id = it->second, kept.push_back(d);
        gt = filtered;
        dets = kept;
      }
      r = evaluate(dets, gt);
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    err << format_report_table(r, label);
    emit_json(report_to_json(r), out_path, out);
    return ok;
  }
};

// ---- stats ----------------------------------------------------------------

struct StatsCmd {
  ConfigFlags flags;
  std::optional<double> gamma;
  int samples = 0;  // 0: per-method default
  std::optional<std::string> out_path;

  void attach(CLI::App& app) {
    flags.attach(app);
    app.add_option("--gamma", gamma, "geometric distortion gain");
    app.add_option("--samples,-n", samples, "fields / PSFs to draw");
    app.add_option("--out,-o", out_path, "JSON output file (default stdout)");
  }

  static double rel_l2(const Kernel& a, const Kernel& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.weights.size(); ++i)
      num += std::pow(a.weights[i] - b.weights[i], 2), den += b.weights[i] * b.weights[i];
    return std::sqrt(num / den);
  }

  static json geometric_stats(const RunConfig& c, int n) {
    double sq = 0;
    std::size_t count = 0;
    for (int i = 0; i < n; ++i) {
      const DistortionField f = distortion_field(512, 512, c.geometric, derive_seed(Seed{c.seed}, i));
      for (const Image* im : {&f.du, &f.dv})
        for (double v : im->pixels()) sq += v * v, ++count;
    }
    double g2 = 0;
    for (double w : gaussian_kernel(c.geometric.sigma_d_sq).kernel.weights) g2 += w * w;
    const double expected = c.geometric.gamma * std::sqrt(g2);
    const double measured = std::sqrt(sq / count);
    return {{"samples", count}, {"distortion_std", measured}, {"expected_std", expected},
            {"relative_error", expected > 0 ? std::abs(measured / expected - 1) : measured}};
  }

  static json zernike_stats(const OpticalParams& base, double corr, int n, Seed seed) {
    auto tilt = [&](double scale, double& coeff_var) {
      OpticalParams p = base;
      p.fried_parameter = fried_parameter(base) / scale;
      double sq = 0, csq = 0;
      std::size_t count = 0, ccount = 0;
      for (int i = 0; i < n; ++i) {
        const auto f = sample_coeff_field(512, 640, 32, p, {corr}, 3, derive_seed(seed, i));
        const auto d = tilt_distortion_field(f, p, 512, 640);
        for (double v : d.du.pixels()) sq += v * v, ++count;
        for (int r = 0; r < f.rows; ++r)
          for (int col = 0; col < f.cols; ++col) csq += std::pow(f.at(r, col, 2), 2), ++ccount;
      }
      coeff_var = csq / ccount;
      return sq / count;
    };
    const double r0 = fried_parameter(base);
    const double dr = base.aperture_diameter / r0;
    double cv1 = 0, cv2 = 0;
    const double v1 = tilt(1.0, cv1), v2 = tilt(2.0, cv2);
    const double expected_ratio = std::pow(2.0, 5.0 / 3.0);
    return {{"r0", r0},
            {"d_over_r0", dr},
            {"tilt_coeff_variance", cv1},
            {"tilt_coeff_variance_expected", noll_covariance(3, dr)(1, 1)},
            {"tilt_pixel_variance", v1},
            {"tilt_pixel_variance_doubled_d_over_r0", v2},
            {"scaling_ratio", v2 / v1},
            {"scaling_ratio_expected", expected_ratio},
            {"scaling_relative_error", std::abs(v2 / v1 / expected_ratio - 1)}};
  }

  static json p2s_stats(const RunConfig& c, int n) {
    const PsfBasisConfig bc = basis_config(c.p2s);
    const PsfBasis b = c.p2s.basis_file ? read_psf_basis(*c.p2s.basis_file)
                                        : build_psf_basis(c.p2s.optics, bc, Seed{c.p2s.basis_seed}, cache_dir_from_env());
    const PsfSamples s = sample_psfs(c.p2s.optics, bc, n, derive_seed(Seed{c.seed}, 0x686f));
    double proj = 0, pred = 0;
    for (int i = 0; i < n; ++i) {
      proj += rel_l2(reconstruct_psf(b, project_psf(b, s.psfs[i])), s.psfs[i]);
      const Eigen::VectorXd a = s.coeffs.row(i).transpose();
      pred += rel_l2(reconstruct_psf(b, p2s_transform({a.data(), static_cast<std::size_t>(a.size())}, b)), s.psfs[i]);
    }
    double explained = 0;
    for (double v : b.explained_variance) explained += v;
    return {{"held_out", n},
            {"reconstruction_error", proj / n},
            {"coefficient_map_error", pred / n},
            {"training_residual", b.training_residual},
            {"explained_variance", explained},
            {"components", b.components()}};
  }

  int run(std::ostream& out, std::ostream& err) const {
    RunConfig c = flags.resolve();
    if (gamma) {
      if (c.method != Method::geometric) throw ConfigError("--gamma only applies to the geometric method");
      c.geometric.gamma = *gamma;
      c.validate();
    }
    if (c.workers > 0) omp_set_num_threads(c.workers);
    describe(c, err);
    json j{{"method", method_name(c.method)}, {"seed", c.seed}};
    switch (c.method) {
      case Method::geometric: j["geometric"] = geometric_stats(c, samples > 0 ? samples : 4); break;
      case Method::zernike:
        j["zernike"] = zernike_stats(c.zernike.optics, c.zernike.correlation_length, samples > 0 ? samples : 8,
                                     Seed{c.seed});
        break;
      case Method::p2s: j["p2s"] = p2s_stats(c, samples > 0 ? samples : 200); break;
    }
    for (const auto& [k, v] : j[method_name(c.method)].items()) err << "  " << k << ": " << v.dump() << '\n';
    emit_json(j, out_path, out);
    return ok;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Turbulence simulation for thermal detection datasets", "turbsim"};
  app.require_subcommand(1);
  SimulateCmd simulate;
  BasisBuildCmd basis;
  AugmentCmd augment;
  SplitCmd split_cmd;
  FriedCmd fried;
  EvalCmd eval;
  StatsCmd stats;
  auto* sim_app = app.add_subcommand("simulate", "simulate turbulence on one image");
  simulate.attach(*sim_app);
  auto* basis_app = app.add_subcommand("p2s-basis", "P2S PSF basis tools");
  basis_app->require_subcommand(1);
  auto* build_app = basis_app->add_subcommand("build", "train and save a PSF basis");
  basis.attach(*build_app);
  auto* aug_app = app.add_subcommand("augment", "build turbulent copies of a COCO dataset");
  augment.attach(*aug_app);
  auto* split_app = app.add_subcommand("split", "image-level train/val split of a COCO dataset");
  split_cmd.attach(*split_app);
  auto* fried_app = app.add_subcommand("fried", "print the Fried parameter and D/r0");
  fried.attach(*fried_app);
  auto* eval_app = app.add_subcommand("eval", "COCO box metrics for a detection file");
  eval.attach(*eval_app);
  auto* stats_app = app.add_subcommand("stats", "check field and PSF statistics of a setting");
  stats.attach(*stats_app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    err << "run with --help for usage\n";
    return usage_error;
  }

  try {
    if (sim_app->parsed()) return simulate.run(out, err);
    if (build_app->parsed()) return basis.run(out, err);
    if (aug_app->parsed()) return augment.run(out, err);
    if (split_app->parsed()) return split_cmd.run(out, err);
    if (fried_app->parsed()) return fried.run(out, err);
    if (eval_app->parsed()) return eval.run(out, err);
    if (stats_app->parsed()) return stats.run(out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return usage_error;
  } catch (const ParameterError& e) {
    err << "parameter error: " << e.what() << '\n';
    return usage_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return runtime_failure;
  }
  return usage_error;
}

}  // namespace turbsim::cli
