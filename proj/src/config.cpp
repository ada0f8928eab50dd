#include "turbsim/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include "turbsim/noll_covariance.hpp"

namespace turbsim {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

void read_optional(const json& obj, const char* key, std::optional<double>& out, const std::string& where) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  read(obj, key, v, where);
  out = v;
}

// Parameter errors raised while validating a config are config errors.
template <typename F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

Method parse_method(std::string_view name) {
  if (name == "geometric") return Method::geometric;
  if (name == "zernike") return Method::zernike;
  if (name == "p2s") return Method::p2s;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected geometric, zernike or p2s)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::geometric: return "geometric";
    case Method::zernike: return "zernike";
    case Method::p2s: return "p2s";
  }
  return "?";
}

void RunConfig::validate() const {
  as_config_error([&] {
    switch (method) {
      case Method::geometric:
        geometric.validate();
        for (double g : gamma_levels)
          if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("gamma_levels must be positive");
        break;
      case Method::zernike:
        zernike.optics.validate();
        SpatialCorrelationModel{zernike.correlation_length}.validate();
        if (zernike.num_modes < 3) throw ConfigError("zernike.num_modes must be >= 3");
        if (zernike.tile_size < 8 || zernike.tile_size % 2) throw ConfigError("zernike.tile_size must be even and >= 8");
        if (zernike.psf_support < 1 || zernike.psf_support % 2 == 0) throw ConfigError("zernike.psf_support must be odd");
        break;
      case Method::p2s:
        p2s.optics.validate();
        SpatialCorrelationModel{p2s.correlation_length}.validate();
        if (p2s.num_modes < 4) throw ConfigError("p2s.num_modes must be >= 4");
        if (p2s.components < 0 || p2s.components > p2s.samples)
          throw ConfigError("p2s: need samples >= components >= 0");
        if (p2s.grid_spacing < 4) throw ConfigError("p2s.grid_spacing must be >= 4");
        if (p2s.psf_support < 1 || p2s.psf_support % 2 == 0) throw ConfigError("p2s.psf_support must be odd");
        break;
    }
  });
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

RunConfig preset(std::string_view name) {
  RunConfig c;
  if (name == "table1") {
    c.method = Method::geometric;
    c.geometric = GeometricParams{100.0, 5.0, 0.5};
    c.gamma_levels = {25, 50, 100, 150};
  } else if (name == "table2") {
    c.method = Method::zernike;
    c.zernike.optics = OpticalParams::table2();
  } else if (name == "table3") {
    c.method = Method::p2s;
    c.p2s.optics = OpticalParams::table3();
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected table1, table2 or table3)");
  }
  return c;
}

RunConfig default_config(Method m) {
  switch (m) {
    case Method::geometric: return preset("table1");
    case Method::zernike: return preset("table2");
    case Method::p2s: return preset("table3");
  }
  return {};
}

OpticalParams optics_from_json(const json& j, OpticalParams p) {
  const std::string where = "optics";
  reject_unknown(j, {"aperture_diameter", "wavelength", "cn2", "focal_length", "propagation_length",
                     "fried_parameter", "image_width", "image_height", "horizontal_fov_deg", "pixel_pitch"},
                 where);
  read(j, "aperture_diameter", p.aperture_diameter, where);
  read(j, "wavelength", p.wavelength, where);
  read_optional(j, "cn2", p.cn2, where);
  read(j, "focal_length", p.focal_length, where);
  read(j, "propagation_length", p.propagation_length, where);
  read_optional(j, "fried_parameter", p.fried_parameter, where);
  read(j, "image_width", p.image_width, where);
  read(j, "image_height", p.image_height, where);
  read(j, "horizontal_fov_deg", p.horizontal_fov_deg, where);
  read_optional(j, "pixel_pitch", p.pixel_pitch_override, where);
  return p;
}

json optics_to_json(const OpticalParams& p) {
  json j{{"aperture_diameter", p.aperture_diameter},
         {"wavelength", p.wavelength},
         {"focal_length", p.focal_length},
         {"propagation_length", p.propagation_length},
         {"image_width", p.image_width},
         {"image_height", p.image_height},
         {"horizontal_fov_deg", p.horizontal_fov_deg}};
  j["cn2"] = p.cn2 ? json(*p.cn2) : json(nullptr);
  j["fried_parameter"] = p.fried_parameter ? json(*p.fried_parameter) : json(nullptr);
  if (p.pixel_pitch_override) j["pixel_pitch"] = *p.pixel_pitch_override;
  return j;
}

RunConfig apply_config_json(const RunConfig& base, const json& doc) {
  reject_unknown(doc, {"method", "seed", "workers", "geometric", "zernike", "p2s", "augment"}, "config");
  RunConfig c = base;
  if (doc.contains("method")) {
    if (!doc["method"].is_string()) throw ConfigError("config.method: expected a string");
    const Method m = parse_method(doc["method"].get<std::string>());
    if (m != c.method) {
      // Switching method starts from that method's preset.
      RunConfig fresh = default_config(m);
      fresh.seed = c.seed;
      fresh.workers = c.workers;
      c = fresh;
    }
  }
  int blocks = 0;
  for (const char* b : {"geometric", "zernike", "p2s"})
    if (doc.contains(b)) {
      ++blocks;
      if (b != method_name(c.method))
        throw ConfigError(std::string("config: block '") + b + "' does not match method '" + method_name(c.method) + "'");
    }
  if (blocks > 1) throw ConfigError("config: more than one method block");

  read(doc, "seed", c.seed, "config");
  read(doc, "workers", c.workers, "config");

  if (doc.contains("geometric")) {
    const json& g = doc["geometric"];
    reject_unknown(g, {"gamma", "sigma_d_sq", "sigma_b_sq"}, "geometric");
    read(g, "gamma", c.geometric.gamma, "geometric");
    read(g, "sigma_d_sq", c.geometric.sigma_d_sq, "geometric");
    read(g, "sigma_b_sq", c.geometric.sigma_b_sq, "geometric");
  }
  if (doc.contains("zernike")) {
    const json& z = doc["zernike"];
    reject_unknown(z, {"optics", "correlation_length", "num_modes", "tile_size", "pupil_grid", "psf_support"}, "zernike");
    if (z.contains("optics")) c.zernike.optics = optics_from_json(z["optics"], c.zernike.optics);
    read(z, "correlation_length", c.zernike.correlation_length, "zernike");
    read(z, "num_modes", c.zernike.num_modes, "zernike");
    read(z, "tile_size", c.zernike.tile_size, "zernike");
    read(z, "pupil_grid", c.zernike.pupil_grid, "zernike");
    read(z, "psf_support", c.zernike.psf_support, "zernike");
  }
  if (doc.contains("p2s")) {
    const json& p = doc["p2s"];
    reject_unknown(p, {"optics", "correlation_length", "num_modes", "samples", "components", "grid_spacing",
                       "pupil_grid", "psf_support", "basis_seed", "basis_file"},
                   "p2s");
    if (p.contains("optics")) c.p2s.optics = optics_from_json(p["optics"], c.p2s.optics);
    read(p, "correlation_length", c.p2s.correlation_length, "p2s");
    read(p, "num_modes", c.p2s.num_modes, "p2s");
    read(p, "samples", c.p2s.samples, "p2s");
    read(p, "components", c.p2s.components, "p2s");
    read(p, "grid_spacing", c.p2s.grid_spacing, "p2s");
    read(p, "pupil_grid", c.p2s.pupil_grid, "p2s");
    read(p, "psf_support", c.p2s.psf_support, "p2s");
    read(p, "basis_seed", c.p2s.basis_seed, "p2s");
    if (p.contains("basis_file")) {
      std::string f;
      read(p, "basis_file", f, "p2s");
      c.p2s.basis_file = f;
    }
  }
  if (doc.contains("augment")) {
    const json& a = doc["augment"];
    reject_unknown(a, {"gamma_levels", "role"}, "augment");
    read(a, "gamma_levels", c.gamma_levels, "augment");
    if (a.contains("role")) {
      std::string role;
      read(a, "role", role, "augment");
      if (role == "train-aug") {
        c.role = SplitRole::train_aug;
      } else if (role == "test-aug") {
        c.role = SplitRole::test_aug;
        if (!a.contains("gamma_levels")) c.gamma_levels = {100};
      } else {
        throw ConfigError("augment.role: expected train-aug or test-aug");
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return apply_config_json(base, doc);
}

json method_params_json(const RunConfig& c) {
  switch (c.method) {
    case Method::geometric:
      return {{"gamma", c.geometric.gamma}, {"sigma_d_sq", c.geometric.sigma_d_sq}, {"sigma_b_sq", c.geometric.sigma_b_sq}};
    case Method::zernike:
      return {{"optics", optics_to_json(c.zernike.optics)},
              {"correlation_length", c.zernike.correlation_length},
              {"num_modes", c.zernike.num_modes},
              {"tile_size", c.zernike.tile_size},
              {"pupil_grid", c.zernike.pupil_grid},
              {"psf_support", c.zernike.psf_support}};
    case Method::p2s: {
      json j{{"optics", optics_to_json(c.p2s.optics)},
             {"correlation_length", c.p2s.correlation_length},
             {"num_modes", c.p2s.num_modes},
             {"samples", c.p2s.samples},
             {"components", c.p2s.components},
             {"grid_spacing", c.p2s.grid_spacing},
             {"pupil_grid", c.p2s.pupil_grid},
             {"psf_support", c.p2s.psf_support},
             {"basis_seed", c.p2s.basis_seed}};
      if (c.p2s.basis_file) j["basis_file"] = c.p2s.basis_file->string();
      return j;
    }
  }
  return {};
}

json config_to_json(const RunConfig& c) {
  json j{{"method", method_name(c.method)}, {"seed", c.seed}, {"workers", c.workers}};
  j[method_name(c.method)] = method_params_json(c);
  j["augment"] = {{"gamma_levels", c.gamma_levels}, {"role", c.role == SplitRole::train_aug ? "train-aug" : "test-aug"}};
  return j;
}

PsfBasisConfig basis_config(const P2sSettings& s) {
  PsfBasisConfig b;
  b.num_modes = s.num_modes;
  b.samples = s.samples;
  b.components = s.components;
  b.pupil_grid = s.pupil_grid;
  b.psf.support = s.psf_support;
  return b;
}

namespace {

// Bases are expensive; keep one per (params hash, N, K, seed) for the process.
std::shared_ptr<const PsfBasis> obtain_basis(const P2sSettings& s) {
  if (s.basis_file) {
    auto b = std::make_shared<PsfBasis>(read_psf_basis(*s.basis_file));
    if (b->params_hash != psf_params_hash(s.optics, basis_config(s)))
      throw ConfigError("PSF basis " + s.basis_file->string() + " was built for different parameters");
    return b;
  }
  static std::mutex mu;
  static std::map<std::tuple<std::uint64_t, int, int, std::uint64_t>, std::shared_ptr<const PsfBasis>> memo;
  const PsfBasisConfig bc = basis_config(s);
  const auto key = std::make_tuple(psf_params_hash(s.optics, bc), bc.samples, bc.components, s.basis_seed);
  std::lock_guard lock(mu);
  auto& slot = memo[key];
  if (!slot) slot = std::make_shared<PsfBasis>(build_psf_basis(s.optics, bc, Seed{s.basis_seed}, cache_dir_from_env()));
  return slot;
}

}  // namespace

Simulator::Simulator(const RunConfig& config) : config_(config) {
  config_.validate();
  if (config_.method == Method::p2s) basis_ = obtain_basis(config_.p2s);
}

SimOutput Simulator::run(const Image& image, Seed seed, std::optional<double> gamma) const {
  switch (config_.method) {
    case Method::geometric: {
      GeometricParams g = config_.geometric;
      if (gamma) g.gamma = *gamma;
      auto r = simulate_geometric_detailed(image, g, seed);
      return {std::move(r.image), std::move(r.field)};
    }
    case Method::zernike: {
      const ZernikeSettings& z = config_.zernike;
      ZernikeSimOptions o;
      o.tile_size = z.tile_size;
      o.num_modes = z.num_modes;
      o.pupil_grid = z.pupil_grid;
      o.psf.support = z.psf_support;
      o.cache_dir = cache_dir_from_env();
      auto r = simulate_zernike_detailed(image, z.optics, {z.correlation_length}, o, seed);
      return {std::move(r.image), std::move(r.field)};
    }
    case Method::p2s: {
      const P2sSettings& p = config_.p2s;
      P2sSimOptions o;
      o.grid_spacing = p.grid_spacing;
      o.cache_dir = cache_dir_from_env();
      auto r = simulate_p2s_detailed(image, p.optics, *basis_, {p.correlation_length}, o, seed);
      return {std::move(r.image), std::move(r.field)};
    }
  }
  throw ConfigError("unhandled method");
}

Image simulate_by_name(const Image& image, std::string_view method, const json& params, Seed seed) {
  const Method m = parse_method(method);
  json doc{{"method", method_name(m)}};
  if (!params.is_null() && !(params.is_object() && params.empty())) doc[method_name(m)] = params;
  const RunConfig c = apply_config_json(default_config(m), doc);
  return Simulator(c).run(image, seed).image;
}

}  // namespace turbsim
