#include "specring/pipeline.hpp"

#include "specring/lowrank.hpp"
#include "specring/raw_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <thread>

namespace specring {

namespace fs = std::filesystem;
using nlohmann::json;

int resolve_threads(int requested) {
  int n = requested >= 1 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  n = std::max(n, 1);
  if (const char* env = std::getenv("SPECRING_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) n = std::min<long>(n, cap);
  }
  return n;
}

SimConfig SimulationSettings::to_sim_config() const {
  SimConfig cfg;
  cfg.geometry = make_geometry(num_detectors, num_angles, start_angle, angle_increment, grid_side,
                               pixel_size);
  cfg.num_flats = num_flats;
  const auto lambda = default_wavelengths(num_channels);
  cfg.flux_profile = default_flux_profile(num_detectors);
  cfg.spectrum = default_spectrum(lambda);
  cfg.channel_labels = wavelength_labels(lambda);
  cfg.gain = gain;
  cfg.poisson_scale = poisson_scale;
  cfg.noise = noise;
  cfg.seed = seed;
  return cfg;
}

const std::vector<std::string>& all_pipeline_names() {
  static const std::vector<std::string> names{"FBP", "WF-FBP", "NLM-FBP", "LR-FBP",
                                              "TV",  "WF-TV",  "NLM-TV",  "LR-TV"};
  return names;
}

PipelineSpec parse_pipeline_name(const std::string& name) {
  PipelineSpec spec;
  spec.name = name;
  std::string rest = name;
  const auto dash = name.find('-');
  if (dash != std::string::npos) {
    const std::string prefix = name.substr(0, dash);
    rest = name.substr(dash + 1);
    if (prefix == "LR") spec.low_rank = true;
    else if (prefix == "WF") spec.ring_filter = RingFilter::wf;
    else if (prefix == "NLM") spec.ring_filter = RingFilter::sortsmooth;
    else throw ConfigError("unknown pipeline prefix in '" + name + "'");
  }
  if (rest == "FBP") spec.method = ReconMethod::fbp;
  else if (rest == "TV") spec.method = ReconMethod::wls_tv;
  else throw ConfigError("unknown pipeline '" + name + "'");
  return spec;
}

void PipelineConfig::validate() const {
  try {
    if (simulation.has_value() == input.has_value())
      throw ConfigError("exactly one of 'simulation' and 'input' must be given");
    if (simulation) {
      const SimConfig sim = simulation->to_sim_config();
      sim.validate();
      wf.validate(sim.geometry.num_angles);
      sort_smooth.validate(sim.geometry.num_detectors);
      const int m = sim.num_channels();
      const int s = sim.num_flats;
      if (use_first && (*use_first < 1 || *use_first > s))
        throw ConfigError("use_first must lie in [1, num_flats]");
      const int sp = use_first.value_or(s);
      if (rank < 1 || rank > std::min(sim.geometry.num_detectors * sp, m))
        throw ConfigError("rank must lie in [1, min(r*s', m)]");
      if (rois) {
        rois->first.validate(sim.geometry.grid_side, sim.geometry.grid_side);
        rois->second.validate(sim.geometry.grid_side, sim.geometry.grid_side);
        if (rois->first.overlaps(rois->second)) throw ConfigError("ROIs overlap");
      }
    } else {
      if (input->counts.empty() || input->flats.empty())
        throw ConfigError("input needs 'counts' and 'flats' paths");
      if (!(input->pixel_size > 0.0)) throw ConfigError("pixel_size must be positive");
      if (use_first && *use_first < 1) throw ConfigError("use_first must be positive");
      if (rank < 1) throw ConfigError("rank must be positive");
    }
    if (pipelines.empty()) throw ConfigError("no pipelines requested");
    std::set<std::string> seen;
    for (const auto& p : pipelines) {
      parse_pipeline_name(p);
      if (!seen.insert(p).second) throw ConfigError("pipeline '" + p + "' listed twice");
    }
    tv.validate();
    if (count_floor && !(*count_floor > 0.0)) throw ConfigError("count_floor must be positive");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; }))
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

json roi_to_json(const Roi& r) { return json::array({r.row0, r.col0, r.height, r.width}); }

Roi roi_from_json(const json& j) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 4) throw ConfigError("ROI must be [row0, col0, height, width]");
  return {v[0], v[1], v[2], v[3]};
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& doc) {
  const json& j = doc.contains("config") && doc.contains("version") ? doc.at("config") : doc;
  PipelineConfig cfg;
  try {
    check_keys(j,
               {"simulation", "input", "flat", "pipelines", "fbp", "wf", "sort_smooth", "tv",
                "count_floor", "threads", "rois", "quicklooks"},
               "config");
    if (j.contains("simulation")) {
      const json& s = j.at("simulation");
      check_keys(s,
                 {"num_detectors", "num_angles", "start_angle", "angle_increment", "grid_side",
                  "pixel_size", "num_channels", "num_flats", "gain", "poisson_scale", "noise", "seed"},
                 "simulation");
      SimulationSettings sim;
      read(s, "num_detectors", sim.num_detectors);
      read(s, "num_angles", sim.num_angles);
      read(s, "start_angle", sim.start_angle);
      read(s, "angle_increment", sim.angle_increment);
      read(s, "grid_side", sim.grid_side);
      read(s, "pixel_size", sim.pixel_size);
      read(s, "num_channels", sim.num_channels);
      read(s, "num_flats", sim.num_flats);
      read(s, "poisson_scale", sim.poisson_scale);
      read(s, "noise", sim.noise);
      read(s, "seed", sim.seed);
      if (s.contains("gain")) {
        const json& g = s.at("gain");
        check_keys(g, {"fraction", "amplitude", "mode", "consistent"}, "simulation.gain");
        read(g, "fraction", sim.gain.fraction);
        read(g, "amplitude", sim.gain.amplitude);
        read(g, "consistent", sim.gain.consistent);
        if (g.contains("mode")) sim.gain.mode = gain_mode_from_string(g.at("mode").get<std::string>());
      }
      cfg.simulation = sim;
    }
    if (j.contains("input")) {
      const json& s = j.at("input");
      check_keys(s, {"counts", "flats", "start_angle", "angle_increment", "grid_side", "pixel_size"},
                 "input");
      InputSettings in;
      read(s, "counts", in.counts);
      read(s, "flats", in.flats);
      if (s.contains("start_angle") && !s.at("start_angle").is_null()) in.start_angle = s.at("start_angle").get<double>();
      if (s.contains("angle_increment") && !s.at("angle_increment").is_null())
        in.angle_increment = s.at("angle_increment").get<double>();
      if (s.contains("grid_side") && !s.at("grid_side").is_null()) in.grid_side = s.at("grid_side").get<int>();
      read(s, "pixel_size", in.pixel_size);
      cfg.input = in;
    }
    if (j.contains("flat")) {
      const json& f = j.at("flat");
      check_keys(f, {"rank", "use_first"}, "flat");
      read(f, "rank", cfg.rank);
      if (f.contains("use_first") && !f.at("use_first").is_null()) cfg.use_first = f.at("use_first").get<int>();
    }
    read(j, "pipelines", cfg.pipelines);
    if (j.contains("fbp")) {
      check_keys(j.at("fbp"), {"filter"}, "fbp");
      if (j.at("fbp").contains("filter"))
        cfg.filter = fbp_filter_from_string(j.at("fbp").at("filter").get<std::string>());
    }
    if (j.contains("wf")) {
      const json& w = j.at("wf");
      check_keys(w, {"wavelet", "levels", "damping_sigma"}, "wf");
      if (w.contains("wavelet") && w.at("wavelet").get<std::string>() != "db5")
        throw ConfigError("only the db5 wavelet is supported");
      read(w, "levels", cfg.wf.levels);
      read(w, "damping_sigma", cfg.wf.damping_sigma);
    }
    if (j.contains("sort_smooth")) {
      const json& w = j.at("sort_smooth");
      check_keys(w, {"window", "smoother"}, "sort_smooth");
      read(w, "window", cfg.sort_smooth.window);
      if (w.contains("smoother")) {
        const auto s = w.at("smoother").get<std::string>();
        if (s == "median") cfg.sort_smooth.smoother = Smoother::median;
        else if (s == "mean") cfg.sort_smooth.smoother = Smoother::mean;
        else throw ConfigError("unknown smoother '" + s + "'");
      }
    }
    if (j.contains("tv")) {
      const json& t = j.at("tv");
      check_keys(t, {"lambda", "max_iter", "tv_smoothing_eps", "step_tolerance"}, "tv");
      read(t, "lambda", cfg.tv.lambda);
      read(t, "max_iter", cfg.tv.max_iter);
      read(t, "tv_smoothing_eps", cfg.tv.tv_smoothing_eps);
      read(t, "step_tolerance", cfg.tv.step_tolerance);
    }
    if (j.contains("count_floor") && !j.at("count_floor").is_null())
      cfg.count_floor = j.at("count_floor").get<double>();
    read(j, "threads", cfg.threads);
    if (j.contains("rois") && !j.at("rois").is_null()) {
      const json& r = j.at("rois");
      check_keys(r, {"signal", "background"}, "rois");
      cfg.rois = std::make_pair(roi_from_json(r.at("signal")), roi_from_json(r.at("background")));
    }
    read(j, "quicklooks", cfg.quicklooks);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.validate();
  return cfg;
}

json to_json(const PipelineConfig& cfg) {
  json j;
  if (cfg.simulation) {
    const auto& s = *cfg.simulation;
    j["simulation"] = {{"num_detectors", s.num_detectors},
                       {"num_angles", s.num_angles},
                       {"start_angle", s.start_angle},
                       {"angle_increment", s.angle_increment},
                       {"grid_side", s.grid_side},
                       {"pixel_size", s.pixel_size},
                       {"num_channels", s.num_channels},
                       {"num_flats", s.num_flats},
                       {"gain",
                        {{"fraction", s.gain.fraction},
                         {"amplitude", s.gain.amplitude},
                         {"mode", to_string(s.gain.mode)},
                         {"consistent", s.gain.consistent}}},
                       {"poisson_scale", s.poisson_scale},
                       {"noise", s.noise},
                       {"seed", s.seed}};
  }
  if (cfg.input) {
    const auto& in = *cfg.input;
    json i{{"counts", in.counts}, {"flats", in.flats}, {"pixel_size", in.pixel_size}};
    i["start_angle"] = in.start_angle ? json(*in.start_angle) : json(nullptr);
    i["angle_increment"] = in.angle_increment ? json(*in.angle_increment) : json(nullptr);
    i["grid_side"] = in.grid_side ? json(*in.grid_side) : json(nullptr);
    j["input"] = i;
  }
  j["flat"] = {{"rank", cfg.rank}, {"use_first", cfg.use_first ? json(*cfg.use_first) : json(nullptr)}};
  j["pipelines"] = cfg.pipelines;
  j["fbp"] = {{"filter", to_string(cfg.filter)}};
  j["wf"] = {{"wavelet", "db5"}, {"levels", cfg.wf.levels}, {"damping_sigma", cfg.wf.damping_sigma}};
  j["sort_smooth"] = {{"window", cfg.sort_smooth.window},
                      {"smoother", cfg.sort_smooth.smoother == Smoother::median ? "median" : "mean"}};
  j["tv"] = {{"lambda", cfg.tv.lambda},
             {"max_iter", cfg.tv.max_iter},
             {"tv_smoothing_eps", cfg.tv.tv_smoothing_eps},
             {"step_tolerance", cfg.tv.step_tolerance}};
  j["count_floor"] = cfg.count_floor ? json(*cfg.count_floor) : json(nullptr);
  j["threads"] = cfg.threads;
  if (cfg.rois)
    j["rois"] = {{"signal", roi_to_json(cfg.rois->first)}, {"background", roi_to_json(cfg.rois->second)}};
  else
    j["rois"] = nullptr;
  j["quicklooks"] = cfg.quicklooks;
  return j;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

void write_singular_values_csv(const fs::path& path, const std::vector<double>& sv) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,value\n";
  char buf[64];
  for (std::size_t i = 0; i < sv.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", sv[i]);
    out << i + 1 << "," << buf << "\n";
  }
}

namespace {

template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Dataset {
  SpectralSinogram counts;
  FlatFieldStack flats;
  ScanGeometry geometry;
  std::optional<std::pair<Roi, Roi>> rois;
};

ScanGeometry input_geometry(const InputSettings& in, const SpectralSinogram& counts,
                            const json& metadata) {
  const int p = counts.num_angles();
  const int r = counts.num_detectors();
  if (!in.start_angle && !in.angle_increment && !in.grid_side && metadata.contains("geometry")) {
    ScanGeometry g = geometry_from_json(metadata.at("geometry"));
    if (g.num_angles != p || g.num_detectors != r)
      throw std::runtime_error("stored geometry does not match the counts shape");
    return g;
  }
  return make_geometry(r, p, in.start_angle.value_or(0.0), in.angle_increment.value_or(180.0 / p),
                       in.grid_side.value_or(r), in.pixel_size);
}

}  // namespace

PipelineSummary run_pipeline(const PipelineConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  PipelineSummary summary;
  const int threads = resolve_threads(cfg.threads);
  stage("output", [&] { fs::create_directories(out_dir); });
  auto note = [&](const fs::path& p) { summary.artifacts.push_back(fs::relative(p, out_dir)); };

  std::optional<SimResult> sim;
  Dataset data = stage("load", [&]() -> Dataset {
    if (cfg.simulation) {
      const SimConfig sc = cfg.simulation->to_sim_config();
      const auto phantom = make_phantom(default_phantom_spec(sc.geometry.grid_side, sc.num_channels()));
      sim = simulate_measurements(phantom, sc);
      auto rois = cfg.rois ? cfg.rois : std::optional(default_rois(sc.geometry.grid_side));
      return {sim->counts, stack_flats(sim->flats), sc.geometry, rois};
    }
    const auto& in = *cfg.input;
    const RawArray header_only = load_raw(in.counts);
    SpectralSinogram counts = load_sinogram(in.counts);
    FlatFieldStack flats = load_flat_stack(in.flats);
    const ScanGeometry g = input_geometry(in, counts, header_only.header.metadata);
    return {std::move(counts), std::move(flats), g, cfg.rois};
  });

  const auto& counts = data.counts;
  const int m = counts.num_channels();
  const int n = data.geometry.grid_side;
  const auto& labels = counts.channel_labels();

  stage("validate", [&] {
    try {
      if (counts.kind() != SinogramKind::counts) throw ConfigError("input sinogram must hold counts");
      if (data.flats.num_detectors() != counts.num_detectors() || data.flats.num_channels() != m)
        throw ConfigError("flats do not match the counts shape");
      if (cfg.use_first && *cfg.use_first > data.flats.num_flats())
        throw ConfigError("use_first exceeds the number of flats");
      const int sp = cfg.use_first.value_or(data.flats.num_flats());
      if (cfg.rank > std::min(data.flats.num_detectors() * sp, m))
        throw ConfigError("rank exceeds min(r*s', m)");
      cfg.wf.validate(counts.num_angles());
      cfg.sort_smooth.validate(counts.num_detectors());
      if (data.rois) {
        data.rois->first.validate(n, n);
        data.rois->second.validate(n, n);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  });

  if (sim) {
    stage("write", [&] {
      const json meta{{"geometry", geometry_to_json(data.geometry)}};
      save_sinogram(out_dir / "data" / "counts", counts, meta);
      save_flat_stack(out_dir / "data" / "flats", data.flats, labels);
      save_volume(out_dir / "truth" / "phantom", sim->phantom, labels);
      save_flat(out_dir / "truth" / "true_flat", sim->true_flat, labels);
      save_flat(out_dir / "truth" / "flat_gain", FlatEstimate(sim->flat_gain), labels);
      for (const char* f : {"data/counts", "data/flats", "truth/phantom", "truth/true_flat", "truth/flat_gain"})
        note(out_dir / f);
    });
  }

  const auto sv = stage("svd", [&] { return singular_value_profile(data.flats); });
  stage("write", [&] {
    write_singular_values_csv(out_dir / "singular_values.csv", sv);
    note(out_dir / "singular_values.csv");
  });

  const bool need_lr = std::any_of(cfg.pipelines.begin(), cfg.pipelines.end(),
                                   [](const std::string& p) { return parse_pipeline_name(p).low_rank; });
  const FlatEstimate conv = stage("flat", [&] { return conventional_flat_estimate(data.flats, cfg.use_first); });
  std::optional<FlatEstimate> lr;
  if (need_lr) lr = stage("flat", [&] { return lowrank_flat_estimate(data.flats, cfg.rank, cfg.use_first); });
  stage("write", [&] {
    save_flat(out_dir / "flat_conv", conv, labels);
    note(out_dir / "flat_conv");
    if (lr) {
      save_flat(out_dir / "flat_lr", *lr, labels);
      note(out_dir / "flat_lr");
    }
  });

  const SystemMatrix a = stage("projector", [&] { return build_system_matrix(data.geometry); });

  std::map<std::string, SpectralVolume> recons;
  for (const auto& name : cfg.pipelines) {
    const PipelineSpec spec = parse_pipeline_name(name);
    ReconOptions opts;
    opts.method = spec.method;
    opts.filter = cfg.filter;
    opts.ring_filter = spec.ring_filter;
    opts.wf = cfg.wf;
    opts.sort_smooth = cfg.sort_smooth;
    opts.tv = cfg.tv;
    opts.count_floor = cfg.count_floor;
    opts.threads = threads;
    const FlatEstimate& flat = spec.low_rank ? *lr : conv;
    SpectralVolume vol = stage("reconstruct", [&] { return reconstruct_channels(counts, flat, a, opts); });
    stage("write", [&] {
      const json meta{{"pipeline", name}, {"flat_mode", spec.low_rank ? "lr" : "conv"}};
      save_volume(out_dir / "recon" / name, vol, labels, meta);
      note(out_dir / "recon" / name);
    });
    recons.emplace(name, std::move(vol));
  }

  if (recons.count("FBP") && recons.count("LR-FBP"))
    summary.selection = select_channels_by_rd(recons.at("FBP"), recons.at("LR-FBP"));

  stage("metrics", [&] {
    std::ofstream csv(out_dir / "metrics.csv");
    if (!csv) throw std::runtime_error("cannot write metrics.csv");
    csv << "channel_index,label,method,flat_mode,cnr,rd,ring_energy\n";
    const double center = 0.5 * (n - 1);
    const int annuli = std::max(1, n / 4);
    for (const auto& name : cfg.pipelines) {
      const PipelineSpec spec = parse_pipeline_name(name);
      const std::string base = spec.method == ReconMethod::fbp ? "FBP" : "TV";
      const auto& vol = recons.at(name);
      for (int k = 0; k < m; ++k) {
        const Eigen::MatrixXd img = vol.image(k);
        double c = std::nan("");
        if (data.rois) {
          try {
            c = cnr(img, data.rois->first, data.rois->second);
          } catch (const std::domain_error&) {
          }
        }
        double d = std::nan("");
        if (recons.count(base)) {
          try {
            d = rd(recons.at(base).pixels(k), vol.pixels(k));
          } catch (const std::domain_error&) {
          }
        }
        csv << k << "," << (k < static_cast<int>(labels.size()) ? labels[k] : std::to_string(k)) << ","
            << name << "," << (spec.low_rank ? "lr" : "conv") << "," << fmt(c) << "," << fmt(d) << ","
            << fmt(ring_energy(img, center, center, annuli)) << "\n";
      }
    }
    note(out_dir / "metrics.csv");
  });

  if (cfg.quicklooks) {
    stage("write", [&] {
      std::vector<int> channels{0};
      if (summary.selection) channels = {summary.selection->k_min, summary.selection->k_median, summary.selection->k_max};
      std::sort(channels.begin(), channels.end());
      channels.erase(std::unique(channels.begin(), channels.end()), channels.end());
      for (const auto& [name, vol] : recons)
        for (int k : channels) {
          const fs::path p = out_dir / "quicklook" / (name + "_ch" + std::to_string(k) + ".pgm");
          write_pgm(p, vol.image(k));
          note(p);
        }
    });
  }

  stage("write", [&] {
    json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = to_json(cfg);
    manifest["seed"] = cfg.simulation ? json(cfg.simulation->seed) : json(nullptr);
    manifest["geometry"] = geometry_to_json(data.geometry);
    manifest["num_channels"] = m;
    manifest["channel_labels"] = labels;
    manifest["threads"] = threads;
    if (summary.selection)
      manifest["channel_selection"] = {{"k_min", summary.selection->k_min},
                                       {"k_median", summary.selection->k_median},
                                       {"k_max", summary.selection->k_max}};
    else
      manifest["channel_selection"] = nullptr;
    json files = json::array();
    for (const auto& p : summary.artifacts) files.push_back(p.generic_string());
    manifest["artifacts"] = files;
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest.json");
    out << manifest.dump(2) << "\n";
  });
  summary.artifacts.push_back("manifest.json");
  return summary;
}

}  // namespace specring
