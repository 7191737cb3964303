#include "specring/lowrank.hpp"
#include "specring/metrics.hpp"
#include "specring/phantom.hpp"
#include "specring/pipeline.hpp"
#include "specring/raw_io.hpp"
#include "specring/recon.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace specring;

namespace {

struct RingArgs {
  std::string filter{"none"};
  double wf_sigma{0.9};
  int wf_levels{3};
  int ss_window{31};
  std::string smoother{"median"};

  void add(CLI::App* app) {
    app->add_option("--ring-filter", filter, "Ring filter")
        ->check(CLI::IsMember({"none", "wf", "sortsmooth"}))
        ->capture_default_str();
    app->add_option("--wf-sigma", wf_sigma, "Wavelet-Fourier damping width")->capture_default_str();
    app->add_option("--wf-levels", wf_levels, "Wavelet decomposition levels")->capture_default_str();
    app->add_option("--ss-window", ss_window, "Sort-smooth window width")->capture_default_str();
    app->add_option("--ss-smoother", smoother, "Sort-smooth filter")
        ->check(CLI::IsMember({"median", "mean"}))
        ->capture_default_str();
  }

  WfParams wf() const { return {WaveletFamily::db5, wf_levels, wf_sigma}; }
  SortSmoothParams ss() const {
    return {ss_window, smoother == "mean" ? Smoother::mean : Smoother::median};
  }
};

struct FlatArgs {
  std::string mode{"conv"};
  int rank{1};
  std::optional<int> num_flats;

  void add(CLI::App* app) {
    app->add_option("--flat", mode, "Flat-field estimate")
        ->check(CLI::IsMember({"conv", "lr"}))
        ->capture_default_str();
    app->add_option("--rank", rank, "Truncation rank for the low-rank estimate")->capture_default_str();
    app->add_option("--num-flats", num_flats, "Use only the first s' flats");
  }

  FlatEstimate estimate(const FlatFieldStack& stack) const {
    if (mode == "lr") return lowrank_flat_estimate(stack, rank, num_flats);
    return conventional_flat_estimate(stack, num_flats);
  }
};

std::optional<Roi> parse_roi(const std::string& text) {
  if (text.empty()) return std::nullopt;
  Roi r;
  if (std::sscanf(text.c_str(), "%d,%d,%d,%d", &r.row0, &r.col0, &r.height, &r.width) != 4)
    throw ConfigError("ROI must be row0,col0,height,width");
  return r;
}

ScanGeometry geometry_for(const SpectralSinogram& counts, const nlohmann::json& metadata,
                          std::optional<double> start, std::optional<double> increment,
                          std::optional<int> grid) {
  if (!start && !increment && !grid && metadata.contains("geometry"))
    return geometry_from_json(metadata.at("geometry"));
  const int p = counts.num_angles();
  return make_geometry(counts.num_detectors(), p, start.value_or(0.0), increment.value_or(180.0 / p),
                       grid.value_or(counts.num_detectors()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank flat-field correction and ring suppression for spectral CT"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Write a synthetic spectral dataset");
  SimulationSettings sim;
  std::string sim_out;
  sim_cmd->add_option("--out", sim_out, "Output directory")->required();
  sim_cmd->add_option("--detectors", sim.num_detectors)->capture_default_str();
  sim_cmd->add_option("--angles", sim.num_angles)->capture_default_str();
  sim_cmd->add_option("--start-angle", sim.start_angle)->capture_default_str();
  sim_cmd->add_option("--increment", sim.angle_increment)->capture_default_str();
  sim_cmd->add_option("--grid", sim.grid_side)->capture_default_str();
  sim_cmd->add_option("--channels", sim.num_channels)->capture_default_str();
  sim_cmd->add_option("--num-flats", sim.num_flats)->capture_default_str();
  sim_cmd->add_option("--gain-fraction", sim.gain.fraction)->capture_default_str();
  sim_cmd->add_option("--gain-amplitude", sim.gain.amplitude)->capture_default_str();
  std::string gain_mode = "spectral";
  sim_cmd->add_option("--gain-mode", gain_mode)
      ->check(CLI::IsMember({"spectral", "achromatic"}))
      ->capture_default_str();
  sim_cmd->add_flag("--consistent-gain", sim.gain.consistent, "Apply the gain errors to the scan too");
  sim_cmd->add_option("--poisson-scale", sim.poisson_scale)->capture_default_str();
  bool no_noise = false;
  sim_cmd->add_flag("--no-noise", no_noise, "Write expected counts");
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();

  // flat-estimate
  auto* flat_cmd = app.add_subcommand("flat-estimate", "Estimate the flat-field from a flat stack");
  std::string flat_in, flat_out;
  FlatArgs flat_args;
  flat_cmd->add_option("--flats", flat_in, "Flat stack container")->required();
  flat_cmd->add_option("--out", flat_out, "Output container")->required();
  flat_args.add(flat_cmd);

  // correct
  auto* corr_cmd = app.add_subcommand("correct", "Convert counts to attenuation line integrals");
  std::string corr_counts, corr_flat, corr_out;
  std::optional<double> corr_floor;
  corr_cmd->add_option("--counts", corr_counts)->required();
  corr_cmd->add_option("--flat", corr_flat, "Flat estimate container")->required();
  corr_cmd->add_option("--floor", corr_floor, "Count floor (default 1e-6 x channel median flat)");
  corr_cmd->add_option("--out", corr_out)->required();

  // destripe
  auto* ds_cmd = app.add_subcommand("destripe", "Apply a ring filter to an attenuation sinogram");
  std::string ds_in, ds_out;
  RingArgs ds_ring;
  ds_ring.filter = "wf";
  ds_cmd->add_option("--sino", ds_in, "Attenuation sinogram container")->required();
  ds_cmd->add_option("--out", ds_out)->required();
  ds_ring.add(ds_cmd);

  // reconstruct
  auto* rec_cmd = app.add_subcommand("reconstruct", "Reconstruct every channel");
  std::string rec_counts, rec_flats, rec_out, rec_method = "fbp", rec_filter = "hann";
  FlatArgs rec_flat;
  RingArgs rec_ring;
  TvConfig rec_tv;
  std::optional<double> rec_floor, rec_start, rec_inc;
  std::optional<int> rec_grid;
  int rec_threads = 0;
  rec_cmd->add_option("--counts", rec_counts)->required();
  rec_cmd->add_option("--flats", rec_flats, "Flat stack container")->required();
  rec_cmd->add_option("--out", rec_out)->required();
  rec_cmd->add_option("--method", rec_method)->check(CLI::IsMember({"fbp", "tv"}))->capture_default_str();
  rec_cmd->add_option("--filter", rec_filter)->check(CLI::IsMember({"ramp", "hann"}))->capture_default_str();
  rec_cmd->add_option("--lambda", rec_tv.lambda)->capture_default_str();
  rec_cmd->add_option("--max-iter", rec_tv.max_iter)->capture_default_str();
  rec_cmd->add_option("--tv-eps", rec_tv.tv_smoothing_eps)->capture_default_str();
  rec_cmd->add_option("--step-tol", rec_tv.step_tolerance)->capture_default_str();
  rec_cmd->add_option("--floor", rec_floor);
  rec_cmd->add_option("--start-angle", rec_start);
  rec_cmd->add_option("--increment", rec_inc);
  rec_cmd->add_option("--grid", rec_grid);
  rec_cmd->add_option("--threads", rec_threads, "Worker threads (0 = all cores)")->capture_default_str();
  rec_flat.add(rec_cmd);
  rec_ring.add(rec_cmd);

  // evaluate
  auto* ev_cmd = app.add_subcommand("evaluate", "Print per-channel metrics of a volume");
  std::string ev_vol, ev_ref, ev_sig, ev_bg;
  int ev_annuli = 0;
  ev_cmd->add_option("--volume", ev_vol)->required();
  ev_cmd->add_option("--reference", ev_ref, "Volume for the relative difference (numerator side)");
  ev_cmd->add_option("--roi-signal", ev_sig, "row0,col0,height,width");
  ev_cmd->add_option("--roi-background", ev_bg, "row0,col0,height,width");
  ev_cmd->add_option("--annuli", ev_annuli, "Annuli for ring energy (0 = grid/4)");

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run the configured pipelines end to end");
  std::string pipe_cfg, pipe_out;
  std::optional<int> pipe_threads;
  pipe_cmd->add_option("--config", pipe_cfg, "Config JSON or a previous manifest.json")->required();
  pipe_cmd->add_option("--out", pipe_out)->required();
  pipe_cmd->add_option("--threads", pipe_threads);

  // svd-profile
  auto* svd_cmd = app.add_subcommand("svd-profile", "Singular values of a flat stack");
  std::string svd_in, svd_out;
  std::vector<int> svd_ranks{1, 5};
  svd_cmd->add_option("--flats", svd_in)->required();
  svd_cmd->add_option("--out", svd_out, "CSV path (stdout when omitted)");
  svd_cmd->add_option("--ranks", svd_ranks, "Ranks whose approximation errors are reported")->delimiter(',')
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::string stage_name = "setup";
  try {
    if (*sim_cmd) {
      stage_name = "simulate";
      sim.noise = !no_noise;
      sim.gain.mode = gain_mode_from_string(gain_mode);
      const SimConfig cfg = sim.to_sim_config();
      cfg.validate();
      const auto phantom = make_phantom(default_phantom_spec(cfg.geometry.grid_side, cfg.num_channels()));
      const SimResult res = simulate_measurements(phantom, cfg);
      const fs::path out = sim_out;
      const nlohmann::json meta{{"geometry", geometry_to_json(cfg.geometry)}, {"seed", cfg.seed}};
      save_sinogram(out / "counts", res.counts, meta);
      save_flat_stack(out / "flats", stack_flats(res.flats), cfg.channel_labels);
      save_volume(out / "truth" / "phantom", res.phantom, cfg.channel_labels);
      save_flat(out / "truth" / "true_flat", res.true_flat, cfg.channel_labels);
      save_flat(out / "truth" / "flat_gain", FlatEstimate(res.flat_gain), cfg.channel_labels);
      std::cout << "wrote " << out.string() << "\n";
    } else if (*flat_cmd) {
      stage_name = "flat-estimate";
      const FlatFieldStack stack = load_flat_stack(flat_in);
      save_flat(flat_out, flat_args.estimate(stack), load_raw(flat_in).header.channel_labels,
                {{"mode", flat_args.mode}, {"rank", flat_args.rank}});
    } else if (*corr_cmd) {
      stage_name = "correct";
      const SpectralSinogram counts = load_sinogram(corr_counts);
      const RawArray header = load_raw(corr_counts);
      save_sinogram(corr_out, transmission_correct(counts, load_flat(corr_flat), corr_floor),
                    header.header.metadata);
    } else if (*ds_cmd) {
      stage_name = "destripe";
      const SpectralSinogram sino = load_sinogram(ds_in);
      std::vector<Eigen::MatrixXd> channels;
      for (int k = 0; k < sino.num_channels(); ++k) {
        Eigen::MatrixXd c = sino.channel(k);
        if (ds_ring.filter == "wf") c = wf_destripe(c, ds_ring.wf());
        else if (ds_ring.filter == "sortsmooth") c = sort_smooth_destripe(c, ds_ring.ss());
        channels.push_back(std::move(c));
      }
      save_sinogram(ds_out, SpectralSinogram::from_channels(channels, sino.kind(), sino.channel_labels()),
                    load_raw(ds_in).header.metadata);
    } else if (*rec_cmd) {
      stage_name = "reconstruct";
      rec_tv.validate();
      const SpectralSinogram counts = load_sinogram(rec_counts);
      const FlatFieldStack stack = load_flat_stack(rec_flats);
      const ScanGeometry geom =
          geometry_for(counts, load_raw(rec_counts).header.metadata, rec_start, rec_inc, rec_grid);
      ReconOptions opts;
      opts.method = recon_method_from_string(rec_method);
      opts.filter = fbp_filter_from_string(rec_filter);
      opts.ring_filter = ring_filter_from_string(rec_ring.filter);
      opts.wf = rec_ring.wf();
      opts.sort_smooth = rec_ring.ss();
      opts.tv = rec_tv;
      opts.count_floor = rec_floor;
      opts.threads = resolve_threads(rec_threads);
      const FlatEstimate flat = rec_flat.estimate(stack);
      const SystemMatrix a = build_system_matrix(geom);
      const SpectralVolume vol = reconstruct_channels(counts, flat, a, opts);
      save_volume(rec_out, vol, counts.channel_labels(),
                  {{"method", rec_method}, {"flat_mode", rec_flat.mode}, {"ring_filter", rec_ring.filter}});
    } else if (*ev_cmd) {
      stage_name = "evaluate";
      const SpectralVolume vol = load_volume(ev_vol);
      std::optional<SpectralVolume> ref;
      if (!ev_ref.empty()) ref = load_volume(ev_ref);
      const auto sig = parse_roi(ev_sig);
      const auto bg = parse_roi(ev_bg);
      if (sig.has_value() != bg.has_value()) throw ConfigError("give both ROIs or neither");
      const int n = vol.grid_side();
      const double c = 0.5 * (n - 1);
      const int annuli = ev_annuli > 0 ? ev_annuli : std::max(1, n / 4);
      std::cout << "channel_index,cnr,rd,ring_energy\n";
      for (int k = 0; k < vol.num_channels(); ++k) {
        const Eigen::MatrixXd img = vol.image(k);
        const double cv = sig ? cnr(img, *sig, *bg) : std::nan("");
        const double rv = ref ? rd(ref->pixels(k), vol.pixels(k)) : std::nan("");
        std::printf("%d,%.17g,%.17g,%.17g\n", k, cv, rv, ring_energy(img, c, c, annuli));
      }
    } else if (*pipe_cmd) {
      stage_name = "config";
      PipelineConfig cfg = load_pipeline_config(pipe_cfg);
      if (pipe_threads) cfg.threads = *pipe_threads;
      const PipelineSummary summary = run_pipeline(cfg, pipe_out);
      std::cout << "wrote " << summary.artifacts.size() << " artifacts to " << pipe_out << "\n";
      if (summary.selection)
        std::cout << "rd channel selection: min " << summary.selection->k_min << ", median "
                  << summary.selection->k_median << ", max " << summary.selection->k_max << "\n";
    } else if (*svd_cmd) {
      stage_name = "svd-profile";
      const auto sv = singular_value_profile(load_flat_stack(svd_in));
      if (svd_out.empty()) {
        std::cout << "index,value\n";
        for (std::size_t i = 0; i < sv.size(); ++i) std::printf("%zu,%.17g\n", i + 1, sv[i]);
      } else {
        write_singular_values_csv(svd_out, sv);
      }
      for (int l : svd_ranks) {
        if (l < 0 || l >= static_cast<int>(sv.size())) continue;
        std::fprintf(stderr, "rank %d: spectral %.6g, frobenius %.6g\n", l,
                     approximation_error(sv, l, ErrorNorm::spectral),
                     approximation_error(sv, l, ErrorNorm::frobenius));
      }
    }
  } catch (const StageError& e) {
    std::cerr << "specring: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "specring: [" << stage_name << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "specring: [" << stage_name << "] " << e.what() << "\n";
    return 2;
  }
  return 0;
}
