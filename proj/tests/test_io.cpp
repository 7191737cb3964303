#include "helpers.hpp"

#include "specring/pipeline.hpp"
#include "specring/raw_io.hpp"

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

using namespace specring;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("specring_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Eigen::MatrixXd as_f32(Eigen::MatrixXd m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
  return m;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SPECRING_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

PipelineConfig small_pipeline() {
  PipelineConfig cfg;
  SimulationSettings s;
  s.num_detectors = 32;
  s.num_angles = 20;
  s.angle_increment = 9.0;
  s.grid_side = 32;
  s.num_channels = 3;
  s.num_flats = 4;
  s.gain = {0.1, 0.05, GainMode::spectral, false};
  s.seed = 5;
  cfg.simulation = s;
  cfg.pipelines = {"FBP", "LR-FBP"};
  cfg.threads = 2;
  cfg.tv.max_iter = 10;
  cfg.sort_smooth.window = 5;
  cfg.wf.levels = 2;
  return cfg;
}

}  // namespace

TEST_CASE("raw container round trip is exact") {
  TempDir dir("raw");
  RawArray arr;
  arr.header.shape = {2, 3, 4};
  arr.header.axis_names = {"a", "b", "c"};
  arr.header.dtype = DType::f64;
  arr.header.kind = "test";
  arr.header.metadata = {{"note", "x"}};
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 24; ++i) arr.values.push_back(u(gen));
  save_raw(dir.path / "a", arr);
  CHECK(fs::file_size(dir.path / "a.raw") == 24 * 8);
  const RawArray back = load_raw(dir.path / "a.json");
  CHECK(back.values == arr.values);
  CHECK(back.header.shape == arr.header.shape);
  CHECK(back.header.axis_names == arr.header.axis_names);
  CHECK(back.header.metadata == arr.header.metadata);

  arr.header.dtype = DType::f32;
  for (auto& v : arr.values) v = static_cast<float>(v);
  save_raw(dir.path / "b.raw", arr);
  CHECK(fs::file_size(dir.path / "b.raw") == 24 * 4);
  CHECK(load_raw(dir.path / "b").values == arr.values);

  arr.header.dtype = DType::i32;
  for (auto& v : arr.values) v = std::round(v);
  save_raw(dir.path / "c", arr);
  CHECK(load_raw(dir.path / "c").values == arr.values);
  arr.values[0] = 0.5;
  CHECK_THROWS(save_raw(dir.path / "d", arr));
}

TEST_CASE("raw container errors") {
  TempDir dir("rawerr");
  RawArray arr;
  arr.header.shape = {2, 3};
  arr.header.axis_names = {"detector", "channel"};
  arr.values.assign(6, 1.0);
  save_raw(dir.path / "a", arr);
  {
    std::string payload = slurp(dir.path / "a.raw");
    payload.pop_back();
    std::ofstream(dir.path / "a.raw", std::ios::binary) << payload;
  }
  CHECK_THROWS_WITH_AS(load_raw(dir.path / "a"), doctest::Contains("length mismatch"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_raw(dir.path / "missing"), doctest::Contains("missing sidecar"), std::runtime_error);

  save_raw(dir.path / "b", arr);
  auto j = nlohmann::json::parse(slurp(dir.path / "b.json"));
  j["dtype"] = "f16";
  std::ofstream(dir.path / "b.json") << j.dump();
  CHECK_THROWS_WITH_AS(load_raw(dir.path / "b"), doctest::Contains("dtype"), std::runtime_error);

  arr.values.pop_back();
  CHECK_THROWS_AS(save_raw(dir.path / "c", arr), std::invalid_argument);
}

TEST_CASE("a two-axis container loads as a single flat") {
  TempDir dir("flat2");
  RawArray arr;
  arr.header.shape = {460, 339};
  arr.header.axis_names = {"detector", "channel"};
  for (int i = 0; i < 460 * 339; ++i) arr.values.push_back(1.0 + (i % 97));
  save_raw(dir.path / "f", arr);
  const auto stack = load_flat_stack(dir.path / "f");
  CHECK(stack.num_flats() == 1);
  CHECK(stack.num_detectors() == 460);
  CHECK(stack.num_channels() == 339);
  CHECK(stack.data()(5, 7) == arr.values[5 * 339 + 7]);
  CHECK(load_flat(dir.path / "f").values()(459, 338) == arr.values.back());
}

TEST_CASE("typed containers round trip") {
  TempDir dir("typed");
  std::mt19937_64 gen(8);
  std::vector<Eigen::MatrixXd> chans;
  for (int k = 0; k < 3; ++k)
    chans.push_back(as_f32(testing::random_matrix(5, 7, gen, 0.0, 100.0)));
  const auto sino = SpectralSinogram::from_channels(chans, SinogramKind::counts, {"a", "b", "c"});
  save_sinogram(dir.path / "s", sino, {{"geometry", geometry_to_json(make_geometry(7, 5, 1.0, 3.0, 6))}});
  const auto sback = load_sinogram(dir.path / "s");
  CHECK(sback.data() == sino.data());
  CHECK(sback.kind() == SinogramKind::counts);
  CHECK(sback.channel_labels() == sino.channel_labels());
  const auto g = geometry_from_json(load_raw(dir.path / "s").header.metadata.at("geometry"));
  CHECK(g.num_angles == 5);
  CHECK(g.angles_deg[4] == 13.0);
  CHECK(g.grid_side == 6);

  const SpectralVolume vol(4, as_f32(testing::random_matrix(16, 2, gen)));
  save_volume(dir.path / "v", vol, {"x", "y"});
  const auto vback = load_volume(dir.path / "v");
  CHECK(vback.data() == vol.data());
  CHECK(load_raw(dir.path / "v").header.shape == std::vector<std::int64_t>{4, 4, 2});
  CHECK(load_raw(dir.path / "v").values[1 * 2 + 0] == vol.image(0)(0, 1));

  const FlatFieldStack stack(as_f32(testing::random_matrix(12, 3, gen, 1.0, 2.0)), 4);
  save_flat_stack(dir.path / "st", stack);
  const auto stback = load_flat_stack(dir.path / "st");
  CHECK(stback.num_flats() == 4);
  CHECK(stback.data() == stack.data());

  const auto a = build_system_matrix(make_geometry(9, 7, 0.0, 25.0, 8));
  save_system_matrix(dir.path / "A", a);
  const auto aback = load_system_matrix(dir.path / "A");
  CHECK(aback.geometry.angles_deg == a.geometry.angles_deg);
  CHECK(Eigen::MatrixXd(aback.matrix) == Eigen::MatrixXd(a.matrix));
}

TEST_CASE("pgm quicklook") {
  TempDir dir("pgm");
  Eigen::MatrixXd img(2, 3);
  img << 0, 1, 2, 3, 4, 5;
  write_pgm(dir.path / "q.pgm", img);
  const std::string bytes = slurp(dir.path / "q.pgm");
  const std::string header = "P5\n3 2\n65535\n";
  REQUIRE(bytes.size() == header.size() + 12);
  CHECK(bytes.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(bytes[header.size()]) == 0);
  CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 0xff);
  CHECK(static_cast<unsigned char>(bytes[bytes.size() - 1]) == 0xff);
}

TEST_CASE("config validation happens before any output") {
  TempDir dir("cfg");
  auto cfg = small_pipeline();
  cfg.tv.lambda = 0.0;
  CHECK_THROWS_AS(run_pipeline(cfg, dir.path / "out"), ConfigError);
  CHECK_FALSE(fs::exists(dir.path / "out"));

  cfg = small_pipeline();
  cfg.pipelines = {"FBP", "XX-FBP"};
  CHECK_THROWS_AS(run_pipeline(cfg, dir.path / "out"), ConfigError);
  cfg.pipelines = {"FBP", "FBP"};
  CHECK_THROWS_AS(run_pipeline(cfg, dir.path / "out"), ConfigError);
  CHECK_FALSE(fs::exists(dir.path / "out"));

  auto j = to_json(small_pipeline());
  j["unexpected"] = 1;
  CHECK_THROWS_AS(pipeline_config_from_json(j), ConfigError);
  j.erase("unexpected");
  j["tv"]["lamda"] = 0.1;
  CHECK_THROWS_WITH_AS(pipeline_config_from_json(j), doctest::Contains("lamda"), ConfigError);

  std::ofstream(dir.path / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_pipeline_config(dir.path / "bad.json"), ConfigError);

  const auto round = pipeline_config_from_json(to_json(small_pipeline()));
  CHECK(to_json(round) == to_json(small_pipeline()));
}

TEST_CASE("pipeline output matches library calls and reruns from its manifest") {
  TempDir dir("pipe");
  const auto cfg = small_pipeline();
  const auto summary = run_pipeline(cfg, dir.path / "run1");
  REQUIRE(summary.selection.has_value());
  for (const char* f : {"manifest.json", "metrics.csv", "singular_values.csv", "recon/FBP.raw",
                        "recon/LR-FBP.json", "flat_conv.raw", "flat_lr.raw", "data/counts.raw",
                        "truth/phantom.raw"})
    CHECK(fs::exists(dir.path / "run1" / f));

  const SimConfig sc = cfg.simulation->to_sim_config();
  const auto phantom = make_phantom(default_phantom_spec(32, 3));
  const auto sim = simulate_measurements(phantom, sc);
  ReconOptions opts;
  const auto expect = reconstruct_channels(sim.counts, conventional_flat_estimate(stack_flats(sim.flats)),
                                           build_system_matrix(sc.geometry), opts);
  const auto got = load_volume(dir.path / "run1" / "recon" / "FBP");
  CHECK(got.data() == as_f32(expect.data()));

  const auto manifest = nlohmann::json::parse(slurp(dir.path / "run1" / "manifest.json"));
  CHECK(manifest.at("version") == kVersion);
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("num_channels") == 3);

  const auto again = load_pipeline_config(dir.path / "run1" / "manifest.json");
  run_pipeline(again, dir.path / "run2");
  for (const char* f : {"recon/FBP.raw", "recon/LR-FBP.raw", "metrics.csv", "singular_values.csv"})
    CHECK(slurp(dir.path / "run1" / f) == slurp(dir.path / "run2" / f));

  std::ifstream sv(dir.path / "run1" / "singular_values.csv");
  std::string line;
  std::getline(sv, line);
  CHECK(line == "index,value");
  std::getline(sv, line);
  CHECK(line.rfind("1,", 0) == 0);
}

TEST_CASE("all eight pipelines") {
  TempDir dir("eight");
  auto cfg = small_pipeline();
  cfg.pipelines = all_pipeline_names();
  run_pipeline(cfg, dir.path / "out");
  int recon_files = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "out" / "recon"))
    if (e.path().extension() == ".raw") ++recon_files;
  CHECK(recon_files == 8);
  std::ifstream csv(dir.path / "out" / "metrics.csv");
  std::string line;
  int rows = 0;
  std::getline(csv, line);
  CHECK(line == "channel_index,label,method,flat_mode,cnr,rd,ring_energy");
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.find("nan") == std::string::npos);
  }
  CHECK(rows == 8 * 3);
}

TEST_CASE("input pipeline reads raw containers") {
  TempDir dir("input");
  run_pipeline(small_pipeline(), dir.path / "sim");
  PipelineConfig cfg;
  InputSettings in;
  in.counts = (dir.path / "sim" / "data" / "counts").string();
  in.flats = (dir.path / "sim" / "data" / "flats").string();
  cfg.input = in;
  cfg.pipelines = {"FBP"};
  cfg.quicklooks = false;
  run_pipeline(cfg, dir.path / "in");
  // Stored counts are f32, so the rerun agrees to single precision.
  const auto a = load_volume(dir.path / "sim" / "recon" / "FBP");
  const auto b = load_volume(dir.path / "in" / "recon" / "FBP");
  CHECK(testing::rel_diff(a.data(), b.data()) < 1e-5);
}

TEST_CASE("command line exit codes") {
  TempDir dir("cli");
  const std::string d = dir.path.string();
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("--no-such-flag") == 1);
  CHECK(run_cli("pipeline --config " + d + "/absent.json --out " + d + "/x") == 1);
  CHECK(run_cli("reconstruct --counts " + d + "/absent --flats " + d + "/absent --out " + d + "/r") == 2);
  CHECK(run_cli("simulate --out " + d + "/sim --detectors 24 --angles 12 --increment 15 --grid 16 "
                "--channels 2 --num-flats 3") == 0);
  CHECK(run_cli("flat-estimate --flats " + d + "/sim/flats --out " + d + "/z --flat lr --rank 1") == 0);
  CHECK(run_cli("flat-estimate --flats " + d + "/sim/flats --out " + d + "/z2 --flat lr --rank 9") == 1);
  CHECK(run_cli("correct --counts " + d + "/sim/counts --flat " + d + "/z --out " + d + "/b") == 0);
  CHECK(run_cli("destripe --sino " + d + "/b --out " + d + "/b2 --ring-filter sortsmooth --ss-window 5") == 0);
  CHECK(run_cli("reconstruct --counts " + d + "/sim/counts --flats " + d + "/sim/flats --out " + d +
                "/rec --method tv --max-iter 5 --lambda 0.01") == 0);
  CHECK(run_cli("reconstruct --counts " + d + "/sim/counts --flats " + d + "/sim/flats --out " + d +
                "/rec2 --lambda -1 --method tv") == 1);
  CHECK(load_volume(dir.path / "rec").num_channels() == 2);
  CHECK(run_cli("evaluate --volume " + d + "/rec --roi-signal 2,2,3,3 --roi-background 10,10,3,3") == 0);
  CHECK(run_cli("svd-profile --flats " + d + "/sim/flats --out " + d + "/sv.csv") == 0);
  CHECK(fs::exists(dir.path / "sv.csv"));
}
