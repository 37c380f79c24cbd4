// Command-line front end. Links only the C API.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wahnerf/wahnerf.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Failure {
  wah_status status;
  std::string message;
};

void check(wah_status s) {
  if (s != WAH_OK) throw Failure{s, wah_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<wah_config, Deleter<wah_config, wah_config_free>>;
using Scene = std::unique_ptr<wah_scene, Deleter<wah_scene, wah_scene_free>>;
using Data = std::unique_ptr<wah_dataset, Deleter<wah_dataset, wah_dataset_free>>;
using Model = std::unique_ptr<wah_model, Deleter<wah_model, wah_model_free>>;

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::uint64_t fnv1a(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_text(const wah_config* cfg) {
  size_t needed = 0;
  check(wah_config_dump(cfg, nullptr, 0, &needed));
  std::string text(needed, '\0');
  check(wah_config_dump(cfg, text.data(), text.size(), &needed));
  text.resize(needed - 1);
  return text;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out-dir", c.out_dir, "output directory")->required();
}

Config load_config(const Common& c) {
  wah_config* raw = nullptr;
  if (c.config.empty()) {
    check(wah_config_new(&raw));
  } else {
    check(wah_config_load(c.config.c_str(), &raw));
  }
  Config cfg(raw);
  if (c.seed) check(wah_config_set(cfg.get(), "seed", std::to_string(*c.seed).c_str()));
  return cfg;
}

Data load_data(const std::string& dir, const wah_config* cfg) {
  wah_dataset* raw = nullptr;
  check(wah_dataset_load(dir.c_str(), cfg, &raw));
  return Data(raw);
}

Model load_model(const std::string& path, const Common& c) {
  wah_model* raw = nullptr;
  if (c.config.empty()) {
    check(wah_model_load(path.c_str(), nullptr, &raw));
  } else {
    Config cfg = load_config(c);
    check(wah_model_load(path.c_str(), cfg.get(), &raw));
  }
  return Model(raw);
}

void write_manifest(const std::string& command, const std::vector<std::string>& argv, const Common& c,
                    const std::string& config_echo) {
  nlohmann::json m;
  m["command"] = command;
  m["argv"] = argv;
  m["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
  m["config"] = config_echo;
  nlohmann::json artifacts = nlohmann::json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(c.out_dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) artifacts[fs::relative(f, c.out_dir).generic_string()] = "fnv1a64:" + hex(fnv1a(f));
  m["artifacts"] = artifacts;
  std::ofstream out(fs::path(c.out_dir) / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw Failure{WAH_ERR_IO, "cannot write manifest in '" + c.out_dir + "'"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view radiance field trainer and evaluator"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  Common mk_c, tr_c, rd_c, ev_c, dg_c;
  std::string scene_arg = "two-primitive";
  auto* mk = app.add_subcommand("make-scene", "write an analytic scene and its rendered dataset");
  add_common(mk, mk_c);
  mk->add_option("--scene", scene_arg, "preset (one-sphere, two-primitive, cluster) or scene file");

  std::string tr_data, tr_resume;
  auto* tr = app.add_subcommand("train", "train a field on a dataset");
  add_common(tr, tr_c);
  tr->add_option("--data", tr_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--resume", tr_resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  std::string rd_model, rd_data, rd_split = "test";
  std::optional<std::size_t> rd_view;
  std::vector<double> rd_pose;
  auto* rd = app.add_subcommand("render", "render views or poses from a checkpoint");
  add_common(rd, rd_c);
  rd->add_option("--model", rd_model, "checkpoint")->required()->check(CLI::ExistingFile);
  rd->add_option("--data", rd_data, "dataset directory (poses and intrinsics)")->required()->check(
      CLI::ExistingDirectory);
  rd->add_option("--split", rd_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  rd->add_option("--view", rd_view, "single view index (default: all)");
  rd->add_option("--pose", rd_pose, "radius phi gamma of a look-at pose")->expected(3);

  std::string ev_model, ev_data;
  std::vector<std::string> ev_images;
  auto* ev = app.add_subcommand("eval", "score renders against test views, or two images");
  add_common(ev, ev_c);
  ev->add_option("--model", ev_model, "checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "dataset directory")->check(CLI::ExistingDirectory);
  ev->add_option("--images", ev_images, "two PNG files to compare")->expected(2)->check(CLI::ExistingFile);

  std::string dg_model, dg_data;
  std::size_t dg_rays = 64;
  auto* dg = app.add_subcommand("diagnose", "per-sample ray profiles on test pixels");
  add_common(dg, dg_c);
  dg->add_option("--model", dg_model, "checkpoint")->required()->check(CLI::ExistingFile);
  dg->add_option("--data", dg_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  dg->add_option("--rays", dg_rays, "number of rays");

  try {
    app.parse(argc, argv);
    if (ev->parsed() && ev_images.empty() && (ev_model.empty() || ev_data.empty())) {
      throw CLI::ValidationError("eval needs --model and --data, or --images A B");
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: code=usage message=" << one_line(e.what()) << '\n';
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    if (cmd == mk) {
      fs::create_directories(mk_c.out_dir);
      Config cfg = load_config(mk_c);
      wah_scene* raw = nullptr;
      if (fs::exists(scene_arg)) {
        check(wah_scene_load(scene_arg.c_str(), &raw));
      } else {
        check(wah_scene_preset(scene_arg.c_str(), &raw));
      }
      Scene scene(raw);
      check(wah_scene_save(scene.get(), (fs::path(mk_c.out_dir) / "scene.wahscene").string().c_str()));
      wah_dataset* d = nullptr;
      check(wah_dataset_generate(scene.get(), cfg.get(), mk_c.seed.value_or(0), &d));
      Data data(d);
      check(wah_dataset_save(data.get(), mk_c.out_dir.c_str()));
      write_manifest("make-scene", args, mk_c, config_text(cfg.get()));
    } else if (cmd == tr) {
      fs::create_directories(tr_c.out_dir);
      Config cfg = load_config(tr_c);
      Data data = load_data(tr_data, cfg.get());
      wah_model* raw = nullptr;
      if (tr_resume.empty()) {
        check(wah_model_init(cfg.get(), &raw));
      } else {
        check(wah_model_load(tr_resume.c_str(), cfg.get(), &raw));
      }
      Model model(raw);
      double last = 0.0;
      check(wah_train(model.get(), data.get(), tr_c.out_dir.c_str(), &last));
      check(wah_model_save(model.get(), (fs::path(tr_c.out_dir) / "model.wah").string().c_str()));
      std::cout << "final_total " << last << '\n';
      write_manifest("train", args, tr_c, config_text(cfg.get()));
    } else if (cmd == rd) {
      fs::create_directories(rd_c.out_dir);
      Config cfg = load_config(rd_c);
      Model model = load_model(rd_model, rd_c);
      Data data = load_data(rd_data, cfg.get());
      const wah_split split = rd_split == "train" ? WAH_SPLIT_TRAIN : WAH_SPLIT_TEST;
      if (!rd_pose.empty()) {
        const std::string out = (fs::path(rd_c.out_dir) / "pose.png").string();
        check(wah_render_pose(model.get(), data.get(), rd_pose[0], rd_pose[1], rd_pose[2], out.c_str()));
      } else {
        std::size_t count = 0;
        check(wah_dataset_count(data.get(), split, &count));
        std::size_t first = 0, last = count;
        if (rd_view) {
          first = *rd_view;
          last = first + 1;
        }
        for (std::size_t i = first; i < last; ++i) {
          const std::string out = (fs::path(rd_c.out_dir) / (rd_split + "_" + std::to_string(i) + ".png")).string();
          check(wah_render_view(model.get(), data.get(), split, i, out.c_str()));
        }
      }
      write_manifest("render", args, rd_c, config_text(cfg.get()));
    } else if (cmd == ev) {
      fs::create_directories(ev_c.out_dir);
      Config cfg = load_config(ev_c);
      if (!ev_images.empty()) {
        double p = 0, s = 0;
        int capped = 0;
        check(wah_image_metrics(ev_images[0].c_str(), ev_images[1].c_str(), &p, &capped, &s));
        std::ostringstream text;
        text.setf(std::ios::fixed);
        text.precision(4);
        text << "0 " << p << (capped ? "*" : "") << ' ' << s << "\nmean±std " << p << "±0.0000 " << s << "±0.0000\n";
        std::ofstream(fs::path(ev_c.out_dir) / "report.txt") << text.str();
        std::cout << text.str();
      } else {
        Model model = load_model(ev_model, ev_c);
        Data data = load_data(ev_data, cfg.get());
        double p = 0, s = 0;
        check(wah_evaluate(model.get(), data.get(), ev_c.out_dir.c_str(), &p, &s));
        std::ifstream report(fs::path(ev_c.out_dir) / "report.txt");
        std::cout << report.rdbuf();
      }
      write_manifest("eval", args, ev_c, config_text(cfg.get()));
    } else if (cmd == dg) {
      fs::create_directories(dg_c.out_dir);
      Config cfg = load_config(dg_c);
      Model model = load_model(dg_model, dg_c);
      Data data = load_data(dg_data, cfg.get());
      double spread = 0.0;
      check(wah_diagnose(model.get(), data.get(), dg_rays, dg_c.seed.value_or(0), dg_c.out_dir.c_str(), &spread));
      std::cout << "median_fine_spread " << (std::isnan(spread) ? std::string("undefined") : std::to_string(spread))
                << '\n';
      write_manifest("diagnose", args, dg_c, config_text(cfg.get()));
    }
  } catch (const Failure& f) {
    std::cerr << "error: code=" << wah_status_name(f.status) << " command=" << cmd->get_name()
              << " message=" << one_line(f.message) << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: code=internal command=" << cmd->get_name() << " message=" << one_line(e.what()) << '\n';
    return kExitFailure;
  }
  return 0;
}
