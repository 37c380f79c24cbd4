#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "wahnerf/error.hpp"
#include "wahnerf/rendering.hpp"
#include "wahnerf/training.hpp"

using namespace wah;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.iterations = 20;
  c.patch_size = 4;
  c.patches_per_batch = 2;
  c.unseen_patches = 2;
  c.coarse_samples = 12;
  c.fine_samples = 12;
  c.layers.pos_levels = 4;
  c.layers.dir_levels = 2;
  c.layers.trunk_depth = 2;
  c.layers.trunk_width = 16;
  c.layers.skip_layer = 1;
  c.layers.color_width = 8;
  c.seed = 3;
  return c;
}

const Dataset& sphere_data() {
  static const Dataset data = [] {
    DatasetSpec spec;
    spec.n_train = 3;
    spec.n_test = 2;
    spec.resolution = 32;
    spec.oracle_samples = 1024;
    Rng rng(17);
    return make_dataset(one_sphere_scene(), spec, rng);
  }();
  return data;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

bool same_params(const FieldParams& a, const FieldParams& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (const auto& [name, t] : a.tensors) {
    if (t.values != b.tensors.at(name).values) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.iterations = 2000;
  CHECK(lr_at(0, c) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at(1000, c) == doctest::Approx(2.236068e-4).epsilon(1e-6));
  CHECK(lr_at(2000, c) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_at(700, c) > lr_at(701, c));
  CHECK_THROWS_AS(lr_at(2001, c), InvalidArgument);
  c.iterations = 0;
  CHECK(lr_at(0, c) == 1e-3);
}

TEST_CASE("config validation and key round trip") {
  TrainConfig c;
  CHECK(c.rays_per_batch() == 1024);
  CHECK_NOTHROW(c.validate());
  CHECK(c.checkpoint_interval() == 500);
  for (auto mutate : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& x) { x.patch_size = 0; }, [](TrainConfig& x) { x.lr_start = -1; },
           [](TrainConfig& x) { x.epsilon = 0; }, [](TrainConfig& x) { x.mask_threshold = 1.0; },
           [](TrainConfig& x) { x.perturbations = 0; }, [](TrainConfig& x) { x.mu = -0.1; },
           [](TrainConfig& x) { x.unseen_bounds.gamma_max = 4.0; }}) {
    TrainConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  }

  TrainConfig custom = small_config();
  custom.mu = 0.25;
  custom.tau_gamma = 0.01;
  custom.deformable_coarse = true;
  custom.background = Vec3(0.1, 0.2, 0.3);
  custom.unseen_bounds.phi_max = 1.5;
  custom.seed = 12345678901234ull;
  KeyValues kv = train_config_values(custom);
  kv["extra"] = "kept";
  TrainConfig back;
  apply_train_config(kv, back);
  CHECK(kv.size() == 1);
  CHECK(kv.count("extra") == 1);
  CHECK(train_config_values(back) == train_config_values(custom));
  CHECK(back.seed == custom.seed);
  CHECK(back.background == custom.background);

  KeyValues bad{{"mu", "half"}};
  TrainConfig x;
  CHECK_THROWS_AS(apply_train_config(bad, x), FormatError);
}

TEST_CASE("seen batches") {
  const Dataset& data = sphere_data();
  TrainConfig c;
  Rng a(1), b(1);
  const SeenBatch s1 = assemble_seen_batch(data, c, a), s2 = assemble_seen_batch(data, c, b);
  REQUIRE(s1.rays.size() == 1024);
  REQUIRE(s1.colors.size() == 3072);
  CHECK(s1.colors == s2.colors);
  const auto train = views_of(data, Split::Train);
  for (std::size_t p = 0; p < 16; ++p) {
    const ConeRay& first = s1.rays[p * 64];
    // Locate the source view by its camera origin.
    const DatasetView* src = nullptr;
    for (const auto* v : train)
      if ((v->camera.position - first.origin).norm() < 1e-12) src = v;
    REQUIRE(src != nullptr);
    for (int i = 0; i < 64; ++i) {
      const ConeRay& r = s1.rays[p * 64 + i];
      CHECK(r.row == first.row + i / 8);
      CHECK(r.col == first.col + i % 8);
      CHECK((r.row >= 0 && r.row < 32 && r.col >= 0 && r.col < 32));
      for (int ch = 0; ch < 3; ++ch) CHECK(s1.colors[(p * 64 + i) * 3 + ch] == src->image.at(r.row, r.col, ch));
    }
  }
  TrainConfig big = c;
  big.patch_size = 40;
  CHECK_THROWS_AS(assemble_seen_batch(data, big, a), InvalidArgument);
}

TEST_CASE("unseen batches") {
  const Intrinsics in = sphere_data().front().camera.intrinsics;
  TrainConfig c;
  c.perturbations = 2;
  Rng rng(2);
  const UnseenBatch b = assemble_unseen_batch(c, in, rng);
  CHECK(b.unseen.size() == 1024);
  REQUIRE(b.perturbed.size() == 2);
  for (const auto& p : b.perturbed) {
    REQUIRE(p.size() == 1024);
    for (std::size_t i = 0; i < 1024; ++i) {
      CHECK(p[i].row == b.unseen[i].row);
      CHECK(p[i].col == b.unseen[i].col);
    }
  }
  CHECK((b.perturbed[0][0].origin - b.unseen[0].origin).norm() > 0.0);

  c.tau_radius = c.tau_phi = c.tau_gamma = 0.0;
  const UnseenBatch same = assemble_unseen_batch(c, in, rng);
  for (std::size_t i = 0; i < same.unseen.size(); ++i) {
    CHECK((same.perturbed[1][i].origin - same.unseen[i].origin).norm() < 1e-12);
    CHECK((same.perturbed[1][i].direction - same.unseen[i].direction).norm() < 1e-12);
  }
}

TEST_CASE("steps are deterministic") {
  const TrainConfig c = small_config();
  TrainState a = init_state(c), b = init_state(c);
  for (int i = 0; i < 3; ++i) {
    const StepResult ra = train_iteration(a, sphere_data(), c);
    const StepResult rb = train_iteration(b, sphere_data(), c);
    REQUIRE(ra.applied);
    CHECK(log_line({0, ra.lr, ra.losses}) == log_line({0, rb.lr, rb.losses}));
  }
  CHECK(same_params(a.params, b.params));
  CHECK(a.step == 3);
}

TEST_CASE("disabled extras reduce to plain MSE gradients") {
  TrainConfig c = small_config();
  c.mu = c.nu = 0.0;
  c.smooth = false;
  const TrainState st = init_state(c);
  Rng batch_rng(4);
  const SeenBatch seen = assemble_seen_batch(sphere_data(), c, batch_rng);
  const UnseenBatch unseen = assemble_unseen_batch(c, sphere_data().front().camera.intrinsics, batch_rng);
  Rng r1(9), r2(9);
  const Gradients g = compute_gradients(st.params, seen, &unseen, c, 0, r1);

  Tape tape;
  const FieldVars vars = bind(st.params, &tape);
  const NeuralField field(vars);
  RenderConfig rc;
  rc.coarse_samples = c.coarse_samples;
  rc.fine_samples = c.fine_samples;
  rc.deformable = c.deformable;
  rc.randomized = true;
  const ConeRender out = render_rays(field, seen.rays, rc, r2);
  const DualArray gt(Shape{seen.rays.size(), 3}, seen.colors);
  tape.backward(loss_mse(out.fine.render.color, gt) + 0.1 * loss_mse(out.coarse.render.color, gt));
  for (const auto& [name, v] : vars.tensors) {
    CAPTURE(name);
    CHECK(test::max_abs_diff(g.grads.at(name), tape.grad(v)) <= 1e-9);
  }
}

TEST_CASE("every parameter group receives gradient") {
  TrainConfig c = small_config();
  TrainState st = init_state(c);
  Rng rng(5);
  const SeenBatch seen = assemble_seen_batch(sphere_data(), c, rng);
  const UnseenBatch unseen = assemble_unseen_batch(c, sphere_data().front().camera.intrinsics, rng);
  const Gradients g = compute_gradients(st.params, seen, &unseen, c, 0, rng);
  CHECK(g.losses.fine.mi <= 0.0);
  CHECK(g.losses.fine.dist > 0.0);
  CHECK(g.losses.fine.ppc_rgb >= 0.0);
  CHECK(g.losses.fine.smooth >= 0.0);
  for (const auto& [name, grad] : g.grads) {
    CAPTURE(name);
    double norm = 0.0;
    for (double x : grad) {
      CHECK(std::isfinite(x));
      norm += x * x;
    }
    if (name.back() != 'b' || name == "offset.b" || name == "density.b" || name == "color.1.b") CHECK(norm > 0.0);
  }
}

TEST_CASE("non-finite steps leave the state untouched") {
  const TrainConfig c = small_config();
  TrainState st = init_state(c);
  st.params.tensors.at("density.b").values[0] = std::nan("");
  const TrainState before = st;
  const StepResult r = train_iteration(st, sphere_data(), c);
  CHECK_FALSE(r.applied);
  CHECK(r.diagnostic.find("step 0") != std::string::npos);
  CHECK(st.step == 0);
  CHECK(rng_state(st.rng) == rng_state(before.rng));
  CHECK(st.adam_m == before.adam_m);
  CHECK(st.params.tensors.at("trunk.0.w").values == before.params.tensors.at("trunk.0.w").values);
  CHECK_THROWS_AS(train(sphere_data(), c, st), NumericError);
}

TEST_CASE("short training fits the seen views") {
  TrainConfig c = small_config();
  c.iterations = 200;
  c.patch_size = 8;
  c.patches_per_batch = 4;
  c.unseen_patches = 1;
  c.coarse_samples = 16;
  c.fine_samples = 16;
  c.layers.trunk_width = 32;
  c.layers.pos_levels = 6;
  c.lr_start = 5e-3;
  c.lr_end = 5e-4;
  TrainState st = init_state(c);
  const auto rows = train(sphere_data(), c, st);
  REQUIRE(rows.size() == 200);
  auto window = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + 10; ++i) s += rows[i].losses.fine.mse;
    return s / 10.0;
  };
  MESSAGE("fine mse " << window(0) << " -> " << window(190));
  CHECK(window(190) <= 0.5 * window(0));
}

TEST_CASE("train writes logs and checkpoints") {
  TrainConfig c = small_config();
  c.iterations = 8;
  const auto dir = test::scratch_dir("train_out");

  TrainConfig none = c;
  none.iterations = 0;
  TrainState idle = init_state(none);
  CHECK(train(sphere_data(), none, idle, {dir.string(), {}}).empty());
  CHECK(read_lines(dir / "train_log.csv") == std::vector<std::string>{log_header()});

  TrainState st = init_state(c);
  std::size_t calls = 0;
  train(sphere_data(), c, st, {dir.string(), [&](const LogRow&) { ++calls; }});
  CHECK(calls == 8);
  const auto lines = read_lines(dir / "train_log.csv");
  REQUIRE(lines.size() == 9);
  CHECK(lines[0] == "step,lr,mse_c,mse_f,mi_f,dist_f,offset_f,ppc_rgb_f,ppc_d_f,smooth_f,total");
  CHECK(lines[1].rfind("0,0.001,", 0) == 0);
  for (std::size_t s : {2u, 4u, 6u, 8u}) CHECK(std::filesystem::exists(dir / checkpoint_name(s)));
  CHECK_FALSE(std::filesystem::exists(dir / checkpoint_name(1)));

  TrainConfig stored;
  const TrainState back = load_state((dir / checkpoint_name(8)).string(), &stored);
  CHECK(back.step == 8);
  CHECK(same_params(back.params, st.params));
  CHECK(back.adam_m == st.adam_m);
  CHECK(back.adam_v == st.adam_v);
  CHECK(rng_state(back.rng) == rng_state(st.rng));
  CHECK(train_config_values(stored) == train_config_values(c));
}

TEST_CASE("resuming matches an uninterrupted run") {
  TrainConfig c = small_config();
  c.iterations = 10;
  c.checkpoint_every = 5;
  const auto full_dir = test::scratch_dir("resume_full"), part_dir = test::scratch_dir("resume_part");
  TrainState full = init_state(c);
  train(sphere_data(), c, full, {full_dir.string(), {}});

  // Restart from the mid-run checkpoint with the config stored in it.
  TrainConfig stored;
  TrainState resumed = load_state((full_dir / checkpoint_name(5)).string(), &stored);
  const auto rows = train(sphere_data(), stored, resumed, {part_dir.string(), {}});
  CHECK(rows.size() == 5);
  CHECK(same_params(resumed.params, full.params));
  CHECK(resumed.adam_v == full.adam_v);
  const auto full_log = read_lines(full_dir / "train_log.csv");
  const auto part_log = read_lines(part_dir / "train_log.csv");
  REQUIRE(part_log.size() == 6);
  for (std::size_t i = 1; i < 6; ++i) CHECK(part_log[i] == full_log[i + 5]);
}
