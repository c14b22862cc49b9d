// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion ids on
// the command line to run a subset (e.g. `canvasinfill_acceptance 1 5 11`).

#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "canvasinfill/config.hpp"
#include "canvasinfill/contrastive.hpp"
#include "canvasinfill/daf.hpp"
#include "canvasinfill/evaluation.hpp"
#include "canvasinfill/generator.hpp"
#include "canvasinfill/losses.hpp"
#include "canvasinfill/training.hpp"
#include "oracles.hpp"

using namespace canvasinfill;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double mean_of(const std::vector<double>& v, size_t begin, size_t end) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end),
                         0.0) /
         static_cast<double>(end - begin);
}

fs::path work_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("canvasinfill_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 1 --------------------------------------------------------------------------
Outcome infonce_oracle() {
  Outcome o;
  std::mt19937_64 rng(101);
  torch::manual_seed(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t d = std::uniform_int_distribution<int64_t>(1, 8)(rng);
    const int64_t n = std::uniform_int_distribution<int64_t>(1, 16)(rng);
    const double tau = std::uniform_real_distribution<double>(0.03, 1.0)(rng);
    auto rows = torch::randn({n + 2, d}, torch::kDouble);
    rows = rows / rows.norm(2, 1, true);
    KeyQueue queue(16, d, torch::kDouble);
    queue.enqueue(rows.slice(0, 2));
    std::vector<oracle::Vec> negs;
    for (int64_t i = 2; i < n + 2; ++i) negs.push_back(oracle::to_vec(rows[i]));
    const double expected = oracle::info_nce(oracle::to_vec(rows[0]), oracle::to_vec(rows[1]), negs, tau);
    worst = std::max(worst, std::abs(info_nce(rows[0], rows[1], queue, tau).item<double>() - expected));
  }
  o.require(worst <= 1e-6, "max |diff| " + fmt(worst) + " > 1e-6");
  o.note("max |diff| " + fmt(worst, 3));
  return o;
}

// 2 --------------------------------------------------------------------------
Outcome momentum_closed_form() {
  Outcome o;
  torch::manual_seed(202);
  Encoder q(EncoderOptions{});
  Encoder k(EncoderOptions{});
  std::vector<torch::Tensor> k0;
  for (const auto& p : k->parameters()) k0.push_back(p.detach().to(torch::kDouble).clone());
  const double m = 0.9;
  for (int i = 0; i < 10; ++i) momentum_update(q, k, m);
  const double mn = std::pow(m, 10);
  double worst = 0.0;
  auto qp = q->parameters();
  auto kp = k->parameters();
  for (size_t i = 0; i < kp.size(); ++i) {
    auto expected = mn * k0[i] + (1.0 - mn) * qp[i].to(torch::kDouble);
    worst = std::max(worst, (kp[i].to(torch::kDouble) - expected).abs().max().item<double>());
  }
  o.require(worst <= 1e-6, "max |diff| " + fmt(worst) + " > 1e-6");
  o.note("max |diff| " + fmt(worst, 3));
  return o;
}

// 3 --------------------------------------------------------------------------
Outcome queue_fifo() {
  Outcome o;
  std::mt19937_64 rng(303);
  const int64_t cap = 13;
  KeyQueue queue(cap, 2, torch::kDouble);
  std::deque<double> model;
  double next = 0.0;
  bool ok = true;
  for (int op = 0; op < 1000 && ok; ++op) {
    const int64_t b = std::uniform_int_distribution<int64_t>(0, cap)(rng);
    auto batch = torch::empty({b, 2}, torch::kDouble);
    for (int64_t i = 0; i < b; ++i) {
      batch[i][0] = next;
      batch[i][1] = -next;
      model.push_back(next++);
      if (static_cast<int64_t>(model.size()) > cap) model.pop_front();
    }
    queue.enqueue(batch);
    auto keys = queue.keys();
    ok = queue.size() <= cap && keys.size(0) == static_cast<int64_t>(model.size()) &&
         queue.total_enqueued() - queue.total_evicted() == queue.size();
    for (int64_t i = 0; ok && i < keys.size(0); ++i) {
      ok = keys[i][0].item<double>() == model[static_cast<size_t>(i)];
    }
    if (!ok) o.require(false, "divergence from FIFO model at op " + std::to_string(op));
  }
  o.note("1000 ops, capacity " + std::to_string(cap));
  return o;
}

// 4 --------------------------------------------------------------------------
Outcome daf_convexity() {
  Outcome o;
  torch::manual_seed(404);
  double min_alpha = 1.0, max_alpha = 0.0, min_gate = 1.0, max_gate = 0.0, worst_violation = 0.0;
  for (int t = 0; t < 100; ++t) {
    DafOptions opts;
    opts.channels = 32;
    DafHead head(opts);
    head->to(torch::kDouble);
    auto tr = head->trace(torch::randn({1, 32, 8, 8}, torch::kDouble) * 2.0,
                          torch::rand({1, 4, 8, 8}, torch::kDouble));
    auto lo = torch::minimum(tr.projected, tr.downscaled);
    auto hi = torch::maximum(tr.projected, tr.downscaled);
    worst_violation = std::max({worst_violation, (lo - tr.output).max().item<double>(),
                                (tr.output - hi).max().item<double>()});
    min_alpha = std::min(min_alpha, tr.alpha.min().item<double>());
    max_alpha = std::max(max_alpha, tr.alpha.max().item<double>());
    min_gate = std::min(min_gate, tr.gate.min().item<double>());
    max_gate = std::max(max_gate, tr.gate.max().item<double>());
  }
  // Rounding of a·p + (1−a)·x can overshoot the hull by a few ulps.
  o.require(worst_violation <= 1e-12, "hull violation " + fmt(worst_violation));
  o.require(min_alpha > 0.0 && max_alpha < 1.0, "alpha outside (0,1)");
  o.require(min_gate > 0.0 && max_gate < 1.0, "omega outside (0,1)");
  o.note("alpha in [" + fmt(min_alpha) + ", " + fmt(max_alpha) + "], omega in [" + fmt(min_gate) + ", " +
         fmt(max_gate) + "]");
  return o;
}

// 5 --------------------------------------------------------------------------
Outcome gradient_checks() {
  Outcome o;
  torch::manual_seed(505);
  FeatureExtractorOptions fo;
  fo.widths = {4, 6, 8};
  FeatureExtractor phi(fo);
  phi->to(torch::kDouble);
  auto y = torch::rand({1, 3, 8, 8}, torch::kDouble);
  auto x0 = torch::rand({1, 3, 8, 8}, torch::kDouble);
  auto masks = torch::zeros({1, 1, 8, 8}, torch::kDouble);
  masks.slice(2, 2, 6).slice(3, 1, 5).fill_(1.0);
  auto kernel = torch::randn({2, 3, 3, 3}, torch::kDouble) * 0.5;
  auto critic_for = [](const torch::Tensor& k) -> Critic {
    return [k](const torch::Tensor& x) { return torch::tanh(torch::conv2d(x, k, {}, 1, 1)).mean({1, 2, 3}); };
  };
  auto critic = critic_for(kernel);

  std::vector<std::pair<std::string, oracle::GradCheck>> results;
  auto input_case = [&](const std::string& name, std::function<torch::Tensor(const torch::Tensor&)> f,
                        const torch::Tensor& x) { results.emplace_back(name, oracle::check_input_gradient(f, x, 192, 7)); };
  input_case("rec", [&](const torch::Tensor& x) { return rec_loss(x, y); }, x0);
  input_case("perceptual", [&](const torch::Tensor& x) { return perceptual_loss(x, y, phi); }, x0);
  input_case("style", [&](const torch::Tensor& x) { return style_loss(x, y, phi); }, x0);
  input_case("tv", [&](const torch::Tensor& x) { return tv_loss(x, masks); }, x0);
  input_case("adv_g", [&](const torch::Tensor& x) { return adv_loss_g(critic, x); }, x0);
  auto samples = torch::rand({2, 3, 8, 8}, torch::kDouble);
  input_case("gradient_penalty",
             [&](const torch::Tensor& k) { return gradient_penalty(critic_for(k), samples, 10.0); }, kernel);

  auto pos = torch::randn({8}, torch::kDouble);
  pos = pos / pos.norm();
  auto negs = torch::randn({12, 8}, torch::kDouble);
  KeyQueue queue(16, 8, torch::kDouble);
  queue.enqueue(negs / negs.norm(2, 1, true));
  input_case("info_nce", [&](const torch::Tensor& q) { return info_nce(q, pos, queue, 0.2); },
             torch::randn({8}, torch::kDouble));

  DafOptions dopts;
  dopts.channels = 16;
  dopts.reduction = 4;
  dopts.hidden = 8;
  DafHead head(dopts);
  head->to(torch::kDouble);
  auto features = torch::randn({1, 16, 8, 8}, torch::kDouble);
  auto input = torch::rand({1, 4, 8, 8}, torch::kDouble);
  auto target = torch::rand({1, 3, 8, 8}, torch::kDouble);
  input_case("daf_forward(features)",
             [&](const torch::Tensor& f) { return (daf_forward(f, input, head) - target).pow(2).mean(); }, features);
  results.emplace_back("daf_forward(params)", oracle::check_parameter_gradient(
                                                  [&] { return (daf_forward(features, input, head) - target).pow(2).mean(); },
                                                  head->parameters(), 6, 9));

  std::string summary;
  for (const auto& [name, r] : results) {
    o.require(r.max_relative_error <= 1e-3, name + " rel err " + fmt(r.max_relative_error));
    summary += name + "=" + fmt(r.max_relative_error, 2) + " ";
  }
  o.note("max rel err: " + summary);
  return o;
}

// 6 --------------------------------------------------------------------------
Outcome loss_identities() {
  Outcome o;
  torch::manual_seed(606);
  FeatureExtractor phi;
  phi->to(torch::kDouble);
  auto y = torch::rand({2, 3, 32, 32}, torch::kDouble);
  o.require(rec_loss(y, y).item<double>() == 0.0, "rec(Y,Y) != 0");
  o.require(perceptual_loss(y, y, phi).item<double>() == 0.0, "perceptual(Y,Y) != 0");
  o.require(style_loss(y, y, phi).item<double>() == 0.0, "style(Y,Y) != 0");
  auto masks = torch::zeros({2, 1, 32, 32}, torch::kDouble);
  masks.slice(2, 4, 20).slice(3, 6, 28).fill_(1.0);
  o.require(tv_loss(torch::full_like(y, 0.4), masks).item<double>() == 0.0, "tv(constant) != 0");

  MultiScaleOutput out;
  auto c = torch::full({1, 3, 32, 32}, 0.5, torch::kDouble);
  auto pyr = image_pyramid(c);
  for (int k = 1; k <= kOutputScales; ++k) out.at(k) = pyr[static_cast<size_t>(k - 1)].clone();
  out.at(2) = out.at(2) + 0.1;
  const double s = structure_loss(out, c, LossWeights{}).item<double>();
  o.require(std::abs(s - 0.1) <= 1e-12, "structure example " + fmt(s, 17));

  Critic constant = [](const torch::Tensor& x) { return torch::full({x.size(0)}, 3.0, x.options()); };
  std::mt19937_64 rng(6);
  const double critic = adv_loss_d(constant, y, torch::rand_like(y), rng, LossWeights{}.gp).total.item<double>();
  o.require(critic == 10.0, "critic loss at constant D = " + fmt(critic, 17));
  o.note("structure example " + fmt(s, 17) + ", critic(D=c) " + fmt(critic, 17));
  return o;
}

// 7 --------------------------------------------------------------------------
Outcome shape_law() {
  Outcome o;
  torch::manual_seed(707);
  Generator g(GeneratorOptions{});
  torch::NoGradGuard no_grad;
  for (int64_t size : {32, 64}) {
    auto out = g->forward(torch::rand({1, 4, size, size}));
    for (int k = 1; k <= kOutputScales; ++k) {
      const int64_t expected = size >> (k - 1);
      o.require(out.at(k).size(1) == 3 && out.at(k).size(2) == expected && out.at(k).size(3) == expected,
                "size " + std::to_string(size) + " scale " + std::to_string(k));
    }
  }
  o.note("sizes 32, 64 give H/2^(k-1) for k = 1..6");
  return o;
}

// 8 --------------------------------------------------------------------------
Outcome pretrain_smoke() {
  Outcome o;
  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.seed = 8;
  cfg.pretrain_steps = 500;
  cfg.pretrain_batch = 16;
  cfg.contrastive.queue_capacity = 256;
  cfg.log_every = 50;
  auto data = ImageDataset::from_tensors(oracle::synthetic_images(64, 64, 808));
  RunLog log;
  auto result = run_pretrain(cfg, data, log);
  const size_t n = result.losses.size();
  const size_t decile = n / 10;
  const double first = mean_of(result.losses, 0, decile);
  const double last = mean_of(result.losses, n - decile, n);
  const double chance = 1.0 / (256.0 + 1.0);
  o.require(result.final_accuracy >= 5.0 * chance,
            "retrieval accuracy " + fmt(result.final_accuracy) + " < 5x chance " + fmt(5 * chance));
  o.require(last < first, "last-decile loss " + fmt(last) + " >= first-decile " + fmt(first));
  o.note("accuracy " + fmt(result.final_accuracy) + " (5x chance " + fmt(5 * chance) + "), loss first decile " +
         fmt(first) + " -> last decile " + fmt(last));
  return o;
}

// 9 --------------------------------------------------------------------------
Outcome overfit_smoke() {
  Outcome o;
  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.seed = 9;
  cfg.joint_batch = 2;  // fits the 20 min budget on a single core
  cfg.joint_steps = 2000;
  cfg.use_contrastive_init = false;
  cfg.hflip = false;
  auto data = ImageDataset::from_tensors(oracle::synthetic_images(8, 64, 909));
  auto state = JointState::create(cfg);
  const uint64_t mask_seed = 99;
  const double initial = masked_region_l1(state.generator, data, cfg, mask_seed);
  double current = initial;
  RunLog log;
  const int64_t check_every = 100;
  while (state.step < cfg.joint_steps) {
    auto t = cfg;
    t.joint_steps = std::min(cfg.joint_steps, state.step + check_every);
    train_joint(state, t, data, {}, log);
    current = masked_region_l1(state.generator, data, cfg, mask_seed);
    std::cerr << "  [overfit] step " << state.step << " masked L1 " << current << std::endl;
    if (current <= 0.5 * initial) break;
  }
  const double drop = 1.0 - current / initial;
  o.require(drop >= 0.5, "masked L1 fell only " + fmt(100 * drop, 3) + "%");
  o.note("masked L1 " + fmt(initial) + " -> " + fmt(current) + " (" + fmt(100 * drop, 3) + "% drop) after " +
         std::to_string(state.step) + " steps");
  return o;
}

// 10 -------------------------------------------------------------------------
Outcome ablation_grid() {
  Outcome o;
  auto dir = work_dir("ablation");
  TrainConfig base;
  base.image_size = 32;
  base.seed = 10;
  base.pretrain_steps = 50;
  base.pretrain_batch = 8;
  base.contrastive.queue_capacity = 64;
  base.joint_steps = 200;
  base.joint_batch = 4;
  base.log_every = 50;
  auto all = ImageDataset::from_tensors(oracle::synthetic_images(24, 32, 1010));
  auto split = all.split(0.25, base.seed);

  RunLog pre_log;
  const auto pre_ckpt = (dir / "pretrain.ckpt").string();
  run_pretrain(base, split.train, pre_log, pre_ckpt);

  FeatureExtractor extractor(base.features);
  std::string table;
  for (bool contrastive : {false, true}) {
    for (bool daf : {false, true}) {
      auto cfg = base;
      cfg.use_contrastive_init = contrastive;
      cfg.use_daf = daf;
      const std::string arm = std::string("contrastive") + (contrastive ? "+" : "-") + " daf" + (daf ? "+" : "-");
      try {
        RunLog log;
        JointRunOptions opts;
        if (contrastive) opts.init_checkpoint = pre_ckpt;
        opts.checkpoint_path = (dir / (arm + ".ckpt")).string();
        auto result = run_joint(cfg, split.train, split.val, log, opts);
        auto generator = load_generator(result.checkpoint);
        Inpainter inpainter = [&](const torch::Tensor& images, const torch::Tensor& masks) {
          return inpaint_batch(generator, images, masks, true);
        };
        EvaluationOptions eo;
        eo.seed = 1234;
        auto report = evaluate(inpainter, split.val, extractor, eo);
        bool complete = result.steps == 200 && report.rows.size() == 2;
        for (const auto& row : report.rows) {
          complete = complete && std::isfinite(row.l1_error) && !std::isnan(row.psnr) && std::isfinite(row.ssim) &&
                     std::isfinite(row.fid);
          table += arm + " " + row.mask_type + ": L1 " + fmt(row.l1_error) + " PSNR " + fmt(row.psnr) + " SSIM " +
                   fmt(row.ssim) + " FID " + fmt(row.fid) + "\n";
        }
        o.require(complete, arm + " incomplete report");
      } catch (const std::exception& e) {
        o.require(false, arm + " threw: " + e.what());
      }
    }
  }
  std::cerr << table;
  o.note("four arms x 200 steps evaluated on " + std::to_string(split.val.size()) + " held-out images");
  return o;
}

// 11 -------------------------------------------------------------------------
Outcome metric_oracles() {
  Outcome o;
  const double p = psnr_from_mse(0.01);
  o.require(p == 20.0, "psnr(0.01) = " + fmt(p, 17));
  torch::manual_seed(1111);
  auto x = torch::rand({2, 3, 32, 32});
  const double s = ssim(x, x);
  o.require(std::abs(s - 1.0) <= 1e-9, "ssim(X,X) = " + fmt(s, 17));
  auto feats = torch::randn({500, 16}, torch::kDouble);
  const double self = fid(feats, feats);
  o.require(std::abs(self) <= 1e-3, "fid(A,A) = " + fmt(self));
  torch::Generator gen = at::detail::createCPUGenerator(11);
  auto a = torch::randn({10000, 1}, gen, torch::kDouble);
  auto b = torch::randn({10000, 1}, gen, torch::kDouble) + 1.0;
  const double shifted = fid(a, b);
  o.require(std::abs(shifted - 1.0) <= 0.1, "fid(N(0,1), N(1,1)) = " + fmt(shifted));
  o.note("psnr " + fmt(p, 17) + ", ssim " + fmt(s, 17) + ", fid(A,A) " + fmt(self, 3) + ", fid shift " +
         fmt(shifted));
  return o;
}

// 12 -------------------------------------------------------------------------
Outcome determinism_and_resume() {
  Outcome o;
  auto dir = work_dir("determinism");
  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.seed = 12;
  cfg.pretrain_steps = 5;
  cfg.pretrain_batch = 4;
  cfg.contrastive.queue_capacity = 16;
  cfg.joint_steps = 4;
  cfg.joint_batch = 2;
  cfg.mask_mode = MaskMode::kBoth;
  auto data = ImageDataset::from_tensors(oracle::synthetic_images(6, 32, 1212));

  auto full_run = [&](const std::string& tag) {
    std::ostringstream lines;
    RunLog log(&lines);
    const auto pre = (dir / (tag + "_pre.ckpt")).string();
    run_pretrain(cfg, data, log, pre);
    JointRunOptions opts;
    opts.init_checkpoint = pre;
    opts.checkpoint_path = (dir / (tag + "_joint.ckpt")).string();
    run_joint(cfg, data, {}, log, opts);
    return lines.str();
  };
  const auto first = full_run("a");
  const auto second = full_run("b");
  o.require(!first.empty() && first == second, "rerun logs differ");

  // Interrupted at step 3, resumed for one step, versus uninterrupted.
  auto state = JointState::create(cfg);
  init_from_pretrain(state, (dir / "a_pre.ckpt").string());
  auto short_cfg = cfg;
  short_cfg.joint_steps = 3;
  RunLog ignore;
  train_joint(state, short_cfg, data, {}, ignore);
  const auto ckpt = (dir / "interrupted.ckpt").string();
  save_joint(ckpt, state, cfg);
  auto resumed = load_joint(ckpt);
  auto batch = data.batch(batch_indices(cfg.seed, state.step, cfg.joint_batch, data.size()));
  auto straight = joint_step(state, batch, cfg);
  auto again = joint_step(resumed, batch, cfg);
  o.require(straight.record(4).to_line() == again.record(4).to_line(), "resumed step losses differ");
  bool params_equal = true;
  auto pa = state.generator->parameters();
  auto pb = resumed.generator->parameters();
  for (size_t i = 0; i < pa.size(); ++i) params_equal = params_equal && torch::equal(pa[i], pb[i]);
  auto ca = state.critic->parameters();
  auto cb = resumed.critic->parameters();
  for (size_t i = 0; i < ca.size(); ++i) params_equal = params_equal && torch::equal(ca[i], cb[i]);
  o.require(params_equal, "resumed parameters differ");
  o.note("rerun logs identical (" + std::to_string(std::count(first.begin(), first.end(), '\n')) +
         " lines); resume step bitwise equal");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(std::max(1, static_cast<int>(torch::get_num_threads())));
  const std::vector<Criterion> criteria{
      {1, "InfoNCE oracle", 5, infonce_oracle},
      {2, "Momentum closed form", 1, momentum_closed_form},
      {3, "Queue semantics", 5, queue_fifo},
      {4, "DAF blend convexity", 10, daf_convexity},
      {5, "Gradient checks", 120, gradient_checks},
      {6, "Loss identities", 0, loss_identities},
      {7, "Multi-scale shape law", 0, shape_law},
      {8, "Pretraining smoke", 600, pretrain_smoke},
      {9, "Joint-training overfit smoke", 1200, overfit_smoke},
      {10, "Ablation scaffolding", 0, ablation_grid},
      {11, "Metrics oracles", 0, metric_oracles},
      {12, "Determinism & persistence", 0, determinism_and_resume},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.require(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0) {
      outcome.require(seconds <= c.budget_seconds, "runtime " + fmt(seconds) + " s over " +
                                                       fmt(c.budget_seconds) + " s budget");
    }
    if (!outcome.pass) ++failures;
    std::printf("[%s] %2d %-30s %8.2fs  %s\n", outcome.pass ? "PASS" : "FAIL", c.id, c.name, seconds,
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
