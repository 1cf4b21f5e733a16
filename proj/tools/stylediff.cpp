/* Copyright (c) 2026 The stylediff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// stylediff command-line tool.
//
// Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or argument
// error.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stylediff/stylediff.hpp"

namespace sd = stylediff;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct Common {
  std::string backend = "vgg16";
  std::string pooling = "max";
  std::uint64_t backend_seed = 0;
  std::string weights_dir;
  int size = 256;
  long iterations = 1000;
  std::string init = "content";
  std::string optimizer = "lbfgs";
  std::string projection = "clamp_final";
  std::string precision = "f32";
  std::vector<std::string> style_layers;
  std::vector<std::string> content_layers;
  std::string out = "runs/transfer";
  std::uint64_t seed = 0;
  long snapshot_every = 0;
  std::string ch;  // when set, inputs are font files
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--backend", c.backend, "Feature network: vgg16, vgg19 or tiny (random weights, for testing)")
      ->check(CLI::IsMember({"vgg16", "vgg19", "tiny"}));
  cmd->add_option("--pooling", c.pooling, "Pooling between conv blocks: max or average")
      ->check(CLI::IsMember({"max", "average"}));
  cmd->add_option("--backend-seed", c.backend_seed, "Weight seed of the tiny backend");
  cmd->add_option("--weights-dir", c.weights_dir,
                  "Directory holding <backend>.sdwt (default: $STYLEDIFF_WEIGHTS_DIR or ~/.cache/stylediff)");
  cmd->add_option("--size", c.size, "Square working size in pixels")->check(CLI::Range(1, 4096));
  cmd->add_option("--iterations", c.iterations, "Optimizer iterations")->check(CLI::Range(1L, 100000000L));
  cmd->add_option("--init", c.init, "Initial image: content or random")->check(CLI::IsMember({"content", "random"}));
  cmd->add_option("--optimizer", c.optimizer, "lbfgs or first_order (Adam)")
      ->check(CLI::IsMember({"lbfgs", "first_order"}));
  cmd->add_option("--projection", c.projection, "Pixel clamping: none, clamp_each_step or clamp_final")
      ->check(CLI::IsMember({"none", "clamp_each_step", "clamp_final"}));
  cmd->add_option("--precision", c.precision, "Arithmetic precision: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--style-layers", c.style_layers,
                  "Style layers, comma separated; weight 1e3/N^2 each "
                  "[default: conv1_2,conv2_2,conv3_2,conv4_2,conv5_2; tiny: conv1,conv2,conv3]")
      ->delimiter(',');
  cmd->add_option("--content-layers", c.content_layers,
                  "Content layers, comma separated; weight 1e4 each [default: conv4_2; tiny: conv3]")
      ->delimiter(',');
  cmd->add_option("--out", c.out, "Run directory");
  cmd->add_option("--seed", c.seed, "Seed for random initialization");
  cmd->add_option("--snapshot-every", c.snapshot_every, "Write iter_<N>.png every N iterations (0: never)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--char", c.ch,
                  "Render this character from the input files, which are then fonts (default: inputs are images)");
}

sd::InputSpec input_of(const std::string& path, const Common& c) {
  sd::InputSpec in;
  in.size = c.size;
  if (c.ch.empty()) {
    in.image = path;
  } else {
    sd::GlyphSpec g;
    g.font_path = path;
    g.codepoint = sd::first_codepoint(c.ch);
    in.glyph = g;
  }
  return in;
}

sd::TransferConfig config_of(const Common& c, sd::TransferMode mode) {
  sd::BackendDescriptor b = sd::BackendDescriptor::from_name(c.backend);
  b.pooling = sd::parse_pooling(c.pooling);
  b.seed = c.backend_seed;
  b.weights_dir = c.weights_dir;
  sd::TransferConfig cfg = sd::TransferConfig::defaults(b);
  const sd::TransferConfig d = cfg;
  cfg.set_layers(c.style_layers.empty() ? d.style_layers : c.style_layers,
                 c.content_layers.empty() ? d.content_layers : c.content_layers);
  cfg.mode = mode;
  cfg.iterations = c.iterations;
  cfg.init = sd::parse_init(c.init);
  cfg.optimizer = sd::parse_optimizer(c.optimizer);
  cfg.projection = sd::parse_projection(c.projection);
  cfg.precision = sd::parse_precision(c.precision);
  cfg.seed = c.seed;
  cfg.snapshot_every = c.snapshot_every;
  return cfg;
}

void report(const sd::ExperimentResult& r) {
  const auto& t = r.transfer.loss_trace;
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  if (!t.empty()) {
    std::printf("initial loss: content=%.9g style=%.9g total=%.9g\n", t.front().content_diff, t.front().style_diff,
                t.front().total);
    std::printf("final loss (iteration %ld): content=%.9g style=%.9g total=%.9g\n", t.back().iteration,
                t.back().content_diff, t.back().style_diff, t.back().total);
  }
  std::printf("evaluations: %ld, wall time: %.2f s\n", r.transfer.evaluations, r.transfer.wall_time);
  std::printf("generated vs content: %ld red (added), %ld blue (removed) pixels\n", r.generated_content_diff.red,
              r.generated_content_diff.blue);
  std::printf("output: %s\n", r.output_dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style-difference transfer for font glyphs"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // transfer
  Common tc;
  std::string t_content, t_style1, t_style2;
  auto* transfer = app.add_subcommand("transfer", "Transfer the difference between two styles onto a content image");
  transfer->add_option("--content", t_content, "Content image (or font with --char)")->required();
  transfer->add_option("--style1", t_style1, "Style image 1")->required();
  transfer->add_option("--style2", t_style2, "Style image 2 (should resemble the content style)")->required();
  add_common(transfer, tc);

  // nst
  Common nc;
  nc.out = "runs/nst";
  std::string n_content, n_style;
  double alpha = 1.0, beta = 1e3;
  auto* nst = app.add_subcommand("nst", "Classic style transfer: alpha * content loss + beta * style loss");
  nst->add_option("--content", n_content, "Content image (or font with --char)")->required();
  nst->add_option("--style", n_style, "Style image")->required();
  nst->add_option("--alpha", alpha, "Content loss factor")->check(CLI::NonNegativeNumber);
  nst->add_option("--beta", beta, "Style loss factor")->check(CLI::NonNegativeNumber);
  add_common(nst, nc);

  // rasterize
  std::string r_font, r_char, r_out;
  int r_size = 256;
  double r_margin = 0.15;
  auto* rast = app.add_subcommand("rasterize", "Render one glyph to a PNG");
  rast->add_option("--font", r_font, "TrueType/OpenType file")->required();
  rast->add_option("--char", r_char, "Character (UTF-8)")->required();
  rast->add_option("--size", r_size, "Canvas size in pixels")->check(CLI::Range(1, 4096));
  rast->add_option("--margin", r_margin, "Margin as a fraction of the canvas")->check(CLI::Range(0.0, 0.3999));
  rast->add_option("--out", r_out, "Output PNG")->required();

  // diff-viz
  std::string d_a, d_b, d_out;
  double threshold = 0.5;
  auto* dviz = app.add_subcommand("diff-viz", "Red: ink only in A; blue: ink only in B; black: both");
  dviz->add_option("--a", d_a, "Image A")->required();
  dviz->add_option("--b", d_b, "Image B")->required();
  dviz->add_option("--threshold", threshold, "Binarization threshold")->check(CLI::Range(0.0, 1.0));
  dviz->add_option("--out", d_out, "Output PNG")->required();

  // sweep
  std::string s_spec, s_axis = "content", s_out;
  long s_iterations = 0;
  int s_workers = 1;
  bool s_fresh = false;
  auto* sweep = app.add_subcommand("sweep", "Run one transfer per layer along an axis of a spec");
  sweep->add_option("--spec", s_spec, "Experiment spec (JSON)")->required();
  sweep->add_option("--axis", s_axis, "content: vary the content layer; style: vary the single style layer")
      ->check(CLI::IsMember({"content", "style"}));
  sweep->add_option("--iterations", s_iterations, "Override iterations per cell (0: use the spec)")
      ->check(CLI::NonNegativeNumber);
  sweep->add_option("--workers", s_workers, "Cells run concurrently")->check(CLI::Range(1, 64));
  sweep->add_option("--out", s_out, "Sweep directory (default: <spec output>/sweep_<axis>)");
  sweep->add_flag("--fresh", s_fresh, "Recompute cells that already finished");

  // run-spec
  std::string rs_spec, rs_out;
  auto* runspec = app.add_subcommand("run-spec", "Run an experiment spec");
  runspec->add_option("--spec", rs_spec, "Experiment spec (JSON)")->required();
  runspec->add_option("--out", rs_out, "Override the spec's output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return kUsage;
  }

  try {
    if (transfer->parsed()) {
      sd::ExperimentSpec s;
      s.name = "transfer";
      s.content = input_of(t_content, tc);
      s.style1 = input_of(t_style1, tc);
      s.style2 = input_of(t_style2, tc);
      s.transfer = config_of(tc, sd::TransferMode::difference);
      s.output_dir = tc.out;
      report(sd::run_experiment(s));
    } else if (nst->parsed()) {
      sd::ExperimentSpec s;
      s.name = "nst";
      s.content = input_of(n_content, nc);
      s.style1 = input_of(n_style, nc);
      s.transfer = config_of(nc, sd::TransferMode::classic_nst);
      s.transfer.nst = {alpha, beta};
      s.transfer.validate();
      s.output_dir = nc.out;
      report(sd::run_experiment(s));
    } else if (rast->parsed()) {
      sd::GlyphSpec g;
      g.font_path = r_font;
      g.codepoint = sd::first_codepoint(r_char);
      g.canvas = r_size;
      g.margin_fraction = r_margin;
      const sd::ImageTensor img = sd::rasterize_glyph(g);
      sd::save_image(img, r_out);
      std::printf("%s %s: ink ratio %.4f -> %s\n", g.font_path.filename().string().c_str(),
                  sd::codepoint_label(g.codepoint).c_str(), sd::ink_ratio(img), r_out.c_str());
    } else if (dviz->parsed()) {
      if (!(threshold > 0.0 && threshold < 1.0)) throw sd::ArgumentError("--threshold must lie in (0,1)");
      const sd::ImageTensor a = sd::load_image_native(d_a, true);
      const sd::ImageTensor b = sd::load_image_native(d_b, true);
      const sd::ImageTensor viz = sd::diff_visualization(a, b, threshold);
      sd::save_image(viz, d_out);
      const sd::DiffCounts c = sd::count_diff_colors(viz);
      std::printf("red %ld, blue %ld, black %ld, white %ld -> %s\n", c.red, c.blue, c.black, c.white, d_out.c_str());
    } else if (sweep->parsed()) {
      const sd::ExperimentSpec base = sd::load_spec(s_spec);
      sd::SweepOptions o;
      o.iterations = s_iterations;
      o.workers = s_workers;
      o.resume = !s_fresh;
      o.out_dir = s_out;
      const sd::SweepReport rep = sd::layer_sweep(base, sd::parse_axis(s_axis), o);
      for (const auto& c : rep.cells) {
        if (c.ok) std::printf("%-8s ok%s  final total %.6g\n", c.layer.c_str(), c.resumed ? " (resumed)" : "", c.final_total);
        else std::printf("%-8s FAILED  %s\n", c.layer.c_str(), c.error.c_str());
      }
      std::printf("%d/%zu cells completed -> %s\n", rep.completed(), rep.cells.size(), rep.dir.string().c_str());
      if (rep.completed() != static_cast<int>(rep.cells.size())) return kRuntime;
    } else if (runspec->parsed()) {
      sd::ExperimentSpec s = sd::load_spec(rs_spec);
      if (!rs_out.empty()) s.output_dir = rs_out;
      report(sd::run_experiment(s));
    }
  } catch (const sd::ValidationError& e) {
    std::cerr << "error: invalid field " << e.what() << "\n";
    return kUsage;
  } catch (const sd::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
