// cinetrans: batch front end over the library.
//
// exit codes: 0 ok, 2 validation/config, 3 I/O or format, 4 not computable.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cinetrans/cinetrans.hpp"
#include "cinetrans/config.hpp"

namespace fs = std::filesystem;
using namespace cinetrans;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitIo = 3;
constexpr int kExitNotComputable = 4;

// Values given on the command line; unset ones fall back to --config, then
// to the built-in defaults.
struct Overrides {
  std::string config_path;
  std::optional<double> cut, single, all, alpha, beta, gamma, epsilon;
  std::optional<std::string> anchor, layer_policy, subject, background, semantic;
  std::optional<std::size_t> total_layers, bins;
  std::optional<std::uint64_t> seed;

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : run_config_from_json(read_json(config_path));
    if (cut) c.segment.cut_threshold = *cut;
    if (single) c.segment.single_threshold = *single;
    if (all) c.segment.all_threshold = *all;
    if (alpha) c.stitch.alpha = *alpha;
    if (beta) c.stitch.beta = *beta;
    if (gamma) c.stitch.gamma = *gamma;
    if (anchor) c.stitch.anchor = gamma_anchor_from(*anchor);
    if (layer_policy) c.layer_policy = *layer_policy;
    if (total_layers) c.total_layers = *total_layers;
    if (subject) c.subject_extractor = *subject;
    if (background) c.background_extractor = *background;
    if (semantic) c.semantic_extractor = *semantic;
    if (bins) c.bins = *bins;
    if (epsilon) c.epsilon = *epsilon;
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

Json with_config(Json j, const RunConfig& c) {
  j["config"] = to_json(c);
  return j;
}

std::vector<double> read_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    std::istringstream ss(line.substr(first));
    ss.imbue(std::locale::classic());
    double v;
    std::string rest;
    if (!(ss >> v) || (ss >> rest && !rest.empty())) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number");
    }
    out.push_back(v);
  }
  return out;
}

bool has_magic(const fs::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string head(magic.size(), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in.gcount() == static_cast<std::streamsize>(magic.size()) && head == magic;
}

std::vector<TextSpan> parse_spans(const std::string& text) {
  std::vector<TextSpan> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto dash = item.find('-');
    if (dash == std::string::npos) throw ConfigError("text span \"" + item + "\" is not begin-end");
    try {
      out.push_back({std::stoul(item.substr(0, dash)), std::stoul(item.substr(dash + 1))});
    } catch (const std::logic_error&) {
      throw ConfigError("text span \"" + item + "\" is not begin-end");
    }
  }
  return out;
}

// Tokens per slice from the capture when not given: n_tokens / slices.
TokenLayout layout_for(std::size_t n_frames, std::size_t compression, std::optional<std::size_t> p,
                       std::size_t n_tokens) {
  TokenLayout layout{n_frames, compression, 1};
  layout.validate();
  if (p) {
    layout.tokens_per_slice = *p;
  } else {
    if (n_tokens % layout.n_slices() != 0) {
      throw ValidationError("capture has " + std::to_string(n_tokens) + " tokens, not a multiple of " +
                            std::to_string(layout.n_slices()) + " slices");
    }
    layout.tokens_per_slice = n_tokens / layout.n_slices();
  }
  return layout;
}

void add_threshold_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--cut-threshold", o.cut, "content cut threshold (27)");
  sub->add_option("--single", o.single, "single-frame gradual threshold (0.45)");
  sub->add_option("--all", o.all, "all-frame gradual threshold (0.50)");
}

void add_extractor_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--subject-extractor", o.subject);
  sub->add_option("--background-extractor", o.background);
  sub->add_option("--semantic-extractor", o.semantic);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cinetrans: multi-shot masks, shot segmentation, curation and metrics"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  Overrides ov;
  app.add_option("--config", ov.config_path, "JSON run config; flags override its values");
  app.fallthrough();

  std::string out_path;
  auto* gen = app.add_subcommand("gen-synthetic", "render a seeded multi-shot fixture");
  std::string spec_path, labels_out;
  gen->add_option("--spec", spec_path)->required();
  gen->add_option("-o,--output", out_path)->required();
  gen->add_option("--labels", labels_out, "ground-truth partition sidecar");

  auto* seg = app.add_subcommand("segment", "detect shots and drop gradual-transition frames");
  std::string video_path;
  seg->add_option("video", video_path)->required();
  seg->add_option("-o,--output", out_path)->required();
  add_threshold_flags(seg, ov);

  auto* st = app.add_subcommand("stitch", "drop incoherent segments and merge adjacent ones");
  std::string segments_path;
  st->add_option("--segments", segments_path, "segment embeddings, JSON or EMBv1")->required();
  st->add_option("--alpha", ov.alpha);
  st->add_option("--beta", ov.beta);
  st->add_option("--gamma", ov.gamma);
  st->add_option("--anchor", ov.anchor, "gamma anchor: group_head or predecessor");
  st->add_option("-o,--output", out_path)->required();

  auto* mk = app.add_subcommand("mask", "build the shot attention mask");
  std::string labels_path, spans_text, layers_out;
  std::size_t tokens_per_slice = 1, compression = 1, n_text = 0;
  bool vff = false;
  mk->add_option("--labels", labels_path)->required();
  mk->add_option("--tokens-per-slice", tokens_per_slice)->check(CLI::PositiveNumber);
  mk->add_option("--compression", compression)->check(CLI::PositiveNumber);
  mk->add_flag("--visible-first-frame", vff);
  mk->add_option("--text-tokens", n_text, "text tokens ahead of the video tokens");
  mk->add_option("--text-spans", spans_text, "per-shot text spans, e.g. 0-4,4-9");
  mk->add_option("--layer-policy", ov.layer_policy, "unet-last6, dit-mid, dit-mid:A-B, all, none or a list");
  mk->add_option("--total-layers", ov.total_layers);
  mk->add_option("--layers-out", layers_out, "write the resolved layer policy");
  mk->add_option("-o,--output", out_path)->required();

  auto* an = app.add_subcommand("analyze", "intra/inter attention ratio and boundary correlation");
  std::string attn_path;
  std::optional<std::size_t> an_p;
  std::size_t an_c = 1;
  an->add_option("--attn", attn_path)->required();
  an->add_option("--labels", labels_path)->required();
  an->add_option("--tokens-per-slice", an_p, "default: capture tokens / slices");
  an->add_option("--compression", an_c)->check(CLI::PositiveNumber);
  an->add_option("-o,--output", out_path)->required();

  auto* ev = app.add_subcommand("eval", "per-video metric report");
  std::string ref_sem, ref_vis;
  std::size_t specified = 0;
  bool require_multishot = false;
  ev->add_option("--video", video_path)->required();
  ev->add_option("--labels", labels_path, "detected partition; segmented from the video when absent");
  ev->add_option("--specified", specified, "shot count asked for")->required();
  ev->add_option("--ref-semantic", ref_sem);
  ev->add_option("--ref-visual", ref_vis);
  ev->add_flag("--require-multishot", require_multishot, "exit 4 when inter-shot metrics are not computable");
  add_threshold_flags(ev, ov);
  add_extractor_flags(ev, ov);
  ev->add_option("-o,--output", out_path)->required();

  auto* rd = app.add_subcommand("ref-dist", "reference score histogram");
  std::string scores_path;
  std::size_t conv_step = 0;
  std::string conv_out;
  rd->add_option("--scores", scores_path, "one score in [0, 1] per line")->required();
  rd->add_option("--bins", ov.bins);
  rd->add_option("--epsilon", ov.epsilon);
  rd->add_option("--convergence-step", conv_step, "also report cumulative mean and CI width every N scores");
  rd->add_option("--convergence-out", conv_out);
  rd->add_option("-o,--output", out_path)->required();

  auto* dm = app.add_subcommand("demo", "masked self-attention smoothing rendered to video");
  std::size_t iters = 200;
  double temperature = 4.0;
  std::size_t dm_p = 2, dm_c = 1;
  bool no_mask = false;
  std::string demo_labels_out;
  dm->add_option("--labels", labels_path)->required();
  dm->add_option("--iters", iters)->check(CLI::PositiveNumber);
  dm->add_option("--temperature", temperature);
  dm->add_option("--seed", ov.seed);
  dm->add_option("--tokens-per-slice", dm_p)->check(CLI::PositiveNumber);
  dm->add_option("--compression", dm_c)->check(CLI::PositiveNumber);
  dm->add_flag("--no-mask", no_mask, "all-allowed mask instead of the shot mask");
  dm->add_option("--labels-out", demo_labels_out, "partition sidecar plus the shots detected in the output");
  dm->add_option("-o,--output", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    const RunConfig cfg = ov.resolve();

    if (*gen) {
      auto v = gen_synthetic_multishot(synthetic_spec_from_json(read_json(spec_path)));
      write_ctf(v.frames, out_path);
      if (!labels_out.empty()) write_json(with_config(to_json(v.labels), cfg), labels_out);
      std::cout << v.frames.frame_count() << " frames, " << v.labels.shot_count() << " shots\n";
    } else if (*seg) {
      auto p = segment(read_ctf(video_path), cfg.segment);
      write_json(with_config(to_json(p), cfg), out_path);
      std::cout << p.shot_count() << " shots, " << p.gradual_frames().size() << " gradual frames\n";
    } else if (*st) {
      auto segs = has_magic(segments_path, kEmbMagic) ? segments_from_embeddings(read_emb(segments_path))
                                                     : segments_from_json(read_json(segments_path));
      auto r = split_stitch(segs, cfg.stitch);
      write_json(with_config(to_json(r), cfg), out_path);
      std::cout << r.groups.size() << " clips, " << r.dropped.size() << " dropped\n";
    } else if (*mk) {
      auto part = partition_from_json(read_json(labels_path));
      TokenLayout layout{part.n_frames(), compression, tokens_per_slice};
      AttnMask mask;
      if (!spans_text.empty() || n_text > 0) {
        if (vff) throw ConfigError("--visible-first-frame applies to video self-attention masks only");
        auto tv = build_text_video_mask(part, layout, parse_spans(spans_text), n_text);
        for (const auto& w : tv.warnings) std::cerr << "warning: " << w << "\n";
        mask = std::move(tv.mask);
      } else {
        mask = build_block_diagonal_mask(part, layout);
        if (vff) mask = apply_visible_first_frame(std::move(mask), layout);
      }
      write_msk(mask, out_path);
      auto policy = LayerPolicy::preset(cfg.layer_policy, cfg.total_layers);
      if (!layers_out.empty()) write_json(with_config(to_json(policy), cfg), layers_out);
      std::cout << mask.size() << " tokens, " << mask.allowed_count() << " allowed pairs, "
                << policy.masked_layers().size() << " masked layers\n";
    } else if (*an) {
      auto part = partition_from_json(read_json(labels_path));
      auto cap = read_atn(attn_path);
      auto rep = analyze_capture(cap, layout_for(part.n_frames(), an_c, an_p, cap.n_tokens), part);
      write_json(with_config(to_json(rep), cfg), out_path);
      std::cout << "mean ratio " << rep.mean_ratio << "\n";
    } else if (*ev) {
      auto video = read_ctf(video_path);
      auto part = labels_path.empty() ? segment(video, cfg.segment) : partition_from_json(read_json(labels_path));
      EvalOptions opt;
      opt.subject_extractor = cfg.subject_extractor;
      opt.background_extractor = cfg.background_extractor;
      opt.semantic_extractor = cfg.semantic_extractor;
      if (!ref_sem.empty()) opt.reference_semantic = histogram_from_json(read_json(ref_sem));
      if (!ref_vis.empty()) opt.reference_visual = histogram_from_json(read_json(ref_vis));
      auto r = eval_report(video, part, specified, opt);
      write_json(with_config(to_json(r), cfg), out_path);
      std::cout << "transition control " << r.transition_control << "\n";
      if (require_multishot && !r.inter_semantic) {
        std::cerr << "error: inter-shot metrics need at least two detected shots\n";
        return kExitNotComputable;
      }
    } else if (*rd) {
      auto scores = read_scores(scores_path);
      auto h = build_reference_distribution(scores, cfg.bins, cfg.epsilon);
      write_json(with_config(to_json(h), cfg), out_path);
      if (conv_step > 0) {
        Json pts = Json::array();
        for (const auto& pt : convergence_report(scores, conv_step)) {
          pts.push_back(Json{{"n", pt.n}, {"cumulative_mean", pt.cumulative_mean}, {"ci95_width", pt.ci95_width}});
        }
        if (conv_out.empty()) throw ConfigError("--convergence-step needs --convergence-out");
        write_json(with_config(Json{{"points", pts}}, cfg), conv_out);
      }
      std::cout << scores.size() << " scores, " << h.bin_count() << " bins\n";
    } else if (*dm) {
      auto part = partition_from_json(read_json(labels_path));
      SmoothingConfig sc;
      sc.iterations = iters;
      sc.temperature = temperature;
      sc.seed = cfg.seed;
      sc.layout = {part.n_frames(), dm_c, dm_p};
      auto video = demo_multishot_generation(part, sc, {}, !no_mask);
      write_ctf(video, out_path);
      auto detected = segment(video, cfg.segment);
      if (!demo_labels_out.empty()) {
        Json j = to_json(part);
        j["detected"] = to_json(detected);
        write_json(with_config(j, cfg), demo_labels_out);
      }
      std::cout << "detected " << detected.shot_count() << " shots\n";
    }
  } catch (const NotComputableError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotComputable;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitOk;
}
