// tplda/cli.cc

// Copyright 2026  tplda authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "tplda/cli.h"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "tplda/background.h"
#include "tplda/data.h"
#include "tplda/eval.h"
#include "tplda/inference.h"
#include "tplda/model.h"
#include "tplda/training.h"

namespace tplda {

namespace {

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Output sink: file when a path is given, stdout otherwise.
class OutStream {
 public:
  explicit OutStream(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw FormatError(path + ": cannot open for writing");
    }
  }
  std::ostream& get() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string format_loglik(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_occupancies(const std::vector<std::vector<double>>& occ,
                       const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError(path + ": cannot open for writing");
  for (const auto& state : occ) {
    for (size_t k = 0; k < state.size(); ++k)
      os << (k ? "\t" : "") << format_loglik(state[k]);
    os << "\n";
  }
}

std::vector<std::vector<double>> read_occupancies(const std::string& path,
                                                  const TiedPldaModel& model) {
  std::ifstream is(path);
  if (!is) throw FormatError(path + ": cannot open");
  std::vector<std::vector<double>> occ;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    occ.push_back(std::move(row));
  }
  if (static_cast<int>(occ.size()) != model.hyper.J)
    throw FormatError(path + ": " + std::to_string(occ.size())
                      + " rows for " + std::to_string(model.hyper.J)
                      + " states");
  for (int j = 0; j < model.hyper.J; ++j)
    if (occ[j].size() != model.states[j].substates.size())
      throw FormatError(path + ": state " + std::to_string(j) + " has "
                        + std::to_string(occ[j].size()) + " entries for "
                        + std::to_string(model.states[j].substates.size())
                        + " sub-states");
  return occ;
}

/// Shared scoring inputs for score/classify.
struct ScoreArgs {
  std::string model_path, features_path, labels_path, bg_path, out_path;
  int select_n = 15;
  int threads = default_threads();
};

void add_selection_flags(CLI::App* cmd, ScoreArgs* args) {
  cmd->add_option("--bg", args->bg_path,
                  "background model for per-frame component selection");
  cmd->add_option("--select-n", args->select_n,
                  "components kept per frame when --bg is given")
      ->capture_default_str();
}

std::unique_ptr<std::vector<std::vector<int>>> maybe_selection(
    const std::string& bg_path, int select_n, const FeatureMatrix& features,
    int num_components) {
  if (bg_path.empty()) return nullptr;
  const BackgroundModel bg = read_background(bg_path);
  if (bg.num_components() != num_components)
    throw std::invalid_argument(
        bg_path + ": background has " + std::to_string(bg.num_components())
        + " components, model has " + std::to_string(num_components));
  const int n = std::min(select_n, bg.num_components());
  return std::make_unique<std::vector<std::vector<int>>>(
      select_for_dataset(bg, features, n));
}

void check_feature_dim(const FeatureMatrix& features,
                       const TiedPldaModel& model,
                       const std::string& features_path) {
  if (features.cols() != model.hyper.d)
    throw std::invalid_argument(
        features_path + ": feature dimension " + std::to_string(features.cols())
        + " does not match model dimension " + std::to_string(model.hyper.d));
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string model_path, out_model, out_features, out_labels;
  int dim = 0, frame_dim = 0, state_dim = 0, components = 0, states = 0;
  int substates = 1;
  uint64_t model_seed = 1;
  int64_t frames_per_state = 0;
  uint64_t seed = 0;
};

void run_gen(const GenArgs& args) {
  TiedPldaModel model;
  if (!args.model_path.empty()) {
    model = read_model(args.model_path);
  } else {
    Hyperparams hyper{args.dim, args.frame_dim, args.state_dim,
                      args.components, args.states};
    model = random_model(hyper, args.substates, args.model_seed);
  }
  if (!args.out_model.empty()) write_model(model, args.out_model);
  const SampledCorpus corpus =
      sample_corpus(model, args.frames_per_state, args.seed);
  write_features(corpus.features, args.out_features);
  write_labels(corpus.labels, args.out_labels);
  std::cerr << "gen: wrote " << corpus.features.rows() << " frames of dim "
            << corpus.features.cols() << "\n";
}

// ---------------------------------------------------------------------------
// train-bg

struct TrainBgArgs {
  std::string features_path, out_path;
  int components = 0, rank = 0, iters = 10;
  uint64_t seed = 0;
};

void run_train_bg(const TrainBgArgs& args) {
  const FeatureMatrix features = read_features(args.features_path);
  std::vector<double> history;
  const BackgroundModel bg = train_bg(features, args.components, args.rank,
                                      args.iters, args.seed, &history);
  for (size_t i = 0; i < history.size(); ++i)
    std::cout << "iter=" << i << " avg_loglik="
              << format_loglik(history[i] / features.rows()) << "\n";
  write_background(bg, args.out_path);
}

// ---------------------------------------------------------------------------
// init

struct InitArgs {
  std::string bg_path, out_path;
  int states = 0, frame_dim = -1, state_dim = -1;
  uint64_t seed = 0;
};

void run_init(const InitArgs& args) {
  const BackgroundModel bg = read_background(args.bg_path);
  int p = args.frame_dim > 0 ? args.frame_dim : bg.rank();
  int q = args.state_dim > 0 ? args.state_dim : p;
  if (p <= 0)
    throw std::invalid_argument(
        args.bg_path + ": background rank is 0; pass --frame-dim");
  Hyperparams hyper{bg.dim(), p, q, bg.num_components(), args.states};
  const TiedPldaModel model = init_model(bg, hyper, args.seed);
  write_model(model, args.out_path);
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string model_path, features_path, labels_path, config_path, out_path;
  std::string bg_path, out_occs;
  int threads = default_threads();
  bool deterministic = false;
};

void run_train(const TrainArgs& args) {
  const TiedPldaModel model = read_model(args.model_path);
  const FeatureMatrix features = read_features(args.features_path);
  const LabelSequence labels = read_labels(args.labels_path);
  check_feature_dim(features, model, args.features_path);
  TrainConfig config = parse_train_config(args.config_path);
  if (args.deterministic) config.deterministic = true;

  std::unique_ptr<std::vector<std::vector<int>>> selection;
  if (!args.bg_path.empty() && config.select_n < model.hyper.M) {
    const BackgroundModel bg = read_background(args.bg_path);
    if (bg.num_components() != model.hyper.M)
      throw std::invalid_argument(
          args.bg_path + ": background has "
          + std::to_string(bg.num_components()) + " components, model has "
          + std::to_string(model.hyper.M));
    selection = std::make_unique<std::vector<std::vector<int>>>(
        select_for_dataset(bg, features, config.select_n));
  }

  const TrainResult result = train(model, features, labels, selection.get(),
                                   config, args.threads, &std::cout);
  write_model(result.model, args.out_path);
  if (!args.out_occs.empty() && !result.reports.empty())
    write_occupancies(result.reports.back().substate_occupancy,
                      args.out_occs);
}

// ---------------------------------------------------------------------------
// mixup

struct MixupArgs {
  std::string model_path, occs_path, out_path;
  int target = 0;
  uint64_t seed = 0;
};

void run_mixup(const MixupArgs& args) {
  const TiedPldaModel model = read_model(args.model_path);
  std::unique_ptr<std::vector<std::vector<double>>> occ;
  if (!args.occs_path.empty())
    occ = std::make_unique<std::vector<std::vector<double>>>(
        read_occupancies(args.occs_path, model));
  const TiedPldaModel grown = mixup(model, args.target, args.seed, occ.get());
  write_model(grown, args.out_path);
  std::cerr << "mixup: " << model.total_substates() << " -> "
            << grown.total_substates() << " sub-states\n";
}

// ---------------------------------------------------------------------------
// score / classify

void run_score(const ScoreArgs& args) {
  const TiedPldaModel model = read_model(args.model_path);
  const FeatureMatrix features = read_features(args.features_path);
  const LabelSequence labels = read_labels(args.labels_path);
  check_feature_dim(features, model, args.features_path);
  if (labels.size() != features.rows())
    throw std::invalid_argument(args.labels_path + ": "
                                + std::to_string(labels.size())
                                + " labels for "
                                + std::to_string(features.rows()) + " frames");
  validate_labels(labels, model.hyper.J);
  const auto selection = maybe_selection(args.bg_path, args.select_n, features,
                                         model.hyper.M);
  const ModelCache cache(model);
  OutStream out(args.out_path);
  for (int64_t t = 0; t < features.rows(); ++t) {
    const VectorXd y = features.row(t).transpose();
    std::span<const int> sel;
    if (selection) sel = std::span<const int>((*selection)[t]);
    double ll = 0.0;
    for (const StatePosterior& sp : labels.frames[t])
      if (sp.mass > 0.0)
        ll += sp.mass
              * loglik_uncertainty(model, cache, sp.state, y, sel).total;
    out.get() << format_loglik(ll) << "\n";
  }
}

void run_classify(const ScoreArgs& args) {
  const TiedPldaModel model = read_model(args.model_path);
  const FeatureMatrix features = read_features(args.features_path);
  check_feature_dim(features, model, args.features_path);
  const auto selection = maybe_selection(args.bg_path, args.select_n, features,
                                         model.hyper.M);
  std::unique_ptr<LabelSequence> labels;
  if (!args.labels_path.empty()) {
    labels = std::make_unique<LabelSequence>(read_labels(args.labels_path));
    validate_labels(*labels, model.hyper.J);
  }
  const ModelCache cache(model);
  OutStream out(args.out_path);
  for (int64_t t = 0; t < features.rows(); ++t) {
    const VectorXd y = features.row(t).transpose();
    std::span<const int> sel;
    if (selection) sel = std::span<const int>((*selection)[t]);
    out.get() << classify_frame(model, cache, y, nullptr, sel).best_state
              << "\n";
  }
  if (labels) {
    const EvalReport report =
        evaluate(model, features, *labels, selection.get(), args.threads);
    print_report(report, std::cerr);
  }
}

// ---------------------------------------------------------------------------
// count-params / inspect

void run_count_params(const std::string& model_path, bool tab) {
  const TiedPldaModel model = read_model(model_path);
  print_param_table(param_table({{model_path, &model}}), std::cout, tab);
}

void run_inspect(const std::string& model_path) {
  const TiedPldaModel model = read_model(model_path);
  const Hyperparams& h = model.hyper;
  std::cout << "family\t"
            << (model.family == ModelFamily::kTied ? "tied" : "mixture")
            << "\n"
            << "d\t" << h.d << "\np\t" << h.p << "\nq\t" << h.q << "\nM\t"
            << h.M << "\nJ\t" << h.J << "\n";
  int min_sub = std::numeric_limits<int>::max(), max_sub = 0;
  for (int j = 0; j < h.J; ++j) {
    min_sub = std::min(min_sub, model.num_substates(j));
    max_sub = std::max(max_sub, model.num_substates(j));
  }
  std::cout << "total_substates\t" << model.total_substates() << "\n"
            << "min_substates\t" << min_sub << "\n"
            << "max_substates\t" << max_sub << "\n";
  double lambda_min = std::numeric_limits<double>::infinity();
  double lambda_max = 0.0;
  for (const ComponentParams& c : model.components) {
    lambda_min = std::min(lambda_min, c.lambda.minCoeff());
    lambda_max = std::max(lambda_max, c.lambda.maxCoeff());
  }
  std::cout << "lambda_min\t" << format_loglik(lambda_min) << "\n"
            << "lambda_max\t" << format_loglik(lambda_max) << "\n";
  int active = 0;
  for (const StateModel& s : model.states)
    active += static_cast<int>(
        (s.pi.array() >= kActiveWeightThreshold).count());
  std::cout << "avg_active_components\t"
            << static_cast<double>(active) / h.J << "\n";
  const auto counts = count_params(model);
  std::cout << "state_dependent_params\t" << counts.first << "\n"
            << "state_independent_params\t" << counts.second << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"tied PLDA acoustic model toolkit"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand(
      "gen", "sample a synthetic corpus from a model");
  gen->add_option("--model", gen_args.model_path, "generating model file");
  gen->add_option("--dim", gen_args.dim,
                  "feature dimension (synthesizes a random model)");
  gen->add_option("--frame-dim", gen_args.frame_dim,
                  "frame-variable dimension for a synthesized model");
  gen->add_option("--state-dim", gen_args.state_dim,
                  "state-variable dimension for a synthesized model");
  gen->add_option("--components", gen_args.components,
                  "components for a synthesized model");
  gen->add_option("--states", gen_args.states,
                  "states for a synthesized model");
  gen->add_option("--substates", gen_args.substates,
                  "sub-states per state for a synthesized model")
      ->capture_default_str();
  gen->add_option("--model-seed", gen_args.model_seed,
                  "seed for the synthesized model")
      ->capture_default_str();
  gen->add_option("--out-model", gen_args.out_model,
                  "write the generating model here");
  gen->add_option("--frames-per-state", gen_args.frames_per_state,
                  "frames to sample per state")
      ->required();
  gen->add_option("--seed", gen_args.seed, "sampling seed")
      ->capture_default_str();
  gen->add_option("--out-features", gen_args.out_features,
                  "output feature file")
      ->required();
  gen->add_option("--out-labels", gen_args.out_labels, "output label file")
      ->required();
  gen->callback([&]() {
    if (gen_args.model_path.empty() && gen_args.dim == 0)
      throw CLI::ValidationError(
          "gen", "pass --model or the --dim/--frame-dim/--state-dim/"
                 "--components/--states of a model to synthesize");
    run_gen(gen_args);
  });

  TrainBgArgs bg_args;
  CLI::App* tbg = app.add_subcommand(
      "train-bg", "train a factor-analyser background model");
  tbg->add_option("--features", bg_args.features_path, "training features")
      ->required();
  tbg->add_option("--components", bg_args.components, "mixture components")
      ->required();
  tbg->add_option("--rank", bg_args.rank, "factor rank (0 = diagonal)")
      ->required();
  tbg->add_option("--iters", bg_args.iters, "EM iterations")
      ->capture_default_str();
  tbg->add_option("--seed", bg_args.seed, "initialization seed")
      ->capture_default_str();
  tbg->add_option("--out", bg_args.out_path, "output background model")
      ->required();
  tbg->callback([&]() { run_train_bg(bg_args); });

  InitArgs init_args;
  CLI::App* init = app.add_subcommand(
      "init", "initialize a tied model from a background model");
  init->add_option("--bg", init_args.bg_path, "background model")->required();
  init->add_option("--states", init_args.states, "number of states")
      ->required();
  init->add_option("--frame-dim", init_args.frame_dim,
                   "frame-variable dimension (default: background rank)");
  init->add_option("--state-dim", init_args.state_dim,
                   "state-variable dimension (default: --frame-dim)");
  init->add_option("--seed", init_args.seed, "initialization seed")
      ->capture_default_str();
  init->add_option("--out", init_args.out_path, "output model")->required();
  init->callback([&]() { run_init(init_args); });

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "run EM training");
  tr->add_option("--model", train_args.model_path, "input model")->required();
  tr->add_option("--features", train_args.features_path, "training features")
      ->required();
  tr->add_option("--labels", train_args.labels_path, "frame labels")
      ->required();
  tr->add_option("--config", train_args.config_path, "training configuration")
      ->required();
  tr->add_option("--out", train_args.out_path, "output model")->required();
  tr->add_option("--bg", train_args.bg_path,
                 "background model for component selection");
  tr->add_option("--out-occs", train_args.out_occs,
                 "write final sub-state occupancies here (for mixup)");
  tr->add_option("--threads", train_args.threads, "worker threads")
      ->capture_default_str();
  tr->add_flag("--deterministic", train_args.deterministic,
               "fixed sharding regardless of thread count");
  tr->callback([&]() { run_train(train_args); });

  MixupArgs mixup_args;
  CLI::App* mix = app.add_subcommand("mixup", "split sub-states to grow the model");
  mix->add_option("--model", mixup_args.model_path, "input model")->required();
  mix->add_option("--target", mixup_args.target, "target total sub-states")
      ->required();
  mix->add_option("--seed", mixup_args.seed, "split direction seed")
      ->capture_default_str();
  mix->add_option("--occs", mixup_args.occs_path,
                  "occupancy file from train --out-occs");
  mix->add_option("--out", mixup_args.out_path, "output model")->required();
  mix->callback([&]() { run_mixup(mixup_args); });

  ScoreArgs score_args;
  CLI::App* score = app.add_subcommand(
      "score", "per-frame log-likelihood of the labeled state");
  score->add_option("--model", score_args.model_path, "model")->required();
  score->add_option("--features", score_args.features_path, "features")
      ->required();
  score->add_option("--labels", score_args.labels_path, "labels")->required();
  score->add_option("--out", score_args.out_path,
                    "output file (default: stdout)");
  add_selection_flags(score, &score_args);
  score->callback([&]() { run_score(score_args); });

  ScoreArgs classify_args;
  CLI::App* classify = app.add_subcommand(
      "classify", "per-frame best state stream");
  classify->add_option("--model", classify_args.model_path, "model")
      ->required();
  classify->add_option("--features", classify_args.features_path, "features")
      ->required();
  classify->add_option("--labels", classify_args.labels_path,
                       "reference labels (prints a report to stderr)");
  classify->add_option("--out", classify_args.out_path,
                       "output file (default: stdout)");
  classify->add_option("--threads", classify_args.threads, "worker threads")
      ->capture_default_str();
  add_selection_flags(classify, &classify_args);
  classify->callback([&]() { run_classify(classify_args); });

  std::string cp_model;
  bool cp_tab = false;
  CLI::App* cp = app.add_subcommand("count-params",
                                    "model parameter counts");
  cp->add_option("--model", cp_model, "model")->required();
  cp->add_flag("--tab", cp_tab, "tab-separated output");
  cp->callback([&]() { run_count_params(cp_model, cp_tab); });

  std::string inspect_model;
  CLI::App* ins = app.add_subcommand("inspect", "model summary");
  ins->add_option("--model", inspect_model, "model")->required();
  ins->callback([&]() { run_inspect(inspect_model); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(argc > 0 ? argc - 1 : 0);
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace tplda
