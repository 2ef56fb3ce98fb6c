// cpctool: command-line driver for the cpc library.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpc/classifiers.hpp"
#include "cpc/cpc.hpp"
#include "cpc/dataset.hpp"
#include "cpc/error.hpp"
#include "cpc/harness.hpp"
#include "cpc/mlp.hpp"
#include "cpc/preprocess.hpp"

namespace {

using namespace cpc;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- shared option groups --------------------------------------------------

struct InputOptions {
  std::string header = "auto";

  void add(CLI::App& app) {
    app.add_option("--header", header, "CSV header line: auto, yes or no")
        ->check(CLI::IsMember({"auto", "yes", "no"}))
        ->capture_default_str();
  }

  LabeledDataset load(const std::string& path) const {
    const bool has_header = header == "auto" ? sniff_header(path) : header == "yes";
    return load_dataset(path, has_header);
  }
};

struct ClassifierOptions {
  std::string clf = "softmax";
  SgdParams sgd;
  ForestParams forest;
  KnnParams knn;

  void add(CLI::App& app) {
    app.add_option("--clf", clf, "softmax, svm, forest or knn")
        ->check(CLI::IsMember({"softmax", "svm", "linear_svm", "forest", "random_forest", "knn"}))
        ->capture_default_str();
    app.add_option("--clf-lr", sgd.learning_rate, "SGD learning rate")->capture_default_str();
    app.add_option("--clf-momentum", sgd.momentum, "SGD momentum")->capture_default_str();
    app.add_option("--clf-epochs", sgd.epochs, "SGD epochs")->capture_default_str();
    app.add_option("--clf-batch", sgd.batch_size, "SGD batch size, 0 for full batch")->capture_default_str();
    app.add_option("--l2", sgd.l2, "L2 strength")->capture_default_str();
    app.add_option("--hinge-margin", sgd.hinge_margin, "SVM hinge margin")->capture_default_str();
    app.add_option("--trees", forest.trees, "forest size")->capture_default_str();
    app.add_option("--max-depth", forest.max_depth, "tree depth limit, 0 for none")->capture_default_str();
    app.add_option("--features-per-split", forest.features_per_split, "0 for ceil(sqrt(d))")
        ->capture_default_str();
    app.add_option("--knn-k", knn.k, "neighbors voting in knn")->capture_default_str();
  }

  ClassifierSpec spec(std::uint64_t seed) const {
    ClassifierSpec s{parse_classifier_kind(clf), sgd, forest, knn, seed};
    s.validate();
    return s;
  }
};

struct CpcOptions {
  int folds = 5;
  int repetitions = 3;
  double theta = 0.5;
  int disc_k = 25;
  std::string member_training = "single";
  std::string ease_mode = "all";

  void add(CLI::App& app, bool with_theta) {
    app.add_option("--k-folds", folds, "folds per ensemble repetition (K)")->capture_default_str();
    app.add_option("--m", repetitions, "ensemble repetitions (m)")->capture_default_str();
    if (with_theta) app.add_option("--theta", theta, "ease threshold")->capture_default_str();
    app.add_option("--disc-k", disc_k, "neighbors for the routing discriminator")->capture_default_str();
    app.add_option("--member-training", member_training,
                   "single: members train on one fold; complement: on the other K-1")
        ->check(CLI::IsMember({"single", "complement"}))
        ->capture_default_str();
    app.add_option("--ease-mode", ease_mode, "all: every member votes; exclude: skip in-fold members")
        ->check(CLI::IsMember({"all", "exclude"}))
        ->capture_default_str();
  }

  CpcConfig config(const ClassifierSpec& spec, std::uint64_t seed) const {
    CpcConfig c;
    c.folds = folds;
    c.repetitions = repetitions;
    c.base = spec;
    c.expert = spec;
    c.theta = theta;
    c.routing.disc_k = disc_k;
    c.routing.seed = seed;
    c.training = member_training == "single" ? MemberTraining::single_fold : MemberTraining::complement_folds;
    c.ease_mode = ease_mode == "all" ? EaseMode::include_all : EaseMode::exclude_in_fold;
    c.seed = seed;
    if (disc_k < 1) throw UsageError("--disc-k must be >= 1");
    if (repetitions < 1) throw UsageError("--m must be >= 1");
    return c;
  }
};

struct TrainOptions {
  TrainConfig cfg;

  void add(CLI::App& app, const std::string& prefix) {
    app.add_option("--" + prefix + "lr", cfg.learning_rate, "learning rate")->capture_default_str();
    app.add_option("--" + prefix + "momentum", cfg.momentum, "momentum")->capture_default_str();
    app.add_option("--" + prefix + "dropout", cfg.dropout, "dropout rate")->capture_default_str();
    app.add_option("--" + prefix + "batch", cfg.batch_size, "mini-batch size")->capture_default_str();
    app.add_option("--" + prefix + "epochs", cfg.epochs, "epochs")->capture_default_str();
    app.add_option("--" + prefix + "lr-decay", cfg.lr_decay_per_epoch, "learning-rate factor per epoch")
        ->capture_default_str();
  }
};

struct PipelineOptions {
  std::string norm = "none";
  double norm_epsilon = kDefaultNormEpsilon;
  bool zca = false;
  double zca_epsilon = kDefaultZcaEpsilon;
  std::string arch;
  int tap = -1;
  TrainOptions extractor;

  void add(CLI::App& app) {
    app.add_option("--norm", norm, "normalization fitted on train: none, sample or feature")
        ->check(CLI::IsMember({"none", "sample", "feature"}))
        ->capture_default_str();
    app.add_option("--norm-epsilon", norm_epsilon, "std floor for normalization")->capture_default_str();
    app.add_flag("--zca", zca, "ZCA-whiten with a transform fitted on train");
    app.add_option("--epsilon", zca_epsilon, "ZCA regularizer")->capture_default_str();
    app.add_option("--arch", arch, "optional feature extractor, e.g. 'in:8 concat:16 fc:32 head:4'");
    app.add_option("--tap", tap, "extractor block whose output becomes the features (-1: last)")
        ->capture_default_str();
    extractor.add(app, "ext-");
  }

  PipelineConfig config(PipelineMode mode, const CpcConfig& cpc, std::uint64_t seed) const {
    PipelineConfig p;
    p.normalization = parse_normalization(norm);
    p.norm_epsilon = norm_epsilon;
    p.zca = zca;
    p.zca_epsilon = zca_epsilon;
    if (!arch.empty()) {
      ExtractorConfig e{arch, extractor.cfg, tap};
      e.training.seed = seed;
      p.extractor = e;
    }
    p.mode = mode;
    p.cpc = cpc;
    return p;
  }
};

nlohmann::json command_echo(const std::string& name, const nlohmann::json& inputs) {
  return {{"command", name}, {"inputs", inputs}};
}

void write_report(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(path, j);
  }
}

// --- subcommands ------------------------------------------------------------

int main_impl(int argc, char** argv) {
  CLI::App app{"Complexity perception classification toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cpctool 0.1.0");
  std::uint64_t seed = 0;
  auto add_seed = [&seed](CLI::App& sub) { sub.add_option("--seed", seed, "random seed")->capture_default_str(); };

  // synth
  auto* synth = app.add_subcommand("synth", "write the two-regime synthetic fixture as CSV");
  TwoRegimeSpec two;
  std::string synth_out;
  synth->add_option("--n-easy", two.n_easy, "samples in the separated regime")->capture_default_str();
  synth->add_option("--n-hard", two.n_hard, "samples in the overlapping regime")->capture_default_str();
  synth->add_option("--classes", two.classes, "class count")->capture_default_str();
  synth->add_option("--dim", two.dim, "feature dimension")->capture_default_str();
  synth->add_option("--easy-margin", two.easy_margin, "center spacing, easy regime")->capture_default_str();
  synth->add_option("--hard-margin", two.hard_margin, "center spacing, hard regime")->capture_default_str();
  synth->add_option("--out", synth_out, "output CSV")->required();
  std::string synth_tags;
  synth->add_option("--tags-out", synth_tags, "optional CSV of regime tags (easy/hard), one per row");
  add_seed(*synth);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "normalize and optionally ZCA-whiten a CSV");
  InputOptions pre_in;
  std::string pre_path, pre_out, pre_transform_out, pre_transform_in, pre_norm = "sample";
  bool pre_zca = false;
  double pre_eps = kDefaultZcaEpsilon, pre_norm_eps = kDefaultNormEpsilon;
  pre->add_option("--in", pre_path, "input CSV")->required();
  pre->add_option("--out", pre_out, "output CSV")->required();
  pre->add_option("--norm", pre_norm, "per-sample normalization first: sample or none")
      ->check(CLI::IsMember({"none", "sample"}))
      ->capture_default_str();
  pre->add_option("--norm-epsilon", pre_norm_eps, "std floor")->capture_default_str();
  pre->add_flag("--zca", pre_zca, "fit ZCA whitening on this file");
  pre->add_option("--epsilon", pre_eps, "ZCA regularizer")->capture_default_str();
  pre->add_option("--transform-out", pre_transform_out, "write the fitted transform as JSON");
  pre->add_option("--transform-in", pre_transform_in, "apply a saved transform instead of fitting")
      ->excludes("--zca");
  pre_in.add(*pre);

  // train-extractor
  auto* tex = app.add_subcommand("train-extractor", "train the residual MLP feature extractor");
  InputOptions tex_in;
  TrainOptions tex_train;
  std::string tex_path, tex_arch, tex_out;
  int tex_tap = -1;
  tex->add_option("--in", tex_path, "training CSV")->required();
  tex->add_option("--arch", tex_arch, "architecture, e.g. 'in:8 concat:16 fc:32 head:4'")->required();
  tex->add_option("--tap", tex_tap, "block exported by extract (-1: last)")->capture_default_str();
  tex->add_option("--model-out", tex_out, "model JSON")->required();
  std::string tex_trace;
  tex->add_option("--trace-out", tex_trace, "optional CSV of the per-epoch loss");
  tex_train.add(*tex, "");
  tex_in.add(*tex);
  add_seed(*tex);

  // extract
  auto* ext = app.add_subcommand("extract", "map a CSV through a trained extractor");
  InputOptions ext_in;
  std::string ext_model, ext_path, ext_out;
  ext->add_option("--model", ext_model, "model JSON")->required();
  ext->add_option("--in", ext_path, "input CSV")->required();
  ext->add_option("--out", ext_out, "output CSV")->required();
  ext_in.add(*ext);

  // baseline / cpc
  auto* base = app.add_subcommand("baseline", "train one classifier and evaluate it");
  auto* cpcc = app.add_subcommand("cpc", "train CPC and evaluate it");
  InputOptions tt_in;
  ClassifierOptions tt_clf;
  PipelineOptions tt_pipe;
  CpcOptions tt_cpc;
  std::string tt_train, tt_test, tt_report = "-", tt_model_out;
  for (auto* sub : {base, cpcc}) {
    sub->add_option("--train", tt_train, "training CSV")->required();
    sub->add_option("--test", tt_test, "test CSV")->required();
    sub->add_option("--report", tt_report, "report JSON ('-' for stdout)")->capture_default_str();
    tt_in.add(*sub);
    tt_clf.add(*sub);
    tt_pipe.add(*sub);
    add_seed(*sub);
  }
  tt_cpc.add(*cpcc, true);
  cpcc->add_option("--model-out", tt_model_out, "save the fitted CPC model (no preprocessing) as JSON");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "accuracy over a grid of ease thresholds");
  InputOptions sw_in;
  ClassifierOptions sw_clf;
  PipelineOptions sw_pipe;
  CpcOptions sw_cpc;
  std::string sw_train, sw_val, sw_grid = "0.0:1.0:0.1", sw_curve, sw_report = "-";
  sweep->add_option("--train", sw_train, "training CSV")->required();
  sweep->add_option("--val", sw_val, "validation CSV")->required();
  sweep->add_option("--grid", sw_grid, "lo:hi:step")->capture_default_str();
  sweep->add_option("--curve-out", sw_curve, "theta,accuracy,baseline CSV");
  sweep->add_option("--report", sw_report, "report JSON ('-' for stdout)")->capture_default_str();
  sw_in.add(*sweep);
  sw_clf.add(*sweep);
  sw_pipe.add(*sweep);
  sw_cpc.add(*sweep, false);
  add_seed(*sweep);

  // cv
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation of the whole pipeline");
  InputOptions cv_in;
  ClassifierOptions cv_clf;
  PipelineOptions cv_pipe;
  CpcOptions cv_cpc;
  std::string cv_path, cv_mode = "baseline", cv_report = "-";
  int cv_folds = 5;
  cv->add_option("--in", cv_path, "dataset CSV")->required();
  cv->add_option("--folds", cv_folds, "fold count")->capture_default_str();
  cv->add_option("--mode", cv_mode, "baseline or cpc")->check(CLI::IsMember({"baseline", "cpc"}))->capture_default_str();
  cv->add_option("--report", cv_report, "report JSON ('-' for stdout)")->capture_default_str();
  cv_in.add(*cv);
  cv_clf.add(*cv);
  cv_pipe.add(*cv);
  cv_cpc.add(*cv, true);
  add_seed(*cv);

  // compare
  auto* cmp = app.add_subcommand("compare", "baseline vs CPC for several classifier families");
  InputOptions cmp_in;
  ClassifierOptions cmp_clf;
  CpcOptions cmp_cpc;
  std::vector<std::string> cmp_kinds{"softmax", "svm", "forest"};
  std::string cmp_train, cmp_test, cmp_report = "-";
  cmp->add_option("--train", cmp_train, "training CSV")->required();
  cmp->add_option("--test", cmp_test, "test CSV")->required();
  cmp->add_option("--clfs", cmp_kinds, "classifier families")->delimiter(',')->capture_default_str();
  cmp->add_option("--report", cmp_report, "report JSON ('-' for stdout)")->capture_default_str();
  cmp_in.add(*cmp);
  cmp_clf.add(*cmp);
  cmp_cpc.add(*cmp, true);
  add_seed(*cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (synth->parsed()) {
    two.seed = seed;
    const LabeledDataset ds = generate_two_regime(two);
    save_dataset(synth_out, ds);
    if (!synth_tags.empty()) {
      std::ofstream out(synth_tags);
      out << "regime\n";
      for (Regime r : ds.regime_tags()) out << (r == Regime::easy ? "easy" : "hard") << '\n';
      if (!out) throw Error(ErrorKind::Io, "cannot write " + synth_tags);
    }
    return kOk;
  }

  if (pre->parsed()) {
    LabeledDataset ds = pre_in.load(pre_path);
    if (pre_norm == "sample") ds = normalize_samples(ds, pre_norm_eps);
    std::optional<WhiteningTransform> t;
    if (!pre_transform_in.empty()) {
      t = load_whitening(pre_transform_in);
    } else if (pre_zca) {
      t = fit_zca(ds, pre_eps);
    }
    if (t) {
      ds = apply_whitening(*t, ds);
      if (!pre_transform_out.empty()) save_whitening(pre_transform_out, *t);
    } else if (!pre_transform_out.empty()) {
      throw UsageError("--transform-out needs --zca or --transform-in");
    }
    save_dataset(pre_out, ds);
    return kOk;
  }

  if (tex->parsed()) {
    const LabeledDataset ds = tex_in.load(tex_path);
    const Architecture arch = parse_architecture(tex_arch);
    if (static_cast<std::size_t>(arch.input_width) != ds.dim()) {
      throw Error(ErrorKind::DimMismatch, "architecture expects input width " + std::to_string(arch.input_width) +
                                              ", data has " + std::to_string(ds.dim()));
    }
    if (arch.classes != ds.class_count()) {
      throw Error(ErrorKind::DimMismatch, "architecture head has " + std::to_string(arch.classes) +
                                              " classes, data has " + std::to_string(ds.class_count()));
    }
    tex_train.cfg.seed = seed;
    const MlpModel init = MlpModel::create(arch, seed, Activation::relu, tex_tap);
    const TrainResult r = train(init, ds, tex_train.cfg);
    save_model(tex_out, r.model);
    if (!tex_trace.empty()) {
      std::ofstream out(tex_trace);
      out << "epoch,loss\n";
      for (std::size_t e = 0; e < r.loss_trace.size(); ++e) {
        out << e << ',' << nlohmann::json(r.loss_trace[e]).dump() << '\n';
      }
    }
    return kOk;
  }

  if (ext->parsed()) {
    const MlpModel m = load_model(ext_model);
    save_dataset(ext_out, extract_features(m, ext_in.load(ext_path)));
    return kOk;
  }

  if (base->parsed() || cpcc->parsed()) {
    const bool is_cpc = cpcc->parsed();
    const LabeledDataset train = tt_in.load(tt_train);
    const LabeledDataset test = tt_in.load(tt_test);
    const CpcConfig cc = tt_cpc.config(tt_clf.spec(seed), seed);
    const PipelineConfig pc = tt_pipe.config(is_cpc ? PipelineMode::cpc : PipelineMode::baseline, cc, seed);
    EvalReport report = run_pipeline(train, test, pc);
    report.config = {{"run", command_echo(is_cpc ? "cpc" : "baseline", {{"train", tt_train}, {"test", tt_test}})},
                     {"pipeline", report.config}};
    report.seed = seed;
    write_report(tt_report, report.to_json());
    if (is_cpc && !tt_model_out.empty()) {
      const LabeledDataset others[] = {test};
      save_cpc(tt_model_out, train_cpc(prepare(train, others, pc).train, cc));
    }
    return kOk;
  }

  if (sweep->parsed()) {
    const LabeledDataset train = sw_in.load(sw_train);
    const LabeledDataset val = sw_in.load(sw_val);
    const CpcConfig cc = sw_cpc.config(sw_clf.spec(seed), seed);
    const PipelineConfig pc = sw_pipe.config(PipelineMode::cpc, cc, seed);
    const LabeledDataset others[] = {val};
    const PreparedData data = prepare(train, others, pc);
    const std::vector<double> grid = parse_grid(sw_grid);
    SweepResult r = theta_sweep(data.train, data.others.front(), grid, cc);
    r.config = {{"run", command_echo("sweep", {{"train", sw_train}, {"val", sw_val}, {"grid", sw_grid}})},
                {"pipeline", to_json(pc)}};
    write_report(sw_report, r.to_json());
    if (!sw_curve.empty()) {
      std::ofstream out(sw_curve);
      r.write_curve_csv(out);
      if (!out) throw Error(ErrorKind::Io, "cannot write " + sw_curve);
    }
    return kOk;
  }

  if (cv->parsed()) {
    const LabeledDataset ds = cv_in.load(cv_path);
    const CpcConfig cc = cv_cpc.config(cv_clf.spec(seed), seed);
    const PipelineConfig pc = cv_pipe.config(cv_mode == "cpc" ? PipelineMode::cpc : PipelineMode::baseline, cc, seed);
    CvReport r = cross_validate(ds, pc, cv_folds, seed);
    r.config = {{"run", command_echo("cv", {{"in", cv_path}})}, {"pipeline", r.config}};
    write_report(cv_report, r.to_json());
    return kOk;
  }

  if (cmp->parsed()) {
    const LabeledDataset train = cmp_in.load(cmp_train);
    const LabeledDataset test = cmp_in.load(cmp_test);
    std::vector<ClassifierSpec> specs;
    for (const auto& kind : cmp_kinds) {
      ClassifierOptions o = cmp_clf;
      o.clf = kind;
      specs.push_back(o.spec(seed));
    }
    const CpcConfig cc = cmp_cpc.config(specs.front(), seed);
    nlohmann::json j = to_json(compare(train, test, specs, cc), cc);
    j["config"] = {{"run", command_echo("compare", {{"train", cmp_train}, {"test", cmp_test}})}, {"cpc", j["config"]}};
    write_report(cmp_report, j);
    return kOk;
  }
  return kUsage;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Divergence:
      return kDivergence;
    case ErrorKind::BadFractions:
    case ErrorKind::BadK:
    case ErrorKind::BadSpec:
    case ErrorKind::BadHyperparams:
      return kUsage;
    default:
      return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return main_impl(argc, argv);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
