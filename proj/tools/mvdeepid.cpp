// mvdeepid: command-line driver for dataset generation, training,
// evaluation, model comparison and gradient checking.
//
// Exit codes: 0 success, 1 verification or numerical failure, 2 usage or
// I/O error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvdeepid/checkpoint.hpp"
#include "mvdeepid/io.hpp"
#include "mvdeepid/model_check.hpp"
#include "mvdeepid/stats.hpp"
#include "mvdeepid/synth.hpp"
#include "mvdeepid/train.hpp"

namespace fs = std::filesystem;
using namespace mvdeepid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitUsage = 2;

struct GenDataOptions {
  std::size_t ids = 20;
  std::uint64_t seed = 1;
  std::string out;
  bool augment = false;
};

struct TrainOptions {
  std::string data;
  std::string model = "mv";
  std::string views = "lcr";
  std::size_t epochs = 20;
  double lr = kDefaultLearningRate;
  std::size_t batch = 16;
  std::uint64_t seed = 1;
  bool freezeConv = false;
  std::string pretrained;
  std::string out;
};

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string json;
};

struct CompareOptions {
  std::vector<std::string> reports;
  std::string out;
};

struct GradCheckOptions {
  std::string model = "m2";
  std::uint64_t seed = 1;
  double eps = 1e-5;
  bool corrupt = false;
};

int run_gen_data(const GenDataOptions& o) {
  const MultiViewDataset raw = build_dataset(o.ids, o.seed);
  const MultiViewDataset ds = o.augment ? augment(raw) : raw;
  write_dataset(o.out, ds);
  std::cout << "wrote " << ds.images.size() << " images for " << ds.numIdentities
            << " identities to " << o.out << '\n';
  return kExitOk;
}

std::vector<Sample> load_samples(const std::string& dir, const std::vector<ViewLabel>& views,
                                 std::size_t& numClasses) {
  const MultiViewDataset ds = read_dataset(dir);
  numClasses = ds.numIdentities;
  return assemble_samples(select_subviews(ds, views), views);
}

int run_train(const TrainOptions& o) {
  TrainConfig cfg;
  cfg.kind = parse_kind(o.model);
  cfg.viewOrder = parse_view_group(o.views);
  cfg.epochs = o.epochs;
  cfg.learningRate = o.lr;
  cfg.minibatchSize = o.batch;
  cfg.seed = o.seed;
  cfg.freezeConv = o.freezeConv;
  const std::vector<Sample> samples = load_samples(o.data, cfg.viewOrder, cfg.numClasses);

  std::optional<Model> pretrained;
  if (!o.pretrained.empty()) {
    pretrained = load_checkpoint(o.pretrained).model;
    if (pretrained->kind != ModelKind::Baseline)
      throw std::runtime_error("--pretrained must be a baseline checkpoint");
  }
  const bool allViews = cfg.viewOrder.size() == kAllViews.size();
  const Model* base = pretrained ? &*pretrained : nullptr;
  TrainResult r = allViews && cfg.kind != ModelKind::Baseline
                      ? five_view_run(samples, cfg, base)
                      : train(samples, cfg, base);

  fs::create_directories(o.out);
  const fs::path ckpt = fs::path(o.out) / "checkpoint.bin";
  r.report.checkpointPath = "checkpoint.bin";
  save_checkpoint(ckpt.string(),
                  {r.model, {cfg.seed, derive_seed(cfg.seed, {0xba}),
                             derive_seed(cfg.seed, {0xf0, static_cast<std::uint64_t>(cfg.kind)})}});
  write_text(fs::path(o.out) / "report.json", report_to_json(r.report));
  write_text(fs::path(o.out) / "curve.csv", curve_csv(r.report));
  write_text(fs::path(o.out) / "timing.json",
             nlohmann::json{{"wall_seconds", r.report.wallSeconds}}.dump() + "\n");

  std::cout << std::fixed << std::setprecision(4) << kind_name(cfg.kind) << ' '
            << views_string(cfg.viewOrder) << " d=" << r.report.aggregationDim
            << (r.report.diagnostic ? " [diagnostic]" : "") << '\n'
            << "train accuracy " << r.report.trainAccuracy << '\n'
            << "valid accuracy " << r.report.validAccuracy << '\n'
            << "test accuracy  " << r.report.testAccuracy << '\n';
  return kExitOk;
}

int run_eval(const EvalOptions& o) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Split split = parse_split(o.split);
  const MultiViewDataset ds = read_dataset(o.data);
  if (ds.numIdentities > ckpt.model.numClasses)
    throw std::runtime_error("dataset has " + std::to_string(ds.numIdentities) +
                             " identities but the checkpoint has " +
                             std::to_string(ckpt.model.numClasses) + " classes");
  const auto samples = filter_split(
      assemble_samples(select_subviews(ds, ckpt.model.viewOrder), ckpt.model.viewOrder), split);
  const double acc = evaluate(ckpt.model, samples);
  std::cout << std::fixed << std::setprecision(4) << acc << '\n';
  if (!o.json.empty())
    write_text(o.json, nlohmann::ordered_json{{"checkpoint", o.checkpoint},
                                              {"split", split_name(split)},
                                              {"samples", samples.size()},
                                              {"accuracy", acc}}
                               .dump(2) +
                           "\n");
  return kExitOk;
}

int run_compare(const CompareOptions& o) {
  std::vector<RunReport> reports;
  for (const std::string& p : o.reports) reports.push_back(report_from_json(read_text(p)));
  std::vector<const RunReport*> ptrs;
  for (const RunReport& r : reports) ptrs.push_back(&r);
  const std::string csv = comparison_csv(compare(ptrs));
  if (o.out.empty())
    std::cout << csv;
  else
    write_text(o.out, csv);
  return kExitOk;
}

int run_gradcheck(const GradCheckOptions& o) {
  const GradCheckResult r = check_model_gradients(parse_kind(o.model), o.seed, o.eps, o.corrupt);
  std::cout << std::scientific << std::setprecision(3) << "max relative error "
            << r.maxRelativeError << " over " << r.componentsChecked << " components\n";
  if (!(r.maxRelativeError < kGradTolerance)) {
    std::cout << "FAILED at " << r.worstVariable << '[' << r.worstIndex << "]: analytic "
              << r.worstAnalytic << ", numeric " << r.worstNumeric << '\n';
    return kExitVerification;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view DeepID face identification toolkit"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* genCmd = app.add_subcommand("gen-data", "Render a synthetic multi-view dataset");
  genCmd->add_option("--ids", gen.ids, "Number of identities")->check(CLI::Range(2, 1000000));
  genCmd->add_option("--seed", gen.seed, "Dataset seed");
  genCmd->add_option("--out", gen.out, "Output directory")->required();
  genCmd->add_flag("--augment", gen.augment, "Mirror/affine augmentation to 5 images per view");

  TrainOptions tr;
  auto* trainCmd = app.add_subcommand("train", "Train a model and write checkpoint + report");
  trainCmd->add_option("--data", tr.data, "Dataset directory")->required();
  trainCmd->add_option("--model", tr.model, "baseline, mv or m2")
      ->check(CLI::IsMember({"baseline", "mv", "m2"}));
  trainCmd->add_option("--views", tr.views, "lcr, ucd or all5")
      ->check(CLI::IsMember({"lcr", "ucd", "all5"}));
  trainCmd->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  trainCmd->add_option("--lr", tr.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  trainCmd->add_option("--batch", tr.batch, "Minibatch size")->check(CLI::PositiveNumber);
  trainCmd->add_option("--seed", tr.seed, "Training seed");
  trainCmd->add_flag("--freeze-conv", tr.freezeConv, "Keep transferred conv layers fixed");
  trainCmd->add_option("--pretrained", tr.pretrained,
                       "Baseline checkpoint to transfer instead of pre-training one");
  trainCmd->add_option("--out", tr.out, "Output directory")->required();

  EvalOptions ev;
  auto* evalCmd = app.add_subcommand("eval", "Accuracy of a checkpoint on one split");
  evalCmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  evalCmd->add_option("--data", ev.data, "Dataset directory")->required();
  evalCmd->add_option("--split", ev.split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  evalCmd->add_option("--json", ev.json, "Also write the result as JSON");

  CompareOptions cmp;
  auto* cmpCmd = app.add_subcommand("compare", "Accuracy and paired t-value table");
  cmpCmd->add_option("--reports", cmp.reports, "Report JSON files")->required()->expected(2, 16);
  cmpCmd->add_option("--out", cmp.out, "Output CSV (stdout if omitted)");

  GradCheckOptions gc;
  auto* gcCmd = app.add_subcommand("gradcheck", "Finite-difference check on a reduced model");
  gcCmd->add_option("--model", gc.model, "baseline, mv or m2")
      ->check(CLI::IsMember({"baseline", "mv", "m2"}));
  gcCmd->add_option("--seed", gc.seed, "Seed");
  gcCmd->add_option("--eps", gc.eps, "Central-difference step")->check(CLI::PositiveNumber);
  gcCmd->add_flag("--corrupt-gradient", gc.corrupt, "Test hook: negate one analytic gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*genCmd) return run_gen_data(gen);
    if (*trainCmd) return run_train(tr);
    if (*evalCmd) return run_eval(ev);
    if (*cmpCmd) return run_compare(cmp);
    if (*gcCmd) return run_gradcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
