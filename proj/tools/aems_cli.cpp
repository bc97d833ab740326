// SPDX-License-Identifier: Apache-2.0
// aems: train, evaluate and run multi-dimensional essay scoring models.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include "aems/aems.hpp"
#include "aems/gradcheck_suite.hpp"

namespace {

enum Exit : int { kOk = 0, kCheckFailed = 1, kDataError = 2, kNumericAbort = 3 };

// The resolved configuration goes to stderr so stdout stays machine-readable.
void show_config(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) std::cerr << "# " << line << "\n";
}

std::string read_all(std::istream& in) { return {std::istreambuf_iterator<char>(in), {}}; }

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw aems::DataError("cannot read '" + path + "'");
  return read_all(f);
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw aems::DataError("cannot write '" + path + "'");
  f << data;
  if (!f) throw aems::DataError("write to '" + path + "' failed");
}

aems::ReportFormat parse_format(const std::string& s) {
  return s == "csv" ? aems::ReportFormat::csv : aems::ReportFormat::text;
}

struct TrainArgs {
  std::string config = "roberta-style";
  std::string train, eval, out, log, rubric = "ellipse";
  std::size_t desk_scale = 0;
};

int cmd_train(const TrainArgs& a) {
  aems::TrainConfig cfg = aems::resolve_train_config(a.config);
  if (a.desk_scale > 0) cfg = aems::desk_scaled(cfg, a.desk_scale);
  const aems::RubricSpec rubric = aems::resolve_rubric(a.rubric);
  show_config("config = " + a.config + "\nrubric = " + rubric.name + "\n" + aems::describe(cfg));

  const aems::Corpus train = aems::load_corpus(a.train, rubric);
  const aems::Corpus eval = a.eval.empty() ? aems::Corpus{rubric, {}} : aems::load_corpus(a.eval, rubric);

  aems::TrainHooks hooks;
  hooks.warn = [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
  hooks.on_step = [](std::size_t step, double lr, const aems::LossBreakdown& l) {
    std::fprintf(stderr, "step %zu lr %.3g total %.6f ce %.6f mse %.6f contrastive %.6f\n", step, lr, l.total, l.ce,
                 l.mse, l.contrastive);
  };
  hooks.on_epoch = [](const aems::EpochLog& e) {
    std::printf("epoch %zu total %.6f ce %.6f mse %.6f contrastive %.6f", e.epoch, e.train.total, e.train.ce,
                e.train.mse, e.train.contrastive);
    if (e.eval) std::printf(" mean_qwk %.4f", e.eval->mean().qwk);
    std::printf("\n");
    std::fflush(stdout);
  };
  const aems::TrainResult result = aems::train(cfg, train, eval, hooks);
  aems::save_checkpoint(result.checkpoint, a.out);
  write_file(a.log.empty() ? a.out + ".log.csv" : a.log, aems::render_train_log(result.log, rubric));
  return kOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& test_path, const std::string& format) {
  const aems::Checkpoint ck = aems::load_checkpoint(ckpt_path);
  show_config("checkpoint = " + ckpt_path + "\nrubric = " + ck.rubric.name + "\nstep = " + std::to_string(ck.step) +
              "\nformat = " + format);
  const aems::Corpus test = aems::load_corpus(test_path, ck.rubric);
  const auto preds = aems::predict_corpus(ck.params, ck.vocab, test);
  const aems::MetricsReport report = aems::evaluate_corpus(preds, test, test_path, ckpt_path);
  std::cout << aems::render_report(report, parse_format(format));
  return kOk;
}

int cmd_score(const std::string& ckpt_path, const std::string& essay_path, const std::string& prompt) {
  const aems::Checkpoint ck = aems::load_checkpoint(ckpt_path);
  show_config("checkpoint = " + ckpt_path + "\nessay = " + essay_path + "\nprompt = " + (prompt.empty() ? "-" : prompt));
  const std::string essay = essay_path == "-" ? read_all(std::cin) : read_file(essay_path);
  aems::EncodedRecord r;
  r.id = "input";
  r.essay = aems::tokenize(essay, ck.vocab, ck.params.config().max_seq_len);
  if (!prompt.empty()) {
    r.prompt = aems::tokenize(prompt, ck.vocab, ck.params.config().max_seq_len);
    r.prompt_key = prompt;
  }
  const aems::DimensionScores s = aems::predict_record(ck.params, ck.rubric, r);
  if (s.empty_input) std::cerr << "warning: essay has no tokens; scores reflect an empty input\n";
  for (const auto& d : s.dimensions)
    std::cout << d.dimension << '\t' << aems::format_double(d.band) << '\t' << aems::format_double(d.raw_regression)
              << '\n';
  return kOk;
}

int cmd_report(const std::string& in_path, const std::string& format) {
  show_config("in = " + in_path + "\nformat = " + format);
  const std::string text = in_path == "-" ? read_all(std::cin) : read_file(in_path);
  std::cout << aems::render_report(aems::parse_report_csv(text), parse_format(format));
  return kOk;
}

int cmd_gradcheck(const std::string& dims, bool sabotage) {
  aems::GradCheckSuiteOptions opt;
  opt.d_model = dims == "medium" ? 32 : 16;
  opt.sabotage = sabotage;
  show_config("dims = " + dims + "\nd_model = " + std::to_string(opt.d_model) +
              "\nop_tolerance = " + aems::format_double(aems::kOpGradTolerance) +
              "\nmodel_tolerance = " + aems::format_double(aems::kModelGradTolerance));
  const auto results = aems::run_gradcheck_suite(opt);
  std::string failing;
  double worst = 0.0;
  for (const auto& c : results) {
    std::printf("%-18s %.3e  (tol %.0e)  %s\n", c.name.c_str(), c.max_rel_error, c.tolerance,
                c.passed ? "ok" : "FAIL");
    worst = std::max(worst, c.max_rel_error);
    if (!c.passed) failing += (failing.empty() ? "" : ", ") + c.name;
  }
  std::printf("worst %.3e\n", worst);
  if (!failing.empty()) {
    std::cerr << "gradient check failed: " << failing << "\n";
    return kCheckFailed;
  }
  return kOk;
}

struct SynthArgs {
  std::size_t n = 2000;
  std::string rubric = "ellipse", out;
  std::uint64_t seed = 42;
  bool prompt_dependent = false;
  std::size_t prompts = 8;
};

int cmd_synth(const SynthArgs& a) {
  const aems::RubricSpec rubric = aems::resolve_rubric(a.rubric);
  show_config("n = " + std::to_string(a.n) + "\nrubric = " + rubric.name + "\nseed = " + std::to_string(a.seed) +
              "\nprompts = " + std::to_string(a.prompts) + "\nprompt_dependent = " +
              (a.prompt_dependent ? "true" : "false") + "\nout = " + a.out);
  aems::SynthOptions opt;
  opt.num_prompts = a.prompts;
  opt.prompt_dependent = a.prompt_dependent;
  const aems::Corpus c = aems::synth_corpus(a.n, rubric, a.seed, opt);
  write_file(a.out, aems::corpus_to_csv(c));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dimensional essay scoring"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--config", ta.config, "Preset (roberta-style, distilbert-style) or key = value file")
      ->capture_default_str();
  train->add_option("--train", ta.train, "Training corpus CSV")->required();
  train->add_option("--eval", ta.eval, "Held-out corpus CSV evaluated after each epoch");
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--log", ta.log, "Training log CSV (default: <out>.log.csv)");
  train->add_option("--rubric", ta.rubric, "Rubric preset (ellipse, ielts) or rubric file")->capture_default_str();
  train->add_option("--desk-scale", ta.desk_scale, "Divide epochs, warmup and batch sizes of the config");

  std::string ckpt, test, format = "text", essay = "-", prompt, in_path, dims = "small";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled corpus");
  eval->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  eval->add_option("--test", test, "Test corpus CSV")->required();
  eval->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}))->capture_default_str();

  auto* score = app.add_subcommand("score", "Score one essay");
  score->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  score->add_option("--essay", essay, "Essay file, or - for stdin")->capture_default_str();
  score->add_option("--prompt", prompt, "Prompt text");

  auto* report = app.add_subcommand("report", "Render a metrics CSV");
  report->add_option("--in", in_path, "Metrics CSV, or - for stdin")->required();
  report->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}))->capture_default_str();

  bool sabotage = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference self-check of every gradient rule");
  gradcheck->add_option("--dims", dims, "small or medium")->check(CLI::IsMember({"small", "medium"}))
      ->capture_default_str();
  gradcheck->add_flag("--sabotage", sabotage, "Inject a wrong derivative (checker self-test)")->group("");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
  synth->add_option("--n", sa.n, "Number of essays")->capture_default_str();
  synth->add_option("--rubric", sa.rubric, "Rubric preset or rubric file")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth->add_option("--out", sa.out, "Output CSV")->required();
  synth->add_flag("--prompt-dependent", sa.prompt_dependent, "First dimension credits on-prompt keywords");
  synth->add_option("--prompts", sa.prompts, "Number of distinct prompts")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kDataError;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ckpt, test, format);
    if (*score) return cmd_score(ckpt, essay, prompt);
    if (*report) return cmd_report(in_path, format);
    if (*gradcheck) return cmd_gradcheck(dims, sabotage);
    if (*synth) return cmd_synth(sa);
  } catch (const aems::NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const aems::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}
