// vqp command-line front end.  Links only the extern-C library surface.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "vqp.h"

namespace {

struct SessionDeleter {
  void operator()(vqp_session* s) const { vqp_session_destroy(s); }
};

int Report(vqp_session* s, const char* cmd, int rc) {
  if (rc != VQP_OK)
    std::fprintf(stderr, "vqp %s: %s\n", cmd, vqp_last_error(s));
  return rc;
}

const char* OrNull(const std::string& s) {
  return s.empty() ? nullptr : s.c_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Word-level prosody representation pipeline"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::unique_ptr<vqp_session, SessionDeleter> session(vqp_session_create());
  vqp_session* s = session.get();

  uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed for all stochastic stages")
      ->capture_default_str();

  // preprocess
  auto* pre = app.add_subcommand(
      "preprocess", "Pitch-normalize audio and slice word tensors");
  std::string pre_manifest, pre_out;
  int pre_jobs = 1;
  bool pre_raw = false;
  pre->add_option("manifest", pre_manifest, "Alignment manifest (JSONL)")
      ->required();
  pre->add_option("-o,--out", pre_out, "Output directory")->required();
  pre->add_option("--jobs", pre_jobs, "Worker threads");
  pre->add_flag("--no-pitch-scaling", pre_raw,
                "Keep per-speaker pitch offsets");

  // pretrain
  auto* tr = app.add_subcommand("pretrain",
                                "Train encoder, quantizer, and transformer");
  std::string tr_data, tr_config, tr_out, tr_ablation;
  int64_t tr_steps = -1;
  tr->add_option("data_dir", tr_data, "Preprocessed corpus directory")
      ->required();
  tr->add_option("-c,--config", tr_config, "Config file (key=value)");
  tr->add_option("-o,--out", tr_out, "Checkpoint directory")->required();
  tr->add_option("--ablation", tr_ablation,
                 "Comma-separated flags: pe,csn,nps,nq,tq");
  tr->add_option("--steps", tr_steps, "Override total training steps");

  // extract
  auto* ex = app.add_subcommand("extract",
                                "Write per-word representations from a "
                                "checkpoint");
  std::string ex_data, ex_ckpt, ex_level, ex_out, ex_config, ex_ablation;
  ex->add_option("data_dir", ex_data, "Preprocessed corpus directory")
      ->required();
  ex->add_option("checkpoint", ex_ckpt, "Model checkpoint")->required();
  ex->add_option("--level", ex_level, "One of pe, vq1, vq2, vq3, ctx")
      ->required();
  ex->add_option("-o,--out", ex_out, "Output representation file")->required();
  ex->add_option("-c,--config", ex_config, "Config file (key=value)");
  ex->add_option("--ablation", ex_ablation,
                 "Comma-separated flags: pe,csn,nps,nq,tq");

  // features
  auto* ft = app.add_subcommand("features",
                                "Extract acoustic word features from audio");
  std::string ft_manifest, ft_out;
  int ft_jobs = 1;
  bool ft_raw = false;
  ft->add_option("manifest", ft_manifest, "Alignment manifest (JSONL)")
      ->required();
  ft->add_option("-o,--out", ft_out, "Output feature table (JSONL)")
      ->required();
  ft->add_option("--jobs", ft_jobs, "Worker threads");
  ft->add_flag("--no-pitch-scaling", ft_raw,
               "Keep per-speaker pitch offsets");

  // probe
  auto* pb = app.add_subcommand(
      "probe", "Prequential codelength probe per acoustic feature");
  std::string pb_reps, pb_table, pb_out;
  pb->add_option("reps", pb_reps, "Representation file")->required();
  pb->add_option("table", pb_table, "Feature table (JSONL)")->required();
  pb->add_option("-o,--out", pb_out, "Output report (JSON)")->required();

  // deid
  auto* de = app.add_subcommand(
      "deid", "Speaker-verification de-identification ratio");
  std::string de_a, de_b, de_out;
  int de_trials = 10000;
  de->add_option("reps_a", de_a, "Representation file")->required();
  de->add_option("reps_b", de_b,
                 "Second representation file (optional trial side)");
  de->add_option("--trials", de_trials, "Number of verification trials")
      ->capture_default_str();
  de->add_option("-o,--out", de_out, "Output report (JSON)")->required();

  // downstream
  auto* ds = app.add_subcommand("downstream",
                                "Probe AUC on utterance-level labels");
  std::string ds_train, ds_test, ds_labels, ds_out;
  ds->add_option("train_reps", ds_train, "Training representations")
      ->required();
  ds->add_option("test_reps", ds_test, "Test representations")->required();
  ds->add_option("labels", ds_labels, "Labels (JSONL)")->required();
  ds->add_option("-o,--out", ds_out, "Output report (JSON)")->required();

  for (CLI::App* sub : {pre, tr, ex, ft, pb, de, ds}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : VQP_USAGE_ERROR;
  }

  if (pre->parsed()) {
    int64_t words = 0;
    const int rc = Report(
        s, "preprocess",
        vqp_preprocess(s, pre_manifest.c_str(), pre_out.c_str(), seed,
                       pre_jobs, pre_raw ? 1 : 0, &words));
    if (rc == VQP_OK)
      std::printf("wrote %lld words to %s\n", static_cast<long long>(words),
                  pre_out.c_str());
    return rc;
  }
  if (tr->parsed()) {
    const int64_t seed_override =
        app.count("--seed") > 0 ? static_cast<int64_t>(seed) : -1;
    return Report(s, "pretrain",
                  vqp_pretrain(s, tr_data.c_str(), OrNull(tr_config),
                               tr_out.c_str(), OrNull(tr_ablation), tr_steps,
                               seed_override));
  }
  if (ex->parsed()) {
    return Report(s, "extract",
                  vqp_extract(s, ex_data.c_str(), ex_ckpt.c_str(),
                              ex_level.c_str(), ex_out.c_str(),
                              OrNull(ex_config), OrNull(ex_ablation)));
  }
  if (ft->parsed()) {
    return Report(s, "features",
                  vqp_features(s, ft_manifest.c_str(), ft_out.c_str(), seed,
                               ft_jobs, ft_raw ? 1 : 0));
  }
  if (pb->parsed()) {
    return Report(s, "probe",
                  vqp_probe(s, pb_reps.c_str(), pb_table.c_str(),
                            pb_out.c_str(), seed));
  }
  if (de->parsed()) {
    double ratio = 0.0;
    return Report(s, "deid",
                  vqp_deid(s, de_a.c_str(), OrNull(de_b), de_trials,
                           de_out.c_str(), seed, &ratio));
  }
  if (ds->parsed()) {
    double auc = 0.0;
    return Report(s, "downstream",
                  vqp_downstream(s, ds_train.c_str(), ds_test.c_str(),
                                 ds_labels.c_str(), ds_out.c_str(), seed,
                                 &auc));
  }
  return VQP_USAGE_ERROR;
}
