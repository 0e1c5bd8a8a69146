// Synthetic prosody corpus generator (WAVs + manifest.jsonl).

#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic prosody corpus generator"};
  vqp::SynthConfig cfg;
  std::string out_dir;
  app.add_option("-o,--out", out_dir, "Output directory")->required();
  app.add_option("--utterances", cfg.num_utterances, "Number of utterances");
  app.add_option("--speakers", cfg.num_speakers, "Number of speakers");
  app.add_option("--min-words", cfg.min_words, "Minimum words per utterance");
  app.add_option("--max-words", cfg.max_words, "Maximum words per utterance");
  app.add_option("--seed", cfg.seed, "Random seed");
  CLI11_PARSE(app, argc, argv);

  try {
    vqp::GenerateCorpus(cfg, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "synth: %s\n", e.what());
    return 2;
  }
  std::printf("wrote %d utterances to %s\n", cfg.num_utterances,
              out_dir.c_str());
  return 0;
}
