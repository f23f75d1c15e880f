#include <iostream>

#include <CLI11.hpp>

#include "synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic infant-vocalization corpus", "voclab-synth"};
  voclab::synth::SynthConfig cfg;
  std::string out;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--children", cfg.children)->capture_default_str();
  app.add_option("--clips-per-child", cfg.clips_per_child)->capture_default_str();
  app.add_option("--accuracy", cfg.annotator_accuracy, "Chance an annotator gives the true class")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto c = voclab::synth::generate(out, cfg);
    std::cerr << "wrote " << c.clips << " clips and " << c.annotations << " annotations to " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "voclab-synth: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
