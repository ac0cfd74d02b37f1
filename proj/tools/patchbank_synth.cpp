// Writes the synthetic MVTec-layout dataset used by the smoke and acceptance tests.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "patchbank/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"patchbank-synth: generate a synthetic anomaly-detection dataset"};
  std::string out;
  patchbank::SyntheticOptions opt;
  app.add_option("--out", out, "dataset root to create")->required();
  app.add_option("--categories", opt.categories, "category names")->delimiter(',');
  app.add_option("--size", opt.size, "image side in pixels");
  app.add_option("--train", opt.train_images, "normal training images per category");
  app.add_option("--test-good", opt.test_good, "normal test images per category");
  app.add_option("--test-anomalous", opt.test_anomalous, "anomalous test images per category");
  app.add_option("--seed", opt.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    patchbank::make_synthetic_dataset(out, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
