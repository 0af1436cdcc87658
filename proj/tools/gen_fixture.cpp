// Writes the bundled synthetic Maltese-shaped lexicon to stdout (or a file).
//   gen_fixture [--seed N] [--entries N] [--out path]

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "morphinfo/lexicon.hpp"
#include "morphinfo/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic Maltese-shaped fixture"};
  std::uint64_t seed = morphinfo::synthetic::kFixtureSeed;
  std::size_t entries = morphinfo::synthetic::kFixtureEntries;
  std::string out;
  app.add_option("--seed", seed);
  app.add_option("--entries", entries);
  app.add_option("--out", out);
  CLI11_PARSE(app, argc, argv);

  const auto lex = morphinfo::synthetic::maltese_shaped_lexicon(seed, entries);
  if (out.empty()) {
    morphinfo::write_lexicon(std::cout, lex);
  } else {
    std::ofstream f(out, std::ios::binary);
    morphinfo::write_lexicon(f, lex);
  }
  return 0;
}
