// Writes the synthetic benchmark used by the end-to-end checks:
//   <out>/dictionary.tsv  <out>/definitions.tsv  <out>/sts.tsv  <out>/heldout.jsonl

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "adenorm/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic ontology, STS pairs and a held-out mention dataset"};
    std::string out_dir = "synthetic";
    adenorm::synthetic::Config cfg;
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", cfg.seed, "Generator seed");
    app.add_option("--attributes", cfg.attributes, "Attribute meanings");
    app.add_option("--sites", cfg.sites, "Site meanings (concepts = attributes x sites)");
    app.add_option("--typo-rate", cfg.typo_rate, "Probability of a typo per synonym");
    app.add_option("--splits", cfg.splits, "Number of evaluation splits");
    CLI11_PARSE(app, argc, argv);

    try {
        auto bench = adenorm::synthetic::generate(cfg);
        std::filesystem::create_directories(out_dir);
        std::ofstream dict(out_dir + "/dictionary.tsv"), defs(out_dir + "/definitions.tsv"),
            sts(out_dir + "/sts.tsv"), data(out_dir + "/heldout.jsonl");
        adenorm::write_dictionary(bench.store, dict);
        adenorm::synthetic::write_definitions(bench.store, defs);
        adenorm::synthetic::write_sts(bench.sts, sts);
        adenorm::synthetic::write_dataset(bench.heldout, data);
        std::cout << "concepts=" << bench.store.size() << " heldout=" << bench.heldout.size()
                  << " sts=" << bench.sts.size() << " -> " << out_dir << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
